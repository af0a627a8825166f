#pragma once

// Preprocessed, split-tagged samples ready for batching.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionprog/core/error.hpp"
#include "fusionprog/core/hash.hpp"
#include "fusionprog/core/parallel.hpp"
#include "fusionprog/datamodel.hpp"
#include "fusionprog/encoders.hpp"
#include "fusionprog/preprocess.hpp"

namespace fusionprog {

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) { return s == Split::Train ? "train" : s == Split::Val ? "val" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

struct PreprocessConfig {
  bool bias_correct_adc = true;
  bool bias_correct_dwi = true;
  int bias_grid = 16;
  int target_h = 0;  // 0 keeps the stored size
  int target_w = 0;
  int n_slices = 0;  // 0 keeps the stored slice count
  bool normalize_intensity = true;
  bool drop_nihss = false;
  SplitSpec split;

  void validate() const {
    if ((target_h != 0 && target_h < 8) || (target_w != 0 && target_w < 8))
      throw ConfigError("preprocess: target dims must be >= 8");
    if (n_slices < 0) throw ConfigError("preprocess: n_slices must be >= 0");
    split.validate();
  }
};

inline nlohmann::ordered_json to_json(const PreprocessConfig& c) {
  return {{"bias_correct_adc", c.bias_correct_adc},
          {"bias_correct_dwi", c.bias_correct_dwi},
          {"bias_grid", c.bias_grid},
          {"target_h", c.target_h},
          {"target_w", c.target_w},
          {"n_slices", c.n_slices},
          {"normalize_intensity", c.normalize_intensity},
          {"drop_nihss", c.drop_nihss},
          {"split_ratios", c.split.ratios},
          {"split_seed", c.split.seed},
          {"split_stratified", c.split.stratified}};
}

inline PreprocessConfig preprocess_config_from_json(const nlohmann::ordered_json& j) {
  PreprocessConfig c;
  c.bias_correct_adc = j.at("bias_correct_adc");
  c.bias_correct_dwi = j.at("bias_correct_dwi");
  c.bias_grid = j.at("bias_grid");
  c.target_h = j.at("target_h");
  c.target_w = j.at("target_w");
  c.n_slices = j.at("n_slices");
  c.normalize_intensity = j.at("normalize_intensity");
  c.drop_nihss = j.at("drop_nihss");
  c.split.ratios = j.at("split_ratios").get<std::array<double, 3>>();
  c.split.seed = j.at("split_seed");
  c.split.stratified = j.at("split_stratified");
  return c;
}

struct PreparedSample {
  std::string patient_id;
  ImageVolume adc, dwi;
  std::vector<double> x;  // imputed, standardized attributes
  int label = 0;
  Split split = Split::Train;
};

/// Fitted structured-data state; fitted on the training split only.
struct StructuredPipeline {
  std::vector<std::string> attr_names;  // kept columns, in input order
  std::vector<int> kept_columns;        // indices into the manifest schema
  ImputationModel imputer;
  Standardizer standardizer;

  std::vector<double> apply(const StructuredRecord& r) const {
    return standardizer.apply(impute(project(r), imputer));
  }

  StructuredRecord project(const StructuredRecord& r) const {
    StructuredRecord out;
    out.schema = AttributeSchema::from_names(attr_names);
    for (int j : kept_columns) {
      if (j >= static_cast<int>(r.size())) throw ShapeError("structured record is shorter than the fitted schema");
      out.values.push_back(r.values[j]);
      out.missing_mask.push_back(r.missing_mask[j]);
    }
    return out;
  }

  nlohmann::ordered_json to_json() const {
    return {{"attr_names", attr_names},
            {"kept_columns", kept_columns},
            {"imputer", imputer.to_json()},
            {"standardizer", standardizer.to_json()}};
  }
  static StructuredPipeline from_json(const nlohmann::ordered_json& j) {
    StructuredPipeline p;
    p.attr_names = j.at("attr_names").get<std::vector<std::string>>();
    p.kept_columns = j.at("kept_columns").get<std::vector<int>>();
    p.imputer = ImputationModel::from_json(j.at("imputer"));
    p.standardizer = Standardizer::from_json(j.at("standardizer"));
    return p;
  }

  static StructuredPipeline fit(const DatasetSplits& splits, bool drop_nihss) {
    StructuredPipeline p;
    const auto& schema = *splits.train.schema;
    for (std::size_t j = 0; j < schema.size(); ++j)
      if (!(drop_nihss && schema.nihss[j])) {
        p.kept_columns.push_back(static_cast<int>(j));
        p.attr_names.push_back(schema.names[j]);
      }
    std::vector<StructuredRecord> recs;
    for (const auto& e : splits.train.entries) recs.push_back(p.project(e.structured));
    const auto train = TrainRecords::from_records(std::move(recs));
    p.imputer = fit_imputer(train);
    p.standardizer = Standardizer::fit(train, p.imputer);
    return p;
  }
};

struct PreparedData {
  std::vector<PreparedSample> train, val, test;
  StructuredPipeline structured;
  PreprocessConfig config;
  std::vector<std::string> warnings;

  const std::vector<PreparedSample>& split(Split s) const { return s == Split::Train ? train : s == Split::Val ? val : test; }
  int n_attrs() const { return static_cast<int>(structured.attr_names.size()); }
  int n_slices() const { return train.front().adc.n_slices; }
  int height() const { return train.front().adc.height; }
  int width() const { return train.front().adc.width; }
};

inline ImageVolume preprocess_volume(const ImageVolume& vol, bool bias, const PreprocessConfig& cfg,
                                     std::vector<std::string>* warnings) {
  ImageVolume v = bias ? correct_bias(vol, cfg.bias_grid, warnings) : vol;
  if (cfg.target_h > 0 && cfg.target_w > 0) v = resize_volume(v, cfg.target_h, cfg.target_w);
  if (cfg.n_slices > 0 && cfg.n_slices != v.n_slices) v = select_middle_slices(v, cfg.n_slices);
  if (cfg.normalize_intensity) v = normalize_intensity(v);
  return v;
}

/// Splits the manifest, fits the structured pipeline on train (or reuses
/// `fitted`), loads and preprocesses every volume.
inline PreparedData prepare_data(const Manifest& manifest, const PreprocessConfig& cfg,
                                 const StructuredPipeline* fitted = nullptr) {
  cfg.validate();
  const DatasetSplits splits = split_dataset(manifest, cfg.split);
  PreparedData out;
  out.config = cfg;
  out.structured = fitted ? *fitted : StructuredPipeline::fit(splits, cfg.drop_nihss);

  const std::array<std::pair<const Manifest*, Split>, 3> parts{
      {{&splits.train, Split::Train}, {&splits.val, Split::Val}, {&splits.test, Split::Test}}};
  for (const auto& [m, tag] : parts) {
    auto& dst = tag == Split::Train ? out.train : tag == Split::Val ? out.val : out.test;
    dst.resize(m->size());
    std::vector<std::vector<std::string>> warn(m->size());
    parallel_for(m->size(), [&](std::size_t i) {
      const auto& e = m->entries[i];
      const Sample s = load_sample(*m, e);
      PreparedSample p;
      p.patient_id = e.patient_id;
      p.adc = preprocess_volume(s.adc, cfg.bias_correct_adc, cfg, &warn[i]);
      p.dwi = preprocess_volume(s.dwi, cfg.bias_correct_dwi, cfg, &warn[i]);
      p.x = out.structured.apply(e.structured);
      p.label = e.label;
      p.split = tag;
      dst[i] = std::move(p);
    });
    for (auto& w : warn) out.warnings.insert(out.warnings.end(), w.begin(), w.end());
  }
  const auto& f = out.train.front().adc;
  for (const auto* part : {&out.train, &out.val, &out.test})
    for (const auto& p : *part)
      if (p.adc.n_slices != f.n_slices || p.adc.height != f.height || p.adc.width != f.width ||
          p.dwi.n_slices != f.n_slices || p.dwi.height != f.height || p.dwi.width != f.width)
        throw ShapeError("prepare_data: patient " + p.patient_id +
                         " has a different volume shape; set preprocess target size and n_slices");
  return out;
}

/// Fingerprint of an ordered list of patient ids.
inline std::uint64_t batch_checksum(const std::vector<const PreparedSample*>& batch) {
  Fnv1a h;
  for (const auto* s : batch) {
    h.update(s->patient_id);
    h.update(std::string_view("\n"));
  }
  return h.digest();
}

}  // namespace fusionprog
