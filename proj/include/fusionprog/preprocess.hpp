#pragma once

// Bias-field flattening, resizing, intensity scaling and structured-data
// imputation/standardization.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "fusionprog/core/error.hpp"
#include "fusionprog/datamodel.hpp"

namespace fusionprog {

/// Flattens a smooth multiplicative bias per slice: fits a degree-2 polynomial
/// to log-intensity on a grid x grid lattice of nonzero voxels, divides the
/// fitted field out and restores the slice's mean nonzero intensity. Voxels
/// <= 0 are background and are copied unchanged.
inline ImageVolume correct_bias(const ImageVolume& vol, int grid = 16, std::vector<std::string>* warnings = nullptr) {
  if (grid < 3) throw ConfigError("correct_bias: grid must be >= 3");
  ImageVolume out = vol;
  const int H = vol.height, W = vol.width;
  auto nx = [W](double col) { return (2.0 * col + 1.0) / W - 1.0; };
  auto ny = [H](double row) { return (2.0 * row + 1.0) / H - 1.0; };
  auto basis = [](double x, double y) {
    Eigen::Matrix<double, 1, 6> b;
    b << 1.0, x, y, x * x, x * y, y * y;
    return b;
  };

  for (int s = 0; s < vol.n_slices; ++s) {
    std::vector<std::array<double, 3>> pts;  // (x, y, log v)
    for (int gy = 0; gy < grid; ++gy) {
      const int row = std::min(H - 1, static_cast<int>((gy + 0.5) * H / grid));
      for (int gx = 0; gx < grid; ++gx) {
        const int col = std::min(W - 1, static_cast<int>((gx + 0.5) * W / grid));
        const float v = vol.at(s, row, col);
        if (v > 0.0f) pts.push_back({nx(col), ny(row), std::log(static_cast<double>(v))});
      }
    }
    if (pts.size() < 6) {
      if (warnings)
        warnings->push_back("correct_bias: slice " + std::to_string(s) + " of patient " + vol.patient_id +
                            " has fewer than 6 nonzero samples; left unchanged");
      continue;
    }
    Eigen::MatrixXd A(static_cast<Eigen::Index>(pts.size()), 6);
    Eigen::VectorXd b(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      A.row(static_cast<Eigen::Index>(i)) = basis(pts[i][0], pts[i][1]);
      b(static_cast<Eigen::Index>(i)) = pts[i][2];
    }
    const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);

    double mean_in = 0.0, mean_out = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const float v = vol.at(s, y, x);
        if (v <= 0.0f) continue;
        const double field = std::exp(basis(nx(x), ny(y)).dot(coef));
        const double c = v / field;
        out.at(s, y, x) = static_cast<float>(c);
        mean_in += v;
        mean_out += c;
        ++count;
      }
    if (count == 0 || mean_out <= 0.0) continue;
    const double scale = mean_in / mean_out;
    for (float& v : out.slice(s))
      if (v > 0.0f) v = static_cast<float>(v * scale);
  }
  return out;
}

/// Bilinear per-slice resize. The source is first center-cropped to the target
/// aspect ratio so nothing is stretched; pixel centers are aligned.
inline ImageVolume resize_volume(const ImageVolume& vol, int target_h, int target_w) {
  if (target_h < 8 || target_w < 8) throw ConfigError("resize_volume: target dims must be >= 8");
  if (target_h == vol.height && target_w == vol.width) return vol;
  ImageVolume out(vol.modality, vol.n_slices, target_h, target_w, vol.patient_id);
  const double src_aspect = static_cast<double>(vol.width) / vol.height;
  const double dst_aspect = static_cast<double>(target_w) / target_h;
  double crop_w = vol.width, crop_h = vol.height;
  if (src_aspect > dst_aspect)
    crop_w = vol.height * dst_aspect;
  else
    crop_h = vol.width / dst_aspect;
  const double x0 = (vol.width - crop_w) / 2.0, y0 = (vol.height - crop_h) / 2.0;
  const double sx = crop_w / target_w, sy = crop_h / target_h;

  for (int s = 0; s < vol.n_slices; ++s)
    for (int i = 0; i < target_h; ++i) {
      const double fy = std::clamp(y0 + (i + 0.5) * sy - 0.5, 0.0, vol.height - 1.0);
      const int y_lo = static_cast<int>(std::floor(fy));
      const int y_hi = std::min(y_lo + 1, vol.height - 1);
      const double wy = fy - y_lo;
      for (int j = 0; j < target_w; ++j) {
        const double fx = std::clamp(x0 + (j + 0.5) * sx - 0.5, 0.0, vol.width - 1.0);
        const int x_lo = static_cast<int>(std::floor(fx));
        const int x_hi = std::min(x_lo + 1, vol.width - 1);
        const double wx = fx - x_lo;
        const double top = (1 - wx) * vol.at(s, y_lo, x_lo) + wx * vol.at(s, y_lo, x_hi);
        const double bot = (1 - wx) * vol.at(s, y_hi, x_lo) + wx * vol.at(s, y_hi, x_hi);
        out.at(s, i, j) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  return out;
}

/// Standardizes positive (brain) voxels to zero mean and unit variance over the
/// volume; background voxels stay exactly 0.
inline ImageVolume normalize_intensity(const ImageVolume& vol) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (float v : vol.voxels)
    if (v > 0.0f) {
      sum += v;
      sq += static_cast<double>(v) * v;
      ++n;
    }
  ImageVolume out = vol;
  if (n < 2) return out;
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  if (!(var > 0.0)) return out;
  const double inv = 1.0 / std::sqrt(var);
  for (float& v : out.voxels)
    if (v > 0.0f) v = static_cast<float>((v - mean) * inv);
  return out;
}

// ---------------------------------------------------------------------------
// Structured data

/// Records from the training split only. Fitting preprocessors requires this
/// handle, so validation/test records cannot reach them by accident.
class TrainRecords {
 public:
  explicit TrainRecords(const DatasetSplits& splits) {
    records_.reserve(splits.train.size());
    for (const auto& e : splits.train.entries) records_.push_back(e.structured);
  }
  static TrainRecords from_records(std::vector<StructuredRecord> records) { return TrainRecords(std::move(records)); }

  const std::vector<StructuredRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  explicit TrainRecords(std::vector<StructuredRecord> r) : records_(std::move(r)) {}
  std::vector<StructuredRecord> records_;
};

struct ImputationModel {
  std::vector<double> fill_values;
  std::vector<std::string> attr_names;
  std::string fitted_on = "train";

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < fill_values.size(); ++i) j[attr_names[i]] = fill_values[i];
    return j;
  }

  static ImputationModel from_json(const nlohmann::ordered_json& j) {
    ImputationModel m;
    for (const auto& [k, v] : j.items()) {
      m.attr_names.push_back(k);
      m.fill_values.push_back(v.get<double>());
    }
    return m;
  }
};

/// Column-wise mode of observed values (rounded to 6 decimals, ties to the
/// smallest value).
inline ImputationModel fit_imputer(const TrainRecords& train) {
  const auto& recs = train.records();
  if (recs.empty()) throw FitError("fit_imputer: training split is empty");
  const std::size_t n_attrs = recs.front().size();
  ImputationModel m;
  m.fill_values.resize(n_attrs);
  if (recs.front().schema)
    m.attr_names = recs.front().attr_names();
  else
    for (std::size_t j = 0; j < n_attrs; ++j) m.attr_names.push_back("attr_" + std::to_string(j));

  for (std::size_t j = 0; j < n_attrs; ++j) {
    std::map<long long, std::size_t> counts;
    for (const auto& r : recs) {
      if (r.size() != n_attrs) throw ShapeError("fit_imputer: records have inconsistent arity");
      if (r.missing_mask[j]) continue;
      ++counts[std::llround(r.values[j] * 1e6)];
    }
    if (counts.empty()) throw FitError("fit_imputer: column '" + m.attr_names[j] + "' is never observed in train");
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;  // strict: earlier (smaller) key wins ties
    m.fill_values[j] = static_cast<double>(best->first) / 1e6;
  }
  return m;
}

inline StructuredRecord impute(const StructuredRecord& record, const ImputationModel& model) {
  if (record.size() != model.fill_values.size())
    throw ShapeError("impute: record has " + std::to_string(record.size()) + " attributes, model expects " +
                     std::to_string(model.fill_values.size()));
  StructuredRecord out = record;
  for (std::size_t j = 0; j < out.size(); ++j)
    if (out.missing_mask[j]) {
      out.values[j] = model.fill_values[j];
      out.missing_mask[j] = false;
    }
  return out;
}

/// z-score with training-split statistics; applied after imputation.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const TrainRecords& train, const ImputationModel& imputer) {
    const auto& recs = train.records();
    if (recs.empty()) throw FitError("Standardizer: training split is empty");
    const std::size_t n = imputer.fill_values.size();
    Standardizer s;
    s.mean.assign(n, 0.0);
    s.stddev.assign(n, 0.0);
    for (const auto& r : recs) {
      const auto x = impute(r, imputer);
      for (std::size_t j = 0; j < n; ++j) s.mean[j] += x.values[j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(recs.size());
    for (const auto& r : recs) {
      const auto x = impute(r, imputer);
      for (std::size_t j = 0; j < n; ++j) s.stddev[j] += (x.values[j] - s.mean[j]) * (x.values[j] - s.mean[j]);
    }
    for (auto& v : s.stddev) {
      v = std::sqrt(v / static_cast<double>(recs.size()));
      if (!(v > 1e-12)) v = 1.0;
    }
    return s;
  }

  std::vector<double> apply(const StructuredRecord& imputed) const {
    if (imputed.any_missing()) throw ShapeError("Standardizer: record still has missing values");
    if (imputed.size() != mean.size()) throw ShapeError("Standardizer: arity mismatch");
    std::vector<double> out(imputed.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (imputed.values[j] - mean[j]) / stddev[j];
    return out;
  }

  nlohmann::ordered_json to_json() const { return {{"mean", mean}, {"stddev", stddev}}; }
  static Standardizer from_json(const nlohmann::ordered_json& j) {
    return {j.at("mean").get<std::vector<double>>(), j.at("stddev").get<std::vector<double>>()};
  }
};

}  // namespace fusionprog
