#pragma once

// Ablation grid, single-modality baselines and report rendering.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionprog/core/error.hpp"
#include "fusionprog/dataset.hpp"
#include "fusionprog/metrics.hpp"
#include "fusionprog/training.hpp"

namespace fusionprog {

struct ExperimentConfig {
  PreprocessConfig preprocess;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

/// One row of a result table: which losses/fusion/branches it trains with.
struct RunSpec {
  std::string id;
  std::string label;
  LossSelection losses;  // all false: no stage 1
  FusionMode fusion = FusionMode::Hierarchical;
  CombineStrategy strategy = CombineStrategy::RandomPerMinibatch;
  Branches branches;
  bool drop_nihss = false;

  bool pretrain() const { return losses.any() && branches.all(); }
  bool hf() const { return fusion == FusionMode::Hierarchical; }
};

struct PublishedRef {
  double auc = 0, f1 = 0, acc = 0;  // test split; acc in percent
};

struct AblationGrid {
  std::vector<RunSpec> rows;
  std::vector<RunSpec> strategies;
  std::vector<RunSpec> baselines;

  /// Loss/HF flag patterns A-J, the three combination strategies and the six
  /// baseline rows.
  static AblationGrid standard() {
    AblationGrid g;
    struct F {
      const char* id;
      bool intra, inter, fmcl, hf;
    };
    const F flags[] = {{"A", 1, 0, 0, 0}, {"B", 0, 1, 0, 0}, {"C", 0, 0, 1, 0}, {"D", 0, 0, 0, 1}, {"E", 0, 0, 1, 1},
                       {"F", 1, 1, 0, 0}, {"G", 1, 0, 1, 1}, {"H", 0, 1, 1, 1}, {"I", 1, 1, 1, 0}, {"J", 1, 1, 1, 1}};
    for (const auto& f : flags) {
      RunSpec r;
      r.id = f.id;
      r.label = std::string("Model ") + f.id;
      r.losses = {f.intra, f.inter, f.fmcl};
      r.fusion = f.hf ? FusionMode::Hierarchical : FusionMode::Average;
      g.rows.push_back(r);
    }
    const std::pair<CombineStrategy, const char*> strategies[] = {
        {CombineStrategy::AverageAll, "Averaging"},
        {CombineStrategy::RandomPerEpoch, "Randomly picked per epoch"},
        {CombineStrategy::RandomPerMinibatch, "Randomly picked per mini-batch"}};
    for (const auto& [s, label] : strategies) {
      RunSpec r;
      r.id = to_string(s);
      r.label = label;
      r.strategy = s;
      g.strategies.push_back(r);
    }
    auto baseline = [&](const char* id, const char* label, Branches b, bool drop) {
      RunSpec r;
      r.id = id;
      r.label = label;
      r.branches = b;
      r.drop_nihss = drop;
      if (!b.all()) r.losses = {false, false, false};
      g.baselines.push_back(r);
    };
    baseline("adc", "CNN (ADC)", {true, false, false}, false);
    baseline("dwi", "CNN (DWI)", {false, true, false}, false);
    baseline("mlp", "MLP (all clinical attributes)", {false, false, true}, false);
    baseline("mlp_no_nihss", "MLP (without NIHSS)", {false, false, true}, true);
    baseline("fusion", "Fusion (all clinical attributes)", {}, false);
    baseline("fusion_no_nihss", "Fusion (without NIHSS)", {}, true);
    return g;
  }

  const std::vector<RunSpec>& table(const std::string& name) const {
    if (name == "table3") return rows;
    if (name == "table4") return strategies;
    if (name == "table5") return baselines;
    throw ConfigError("unknown grid '" + name + "' (expected table3, table4 or table5)");
  }
};

/// Published test-split numbers for the same row ids (private clinical cohort).
inline std::optional<PublishedRef> published_reference(const std::string& table, const std::string& id) {
  static const std::map<std::string, PublishedRef> t3{
      {"A", {0.8701, 0.7869, 79.39}}, {"B", {0.8613, 0.7773, 78.64}}, {"C", {0.8682, 0.7891, 79.85}},
      {"D", {0.8491, 0.7662, 77.12}}, {"E", {0.8737, 0.7895, 79.70}}, {"F", {0.8680, 0.7953, 80.30}},
      {"G", {0.8689, 0.7941, 80.15}}, {"H", {0.8656, 0.7927, 80.00}}, {"I", {0.8547, 0.7811, 79.09}},
      {"J", {0.8703, 0.7968, 80.45}}};
  static const std::map<std::string, PublishedRef> t4{{"AVERAGE_ALL", {0.8623, 0.7842, 79.09}},
                                                      {"RANDOM_PER_EPOCH", {0.8642, 0.7874, 79.39}},
                                                      {"RANDOM_PER_MINIBATCH", {0.8703, 0.7968, 80.45}}};
  static const std::map<std::string, PublishedRef> t5{
      {"adc", {0.7610, 0.6932, 70.30}},          {"dwi", {0.7552, 0.6845, 68.78}},
      {"mlp", {0.8569, 0.7481, 75.76}},          {"mlp_no_nihss", {0.8179, 0.7447, 75.30}},
      {"fusion", {0.8703, 0.7968, 80.45}},       {"fusion_no_nihss", {0.8408, 0.7690, 77.73}}};
  const auto& m = table == "table3" ? t3 : table == "table4" ? t4 : t5;
  auto it = m.find(id);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

struct RowResult {
  RunSpec spec;
  bool failed = false;
  std::string error;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> val, test;  // one per seed
  MetricsReport val_mean, test_mean;
  int structured_arity = 0;
  std::vector<std::string> stage1_batch_checksums;  // first seed, epoch 0
};

struct ResultTable {
  std::string name;  // table3, table4, table5
  std::vector<RowResult> rows;
};

inline MetricsReport mean_report(const std::vector<MetricsReport>& rs) {
  MetricsReport m;
  if (rs.empty()) return m;
  m.split = rs.front().split;
  m.n = rs.front().n;
  for (const auto& r : rs) {
    m.auc += r.auc;
    m.macro_f1 += r.macro_f1;
    m.accuracy += r.accuracy;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) m.confusion[a][b] += r.confusion[a][b];
  }
  const double k = static_cast<double>(rs.size());
  m.auc /= k;
  m.macro_f1 /= k;
  m.accuracy /= k;
  return m;
}

struct PipelineResult {
  std::optional<TrainResult> stage1;
  TrainResult stage2;
  MetricsReport val, test;
  std::vector<std::string> stage1_batch_checksums;  // epoch 0 order
};

/// Effective (model, train) configs for a row at a given seed.
inline std::pair<ModelConfig, TrainConfig> row_configs(const RunSpec& spec, const ExperimentConfig& exp,
                                                       int structured_arity, std::uint64_t seed) {
  ModelConfig model = exp.model;
  model.fusion.mode = spec.fusion;
  model.branches = spec.branches;
  model.structured.in_dim = structured_arity;
  TrainConfig train = exp.train;
  train.seed = seed;
  train.contrastive.rng_seed = seed;
  train.contrastive.strategy = spec.strategy;
  train.losses = spec.losses;
  // Single-modality baselines train supervised from scratch at the stage-1 rate.
  if (!spec.branches.all()) train.lr_stage2 = train.lr_stage1;
  return {model, train};
}

/// Stage 1 (when the row pretrains) then stage 2 from the best stage-1
/// checkpoint; metrics come from the best stage-2 checkpoint.
inline PipelineResult run_pipeline(const PreparedData& data, const ModelConfig& model, const TrainConfig& train,
                                   bool pretrain, std::ostream* log = nullptr) {
  PipelineResult out;
  TrainOptions opts;
  opts.log = log;
  if (pretrain) {
    TrainConfig c1 = train;
    c1.stage = Stage::Stage1;
    std::ostringstream tee;
    opts.log = &tee;
    out.stage1 = train_stage1<float>(data, model, c1, opts);
    std::istringstream lines(tee.str());
    for (std::string line; std::getline(lines, line);) {
      if (log) *log << line << "\n";
      const auto j = nlohmann::json::parse(line);
      if (j.contains("batch_checksum") && j.at("epoch") == 0) out.stage1_batch_checksums.push_back(j.at("batch_checksum"));
    }
    opts.log = log;
  }
  TrainConfig c2 = train;
  c2.stage = Stage::Stage2;
  out.stage2 = train_stage2<float>(data, pretrain ? &out.stage1->best : nullptr, model, c2, opts);
  auto net = load_network<float>(out.stage2.best);
  out.val = evaluate(*net, data, Split::Val, train.batch_size);
  out.test = evaluate(*net, data, Split::Test, train.batch_size);
  return out;
}

/// Memoizes pipeline runs by their effective configuration, so rows that
/// coincide (for example Model J and the per-mini-batch strategy) train once.
class RunCache {
 public:
  const PipelineResult& get(const PreparedData& data, const ModelConfig& model, const TrainConfig& train,
                            bool pretrain, std::ostream* log) {
    nlohmann::ordered_json key{{"model", to_json(model)},
                               {"train", to_json(train)},
                               {"pretrain", pretrain},
                               {"preprocess", to_json(data.config)},
                               {"n_train", data.train.size()}};
    const std::string k = key.dump();
    auto it = cache_.find(k);
    if (it != cache_.end()) return *it->second;
    auto r = std::make_unique<PipelineResult>(run_pipeline(data, model, train, pretrain, log));
    return *cache_.emplace(k, std::move(r)).first->second;
  }
  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::string, std::unique_ptr<PipelineResult>> cache_;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains one row over all seeds. Failures mark the row FAILED.
inline RowResult run_row(const RunSpec& spec, const PreparedData& data, const ExperimentConfig& exp, RunCache& cache,
                         const ProgressFn& progress = {}, std::ostream* log = nullptr) {
  RowResult row;
  row.spec = spec;
  row.structured_arity = data.n_attrs();
  try {
    for (auto seed : exp.seeds) {
      const auto [model, train] = row_configs(spec, exp, data.n_attrs(), seed);
      if (progress) progress("row " + spec.id + " seed " + std::to_string(seed));
      const auto& r = cache.get(data, model, train, spec.pretrain(), log);
      row.seeds.push_back(seed);
      row.val.push_back(r.val);
      row.test.push_back(r.test);
      if (row.stage1_batch_checksums.empty()) row.stage1_batch_checksums = r.stage1_batch_checksums;
    }
    row.val_mean = mean_report(row.val);
    row.test_mean = mean_report(row.test);
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
    row.val.clear();
    row.test.clear();
  }
  return row;
}

/// Table 3 or Table 4 rows over one prepared dataset.
inline ResultTable run_ablation(const std::string& table, const AblationGrid& grid, const PreparedData& data,
                                const ExperimentConfig& exp, RunCache& cache, const ProgressFn& progress = {},
                                std::ostream* log = nullptr) {
  if (table == "table5") throw ConfigError("run_ablation: use run_baselines for table5");
  ResultTable t{table, {}};
  for (const auto& spec : grid.table(table)) t.rows.push_back(run_row(spec, data, exp, cache, progress, log));
  return t;
}

/// The six baseline rows; without-NIHSS rows use a dataset prepared with the
/// NIHSS columns removed from the input.
inline ResultTable run_baselines(const PreparedData& with_nihss, const PreparedData& without_nihss,
                                 const ExperimentConfig& exp, RunCache& cache, const ProgressFn& progress = {},
                                 std::ostream* log = nullptr) {
  if (with_nihss.config.drop_nihss || !without_nihss.config.drop_nihss)
    throw ConfigError("run_baselines: datasets are swapped or both keep NIHSS");
  ResultTable t{"table5", {}};
  for (const auto& spec : AblationGrid::standard().baselines)
    t.rows.push_back(run_row(spec, spec.drop_nihss ? without_nihss : with_nihss, exp, cache, progress, log));
  return t;
}

inline ResultTable run_baselines(const Manifest& manifest, const ExperimentConfig& exp, RunCache& cache,
                                 const ProgressFn& progress = {}, std::ostream* log = nullptr) {
  PreprocessConfig with = exp.preprocess, without = exp.preprocess;
  with.drop_nihss = false;
  without.drop_nihss = true;
  return run_baselines(prepare_data(manifest, with), prepare_data(manifest, without), exp, cache, progress, log);
}

// ---------------------------------------------------------------------------
// Reports

inline const char* kPublishedColumn = "published (not reproducible: private cohort)";

inline nlohmann::ordered_json to_json(const RunSpec& s) {
  return {{"id", s.id},
          {"label", s.label},
          {"use_intra", s.losses.intra},
          {"use_inter", s.losses.inter},
          {"use_fmcl", s.losses.fmcl},
          {"use_hf", s.hf()},
          {"strategy", to_string(s.strategy)},
          {"branches", s.branches.to_string()},
          {"drop_nihss", s.drop_nihss}};
}

inline RunSpec run_spec_from_json(const nlohmann::ordered_json& j) {
  RunSpec s;
  s.id = j.at("id");
  s.label = j.at("label");
  s.losses = {j.at("use_intra"), j.at("use_inter"), j.at("use_fmcl")};
  s.fusion = j.at("use_hf").get<bool>() ? FusionMode::Hierarchical : FusionMode::Average;
  s.strategy = parse_strategy(j.at("strategy"));
  const std::string br = j.at("branches");
  s.branches = {br.find("adc") != std::string::npos, br.find("dwi") != std::string::npos,
                br.find("structured") != std::string::npos};
  s.drop_nihss = j.at("drop_nihss");
  return s;
}

inline nlohmann::ordered_json to_json(const ResultTable& t) {
  nlohmann::ordered_json j{{"name", t.name}, {"rows", nlohmann::ordered_json::array()}};
  for (const auto& r : t.rows) {
    nlohmann::ordered_json row{{"spec", to_json(r.spec)},
                               {"failed", r.failed},
                               {"error", r.error},
                               {"seeds", r.seeds},
                               {"structured_arity", r.structured_arity},
                               {"stage1_batch_checksums", r.stage1_batch_checksums}};
    auto& v = row["val"] = nlohmann::ordered_json::array();
    for (const auto& m : r.val) v.push_back(to_json(m));
    auto& te = row["test"] = nlohmann::ordered_json::array();
    for (const auto& m : r.test) te.push_back(to_json(m));
    if (!r.failed) {
      row["val_mean"] = to_json(r.val_mean);
      row["test_mean"] = to_json(r.test_mean);
    }
    if (auto ref = published_reference(t.name, r.spec.id))
      row["published_test"] = {{"auc", ref->auc}, {"macro_f1", ref->f1}, {"accuracy_percent", ref->acc}};
    j["rows"].push_back(row);
  }
  return j;
}

inline ResultTable table_from_json(const nlohmann::ordered_json& j) {
  ResultTable t;
  t.name = j.at("name");
  for (const auto& row : j.at("rows")) {
    RowResult r;
    r.spec = run_spec_from_json(row.at("spec"));
    r.failed = row.at("failed");
    r.error = row.at("error");
    r.seeds = row.at("seeds").get<std::vector<std::uint64_t>>();
    r.structured_arity = row.at("structured_arity");
    r.stage1_batch_checksums = row.at("stage1_batch_checksums").get<std::vector<std::string>>();
    for (const auto& m : row.at("val")) r.val.push_back(metrics_from_json(m));
    for (const auto& m : row.at("test")) r.test.push_back(metrics_from_json(m));
    if (!r.failed) {
      r.val_mean = metrics_from_json(row.at("val_mean"));
      r.test_mean = metrics_from_json(row.at("test_mean"));
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline bool operator==(const RunSpec& a, const RunSpec& b) { return to_json(a) == to_json(b); }
inline bool operator==(const RowResult& a, const RowResult& b) {
  return a.spec == b.spec && a.failed == b.failed && a.error == b.error && a.seeds == b.seeds && a.val == b.val &&
         a.test == b.test && (a.failed || (a.val_mean == b.val_mean && a.test_mean == b.test_mean)) &&
         a.structured_arity == b.structured_arity && a.stage1_batch_checksums == b.stage1_batch_checksums;
}
inline bool operator==(const ResultTable& a, const ResultTable& b) { return a.name == b.name && a.rows == b.rows; }

namespace detail {
inline std::string fmt(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}
}  // namespace detail

inline std::string render_markdown(const ResultTable& t) {
  std::ostringstream os;
  const bool t3 = t.name == "table3", t5 = t.name == "table5";
  const char* title = t3 ? "Ablation of contrastive losses (stage 1)"
                         : t5 ? "Single-modality baselines" : "Combined loss computation (stage 1)";
  os << "### " << title << "\n\n";
  os << (t3 ? "| Model | L_intra | L_inter | L_FMCL | HF |" : t5 ? "| Model | Attributes |" : "| Training strategy |");
  os << " Val AUC | Val F1 | Val Acc (%) | Test AUC | Test F1 | Test Acc (%) | " << kPublishedColumn
     << " test AUC / F1 / Acc (%) |\n";
  const int flag_cols = t3 ? 5 : t5 ? 2 : 1;
  os << "|";
  for (int i = 0; i < flag_cols + 7; ++i) os << (i < flag_cols ? "---|" : "---:|");
  os << "\n";
  for (const auto& r : t.rows) {
    auto v = [](bool b) { return b ? "V" : ""; };
    if (t3)
      os << "| " << r.spec.id << " | " << v(r.spec.losses.intra) << " | " << v(r.spec.losses.inter) << " | "
         << v(r.spec.losses.fmcl) << " | " << v(r.spec.hf()) << " |";
    else if (t5)
      os << "| " << r.spec.label << " | " << r.structured_arity << " |";
    else
      os << "| " << r.spec.label << " |";
    if (r.failed) {
      for (int i = 0; i < 6; ++i) os << " FAILED |";
    } else {
      const auto& a = r.val_mean;
      const auto& b = r.test_mean;
      os << " " << detail::fmt(a.auc, 4) << " | " << detail::fmt(a.macro_f1, 4) << " | "
         << detail::fmt(100 * a.accuracy, 2) << " | " << detail::fmt(b.auc, 4) << " | " << detail::fmt(b.macro_f1, 4)
         << " | " << detail::fmt(100 * b.accuracy, 2) << " |";
    }
    if (auto ref = published_reference(t.name, r.spec.id))
      os << " " << detail::fmt(ref->auc, 4) << " / " << detail::fmt(ref->f1, 4) << " / " << detail::fmt(ref->acc, 2)
         << " |\n";
    else
      os << " |\n";
  }
  std::size_t n_seeds = 0;
  for (const auto& r : t.rows) n_seeds = std::max(n_seeds, r.seeds.size());
  os << "\nMeans over " << n_seeds << " training seed(s) on one fixed synthetic split.\n";
  for (const auto& r : t.rows)
    if (r.failed) os << "\n- " << r.spec.id << " FAILED: " << r.error << "\n";
  return os.str();
}

struct Report {
  std::string markdown;
  nlohmann::ordered_json json;
};

inline Report render_report(const std::vector<ResultTable>& tables) {
  if (tables.empty()) throw ConfigError("render_report: no tables");
  Report r;
  r.json = {{"tables", nlohmann::ordered_json::array()}};
  for (const auto& t : tables) {
    r.markdown += render_markdown(t) + "\n";
    r.json["tables"].push_back(to_json(t));
  }
  return r;
}

inline std::vector<ResultTable> tables_from_json(const nlohmann::ordered_json& j) {
  std::vector<ResultTable> out;
  for (const auto& t : j.at("tables")) out.push_back(table_from_json(t));
  return out;
}

}  // namespace fusionprog
