#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fusionprog/cli.hpp"
#include "fusionprog/config.hpp"
#include "fusionprog/eval.hpp"
#include "fusionprog/verify/suites.hpp"

using namespace fusionprog;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fusionprog_test_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Cli {
  int code = 0;
  std::string out, err;
};

Cli invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "fusionprog");
  std::ostringstream out, err;
  Cli r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig e;
  e.preprocess.bias_grid = 4;
  e.model = verify::tiny_model_config(Backbone::SmallCnn, FusionMode::Hierarchical);
  e.train.epochs = 1;
  e.train.batch_size = 8;
  e.train.augment.patch_size = 4;
  e.seeds = {0};
  return e;
}

const Manifest& tiny_manifest() {
  static const Manifest m = [] {
    SynthConfig sc;
    sc.n_patients = 40;
    sc.n_slices = 4;
    sc.height = sc.width = 16;
    return generate_cohort(sc, scratch_dir("cohort"));
  }();
  return m;
}

PreparedData prepared(bool drop_nihss) {
  auto p = tiny_experiment().preprocess;
  p.drop_nihss = drop_nihss;
  return prepare_data(tiny_manifest(), p);
}

ExperimentConfig experiment_for(const PreparedData& d) {
  auto e = tiny_experiment();
  e.model.image.in_channels = d.n_slices();
  return e;
}

const RowResult* find_row(const ResultTable& t, const std::string& id) {
  for (const auto& r : t.rows)
    if (r.spec.id == id) return &r;
  return nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------
// grid

TEST(Grid, FlagPatterns) {
  const auto g = AblationGrid::standard();
  ASSERT_EQ(g.rows.size(), 10u);
  const std::string expect[] = {"1000", "0100", "0010", "0001", "0011", "1100", "1011", "0111", "1110", "1111"};
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& r = g.rows[i];
    EXPECT_EQ(r.id, std::string(1, static_cast<char>('A' + i)));
    const std::string flags{r.losses.intra ? '1' : '0', r.losses.inter ? '1' : '0', r.losses.fmcl ? '1' : '0',
                            r.hf() ? '1' : '0'};
    EXPECT_EQ(flags, expect[i]) << r.id;
    EXPECT_EQ(r.fusion, r.hf() ? FusionMode::Hierarchical : FusionMode::Average);
  }
  EXPECT_FALSE(g.rows[3].pretrain());  // D: stage 2 only
  EXPECT_TRUE(g.rows[9].pretrain());   // J: full method
  EXPECT_EQ(g.strategies.size(), 3u);
  EXPECT_EQ(g.baselines.size(), 6u);
  EXPECT_THROW(g.table("table9"), ConfigError);
}

TEST(Grid, BaselinesUseSingleBranchesAndStage1Rate) {
  const auto g = AblationGrid::standard();
  const auto exp = tiny_experiment();
  for (const auto& b : g.baselines) {
    const auto [model, train] = row_configs(b, exp, b.drop_nihss ? 46 : 62, 0);
    EXPECT_EQ(model.structured.in_dim, b.drop_nihss ? 46 : 62);
    if (b.branches.all()) {
      EXPECT_TRUE(b.pretrain()) << b.id;
      EXPECT_EQ(train.lr_stage2, exp.train.lr_stage2);
    } else {
      EXPECT_FALSE(b.pretrain()) << b.id;
      EXPECT_EQ(static_cast<int>(b.branches.adc) + b.branches.dwi + b.branches.structured, 1);
      EXPECT_EQ(train.lr_stage2, exp.train.lr_stage1);
    }
  }
}

// ---------------------------------------------------------------------------
// reports

TEST(Report, FailedRowAndPublishedColumn) {
  const auto g = AblationGrid::standard();
  ResultTable t{"table3", {}};
  RowResult ok;
  ok.spec = g.rows[9];
  ok.seeds = {0};
  ok.val = ok.test = {MetricsReport{0.9, 0.8, 0.85, "val", 10, {}}};
  ok.val_mean = ok.test_mean = ok.val[0];
  ok.structured_arity = 62;
  RowResult bad;
  bad.spec = g.rows[0];
  bad.failed = true;
  bad.error = "boom";
  t.rows = {bad, ok};
  const auto rep = render_report({t});
  EXPECT_NE(rep.markdown.find("FAILED"), std::string::npos);
  EXPECT_NE(rep.markdown.find("0.8703"), std::string::npos);
  EXPECT_NE(rep.markdown.find(kPublishedColumn), std::string::npos);
  EXPECT_NE(rep.markdown.find("A FAILED: boom"), std::string::npos);
  const auto back = tables_from_json(nlohmann::ordered_json::parse(rep.json.dump()));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], t);
  EXPECT_EQ(render_report(back).markdown, rep.markdown);
  EXPECT_THROW(render_report({}), ConfigError);
}

TEST(Report, MeanOverSeeds) {
  const auto m = mean_report({MetricsReport{0.8, 0.6, 0.7, "test", 10, {}}, MetricsReport{0.9, 0.7, 0.8, "test", 10, {}}});
  EXPECT_NEAR(m.auc, 0.85, 1e-12);
  EXPECT_NEAR(m.macro_f1, 0.65, 1e-12);
  EXPECT_NEAR(m.accuracy, 0.75, 1e-12);
}

// ---------------------------------------------------------------------------
// harness runs

TEST(Harness, FailingRowIsMarkedAndOthersContinue) {
  const auto data = prepared(false);
  auto exp = experiment_for(data);
  exp.train.views_per_sample = 1;  // invalid for stage 1 only
  RunCache cache;
  const auto g = AblationGrid::standard();
  const auto j = run_row(g.rows[9], data, exp, cache);
  EXPECT_TRUE(j.failed);
  EXPECT_NE(j.error.find("views_per_sample"), std::string::npos) << j.error;
  const auto adc = run_row(g.baselines[0], data, exp, cache);
  EXPECT_TRUE(adc.failed);  // stage-2 validation rejects the same config
  exp.train.views_per_sample = 2;
  const auto d = run_row(g.rows[3], data, exp, cache);
  EXPECT_FALSE(d.failed) << d.error;
}

TEST(Harness, HfRowsShareStage1BatchesAndCacheDeduplicates) {
  const auto data = prepared(false);
  const auto exp = experiment_for(data);
  RunCache cache;
  const auto g = AblationGrid::standard();
  const auto i_row = run_row(g.rows[8], data, exp, cache);
  const auto j_row = run_row(g.rows[9], data, exp, cache);
  ASSERT_FALSE(i_row.failed) << i_row.error;
  ASSERT_FALSE(j_row.failed) << j_row.error;
  EXPECT_FALSE(j_row.stage1_batch_checksums.empty());
  EXPECT_EQ(i_row.stage1_batch_checksums, j_row.stage1_batch_checksums);
  EXPECT_EQ(cache.size(), 2u);
  const auto rpm = run_row(g.strategies[2], data, exp, cache);
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ(rpm.test, j_row.test);
}

TEST(Harness, BaselinesTableShape) {
  const auto with = prepared(false), without = prepared(true);
  const auto exp = experiment_for(with);
  RunCache cache;
  const auto t = run_baselines(with, without, exp, cache);
  ASSERT_EQ(t.rows.size(), 6u);
  for (const auto& r : t.rows) {
    EXPECT_FALSE(r.failed) << r.spec.id << ": " << r.error;
    EXPECT_EQ(r.structured_arity, r.spec.drop_nihss ? 46 : 62) << r.spec.id;
  }
  EXPECT_TRUE(find_row(t, "adc")->stage1_batch_checksums.empty());
  EXPECT_FALSE(find_row(t, "fusion")->stage1_batch_checksums.empty());
  const auto md = render_markdown(t);
  EXPECT_NE(md.find("| MLP (without NIHSS) | 46 |"), std::string::npos) << md;
  EXPECT_THROW(run_baselines(without, with, exp, cache), ConfigError);
}

// ---------------------------------------------------------------------------
// configuration

TEST(Config, ShippedConfigsParse) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(FUSIONPROG_CONFIG_DIR)) {
    if (e.path().extension() != ".ini") continue;
    EXPECT_NO_THROW(load_config(e.path())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 3);
}

// ---------------------------------------------------------------------------
// command line

TEST(Cli, UsageErrors) {
  auto r = invoke({"train", "--stage", "1", "--out", scratch_dir("usage").string()});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("--data"), std::string::npos);
  EXPECT_EQ(invoke({"synth"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"bogus"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"verify", "--suite", "nope"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"--help"}).code, cli::kOk);
}

TEST(Cli, VerifyMetricsSuite) {
  const auto dir = scratch_dir("verify");
  const auto r = invoke({"--out", dir.string(), "verify", "--suite", "metrics"});
  EXPECT_EQ(r.code, cli::kOk) << r.out << r.err;
  EXPECT_NE(r.out.find("[PASS] metric_oracles"), std::string::npos);
  const auto j = nlohmann::json::parse(read_text(dir / "verify.json"));
  EXPECT_TRUE(j.at(0).at("passed").get<bool>());
}

TEST(Cli, SynthTrainEvalPipeline) {
  const auto root = scratch_dir("pipeline");
  const auto ini = root / "run.ini";
  {
    std::ofstream f(ini);
    f << "[synth]\nn_patients = 30\nn_slices = 4\nheight = 16\nwidth = 16\n"
         "[preprocess]\nbias_grid = 4\n"
         "[model]\ncnn_channels = 4,8,64\nprojection_hidden = 62\n"
         "[train]\nepochs = 2\nbatch_size = 8\n[augment]\npatch_size = 4\n";
  }
  const std::string data = (root / "data").string(), s1 = (root / "s1").string(), s2 = (root / "s2").string();
  auto r = invoke({"--config", ini.string(), "--out", data, "synth"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(root / "data" / "manifest.csv"));
  EXPECT_TRUE(fs::exists(root / "data" / "cohort.md"));

  r = invoke({"describe", "--data", data});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("Median age (IQR)"), std::string::npos);

  r = invoke({"--config", ini.string(), "--set", "train.lr_stage1=0.002", "--out", s1, "train", "--stage", "1", "--data", data});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  for (const char* sub : {"best", "last", "final"}) EXPECT_TRUE(fs::exists(fs::path(s1) / sub)) << sub;
  {
    const auto imputer = nlohmann::ordered_json::parse(read_text(fs::path(s1) / "best" / "imputer.json"));
    ASSERT_TRUE(imputer.is_object());
    EXPECT_EQ(imputer.size(), 62u);
    for (const auto& [name, fill] : imputer.items()) EXPECT_TRUE(fill.is_number()) << name;
  }
  const auto snap = load_config(fs::path(s1) / "config.ini");
  EXPECT_EQ(snap.exp.train.lr_stage1, 0.002);
  {
    std::ifstream log(fs::path(s1) / "train.jsonl");
    int epochs = 0;
    for (std::string line; std::getline(log, line);) epochs += nlohmann::json::parse(line).contains("event");
    EXPECT_EQ(epochs, 2);
  }

  r = invoke({"--config", ini.string(), "--out", s2, "train", "--stage", "2", "--data", data, "--init", s1 + "/best"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto summary = nlohmann::json::parse(read_text(fs::path(s2) / "summary.json"));
  EXPECT_TRUE(summary.contains("val_auc"));
  EXPECT_TRUE(summary.contains("test"));

  r = invoke({"--out", s2, "eval", "--ckpt", s2 + "/best", "--data", data, "--split", "test"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto m = metrics_from_json(nlohmann::ordered_json::parse(read_text(fs::path(s2) / "metrics_test.json")));
  EXPECT_EQ(m, metrics_from_json(summary.at("test")));

  // Resuming a finished run retrains nothing and leaves the checkpoints intact.
  const auto before = load_checkpoint(fs::path(s1) / "final");
  r = invoke({"--config", ini.string(), "--set", "train.lr_stage1=0.002", "--out", s1, "train", "--stage", "1", "--data",
           data, "--resume", s1});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(load_checkpoint(fs::path(s1) / "final").modules.front().data, before.modules.front().data);

  r = invoke({"eval", "--ckpt", s2 + "/best", "--data", (root / "missing").string()});
  EXPECT_EQ(r.code, cli::kFailure);
}
