#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "fusionprog/synthgen.hpp"
#include "fusionprog/training.hpp"
#include "fusionprog/verify/suites.hpp"

using namespace fusionprog;
namespace fs = std::filesystem;

namespace {

struct Cohort {
  Manifest manifest;
  PreparedData data;
};

PreprocessConfig small_preprocess() {
  PreprocessConfig p;
  p.bias_grid = 4;
  return p;
}

Cohort make_cohort(const std::string& name, SynthConfig sc) {
  const auto dir = fs::temp_directory_path() / ("fusionprog_test_training_" + name);
  fs::remove_all(dir);
  Cohort c;
  c.manifest = generate_cohort(sc, dir);
  c.data = prepare_data(c.manifest, small_preprocess());
  return c;
}

const Cohort& tiny_cohort() {
  static const Cohort c = [] {
    SynthConfig sc;
    sc.n_patients = 50;
    sc.n_slices = 4;
    sc.height = sc.width = 16;
    sc.seed = 5;
    return make_cohort("tiny", sc);
  }();
  return c;
}

ModelConfig tiny_model(const PreparedData& d) {
  auto m = verify::tiny_model_config(Backbone::SmallCnn, FusionMode::Hierarchical);
  m.image.in_channels = d.train.front().adc.n_slices;
  m.structured.in_dim = d.n_attrs();
  return m;
}

TrainConfig stage_cfg(Stage s, int epochs, std::uint64_t seed = 1) {
  TrainConfig t;
  t.stage = s;
  t.epochs = epochs;
  t.batch_size = 8;
  t.seed = seed;
  t.augment.patch_size = 4;
  return t;
}

void expect_same_params(const Checkpoint& a, const Checkpoint& b) {
  ASSERT_EQ(a.modules.size(), b.modules.size());
  for (std::size_t i = 0; i < a.modules.size(); ++i) {
    EXPECT_EQ(a.modules[i].name, b.modules[i].name);
    EXPECT_EQ(a.modules[i].data, b.modules[i].data) << a.modules[i].name;
  }
  EXPECT_EQ(a.adam_m, b.adam_m);
  EXPECT_EQ(a.adam_v, b.adam_v);
  EXPECT_EQ(a.optimizer_steps, b.optimizer_steps);
}

}  // namespace

TEST(Schedule, StepDecay) {
  TrainConfig c;
  c.epochs = 20;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 1e-3);
  EXPECT_NEAR(lr_at(10, c), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(19, c), 1e-4, 1e-18);
  c.stage = Stage::Stage2;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 1e-4);
  EXPECT_THROW(lr_at(20, c), ConfigError);
}

TEST(Config, ZeroEpochsRejected) {
  const auto& c = tiny_cohort();
  EXPECT_THROW(train_stage1(c.data, tiny_model(c.data), stage_cfg(Stage::Stage1, 0)), ConfigError);
  EXPECT_THROW(train_stage1(c.data, tiny_model(c.data), stage_cfg(Stage::Stage2, 1)), ConfigError);
  auto single = tiny_model(c.data);
  single.branches = Branches{false, false, true};
  EXPECT_THROW(train_stage1(c.data, single, stage_cfg(Stage::Stage1, 1)), ConfigError);
}

TEST(Stage1, IdenticalSeedsGiveIdenticalCheckpoints) {
  const auto& c = tiny_cohort();
  const auto a = train_stage1(c.data, tiny_model(c.data), stage_cfg(Stage::Stage1, 2, 3));
  const auto b = train_stage1(c.data, tiny_model(c.data), stage_cfg(Stage::Stage1, 2, 3));
  expect_same_params(a.final_state, b.final_state);
  expect_same_params(a.best, b.best);
  const auto other = train_stage1(c.data, tiny_model(c.data), stage_cfg(Stage::Stage1, 2, 4));
  EXPECT_NE(other.final_state.modules.front().data, a.final_state.modules.front().data);
}

TEST(Stage1, TrainingLossDecreasesAcrossSeeds) {
  const auto& c = tiny_cohort();
  int decreased = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = train_stage1(c.data, tiny_model(c.data), stage_cfg(Stage::Stage1, 2, seed));
    ASSERT_EQ(r.history.size(), 2u);
    decreased += r.history[1].train_loss < r.history[0].train_loss;
  }
  EXPECT_GE(decreased, 8);
}

TEST(Stage1, LogsOneLinePerBatchAndEpoch) {
  const auto& c = tiny_cohort();
  std::ostringstream log;
  TrainOptions opts;
  opts.log = &log;
  train_stage1(c.data, tiny_model(c.data), stage_cfg(Stage::Stage1, 1), opts);
  std::istringstream in(log.str());
  std::string line;
  int batches = 0, epochs = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("event"))
      ++epochs;
    else
      ++batches;
  }
  EXPECT_EQ(epochs, 1);
  EXPECT_EQ(batches, static_cast<int>((c.data.train.size() + 7) / 8));
}

TEST(Stage1, LeakageGuardAborts) {
  auto data = tiny_cohort().data;
  data.train[3].split = Split::Val;
  EXPECT_THROW(train_stage1(data, tiny_model(data), stage_cfg(Stage::Stage1, 1)), TrainingError);
  EXPECT_THROW(train_stage2(data, nullptr, tiny_model(data), stage_cfg(Stage::Stage2, 1)), TrainingError);
}

TEST(Preprocess, ImputerIgnoresHeldOutValues) {
  const auto& c = tiny_cohort();
  const auto splits = split_dataset(c.manifest, small_preprocess().split);
  std::set<std::string> held_out;
  for (const auto* m : {&splits.val, &splits.test})
    for (const auto& e : m->entries) held_out.insert(e.patient_id);
  auto perturbed = c.manifest;
  for (auto& e : perturbed.entries)
    if (held_out.count(e.patient_id))
      for (auto& v : e.structured.values) v = v * 3 + 17;
  const auto a = StructuredPipeline::fit(split_dataset(c.manifest, small_preprocess().split), false);
  const auto b = StructuredPipeline::fit(split_dataset(perturbed, small_preprocess().split), false);
  EXPECT_EQ(a.imputer.fill_values, b.imputer.fill_values);
  EXPECT_EQ(a.standardizer.mean, b.standardizer.mean);
}

TEST(Resume, Stage1MatchesStraightRun) {
  const auto& c = tiny_cohort();
  const auto model = tiny_model(c.data);
  const auto cfg = stage_cfg(Stage::Stage1, 3, 9);
  std::vector<Checkpoint> states, bests;
  TrainOptions rec;
  rec.on_epoch = [&](const Checkpoint& s, const Checkpoint& b) {
    states.push_back(s);
    bests.push_back(b);
  };
  const auto straight = train_stage1(c.data, model, cfg, rec);
  ASSERT_EQ(states.size(), 3u);
  EXPECT_EQ(states[0].epoch, 1);
  expect_same_params(states[2], straight.final_state);

  TrainOptions resume;
  resume.resume = &states[0];
  resume.resume_best = &bests[0];
  const auto resumed = train_stage1(c.data, model, cfg, resume);
  expect_same_params(resumed.final_state, straight.final_state);
  expect_same_params(resumed.best, straight.best);
  EXPECT_EQ(resumed.best.best_epoch, straight.best.best_epoch);
  EXPECT_EQ(resumed.history.size(), 2u);
}

TEST(Resume, Stage2MatchesStraightRunAndRejectsWrongStage) {
  const auto& c = tiny_cohort();
  const auto model = tiny_model(c.data);
  const auto s1 = train_stage1(c.data, model, stage_cfg(Stage::Stage1, 1, 2));
  const auto cfg = stage_cfg(Stage::Stage2, 3, 2);
  std::vector<Checkpoint> states, bests;
  TrainOptions rec;
  rec.on_epoch = [&](const Checkpoint& s, const Checkpoint& b) {
    states.push_back(s);
    bests.push_back(b);
  };
  const auto straight = train_stage2(c.data, &s1.best, model, cfg, rec);
  TrainOptions resume;
  resume.resume = &states[1];
  resume.resume_best = &bests[1];
  const auto resumed = train_stage2(c.data, &s1.best, model, cfg, resume);
  expect_same_params(resumed.final_state, straight.final_state);
  expect_same_params(resumed.best, straight.best);

  TrainOptions wrong;
  wrong.resume = &s1.final_state;
  EXPECT_THROW(train_stage2(c.data, &s1.best, model, cfg, wrong), ConfigError);
  auto no_optimizer = states[1];
  no_optimizer.adam_m.clear();
  wrong.resume = &no_optimizer;
  EXPECT_THROW(train_stage2(c.data, &s1.best, model, cfg, wrong), ConfigError);
}

TEST(Stage2, TransferredBlobsEqualStage1) {
  const auto& c = tiny_cohort();
  const auto model = tiny_model(c.data);
  const auto s1 = train_stage1(c.data, model, stage_cfg(Stage::Stage1, 1, 6));
  nn::FusionNetwork<float> net(model);
  net.init(6);
  restore(net, s1.best, {}, {"classifier"});
  const auto after = capture<float>(net, nullptr);
  for (const auto& m : after.modules) {
    if (m.name == "classifier") {
      for (float v : m.data) EXPECT_EQ(v, 0.0f);
      continue;
    }
    ASSERT_NE(s1.best.module(m.name), nullptr);
    EXPECT_EQ(m.checksum(), s1.best.module(m.name)->checksum()) << m.name;
  }
  EXPECT_THROW(train_stage2(c.data, &s1.best, model, stage_cfg(Stage::Stage1, 1)), ConfigError);
  auto s2 = train_stage2(c.data, &s1.best, model, stage_cfg(Stage::Stage2, 1, 6));
  EXPECT_THROW(train_stage2(c.data, &s2.best, model, stage_cfg(Stage::Stage2, 1)), ConfigError);
}

TEST(Stage2, IncompatibleInitNamesBlobs) {
  const auto& c = tiny_cohort();
  const auto model = tiny_model(c.data);
  const auto s1 = train_stage1(c.data, model, stage_cfg(Stage::Stage1, 1));
  auto wider = model;
  wider.image.cnn_channels = {4, 16, 64};
  try {
    train_stage2(c.data, &s1.best, wider, stage_cfg(Stage::Stage2, 1));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("adc_encoder"), std::string::npos) << e.what();
  }
}

TEST(Stage2, SeparableCohortReachesHighValidationAuc) {
  SynthConfig sc;
  sc.n_patients = 200;
  sc.n_slices = 4;
  sc.height = sc.width = 16;
  sc.tabular_signal_strength = 3.0;
  sc.adc_signal_strength = 0.8;
  sc.dwi_signal_strength = 2.0;
  sc.overlap_fraction = 0.0;
  sc.seed = 11;
  const auto c = make_cohort("separable", sc);
  const auto r = train_stage2(c.data, nullptr, tiny_model(c.data), stage_cfg(Stage::Stage2, 20, 1));
  EXPECT_GE(r.best.best_metric, 0.95);
  EXPECT_EQ(r.best.metric_name, "val_auc");
  auto net = load_network<float>(r.best);
  EXPECT_NEAR(evaluate(*net, c.data, Split::Val).auc, r.best.best_metric, 1e-12);
}
