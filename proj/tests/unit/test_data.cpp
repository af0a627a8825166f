#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fusionprog/augment.hpp"
#include "fusionprog/config.hpp"
#include "fusionprog/datamodel.hpp"
#include "fusionprog/dataset.hpp"
#include "fusionprog/metrics.hpp"
#include "fusionprog/preprocess.hpp"
#include "fusionprog/synthgen.hpp"
#include "fusionprog/verify/suites.hpp"

using namespace fusionprog;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fusionprog_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string manifest_text(const std::vector<std::string>& ids, int n_attrs) {
  std::ostringstream os;
  os << "patient_id,adc_path,dwi_path,label";
  for (int j = 0; j < n_attrs; ++j) os << ",a" << j;
  os << "\n";
  int k = 0;
  for (const auto& id : ids) {
    os << id << ",v/" << id << "/adc,v/" << id << "/dwi," << (k % 2);
    for (int j = 0; j < n_attrs; ++j) os << "," << (j == 1 ? std::string() : std::to_string(k + j));
    os << "\n";
    ++k;
  }
  return os.str();
}

Manifest synthetic_manifest(int n, std::uint64_t seed = 3) {
  Manifest m;
  m.schema = AttributeSchema::from_names({"a", "b"});
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.patient_id = synth_patient_id(i);
    e.label = static_cast<int>(rng.below(2));
    e.structured.schema = m.schema;
    e.structured.values = {rng.normal(), rng.normal()};
    e.structured.missing_mask = {false, false};
    m.entries.push_back(e);
  }
  return m;
}

SynthConfig small_synth(int n, int slices = 4, int hw = 32) {
  SynthConfig c;
  c.n_patients = n;
  c.n_slices = slices;
  c.height = hw;
  c.width = hw;
  return c;
}

ImageVolume filled(int s, int h, int w, float v) {
  ImageVolume vol(Modality::ADC, s, h, w, "X");
  std::fill(vol.voxels.begin(), vol.voxels.end(), v);
  return vol;
}

double coefficient_of_variation(std::span<const float> v) {
  double mean = 0, sq = 0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (float x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size())) / mean;
}

StructuredRecord record(std::vector<double> values, std::vector<bool> missing) {
  StructuredRecord r;
  r.values = std::move(values);
  r.missing_mask = std::move(missing);
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// datamodel

TEST(Manifest, ThreeUniquePatients) {
  std::istringstream in(manifest_text({"p1", "p2", "p3"}, 3));
  const auto m = parse_manifest(in, "/data", false);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.schema->size(), 3u);
  EXPECT_TRUE(m.entries[0].structured.missing_mask[1]);
  EXPECT_EQ(m.entries[2].structured.values[2], 4.0);
  EXPECT_EQ(m.resolve(m.entries[0].adc_path), fs::path("/data/v/p1/adc"));
}

TEST(Manifest, DuplicatePatientKeepsFirst) {
  std::istringstream in(manifest_text({"p1", "p1"}, 2));
  const auto m = parse_manifest(in, ".", false);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.entries[0].label, 0);
  EXPECT_EQ(m.entries[0].structured.values[0], 0.0);
}

TEST(Manifest, ArityMismatchIsParseError) {
  std::string text = manifest_text({"p1"}, 62);
  text.erase(text.rfind(','));  // 61 structured fields
  std::istringstream in(text + "\n");
  EXPECT_THROW(parse_manifest(in, ".", false), ParseError);
}

TEST(Manifest, MissingVolumeIsResolutionError) {
  std::istringstream in(manifest_text({"p1"}, 1));
  EXPECT_THROW(parse_manifest(in, scratch_dir("missing"), true), ResolutionError);
}

TEST(Manifest, WriteParseRoundTrip) {
  const auto m = synthetic_manifest(7);
  std::ostringstream os;
  write_manifest(m, os);
  std::istringstream in(os.str());
  EXPECT_EQ(parse_manifest(in, ".", false), m);
}

TEST(Volume, DiskRoundTripIsExact) {
  const auto dir = scratch_dir("volume");
  ImageVolume v(Modality::DWI, 3, 9, 11, "P1");
  Rng rng(1);
  for (auto& x : v.voxels) x = static_cast<float>(rng.normal());
  write_volume(dir / "dwi", v);
  EXPECT_EQ(read_volume(dir / "dwi", Modality::DWI, "P1"), v);

  std::ofstream(dir / "dwi" / "slice_0001.f32", std::ios::binary | std::ios::app) << 'x';
  EXPECT_THROW(read_volume(dir / "dwi", Modality::DWI, "P1"), ParseError);
  fs::resize_file(dir / "dwi" / "slice_0001.f32", 9 * 11 * 4 - 4);
  EXPECT_THROW(read_volume(dir / "dwi", Modality::DWI, "P1"), ParseError);
}

TEST(Split, TenPatientsExactSizes) {
  const auto s = split_dataset(synthetic_manifest(10), SplitSpec{{0.6, 0.2, 0.2}, 7, false});
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, RoundedSizesRemainderToTrain) {
  const auto sizes = fusionprog::detail::split_sizes(3297, {0.6, 0.2, 0.2});
  EXPECT_EQ(sizes, (std::array<std::size_t, 3>{1979, 659, 659}));
  const auto s = split_dataset(synthetic_manifest(3297), SplitSpec{});
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 3297u);
  EXPECT_EQ(s.test.size(), 659u);
}

TEST(Split, Deterministic) {
  const auto m = synthetic_manifest(40);
  const auto a = split_dataset(m, SplitSpec{{0.6, 0.2, 0.2}, 11, true});
  const auto b = split_dataset(m, SplitSpec{{0.6, 0.2, 0.2}, 11, true});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, IsPartitionForRandomManifests) {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(498));
    const auto m = synthetic_manifest(n, trial);
    const auto s = split_dataset(m, SplitSpec{{0.6, 0.2, 0.2}, rng.below(1u << 30), trial % 2 == 0});
    std::set<std::string> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (const auto& e : part->entries) EXPECT_TRUE(seen.insert(e.patient_id).second) << e.patient_id;
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(n));
  }
}

TEST(MiddleSlices, CropsCentredWindow) {
  ImageVolume v(Modality::ADC, 28, 8, 8);
  for (int s = 0; s < 28; ++s)
    for (auto& x : v.slice(s)) x = static_cast<float>(s);
  const auto out = select_middle_slices(v, 18);
  ASSERT_EQ(out.n_slices, 18);
  for (int s = 0; s < 18; ++s) EXPECT_EQ(out.at(s, 0, 0), static_cast<float>(s + 5));
}

TEST(MiddleSlices, IdentityWhenEqual) {
  ImageVolume v(Modality::ADC, 18, 8, 8);
  Rng rng(2);
  for (auto& x : v.voxels) x = static_cast<float>(rng.uniform());
  EXPECT_EQ(select_middle_slices(v, 18), v);
}

TEST(MiddleSlices, PadsSymmetrically) {
  auto v = filled(16, 8, 8, 1.0f);
  const auto out = select_middle_slices(v, 18);
  ASSERT_EQ(out.n_slices, 18);
  EXPECT_EQ(out.at(0, 3, 3), 0.0f);
  EXPECT_EQ(out.at(17, 3, 3), 0.0f);
  for (int s = 1; s < 17; ++s) EXPECT_EQ(out.at(s, 3, 3), 1.0f);
}

// ---------------------------------------------------------------------------
// synthgen

TEST(Synth, DeterministicCohort) {
  const auto cfg = small_synth(6);
  const auto a = generate_samples(cfg), b = generate_samples(cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].adc, b[i].adc);
    EXPECT_EQ(a[i].dwi, b[i].dwi);
    EXPECT_EQ(a[i].structured, b[i].structured);
    EXPECT_EQ(a[i].label, b[i].label);
  }
}

TEST(Synth, OnDiskCohortMatchesInMemory) {
  const auto dir = scratch_dir("cohort");
  const auto cfg = small_synth(5);
  const auto m = generate_cohort(cfg, dir);
  const auto loaded = load_manifest(dir / "manifest.csv");
  EXPECT_EQ(loaded, m);
  const auto mem = generate_samples(cfg);
  const auto s = load_sample(loaded, loaded.entries[3]);
  EXPECT_EQ(s.adc, mem[3].adc);
  EXPECT_EQ(s.dwi, mem[3].dwi);
}

TEST(Synth, SixtyTwoAttributesSixteenNihss) {
  const auto s = generate_patient(small_synth(1), 0, 1);
  EXPECT_EQ(s.structured.size(), 62u);
  EXPECT_EQ(s.structured.schema->nihss_count(), 16u);
  s.validate();
}

TEST(Synth, ClassPriorMatchesBinomial) {
  SynthConfig c;
  c.n_patients = 3297;
  c.class_prior = 0.546;
  const auto labels = synth_labels(c);
  const double pos = std::accumulate(labels.begin(), labels.end(), 0.0);
  const double sd = std::sqrt(3297 * 0.546 * 0.454);
  EXPECT_NEAR(pos, 3297 * 0.546, 3 * sd);
}

TEST(Synth, NullSignalOracleAucIsChance) {
  auto c = small_synth(1000, 3, 32);
  c.adc_signal_strength = c.dwi_signal_strength = c.tabular_signal_strength = 0;
  c.overlap_fraction = 0.5;  // blob size independent of the label
  const auto samples = generate_samples(c);
  const auto specs = synth_attribute_specs(c.n_attrs);
  const auto info = synth_informative_columns(c);
  std::vector<double> img, tab;
  std::vector<int> labels;
  for (const auto& s : samples) {
    img.push_back(oracle_image_score(s.dwi, 0.3));
    tab.push_back(oracle_tabular_score(s.structured, info, specs));
    labels.push_back(s.label);
  }
  EXPECT_NEAR(auc(img, labels), 0.5, 0.05);
  EXPECT_NEAR(auc(tab, labels), 0.5, 0.05);
}

TEST(Synth, StrongTabularBeatsImageOracles) {
  auto c = small_synth(300, 3, 32);
  c.adc_signal_strength = c.dwi_signal_strength = 0;
  c.tabular_signal_strength = 3.0;
  const auto samples = generate_samples(c);
  const auto specs = synth_attribute_specs(c.n_attrs);
  const auto info = synth_informative_columns(c);
  std::vector<double> adc, dwi, tab;
  std::vector<int> labels;
  for (const auto& s : samples) {
    adc.push_back(oracle_image_score(s.adc, 0.3));
    dwi.push_back(oracle_image_score(s.dwi, 0.3));
    tab.push_back(oracle_tabular_score(s.structured, info, specs));
    labels.push_back(s.label);
  }
  EXPECT_GT(auc(tab, labels), 0.95);
  EXPECT_GT(auc(tab, labels), auc(adc, labels) + 0.2);
  EXPECT_GT(auc(tab, labels), auc(dwi, labels) + 0.2);
}

TEST(Describe, SinglePatient) {
  const auto dir = scratch_dir("single");
  const auto m = generate_cohort(small_synth(1), dir);
  const auto s = describe_cohort(m);
  EXPECT_EQ(s.class_counts[0] + s.class_counts[1], 1u);
}

TEST(Describe, NullCohortMediansMatch) {
  auto c = small_synth(600, 1, 8);
  c.tabular_signal_strength = 0;
  c.missing_rate_max = 0;
  const auto samples = generate_samples(c);
  Manifest m;
  m.schema = samples.front().structured.schema;
  for (const auto& s : samples) m.entries.push_back({s.adc.patient_id, {}, {}, s.label, s.structured});
  const auto summary = describe_cohort(m);
  for (const auto& a : summary.attributes) {
    if (a.name == "age") EXPECT_NEAR(a.stats[0][0], a.stats[1][0], 3.0);
  }
}

TEST(Describe, TableOneRowStructure) {
  const auto dir = scratch_dir("table1");
  const auto md = describe_cohort(generate_cohort(small_synth(20, 1, 8), dir)).to_markdown();
  EXPECT_NE(md.find("| Clinical attributes | mRS=[0,2] (N="), std::string::npos);
  EXPECT_NE(md.find("Median initial NIHSS (IQR)"), std::string::npos);
  EXPECT_NE(md.find("Median age (IQR)"), std::string::npos);
}

// ---------------------------------------------------------------------------
// preprocess

TEST(BiasCorrection, ConstantSliceUnchanged) {
  const auto v = filled(2, 32, 32, 100.0f);
  const auto out = correct_bias(v, 16);
  for (std::size_t i = 0; i < v.voxels.size(); ++i) EXPECT_NEAR(out.voxels[i], 100.0f, 100.0f * 1e-5f);
}

TEST(BiasCorrection, RampCvReducedFivefold) {
  ImageVolume v(Modality::DWI, 1, 64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) v.at(0, y, x) = static_cast<float>(100.0 * std::exp(0.6 * (x / 63.0) - 0.4 * (y / 63.0)));
  const auto out = correct_bias(v, 16);
  EXPECT_LE(coefficient_of_variation(out.slice(0)) * 5, coefficient_of_variation(v.slice(0)));
}

TEST(BiasCorrection, AllZeroSliceWarns) {
  const auto v = filled(1, 16, 16, 0.0f);
  std::vector<std::string> warnings;
  EXPECT_EQ(correct_bias(v, 16, &warnings), v);
  EXPECT_FALSE(warnings.empty());
}

TEST(BiasCorrection, KeepsShapeAndBackground) {
  const auto s = generate_patient(small_synth(1, 3, 32), 0, 1);
  const auto out = correct_bias(s.adc, 16);
  EXPECT_EQ(out.n_slices, s.adc.n_slices);
  EXPECT_EQ(out.height, s.adc.height);
  for (std::size_t i = 0; i < out.voxels.size(); ++i) {
    if (s.adc.voxels[i] == 0.0f) EXPECT_EQ(out.voxels[i], 0.0f);
  }
}

TEST(Normalize, BrainStandardizedBackgroundZero) {
  const auto s = generate_patient(small_synth(1, 3, 32), 0, 1);
  const auto out = normalize_intensity(s.adc);
  double sum = 0, sq = 0;
  int n = 0;
  for (std::size_t i = 0; i < out.voxels.size(); ++i) {
    if (s.adc.voxels[i] == 0.0f) {
      EXPECT_EQ(out.voxels[i], 0.0f);
      continue;
    }
    sum += out.voxels[i];
    sq += out.voxels[i] * out.voxels[i];
    ++n;
  }
  ASSERT_GT(n, 100);
  EXPECT_NEAR(sum / n, 0.0, 1e-5);
  EXPECT_NEAR(sq / n, 1.0, 1e-4);

  ImageVolume flat(Modality::DWI, 1, 8, 8);
  std::fill(flat.voxels.begin(), flat.voxels.end(), 3.0f);
  EXPECT_EQ(normalize_intensity(flat), flat);
}

TEST(Resize, ShapeAndIdentity) {
  ImageVolume v(Modality::ADC, 1, 256, 256);
  Rng rng(4);
  for (auto& x : v.voxels) x = static_cast<float>(rng.uniform());
  const auto r = resize_volume(v, 224, 224);
  EXPECT_EQ(r.height, 224);
  EXPECT_EQ(r.width, 224);
  const auto same = resize_volume(v, 256, 256);
  for (std::size_t i = 0; i < v.voxels.size(); ++i) EXPECT_NEAR(same.voxels[i], v.voxels[i], 1e-6);
}

TEST(Resize, BlobCentroidTracksScale) {
  ImageVolume v(Modality::DWI, 1, 64, 64);
  const double cy = 20.0, cx = 41.0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) v.at(0, y, x) = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= 36 ? 1.0f : 0.0f;
  const auto r = resize_volume(v, 56, 56);
  double sy = 0, sx = 0, w = 0;
  for (int y = 0; y < 56; ++y)
    for (int x = 0; x < 56; ++x) {
      sy += y * r.at(0, y, x);
      sx += x * r.at(0, y, x);
      w += r.at(0, y, x);
    }
  const double scale = 56.0 / 64.0;
  EXPECT_NEAR(sy / w, (cy + 0.5) * scale - 0.5, 1.0);
  EXPECT_NEAR(sx / w, (cx + 0.5) * scale - 0.5, 1.0);
}

TEST(Imputer, ModeAndSmallestTie) {
  std::vector<StructuredRecord> recs{record({1, 1}, {false, false}), record({1, 2}, {false, false}),
                                     record({2, 0}, {false, true}), record({0, 0}, {true, true})};
  const auto m = fit_imputer(TrainRecords::from_records(recs));
  EXPECT_EQ(m.fill_values[0], 1.0);
  EXPECT_EQ(m.fill_values[1], 1.0);
}

TEST(Imputer, SyntheticColumnMatchesHistogramMode) {
  auto c = small_synth(400, 1, 8);
  c.missing_rate_max = 0.154;
  std::vector<StructuredRecord> recs;
  for (const auto& s : generate_samples(c)) recs.push_back(s.structured);
  const auto m = fit_imputer(TrainRecords::from_records(recs));
  for (std::size_t j = 0; j < 62; ++j) {
    std::map<double, int> hist;
    for (const auto& r : recs)
      if (!r.missing_mask[j]) ++hist[r.values[j]];
    auto best = hist.begin();
    for (auto it = hist.begin(); it != hist.end(); ++it)
      if (it->second > best->second) best = it;
    EXPECT_NEAR(m.fill_values[j], best->first, 1e-9) << "column " << j;
  }
}

TEST(Imputer, NeverObservedColumnIsFitError) {
  std::vector<StructuredRecord> recs{record({1, 0}, {false, true})};
  EXPECT_THROW(fit_imputer(TrainRecords::from_records(recs)), FitError);
}

TEST(Impute, IdentityAllMissingAndRandom) {
  ImputationModel m;
  m.fill_values = {7, 8, 9};
  const auto full = record({1, 2, 3}, {false, false, false});
  EXPECT_EQ(impute(full, m), full);
  const auto empty = impute(record({0, 0, 0}, {true, true, true}), m);
  EXPECT_EQ(empty.values, m.fill_values);

  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    auto r = record({rng.normal(), rng.normal(), rng.normal()}, {rng.bernoulli(0.3), rng.bernoulli(0.3), rng.bernoulli(0.3)});
    const auto out = impute(r, m);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(out.values[j], r.missing_mask[j] ? m.fill_values[j] : r.values[j]);
  }
}

TEST(Imputer, JsonRoundTrip) {
  ImputationModel m;
  m.fill_values = {1.5, 0};
  m.attr_names = {"x", "y"};
  const auto back = ImputationModel::from_json(m.to_json());
  EXPECT_EQ(back.fill_values, m.fill_values);
  EXPECT_EQ(back.attr_names, m.attr_names);
  EXPECT_EQ(back.fitted_on, "train");
}

TEST(PrepareData, DropNihssGivesFortySixAttributes) {
  const auto dir = scratch_dir("prepare");
  const auto m = generate_cohort(small_synth(20, 4, 16), dir);
  PreprocessConfig cfg;
  cfg.drop_nihss = true;
  const auto d = prepare_data(m, cfg);
  EXPECT_EQ(d.n_attrs(), 46);
  for (const auto& n : d.structured.attr_names) EXPECT_FALSE(AttributeSchema::is_nihss_name(n));
  EXPECT_EQ(d.train.front().x.size(), 46u);
  cfg.drop_nihss = false;
  EXPECT_EQ(prepare_data(m, cfg).n_attrs(), 62);
}

// ---------------------------------------------------------------------------
// augment

TEST(Augment, DisabledPolicyIsIdentity) {
  AugmentPolicy p;
  p.flip_prob = p.noise_prob = p.patch_mask_prob = 0;
  p.blur_std_range = {0, 0};
  const auto s = generate_patient(small_synth(1, 2, 16), 0, 0);
  Rng rng(1);
  EXPECT_EQ(augment_image(s.adc, p, rng), s.adc);
  EXPECT_EQ(augment_image(s.adc, AugmentPolicy::identity(), rng), s.adc);
}

TEST(Augment, ForcedFlipTwiceIsIdentity) {
  AugmentPolicy p;
  p.flip_prob = 1;
  p.noise_prob = p.patch_mask_prob = 0;
  p.blur_std_range = {0, 0};
  const auto s = generate_patient(small_synth(1, 2, 16), 0, 1);
  Rng rng(1);
  const auto once = augment_image(s.dwi, p, rng);
  EXPECT_NE(once, s.dwi);
  EXPECT_EQ(augment_image(once, p, rng), s.dwi);
}

TEST(Augment, SameSeedSameOutput) {
  AugmentPolicy p;
  const auto s = generate_patient(small_synth(1, 2, 16), 0, 1);
  Rng a(77), b(77);
  EXPECT_EQ(augment_image(s.adc, p, a), augment_image(s.adc, p, b));
  std::vector<double> x(62, 1.0);
  EXPECT_EQ(augment_structured(x, p, a), augment_structured(x, p, b));
}

TEST(Augment, ZeroDropoutIsIdentity) {
  AugmentPolicy p;
  p.structured_dropout = 0;
  std::vector<double> x{1, -2, 3};
  Rng rng(3);
  EXPECT_EQ(augment_structured(x, p, rng), x);
}

TEST(Augment, InvalidPolicyRejected) {
  AugmentPolicy p;
  p.structured_dropout = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  AugmentPolicy q;
  q.blur_std_range = {2.0, 1.0};
  EXPECT_THROW(q.validate(), ConfigError);
}

TEST(Augment, StatisticsSuite) {
  const auto r = verify::verify_augment_statistics();
  for (const auto& c : r.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}

// ---------------------------------------------------------------------------
// config

TEST(Config, WriteParseRoundTrip) {
  RunConfig c;
  c.synth.n_patients = 123;
  c.exp.train.lr_stage1 = 3e-4;
  c.exp.train.contrastive.strategy = CombineStrategy::AverageAll;
  c.exp.model.fusion.mode = FusionMode::Average;
  c.exp.seeds = {4, 5};
  c.exp.preprocess.drop_nihss = true;
  const auto text = config_to_string(c);
  std::istringstream in(text);
  EXPECT_EQ(config_to_string(parse_config(in)), text);
}

TEST(Config, PartialFileKeepsDefaults) {
  std::istringstream in("[train]\nepochs = 3\n\n[contrastive]\nstrategy = RANDOM_PER_EPOCH\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.exp.train.epochs, 3);
  EXPECT_EQ(c.exp.train.contrastive.strategy, CombineStrategy::RandomPerEpoch);
  EXPECT_EQ(c.exp.train.batch_size, TrainConfig{}.batch_size);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  std::istringstream unknown("[train]\nepoch = 3\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);
  std::istringstream bad("[train]\nepochs = three\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
  std::istringstream zero("[train]\nepochs = 0\n");
  EXPECT_THROW(parse_config(zero), ConfigError);
}
