#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fusionprog/checkpoint.hpp"
#include "fusionprog/encoders.hpp"
#include "fusionprog/fusion.hpp"
#include "fusionprog/model.hpp"
#include "fusionprog/nn/adam.hpp"
#include "fusionprog/verify/suites.hpp"

using namespace fusionprog;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

template <class T>
Tensor<T> random_tensor(Rng& rng, int n, int c, int h = 1, int w = 1) {
  Tensor<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.normal());
  return t;
}

template <class T>
void randomize(const std::vector<nn::Param<T>*>& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : params)
    for (auto& v : p->value) v = static_cast<T>(rng.uniform(-0.3, 0.3));
}

ModelConfig small_model(int slices = 4, int attrs = 5) {
  ModelConfig c = verify::tiny_model_config(Backbone::SmallCnn, FusionMode::Hierarchical);
  c.image.in_channels = slices;
  c.structured.in_dim = attrs;
  return c;
}

nn::BatchInputs<float> random_inputs(const ModelConfig& c, int n, int hw, std::uint64_t seed) {
  Rng rng(seed);
  return {random_tensor<float>(rng, n, c.image.in_channels, hw, hw), random_tensor<float>(rng, n, c.image.in_channels, hw, hw),
          random_tensor<float>(rng, n, c.structured.in_dim)};
}

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fusionprog_test_nn_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// encoders

TEST(ImageEncoder, ZeroVolumeGivesZeroFeatures) {
  ImageEncoderConfig cfg;
  cfg.in_channels = 4;
  cfg.cnn_channels = {4, 8};
  nn::ImageEncoder<double> enc(cfg, "enc");
  std::vector<nn::Param<double>*> ps;
  enc.collect(ps);
  nn::init_params(ps, 1, 2);
  ImageVolume zero(Modality::ADC, 4, 16, 16);
  const auto f = encode_image(enc, zero, 16, 16);
  ASSERT_EQ(f.size(), 8u);
  for (double v : f) EXPECT_EQ(v, 0.0);
}

TEST(ImageEncoder, ShapeContractAndDistinctOutputs) {
  for (auto backbone : {Backbone::SmallCnn, Backbone::Resnet50Style}) {
    ImageEncoderConfig cfg = verify::tiny_model_config(backbone, FusionMode::Hierarchical).image;
    nn::ImageEncoder<double> enc(cfg, "enc");
    std::vector<nn::Param<double>*> ps;
    enc.collect(ps);
    randomize(ps, 5);
    Rng rng(3);
    ImageVolume a(Modality::DWI, 4, 8, 8), b(Modality::DWI, 4, 8, 8);
    for (auto& v : a.voxels) v = static_cast<float>(rng.uniform());
    for (auto& v : b.voxels) v = static_cast<float>(rng.uniform());
    const auto fa = encode_image(enc, a, 8, 8), fb = encode_image(enc, b, 8, 8);
    ASSERT_EQ(static_cast<int>(fa.size()), cfg.feature_dim());
    double dist = 0;
    for (std::size_t i = 0; i < fa.size(); ++i) dist += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    EXPECT_GT(std::sqrt(dist), 1e-6);
  }
}

TEST(ImageEncoder, DefaultResnetHas2048Features) {
  ImageEncoderConfig cfg;
  cfg.backbone = Backbone::Resnet50Style;
  EXPECT_EQ(cfg.feature_dim(), 2048);
}

TEST(ImageEncoder, WrongVolumeShapeRejected) {
  ImageEncoderConfig cfg;
  cfg.in_channels = 4;
  cfg.cnn_channels = {4};
  nn::ImageEncoder<float> enc(cfg, "enc");
  EXPECT_THROW(encode_image(enc, ImageVolume(Modality::ADC, 3, 8, 8), 8, 8), ShapeError);
}

TEST(StructuredEncoder, SixtyTwoToSixty) {
  nn::StructuredEncoder<float> enc(StructuredEncoderConfig{}, "s");
  Rng rng(1);
  EXPECT_EQ(enc.forward(random_tensor<float>(rng, 3, 62)).per_item(), 60u);
  EXPECT_THROW(enc.forward(random_tensor<float>(rng, 3, 61)), ShapeError);
}

TEST(StructuredEncoder, ZeroInputZeroBiasGivesZero) {
  nn::StructuredEncoder<double> enc(StructuredEncoderConfig{}, "s");
  std::vector<nn::Param<double>*> ps;
  enc.collect(ps);
  nn::init_params(ps, 3, 4);
  const auto y = enc.forward(Tensor<double>(2, 62));
  for (double v : y.data) EXPECT_EQ(v, 0.0);
}

TEST(StructuredEncoder, MatchesDenseAlgebraOracle) {
  StructuredEncoderConfig cfg{3, {5, 4, 60}};
  nn::StructuredEncoder<double> enc(cfg, "s");
  std::vector<nn::Param<double>*> ps;
  enc.collect(ps);
  randomize(ps, 8);
  Rng rng(9);
  const auto x = random_tensor<double>(rng, 4, 3);
  const auto y = enc.forward(x);
  // Oracle: explicit loops, ReLU between layers, linear last layer.
  for (int n = 0; n < 4; ++n) {
    std::vector<double> h(x.item(n), x.item(n) + 3);
    for (int layer = 0; layer < 3; ++layer) {
      const auto& W = ps[2 * layer]->value;
      const auto& b = ps[2 * layer + 1]->value;
      const int out = ps[2 * layer]->shape[0], in = ps[2 * layer]->shape[1];
      std::vector<double> next(out);
      for (int o = 0; o < out; ++o) {
        double s = b[o];
        for (int i = 0; i < in; ++i) s += W[o * in + i] * h[i];
        next[o] = layer < 2 ? std::max(0.0, s) : s;
      }
      h = next;
    }
    for (int k = 0; k < 60; ++k) EXPECT_NEAR(y.item(n)[k], h[k], 1e-6);
  }
}

TEST(Projection, IdentityForStructured) {
  nn::ProjectionHead<double> head(ProjectionConfig{}, "p");
  EXPECT_TRUE(head.identity());
  Rng rng(2);
  const auto x = random_tensor<double>(rng, 3, 60);
  EXPECT_EQ(head.forward(x).data, x.data);
}

TEST(Projection, ImageHeadMaps2048To60AndNormalizes) {
  nn::ProjectionHead<float> head(ProjectionConfig::for_features(2048, 128), "p");
  std::vector<nn::Param<float>*> ps;
  head.collect(ps);
  nn::init_params(ps, 1, 1);
  Rng rng(4);
  auto y = head.forward(random_tensor<float>(rng, 5, 2048));
  ASSERT_EQ(y.per_item(), 60u);
  nn::L2Normalize<float> norm;
  const auto z = norm.forward(y);
  for (int n = 0; n < 5; ++n) EXPECT_NEAR(z.matrix().row(n).norm(), 1.0f, 1e-6f);
  EXPECT_THROW(ProjectionConfig({60, 80, 60}).validate(), ConfigError);
}

TEST(L2Normalize, ZeroRowStaysZeroWithoutGradient) {
  nn::L2Normalize<double> norm;
  Tensor<double> x(2, 3);
  x.data = {0, 0, 0, 3, 4, 0};
  const auto y = norm.forward(x);
  EXPECT_EQ(std::vector<double>(y.data.begin(), y.data.end()), (std::vector<double>{0, 0, 0, 0.6, 0.8, 0}));
  Tensor<double> g(2, 3);
  g.data = {1, 1, 1, 1, 1, 1};
  const auto dx = norm.backward(g);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(dx.item(0)[k], 0.0);
  EXPECT_NEAR(dx.item(1)[0], (1 - 0.6 * 1.4) / 5, 1e-15);
}

// ---------------------------------------------------------------------------
// fusion

TEST(Fusion, AverageOfEqualVectorsIsThatVector) {
  nn::Fusion<double> f(FusionConfig{FusionMode::Average, 60}, "f");
  Rng rng(5);
  const auto v = random_tensor<double>(rng, 3, 60);
  const auto m = f.forward(v, v, v);
  for (std::size_t i = 0; i < v.data.size(); ++i) EXPECT_NEAR(m.data[i], v.data[i], 1e-12);
  std::vector<nn::Param<double>*> ps;
  f.collect(ps);
  EXPECT_TRUE(ps.empty());
}

TEST(Fusion, HierarchicalMatchesTwoStepOracle) {
  nn::Fusion<double> f(FusionConfig{FusionMode::Hierarchical, 60}, "f");
  std::vector<nn::Param<double>*> ps;
  f.collect(ps);
  randomize(ps, 6);
  Rng rng(7);
  const auto A = random_tensor<double>(rng, 4, 60), D = random_tensor<double>(rng, 4, 60), S = random_tensor<double>(rng, 4, 60);
  const auto M = f.forward(A, D, S);
  auto dense = [](const nn::Param<double>& W, const nn::Param<double>& b, const std::vector<double>& x) {
    std::vector<double> y(60);
    for (int o = 0; o < 60; ++o) {
      double s = b.value[o];
      for (int i = 0; i < 120; ++i) s += W.value[o * 120 + i] * x[i];
      y[o] = std::max(0.0, s);
    }
    return y;
  };
  for (int n = 0; n < 4; ++n) {
    std::vector<double> ad(A.item(n), A.item(n) + 60);
    ad.insert(ad.end(), D.item(n), D.item(n) + 60);
    auto h = dense(*ps[0], *ps[1], ad);
    h.insert(h.end(), S.item(n), S.item(n) + 60);
    const auto m = dense(*ps[2], *ps[3], h);
    for (int k = 0; k < 60; ++k) EXPECT_NEAR(M.item(n)[k], m[k], 1e-6);
  }
}

TEST(Fusion, PermutingSamplesPermutesOutputs) {
  nn::Fusion<double> f(FusionConfig{FusionMode::Hierarchical, 60}, "f");
  std::vector<nn::Param<double>*> ps;
  f.collect(ps);
  randomize(ps, 10);
  Rng rng(11);
  const auto A = random_tensor<double>(rng, 3, 60), D = random_tensor<double>(rng, 3, 60), S = random_tensor<double>(rng, 3, 60);
  const auto M = f.forward(A, D, S);
  const int perm[3] = {2, 0, 1};
  auto permute = [&](const Tensor<double>& t) {
    Tensor<double> p(3, 60);
    for (int i = 0; i < 3; ++i) std::copy(t.item(perm[i]), t.item(perm[i]) + 60, p.item(i));
    return p;
  };
  const auto Mp = f.forward(permute(A), permute(D), permute(S));
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 60; ++k) EXPECT_EQ(Mp.item(i)[k], M.item(perm[i])[k]);
}

TEST(Fusion, ShapeMismatchRejected) {
  nn::Fusion<float> f(FusionConfig{}, "f");
  Rng rng(1);
  EXPECT_THROW(f.forward(random_tensor<float>(rng, 2, 60), random_tensor<float>(rng, 2, 59), random_tensor<float>(rng, 2, 60)),
               ShapeError);
}

// ---------------------------------------------------------------------------
// network

TEST(Network, EmbeddingShapesAndZeroClassifier) {
  const auto cfg = small_model();
  nn::FusionNetwork<float> net(cfg);
  net.init(1);
  const auto e = net.embed(random_inputs(cfg, 3, 8, 2));
  for (const auto* t : {&e.A, &e.D, &e.S, &e.M, &e.Mn}) EXPECT_EQ(t->per_item(), 60u);
  for (int n = 0; n < 3; ++n) {
    EXPECT_NEAR(e.A.matrix().row(n).norm(), 1.0f, 1e-5f);
    EXPECT_NEAR(e.Mn.matrix().row(n).norm(), 1.0f, 1e-5f);
  }
  const auto logits = net.classify(e);
  for (float v : logits.data) EXPECT_EQ(v, 0.0f);
}

TEST(Network, SingleBranchHasNoFusion) {
  auto cfg = small_model();
  cfg.branches = Branches{true, false, false};
  nn::FusionNetwork<float> net(cfg);
  EXPECT_EQ(net.module_names(), (std::vector<std::string>{"adc_encoder", "adc_projection", "classifier"}));
  net.init(1);
  auto in = random_inputs(cfg, 2, 8, 3);
  const auto e = net.embed(in);
  EXPECT_EQ(e.M.data, e.A.data);
  cfg.branches = Branches{true, true, false};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Network, ModuleInitIndependentOfOtherBranches) {
  auto full = small_model();
  auto single = full;
  single.branches = Branches{false, true, false};
  nn::FusionNetwork<float> a(full), b(single);
  a.init(7);
  b.init(7);
  const auto pa = a.module_params("dwi_encoder"), pb = b.module_params("dwi_encoder");
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pb[k]->value);
}

TEST(Network, ConfigJsonRoundTrip) {
  auto cfg = small_model();
  cfg.fusion.mode = FusionMode::Average;
  cfg.branches = Branches{false, false, true};
  EXPECT_EQ(to_json(model_config_from_json(to_json(cfg))), to_json(cfg));
}

// ---------------------------------------------------------------------------
// checkpoint

TEST(Checkpoint, SaveLoadIsBitExactAndDeterministic) {
  const auto cfg = small_model();
  nn::FusionNetwork<float> net(cfg);
  net.init(3);
  nn::Adam<float> adam(net.params(), {});
  for (auto* p : net.params()) std::fill(p->grad.begin(), p->grad.end(), 0.01f);
  adam.step(1e-3);
  const auto c = capture(net, &adam);
  const auto d1 = scratch_dir("a"), d2 = scratch_dir("b");
  save_checkpoint(c, d1);
  save_checkpoint(c, d2);
  for (const auto& entry : fs::directory_iterator(d1)) {
    std::ifstream f1(entry.path(), std::ios::binary), f2(d2 / entry.path().filename(), std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    EXPECT_EQ(s1, s2) << entry.path().filename();
  }
  const auto back = load_checkpoint(d1);
  ASSERT_EQ(back.modules.size(), c.modules.size());
  for (std::size_t i = 0; i < c.modules.size(); ++i) EXPECT_EQ(back.modules[i].data, c.modules[i].data);
  EXPECT_EQ(back.adam_m, c.adam_m);
  EXPECT_EQ(back.optimizer_steps, 1);

  nn::FusionNetwork<float> other(cfg);
  other.init(99);
  restore(other, back);
  const auto pa = net.params(), pb = other.params();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pb[k]->value);
}

TEST(Checkpoint, CorruptBlobDetected) {
  nn::FusionNetwork<float> net(small_model());
  net.init(1);
  const auto dir = scratch_dir("corrupt");
  save_checkpoint(capture<float>(net, nullptr), dir);
  {
    std::fstream f(dir / "fusion.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(16);
    const char junk[4] = {1, 2, 3, 4};
    f.write(junk, 4);
  }
  EXPECT_THROW(load_checkpoint(dir), ParseError);
  EXPECT_THROW(load_checkpoint(dir / "nope"), ResolutionError);
}

TEST(Checkpoint, ShapeMismatchNamesBlobs) {
  nn::FusionNetwork<float> a(small_model(4, 5)), b(small_model(4, 7));
  a.init(1);
  const auto c = capture<float>(a, nullptr);
  try {
    restore(b, c);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("structured_encoder.fc1.weight"), std::string::npos) << e.what();
  }
  restore(b, c, {}, {"structured_encoder"});
}

TEST(Checkpoint, SkipLeavesModuleUntouched) {
  nn::FusionNetwork<float> a(small_model()), b(small_model());
  a.init(1);
  b.init(2);
  for (auto* p : a.module_params("classifier")) std::fill(p->value.begin(), p->value.end(), 5.0f);
  restore(b, capture<float>(a, nullptr), {}, {"classifier"});
  for (auto* p : b.module_params("classifier"))
    for (float v : p->value) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(b.module_params("fusion")[0]->value, a.module_params("fusion")[0]->value);
}
