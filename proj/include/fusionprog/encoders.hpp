#pragma once

// Modality encoders and projection heads into the shared embedding space.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "fusionprog/core/error.hpp"
#include "fusionprog/datamodel.hpp"
#include "fusionprog/nn/layers.hpp"

namespace fusionprog {

inline constexpr int kEmbeddingDim = 60;

enum class Backbone { SmallCnn, Resnet50Style };

struct ImageEncoderConfig {
  Backbone backbone = Backbone::SmallCnn;
  int in_channels = 18;  // slices are channels
  std::vector<int> cnn_channels{32, 64, 128, 256};
  // ResNet-style: bottleneck blocks per stage and base width (64 gives 2048 features).
  std::vector<int> resnet_blocks{3, 4, 6, 3};
  int resnet_width = 64;

  int feature_dim() const {
    if (backbone == Backbone::SmallCnn) return cnn_channels.empty() ? in_channels : cnn_channels.back();
    return resnet_width * 8 * 4;
  }

  void validate() const {
    if (in_channels < 1) throw ConfigError("image encoder: in_channels must be >= 1");
    if (backbone == Backbone::SmallCnn && cnn_channels.empty())
      throw ConfigError("image encoder: cnn_channels must not be empty");
    for (int c : cnn_channels)
      if (c < 1) throw ConfigError("image encoder: channel counts must be >= 1");
    if (backbone == Backbone::Resnet50Style && (resnet_blocks.size() != 4 || resnet_width < 1))
      throw ConfigError("image encoder: resnet needs 4 stage depths and width >= 1");
  }
};

struct StructuredEncoderConfig {
  int in_dim = 62;
  std::vector<int> hidden_dims{150, 100, kEmbeddingDim};

  void validate() const {
    if (in_dim < 1) throw ConfigError("structured encoder: in_dim must be >= 1");
    if (hidden_dims.empty() || hidden_dims.back() != kEmbeddingDim)
      throw ConfigError("structured encoder: last hidden dim must be " + std::to_string(kEmbeddingDim));
  }
};

/// Image heads map feature_dim down to the embedding through strictly
/// decreasing widths; the structured branch uses the identity (empty dims).
struct ProjectionConfig {
  std::vector<int> layer_dims;

  bool identity() const { return layer_dims.empty(); }

  void validate() const {
    if (identity()) return;
    if (layer_dims.size() < 2) throw ConfigError("projection: need at least input and output dims");
    if (layer_dims.back() != kEmbeddingDim)
      throw ConfigError("projection: output dim must be " + std::to_string(kEmbeddingDim));
    for (std::size_t i = 1; i < layer_dims.size(); ++i)
      if (layer_dims[i] >= layer_dims[i - 1]) throw ConfigError("projection: layer dims must strictly decrease");
  }

  static ProjectionConfig for_features(int feature_dim, int hidden) { return {{feature_dim, hidden, kEmbeddingDim}}; }
};

namespace nn {

/// Builds the image backbone. Output is (N, feature_dim).
template <class T>
class ImageEncoder final : public Layer<T> {
 public:
  ImageEncoder(const ImageEncoderConfig& cfg, const std::string& name) : cfg_(cfg) {
    cfg.validate();
    if (cfg.backbone == Backbone::SmallCnn) {
      int cin = cfg.in_channels;
      for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
        net_.template add<Conv2d<T>>(cin, cfg.cnn_channels[i], 3, 2, 1, name + ".conv" + std::to_string(i + 1), i > 0);
        net_.template add<ReLU<T>>();
        cin = cfg.cnn_channels[i];
      }
    } else {
      const int w = cfg.resnet_width;
      net_.template add<Conv2d<T>>(cfg.in_channels, w, 7, 2, 3, name + ".stem", false);
      net_.template add<ReLU<T>>();
      net_.template add<MaxPool2d<T>>(3, 2, 1);
      int cin = w;
      for (int stage = 0; stage < 4; ++stage) {
        const int mid = w << stage, out = mid * 4;
        for (int b = 0; b < cfg.resnet_blocks[stage]; ++b) {
          const int stride = (b == 0 && stage > 0) ? 2 : 1;
          net_.template add<Bottleneck<T>>(cin, mid, out, stride,
                                           name + ".layer" + std::to_string(stage + 1) + "." + std::to_string(b));
          cin = out;
        }
      }
    }
    net_.template add<GlobalAvgPool<T>>();
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != cfg_.in_channels)
      throw ShapeError("image encoder: expected " + std::to_string(cfg_.in_channels) + " channels (slices), got " +
                       x.shape_string());
    return net_.forward(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) override { return net_.backward(dy); }
  void collect(std::vector<Param<T>*>& out) override { net_.collect(out); }

  const ImageEncoderConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.feature_dim(); }

 private:
  ImageEncoderConfig cfg_;
  Sequential<T> net_;
};

/// MLP: ReLU after every hidden layer except the last, which is the embedding.
template <class T>
class StructuredEncoder final : public Layer<T> {
 public:
  StructuredEncoder(const StructuredEncoderConfig& cfg, const std::string& name) : cfg_(cfg) {
    cfg.validate();
    int in = cfg.in_dim;
    for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
      net_.template add<Linear<T>>(in, cfg.hidden_dims[i], name + ".fc" + std::to_string(i + 1));
      if (i + 1 < cfg.hidden_dims.size()) net_.template add<ReLU<T>>();
      in = cfg.hidden_dims[i];
    }
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    if (static_cast<int>(x.per_item()) != cfg_.in_dim)
      throw ShapeError("structured encoder: expected " + std::to_string(cfg_.in_dim) + " attributes, got " +
                       std::to_string(x.per_item()));
    return net_.forward(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) override { return net_.backward(dy); }
  void collect(std::vector<Param<T>*>& out) override { net_.collect(out); }
  const StructuredEncoderConfig& config() const { return cfg_; }

 private:
  StructuredEncoderConfig cfg_;
  Sequential<T> net_;
};

/// Nonlinear head (Linear, ReLU, ..., Linear) or identity.
template <class T>
class ProjectionHead final : public Layer<T> {
 public:
  ProjectionHead(const ProjectionConfig& cfg, const std::string& name) : cfg_(cfg) {
    cfg.validate();
    for (std::size_t i = 1; i < cfg.layer_dims.size(); ++i) {
      net_.template add<Linear<T>>(cfg.layer_dims[i - 1], cfg.layer_dims[i], name + ".fc" + std::to_string(i));
      if (i + 1 < cfg.layer_dims.size()) net_.template add<ReLU<T>>();
    }
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    if (!cfg_.identity() && static_cast<int>(x.per_item()) != cfg_.layer_dims.front())
      throw ShapeError("projection: expected " + std::to_string(cfg_.layer_dims.front()) + " features, got " +
                       std::to_string(x.per_item()));
    return net_.forward(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) override { return net_.backward(dy); }
  void collect(std::vector<Param<T>*>& out) override { net_.collect(out); }
  bool identity() const { return cfg_.identity(); }

 private:
  ProjectionConfig cfg_;
  Sequential<T> net_;
};

/// Row-wise L2 normalization.
template <class T>
class L2Normalize final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    y_ = x;
    auto Y = y_.matrix();
    norms_.resize(Y.rows());
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      // An all-zero row stays zero and passes no gradient.
      const T n = Y.row(i).norm();
      norms_[i] = n;
      if (n > 0) Y.row(i) /= n;
    }
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    auto G = dx.matrix();
    const auto Y = y_.matrix();
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
      if (norms_[i] == 0) {
        G.row(i).setZero();
        continue;
      }
      const T proj = Y.row(i).dot(G.row(i));
      G.row(i) = (G.row(i) - proj * Y.row(i)) / norms_[i];
    }
    return dx;
  }

 private:
  Tensor<T> y_;
  std::vector<T> norms_;
};

}  // namespace nn

/// Stacks volumes into an (N, slices, H, W) tensor.
template <class T>
nn::Tensor<T> volumes_to_tensor(const std::vector<const ImageVolume*>& vols) {
  if (vols.empty()) return {};
  const auto& f = *vols.front();
  nn::Tensor<T> t(static_cast<int>(vols.size()), f.n_slices, f.height, f.width);
  for (std::size_t i = 0; i < vols.size(); ++i) {
    const auto& v = *vols[i];
    if (v.n_slices != f.n_slices || v.height != f.height || v.width != f.width)
      throw ShapeError("volumes_to_tensor: volumes in a batch must share a shape");
    std::copy(v.voxels.begin(), v.voxels.end(), t.item(static_cast<int>(i)));
  }
  return t;
}

/// Single-volume encoding (inference path).
template <class T>
std::vector<T> encode_image(nn::ImageEncoder<T>& encoder, const ImageVolume& vol, int expected_h, int expected_w) {
  const auto& cfg = encoder.config();
  if (vol.n_slices != cfg.in_channels || vol.height != expected_h || vol.width != expected_w)
    throw ShapeError("encode_image: expected volume (" + std::to_string(cfg.in_channels) + "," +
                     std::to_string(expected_h) + "," + std::to_string(expected_w) + "), got (" +
                     std::to_string(vol.n_slices) + "," + std::to_string(vol.height) + "," +
                     std::to_string(vol.width) + ")");
  const auto y = encoder.forward(volumes_to_tensor<T>({&vol}));
  return {y.data.begin(), y.data.end()};
}

template <class T>
std::vector<T> encode_structured(nn::StructuredEncoder<T>& encoder, const StructuredRecord& record) {
  if (record.any_missing()) throw ShapeError("encode_structured: record has missing values; impute first");
  nn::Tensor<T> x(1, static_cast<int>(record.size()));
  for (std::size_t j = 0; j < record.size(); ++j) x.data[j] = static_cast<T>(record.values[j]);
  const auto y = encoder.forward(x);
  return {y.data.begin(), y.data.end()};
}

}  // namespace fusionprog
