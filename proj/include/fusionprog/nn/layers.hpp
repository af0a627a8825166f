#pragma once

// Layers with explicit forward/backward. Each layer caches what its backward
// pass needs from the most recent forward call, so one forward is followed by
// at most one backward.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fusionprog/core/rng.hpp"
#include "fusionprog/nn/tensor.hpp"

namespace fusionprog::nn {

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect(std::vector<Param<T>*>& /*out*/) {}
};

template <class T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out, std::string name, bool zero_weight = false)
      : in_(in), out_(out), weight_(name + ".weight", {out, in}, in, zero_weight), bias_(name + ".bias", {out}, in, true) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    if (static_cast<int>(x.per_item()) != in_)
      throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input features, got " +
                       std::to_string(x.per_item()));
    input_ = x;
    Tensor<T> y(x.n(), out_);
    CMapR<T> W(weight_.value.data(), out_, in_);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), out_);
    y.matrix().noalias() = x.matrix() * W.transpose();
    y.matrix().rowwise() += b;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    CMapR<T> W(weight_.value.data(), out_, in_);
    MapR<T> dW(weight_.grad.data(), out_, in_);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(), out_);
    dW.noalias() += dy.matrix().transpose() * input_.matrix();
    db += dy.matrix().colwise().sum();
    Tensor<T> dx = input_;
    dx.matrix().noalias() = dy.matrix() * W;
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  int in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> input_;
};

template <class T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = x;
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.data[i] > T(0))
        mask_[i] = 1;
      else
        y.data[i] = T(0);
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!mask_[i]) dx.data[i] = T(0);
    return dx;
  }

 private:
  std::vector<unsigned char> mask_;
};

/// 2D convolution over NCHW input via im2col + GEMM.
template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, std::string name, bool need_input_grad = true,
         bool zero_weight = false)
      : cin_(in_ch), cout_(out_ch), k_(kernel), stride_(stride), pad_(pad), need_input_grad_(need_input_grad),
        weight_(name + ".weight", {out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, zero_weight),
        bias_(name + ".bias", {out_ch}, in_ch * kernel * kernel, true) {}

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != cin_)
      throw ShapeError(weight_.name + ": expected " + std::to_string(cin_) + " channels, got " + std::to_string(x.c()));
    in_shape_ = x.shape;
    const int N = x.n(), H = x.h(), W = x.w();
    ho_ = out_size(H);
    wo_ = out_size(W);
    if (ho_ < 1 || wo_ < 1) throw ShapeError(weight_.name + ": input " + x.shape_string() + " too small");
    const int K = cin_ * k_ * k_;
    const Eigen::Index P = static_cast<Eigen::Index>(N) * ho_ * wo_;
    col_.resize(K, P);
    im2col(x);

    CMapR<T> Wm(weight_.value.data(), cout_, K);
    MatR<T> ym(cout_, P);
    ym.noalias() = Wm * col_;
    Tensor<T> y(N, cout_, ho_, wo_);
    const std::size_t hw = static_cast<std::size_t>(ho_) * wo_;
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < cout_; ++co) {
        const T b = bias_.value[co];
        const T* src = ym.data() + co * P + n * hw;
        T* dst = y.item(n) + co * hw;
        for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + b;
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int N = in_shape_[0];
    const int K = cin_ * k_ * k_;
    const Eigen::Index P = static_cast<Eigen::Index>(N) * ho_ * wo_;
    const std::size_t hw = static_cast<std::size_t>(ho_) * wo_;
    MatR<T> dym(cout_, P);
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < cout_; ++co) {
        const T* src = dy.item(n) + co * hw;
        std::copy(src, src + hw, dym.data() + co * P + n * hw);
      }
    MapR<T> dW(weight_.grad.data(), cout_, K);
    dW.noalias() += dym * col_.transpose();
    for (int co = 0; co < cout_; ++co) bias_.grad[co] += dym.row(co).sum();

    Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    if (need_input_grad_) {
      CMapR<T> Wm(weight_.value.data(), cout_, K);
      MatR<T> dcol(K, P);
      dcol.noalias() = Wm.transpose() * dym;
      col2im(dcol, dx);
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  void im2col(const Tensor<T>& x) {
    const int N = x.n(), H = x.h(), W = x.w();
    const Eigen::Index P = col_.cols();
    for (int c = 0; c < cin_; ++c)
      for (int ki = 0; ki < k_; ++ki)
        for (int kj = 0; kj < k_; ++kj) {
          T* row = col_.data() + ((c * k_ + ki) * k_ + kj) * P;
          for (int n = 0; n < N; ++n) {
            const T* plane = x.item(n) + static_cast<std::size_t>(c) * H * W;
            for (int oh = 0; oh < ho_; ++oh) {
              const int ih = oh * stride_ - pad_ + ki;
              T* out = row + (static_cast<std::size_t>(n) * ho_ + oh) * wo_;
              if (ih < 0 || ih >= H) {
                std::fill(out, out + wo_, T(0));
                continue;
              }
              const T* in_row = plane + static_cast<std::size_t>(ih) * W;
              for (int ow = 0; ow < wo_; ++ow) {
                const int iw = ow * stride_ - pad_ + kj;
                out[ow] = (iw >= 0 && iw < W) ? in_row[iw] : T(0);
              }
            }
          }
        }
  }

  void col2im(const MatR<T>& dcol, Tensor<T>& dx) const {
    const int N = dx.n(), H = dx.h(), W = dx.w();
    const Eigen::Index P = dcol.cols();
    for (int c = 0; c < cin_; ++c)
      for (int ki = 0; ki < k_; ++ki)
        for (int kj = 0; kj < k_; ++kj) {
          const T* row = dcol.data() + ((c * k_ + ki) * k_ + kj) * P;
          for (int n = 0; n < N; ++n) {
            T* plane = dx.item(n) + static_cast<std::size_t>(c) * H * W;
            for (int oh = 0; oh < ho_; ++oh) {
              const int ih = oh * stride_ - pad_ + ki;
              if (ih < 0 || ih >= H) continue;
              const T* g = row + (static_cast<std::size_t>(n) * ho_ + oh) * wo_;
              T* in_row = plane + static_cast<std::size_t>(ih) * W;
              for (int ow = 0; ow < wo_; ++ow) {
                const int iw = ow * stride_ - pad_ + kj;
                if (iw >= 0 && iw < W) in_row[iw] += g[ow];
              }
            }
          }
        }
  }

  int cin_, cout_, k_, stride_, pad_;
  bool need_input_grad_;
  Param<T> weight_, bias_;
  std::array<int, 4> in_shape_{};
  int ho_ = 0, wo_ = 0;
  MatR<T> col_;
};

template <class T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape;
    Tensor<T> y(x.n(), x.c());
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c) {
        const T* p = x.item(n) + c * hw;
        T s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
        y.item(n)[c] = s / static_cast<T>(hw);
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    const std::size_t hw = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    for (int n = 0; n < in_shape_[0]; ++n)
      for (int c = 0; c < in_shape_[1]; ++c) {
        const T g = dy.item(n)[c] / static_cast<T>(hw);
        std::fill_n(dx.item(n) + c * hw, hw, g);
      }
    return dx;
  }

 private:
  std::array<int, 4> in_shape_{};
};

template <class T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(int kernel, int stride, int pad) : k_(kernel), s_(stride), p_(pad) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape;
    const int ho = (x.h() + 2 * p_ - k_) / s_ + 1, wo = (x.w() + 2 * p_ - k_) / s_ + 1;
    Tensor<T> y(x.n(), x.c(), ho, wo);
    argmax_.assign(y.size(), 0);
    std::size_t o = 0;
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c) {
        const std::size_t base = (static_cast<std::size_t>(n) * x.c() + c) * x.h() * x.w();
        for (int i = 0; i < ho; ++i)
          for (int j = 0; j < wo; ++j, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t arg = base;
            for (int a = 0; a < k_; ++a)
              for (int b = 0; b < k_; ++b) {
                const int ih = i * s_ - p_ + a, iw = j * s_ - p_ + b;
                if (ih < 0 || ih >= x.h() || iw < 0 || iw >= x.w()) continue;
                const std::size_t idx = base + static_cast<std::size_t>(ih) * x.w() + iw;
                if (x.data[idx] > best) {
                  best = x.data[idx];
                  arg = idx;
                }
              }
            y.data[o] = best;
            argmax_[o] = arg;
          }
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    for (std::size_t o = 0; o < dy.size(); ++o) dx.data[argmax_[o]] += dy.data[o];
    return dx;
  }

 private:
  int k_, s_, p_;
  std::array<int, 4> in_shape_{};
  std::vector<std::size_t> argmax_;
};

template <class T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }
  void add_layer(std::unique_ptr<Layer<T>> l) { layers_.push_back(std::move(l)); }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (layers_.empty()) return x;
    Tensor<T> h = layers_.front()->forward(x);
    for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h);
    return h;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    if (layers_.empty()) return dy;
    Tensor<T> g = layers_.back()->backward(dy);
    for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g);
    return g;
  }
  void collect(std::vector<Param<T>*>& out) override {
    for (auto& l : layers_) l->collect(out);
  }
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// ResNet bottleneck: 1x1 reduce, 3x3 (strided), 1x1 expand, plus identity or
/// projection shortcut, then ReLU. No normalization layers; the expand conv is
/// zero-initialized so each block starts as (projected) identity.
template <class T>
class Bottleneck final : public Layer<T> {
 public:
  Bottleneck(int in_ch, int mid_ch, int out_ch, int stride, const std::string& name) {
    branch_.template add<Conv2d<T>>(in_ch, mid_ch, 1, 1, 0, name + ".conv1");
    branch_.template add<ReLU<T>>();
    branch_.template add<Conv2d<T>>(mid_ch, mid_ch, 3, stride, 1, name + ".conv2");
    branch_.template add<ReLU<T>>();
    branch_.template add<Conv2d<T>>(mid_ch, out_ch, 1, 1, 0, name + ".conv3", true, true);
    if (stride != 1 || in_ch != out_ch)
      shortcut_ = std::make_unique<Conv2d<T>>(in_ch, out_ch, 1, stride, 0, name + ".shortcut");
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = branch_.forward(x);
    const Tensor<T> s = shortcut_ ? shortcut_->forward(x) : x;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s.data[i];
    return relu_.forward(y);
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    const Tensor<T> g = relu_.backward(dy);
    Tensor<T> dx = branch_.backward(g);
    const Tensor<T> ds = shortcut_ ? shortcut_->backward(g) : g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
    return dx;
  }
  void collect(std::vector<Param<T>*>& out) override {
    branch_.collect(out);
    if (shortcut_) shortcut_->collect(out);
  }

 private:
  Sequential<T> branch_;
  std::unique_ptr<Conv2d<T>> shortcut_;
  ReLU<T> relu_;
};

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases and zero-flagged
/// weights. Parameter k draws from stream (seed, stream, k).
template <class T>
void init_params(const std::vector<Param<T>*>& params, std::uint64_t seed, std::uint64_t stream) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>& p = *params[k];
    if (p.zero_init) {
      std::fill(p.value.begin(), p.value.end(), T(0));
      continue;
    }
    Rng rng = Rng::keyed(seed, {0x1417, stream, static_cast<std::uint64_t>(k)});
    const double bound = std::sqrt(6.0 / std::max(1, p.fan_in));
    for (auto& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

}  // namespace fusionprog::nn
