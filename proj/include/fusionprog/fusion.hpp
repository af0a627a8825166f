#pragma once

// Fusion of the three modality embeddings into the common embedding M.

#include <string>

#include "fusionprog/core/error.hpp"
#include "fusionprog/encoders.hpp"
#include "fusionprog/nn/layers.hpp"

namespace fusionprog {

enum class FusionMode { Hierarchical, Average };

struct FusionConfig {
  FusionMode mode = FusionMode::Hierarchical;
  int dim = kEmbeddingDim;  // width of A, D, S and of both FC outputs
};

namespace nn {

/// HIERARCHICAL: M = ReLU(FC2([ReLU(FC1([A, D])), S])).
/// AVERAGE:      M = (A + D + S) / 3.
template <class T>
class Fusion {
 public:
  Fusion(const FusionConfig& cfg, const std::string& name)
      : cfg_(cfg), fc1_(2 * cfg.dim, cfg.dim, name + ".fc1"), fc2_(2 * cfg.dim, cfg.dim, name + ".fc2") {}

  Tensor<T> forward(const Tensor<T>& A, const Tensor<T>& D, const Tensor<T>& S) {
    const int d = cfg_.dim;
    for (const auto* t : {&A, &D, &S})
      if (static_cast<int>(t->per_item()) != d || t->n() != A.n())
        throw ShapeError("fuse: expected (" + std::to_string(A.n()) + "," + std::to_string(d) + ") inputs, got " +
                         t->shape_string());
    const int n = A.n();
    if (cfg_.mode == FusionMode::Average) {
      Tensor<T> m(n, d);
      m.matrix() = (A.matrix() + D.matrix() + S.matrix()) / T(3);
      return m;
    }
    Tensor<T> ad(n, 2 * d);
    ad.matrix().leftCols(d) = A.matrix();
    ad.matrix().rightCols(d) = D.matrix();
    fc1_out_ = relu1_.forward(fc1_.forward(ad));
    Tensor<T> hs(n, 2 * d);
    hs.matrix().leftCols(d) = fc1_out_.matrix();
    hs.matrix().rightCols(d) = S.matrix();
    return relu2_.forward(fc2_.forward(hs));
  }

  struct Grads {
    Tensor<T> dA, dD, dS;
  };

  Grads backward(const Tensor<T>& dM) {
    const int d = cfg_.dim, n = dM.n();
    Grads g{Tensor<T>(n, d), Tensor<T>(n, d), Tensor<T>(n, d)};
    if (cfg_.mode == FusionMode::Average) {
      g.dA.matrix() = dM.matrix() / T(3);
      g.dD.matrix() = g.dA.matrix();
      g.dS.matrix() = g.dA.matrix();
      return g;
    }
    const Tensor<T> dhs = fc2_.backward(relu2_.backward(dM));
    Tensor<T> dh(n, d);
    dh.matrix() = dhs.matrix().leftCols(d);
    g.dS.matrix() = dhs.matrix().rightCols(d);
    const Tensor<T> dad = fc1_.backward(relu1_.backward(dh));
    g.dA.matrix() = dad.matrix().leftCols(d);
    g.dD.matrix() = dad.matrix().rightCols(d);
    return g;
  }

  void collect(std::vector<Param<T>*>& out) {
    if (cfg_.mode == FusionMode::Hierarchical) {
      fc1_.collect(out);
      fc2_.collect(out);
    }
  }

  /// FC1 activations from the last forward (hierarchical mode).
  const Tensor<T>& image_stage_activations() const { return fc1_out_; }
  const FusionConfig& config() const { return cfg_; }

 private:
  FusionConfig cfg_;
  Linear<T> fc1_, fc2_;
  ReLU<T> relu1_, relu2_;
  Tensor<T> fc1_out_;
};

}  // namespace nn

}  // namespace fusionprog
