#pragma once

// Supervised contrastive losses over modality views, the stage-1 loss
// combination strategies and the stage-2 cross-entropy.
//
// For anchors i (rows of X) and candidates K(i) (rows of Y, minus i itself
// when X and Y are the same view set), with positives P(i) the candidates
// sharing i's label:
//
//   l_i = -1/|P(i)| sum_{p in P(i)} log( exp(x_i.y_p/tau) / sum_{k in K(i)} exp(x_i.y_k/tau) )
//
// and the loss is the mean of l_i over anchors with non-empty P(i).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fusionprog/core/error.hpp"
#include "fusionprog/core/rng.hpp"
#include "fusionprog/nn/tensor.hpp"

namespace fusionprog {

using nn::MatR;

enum class Pairing {
  SameViews,   // X and Y are one view set: an anchor is not its own candidate
  CrossViews,  // X and Y come from different modalities: every row of Y is a candidate
};

template <class T>
struct PairwiseLoss {
  T value = 0;
  MatR<T> dX, dY;  // gradients of `value`
  bool degenerate = false;
  int anchors = 0;  // anchors with at least one positive
};

namespace detail {

// Rows are unit length, or exactly zero when a zero vector was normalized.
template <class T>
void check_normalized(const MatR<T>& M, const char* what) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const double n = static_cast<double>(M.row(i).norm());
    if (n != 0.0 && std::abs(n - 1.0) > 1e-5)
      throw ShapeError(std::string(what) + ": row " + std::to_string(i) + " is not L2-normalized (norm " +
                       std::to_string(n) + ")");
  }
}

// Sum (not mean) of l_i over valid anchors, with the gradient of that sum.
template <class T>
struct AnchorSum {
  double sum = 0;
  int count = 0;
  MatR<T> dX, dY;
};

template <class T>
AnchorSum<T> supcon_anchor_sum(const MatR<T>& X, const MatR<T>& Y, std::span<const int> labels_x,
                               std::span<const int> labels_y, double tau, Pairing pairing, bool need_grad) {
  const Eigen::Index n = X.rows(), m = Y.rows();
  AnchorSum<T> out;
  MatR<T> logits = (X * Y.transpose()) / static_cast<T>(tau);
  MatR<T> G;
  if (need_grad) G = MatR<T>::Zero(n, m);
  std::vector<double> p(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    int n_pos = 0;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k) {
      if (pairing == Pairing::SameViews && k == i) continue;
      max_logit = std::max(max_logit, static_cast<double>(logits(i, k)));
      if (labels_y[k] == labels_x[i]) ++n_pos;
    }
    if (n_pos == 0) continue;
    double denom = 0, pos_sum = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (pairing == Pairing::SameViews && k == i) continue;
      p[k] = std::exp(static_cast<double>(logits(i, k)) - max_logit);
      denom += p[k];
      if (labels_y[k] == labels_x[i]) pos_sum += static_cast<double>(logits(i, k));
    }
    const double lse = max_logit + std::log(denom);
    out.sum += lse - pos_sum / n_pos;
    ++out.count;
    if (need_grad)
      for (Eigen::Index k = 0; k < m; ++k) {
        if (pairing == Pairing::SameViews && k == i) continue;
        G(i, k) = static_cast<T>(p[k] / denom - (labels_y[k] == labels_x[i] ? 1.0 / n_pos : 0.0));
      }
  }
  if (need_grad) {
    out.dX = (G * Y) / static_cast<T>(tau);
    out.dY = (G.transpose() * X) / static_cast<T>(tau);
  }
  return out;
}

}  // namespace detail

/// Supervised contrastive loss of anchors X against candidates Y. Row k of X
/// and row k of Y share labels[k]. All-degenerate batches return 0 with the flag
/// set.
template <class T>
PairwiseLoss<T> supcon_pairwise(const MatR<T>& X, const MatR<T>& Y, std::span<const int> labels, double tau,
                                Pairing pairing, bool need_grad = true) {
  if (!(tau > 0)) throw ConfigError("supcon: temperature must be > 0");
  if (X.rows() != Y.rows() || X.cols() != Y.cols() || static_cast<Eigen::Index>(labels.size()) != X.rows())
    throw ShapeError("supcon: X, Y and labels must have matching rows");
  if (X.rows() < 2) throw ShapeError("supcon: need at least 2 views");
  detail::check_normalized(X, "supcon X");
  if (pairing == Pairing::CrossViews) detail::check_normalized(Y, "supcon Y");
  auto s = detail::supcon_anchor_sum<T>(X, Y, labels, labels, tau, pairing, need_grad);
  PairwiseLoss<T> r;
  r.anchors = s.count;
  if (s.count == 0) {
    r.degenerate = true;
    r.dX = MatR<T>::Zero(X.rows(), X.cols());
    r.dY = MatR<T>::Zero(Y.rows(), Y.cols());
    return r;
  }
  r.value = static_cast<T>(s.sum / s.count);
  if (need_grad) {
    r.dX = s.dX / static_cast<T>(s.count);
    r.dY = s.dY / static_cast<T>(s.count);
  }
  return r;
}

/// Projected, normalized embeddings for a batch of views. Row r of every
/// matrix belongs to sample view_of[r] and has label labels[r].
template <class T>
struct EmbeddingSet {
  MatR<T> A, D, S;
  std::vector<int> labels;
  std::vector<int> view_of;

  void validate() const {
    const auto n = A.rows();
    if (D.rows() != n || S.rows() != n || static_cast<Eigen::Index>(labels.size()) != n ||
        static_cast<Eigen::Index>(view_of.size()) != n)
      throw ShapeError("EmbeddingSet: row counts differ across A, D, S, labels, view_of");
  }
};

template <class T>
struct BranchLoss {
  T value = 0;
  MatR<T> dA, dD, dS;
  int valid_terms = 0;  // pairwise terms that were not degenerate
};

/// L_intra = L_AA + L_DD + L_SS, each over all views of one modality.
template <class T>
BranchLoss<T> loss_intra(const EmbeddingSet<T>& E, double tau, bool need_grad = true) {
  E.validate();
  BranchLoss<T> out;
  const std::array<const MatR<T>*, 3> mats{&E.A, &E.D, &E.S};
  std::array<MatR<T>*, 3> grads{&out.dA, &out.dD, &out.dS};
  for (int m = 0; m < 3; ++m) {
    auto r = supcon_pairwise<T>(*mats[m], *mats[m], E.labels, tau, Pairing::SameViews, need_grad);
    if (!r.degenerate) {
      out.value += r.value;
      ++out.valid_terms;
    }
    if (need_grad) *grads[m] = r.dX + r.dY;
  }
  return out;
}

/// One modality pair with anchors drawn symmetrically from both members.
template <class T>
PairwiseLoss<T> supcon_symmetric(const MatR<T>& X, const MatR<T>& Y, std::span<const int> labels, double tau,
                                 bool need_grad = true) {
  if (!(tau > 0)) throw ConfigError("supcon: temperature must be > 0");
  if (X.rows() != Y.rows() || static_cast<Eigen::Index>(labels.size()) != X.rows())
    throw ShapeError("supcon: X, Y and labels must have matching rows");
  if (X.rows() < 1) throw ShapeError("supcon: need at least one view per modality");
  detail::check_normalized(X, "supcon X");
  detail::check_normalized(Y, "supcon Y");
  auto xy = detail::supcon_anchor_sum<T>(X, Y, labels, labels, tau, Pairing::CrossViews, need_grad);
  auto yx = detail::supcon_anchor_sum<T>(Y, X, labels, labels, tau, Pairing::CrossViews, need_grad);
  PairwiseLoss<T> r;
  r.anchors = xy.count + yx.count;
  if (r.anchors == 0) {
    r.degenerate = true;
    r.dX = MatR<T>::Zero(X.rows(), X.cols());
    r.dY = MatR<T>::Zero(Y.rows(), Y.cols());
    return r;
  }
  r.value = static_cast<T>((xy.sum + yx.sum) / r.anchors);
  if (need_grad) {
    r.dX = (xy.dX + yx.dY) / static_cast<T>(r.anchors);
    r.dY = (xy.dY + yx.dX) / static_cast<T>(r.anchors);
  }
  return r;
}

/// L_inter = L_AD + L_DS + L_SA.
template <class T>
BranchLoss<T> loss_inter(const EmbeddingSet<T>& E, double tau, bool need_grad = true) {
  E.validate();
  BranchLoss<T> out;
  if (need_grad) {
    out.dA = MatR<T>::Zero(E.A.rows(), E.A.cols());
    out.dD = MatR<T>::Zero(E.D.rows(), E.D.cols());
    out.dS = MatR<T>::Zero(E.S.rows(), E.S.cols());
  }
  struct P {
    const MatR<T>* x;
    const MatR<T>* y;
    MatR<T>* gx;
    MatR<T>* gy;
  };
  const std::array<P, 3> pairs{P{&E.A, &E.D, &out.dA, &out.dD}, P{&E.D, &E.S, &out.dD, &out.dS},
                               P{&E.S, &E.A, &out.dS, &out.dA}};
  for (const auto& p : pairs) {
    auto r = supcon_symmetric<T>(*p.x, *p.y, E.labels, tau, need_grad);
    if (!r.degenerate) {
      out.value += r.value;
      ++out.valid_terms;
    }
    if (need_grad) {
      *p.gx += r.dX;
      *p.gy += r.dY;
    }
  }
  return out;
}

/// FMCL over fused views; every sample must contribute at least two views.
template <class T>
PairwiseLoss<T> loss_fmcl(const MatR<T>& M, std::span<const int> labels, std::span<const int> view_of, double tau,
                          bool need_grad = true) {
  if (static_cast<Eigen::Index>(view_of.size()) != M.rows()) throw ShapeError("loss_fmcl: view_of size mismatch");
  std::vector<int> counts;
  for (int s : view_of) {
    if (s < 0) throw ShapeError("loss_fmcl: negative sample index");
    if (static_cast<std::size_t>(s) >= counts.size()) counts.resize(s + 1, 0);
    ++counts[s];
  }
  for (std::size_t s = 0; s < counts.size(); ++s)
    if (counts[s] == 1)
      throw ShapeError("loss_fmcl: sample " + std::to_string(s) + " has 1 fused view; FMCL needs >= 2 views per sample");
  auto r = supcon_pairwise<T>(M, M, labels, tau, Pairing::SameViews, need_grad);
  if (need_grad) {
    r.dX += r.dY;
    r.dY.setZero();
  }
  return r;
}

// ---------------------------------------------------------------------------

enum class LossKind { Intra, Inter, Fmcl, Average, None };
enum class CombineStrategy { AverageAll, RandomPerEpoch, RandomPerMinibatch };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Intra: return "intra";
    case LossKind::Inter: return "inter";
    case LossKind::Fmcl: return "fmcl";
    case LossKind::Average: return "average";
    case LossKind::None: return "none";
  }
  return "?";
}

inline std::string to_string(CombineStrategy s) {
  switch (s) {
    case CombineStrategy::AverageAll: return "AVERAGE_ALL";
    case CombineStrategy::RandomPerEpoch: return "RANDOM_PER_EPOCH";
    case CombineStrategy::RandomPerMinibatch: return "RANDOM_PER_MINIBATCH";
  }
  return "?";
}

inline CombineStrategy parse_strategy(const std::string& s) {
  if (s == "AVERAGE_ALL") return CombineStrategy::AverageAll;
  if (s == "RANDOM_PER_EPOCH") return CombineStrategy::RandomPerEpoch;
  if (s == "RANDOM_PER_MINIBATCH") return CombineStrategy::RandomPerMinibatch;
  throw ConfigError("unknown combine strategy '" + s + "'");
}

struct ContrastiveConfig {
  double temperature = 0.1;
  CombineStrategy strategy = CombineStrategy::RandomPerMinibatch;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(temperature > 0)) throw ConfigError("contrastive: temperature must be > 0");
  }
};

/// Which stage-1 losses participate (ablation flags).
struct LossSelection {
  bool intra = true;
  bool inter = true;
  bool fmcl = true;

  bool any() const { return intra || inter || fmcl; }
  std::vector<LossKind> enabled() const {
    std::vector<LossKind> k;
    if (intra) k.push_back(LossKind::Intra);
    if (inter) k.push_back(LossKind::Inter);
    if (fmcl) k.push_back(LossKind::Fmcl);
    return k;
  }
};

struct LossReport {
  double l_intra = 0;
  double l_inter = 0;
  double l_fmcl = 0;
  LossKind chosen = LossKind::None;
  double total = 0;
};

/// Picks which component drives this step. AVERAGE_ALL averages the enabled
/// components; the random strategies draw uniformly from the enabled ones,
/// keyed by (seed, epoch) or (seed, epoch, batch_index).
inline LossReport combine(double l_intra, double l_inter, double l_fmcl, const LossSelection& sel,
                          CombineStrategy strategy, std::uint64_t seed, int epoch, int batch_index) {
  LossReport r{l_intra, l_inter, l_fmcl, LossKind::None, 0.0};
  const auto enabled = sel.enabled();
  if (enabled.empty()) return r;
  auto value = [&](LossKind k) { return k == LossKind::Intra ? l_intra : k == LossKind::Inter ? l_inter : l_fmcl; };
  if (strategy == CombineStrategy::AverageAll) {
    double s = 0;
    for (auto k : enabled) s += value(k);
    r.chosen = enabled.size() == 1 ? enabled.front() : LossKind::Average;
    r.total = s / static_cast<double>(enabled.size());
    return r;
  }
  Rng rng = strategy == CombineStrategy::RandomPerEpoch
                ? Rng::keyed(seed, {0xC0B1, static_cast<std::uint64_t>(epoch)})
                : Rng::keyed(seed, {0xC0B2, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batch_index)});
  r.chosen = enabled[rng.below(enabled.size())];
  r.total = value(r.chosen);
  return r;
}

/// Mean negative log-softmax of the true class, with its gradient.
template <class T>
struct CrossEntropy {
  T value = 0;
  MatR<T> dlogits;
};

template <class T>
CrossEntropy<T> cross_entropy(const MatR<T>& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows() || logits.rows() == 0)
    throw ShapeError("cross_entropy: labels and logits rows differ");
  CrossEntropy<T> out;
  out.dlogits = MatR<T>::Zero(logits.rows(), logits.cols());
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  double total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = static_cast<double>(logits.row(i).maxCoeff());
    double denom = 0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) denom += std::exp(static_cast<double>(logits(i, k)) - mx);
    const double lse = mx + std::log(denom);
    const int y = labels[i];
    if (y < 0 || y >= logits.cols()) throw ShapeError("cross_entropy: label out of range");
    total += lse - static_cast<double>(logits(i, y));
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const double p = std::exp(static_cast<double>(logits(i, k)) - lse);
      out.dlogits(i, k) = static_cast<T>((p - (k == y ? 1.0 : 0.0)) * inv_n);
    }
  }
  out.value = static_cast<T>(total * inv_n);
  return out;
}

}  // namespace fusionprog
