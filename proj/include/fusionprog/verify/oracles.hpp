#pragma once

// Direct-summation reference implementations used to cross-check the
// vectorized losses and metrics. Plain nested loops over std::vector, no
// max-logit shift and no Eigen.

#include <cmath>
#include <vector>

namespace fusionprog::oracle {

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/// Sum of per-anchor losses and the number of anchors with positives.
struct AnchorTotals {
  double sum = 0;
  int count = 0;
};

inline AnchorTotals supcon_totals(const Rows& X, const Rows& Y, const std::vector<int>& labels, double tau,
                                  bool exclude_self) {
  AnchorTotals t;
  for (std::size_t i = 0; i < X.size(); ++i) {
    double denom = 0;
    int n_pos = 0;
    for (std::size_t k = 0; k < Y.size(); ++k) {
      if (exclude_self && k == i) continue;
      denom += std::exp(dot(X[i], Y[k]) / tau);
      if (labels[k] == labels[i]) ++n_pos;
    }
    if (n_pos == 0) continue;
    double li = 0;
    for (std::size_t p = 0; p < Y.size(); ++p) {
      if (exclude_self && p == i) continue;
      if (labels[p] != labels[i]) continue;
      li += std::log(std::exp(dot(X[i], Y[p]) / tau) / denom);
    }
    t.sum += -li / n_pos;
    ++t.count;
  }
  return t;
}

inline double supcon(const Rows& X, const Rows& Y, const std::vector<int>& labels, double tau, bool exclude_self) {
  const auto t = supcon_totals(X, Y, labels, tau, exclude_self);
  return t.count ? t.sum / t.count : 0.0;
}

inline double supcon_symmetric(const Rows& X, const Rows& Y, const std::vector<int>& labels, double tau) {
  const auto a = supcon_totals(X, Y, labels, tau, false);
  const auto b = supcon_totals(Y, X, labels, tau, false);
  return a.count + b.count ? (a.sum + b.sum) / (a.count + b.count) : 0.0;
}

inline double intra(const Rows& A, const Rows& D, const Rows& S, const std::vector<int>& labels, double tau) {
  return supcon(A, A, labels, tau, true) + supcon(D, D, labels, tau, true) + supcon(S, S, labels, tau, true);
}

inline double inter(const Rows& A, const Rows& D, const Rows& S, const std::vector<int>& labels, double tau) {
  return supcon_symmetric(A, D, labels, tau) + supcon_symmetric(D, S, labels, tau) + supcon_symmetric(S, A, labels, tau);
}

inline double fmcl(const Rows& M, const std::vector<int>& labels, double tau) { return supcon(M, M, labels, tau, true); }

inline double cross_entropy(const Rows& logits, const std::vector<int>& labels) {
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double z = 0;
    for (double l : logits[i]) z += std::exp(l);
    s += -std::log(std::exp(logits[i][labels[i]]) / z);
  }
  return s / static_cast<double>(logits.size());
}

/// Fraction of (positive, negative) pairs ranked correctly, ties 1/2.
inline double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0;
  long long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

/// Per-class F1 from explicit TP/FP/FN counts, averaged over both classes.
inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels) {
  double total = 0;
  for (int c = 0; c < 2; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && labels[i] == c) ++tp;
      if (preds[i] == c && labels[i] != c) ++fp;
      if (preds[i] != c && labels[i] == c) ++fn;
    }
    const double p = (tp + fp) == 0 ? 0 : tp / (tp + fp);
    const double r = (tp + fn) == 0 ? 0 : tp / (tp + fn);
    total += (p + r) == 0 ? 0 : 2 * p * r / (p + r);
  }
  return total / 2;
}

}  // namespace fusionprog::oracle
