#pragma once

// Binary classification metrics: ROC AUC, macro-F1, accuracy.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionprog/core/error.hpp"

namespace fusionprog {

/// Mann-Whitney U / (n_pos * n_neg) with ties counted 1/2, via average ranks.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ShapeError("auc: non-finite score at index " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw ShapeError("auc: labels must be 0 or 1");
    n_pos += labels[i] == 1;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ShapeError("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;  // 1-based average ranks
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

/// confusion[actual][predicted]
using Confusion = std::array<std::array<long long, 2>, 2>;

inline Confusion confusion_matrix(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw ShapeError("confusion: preds and labels differ in length");
  Confusion c{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != 0 && preds[i] != 1) || (labels[i] != 0 && labels[i] != 1))
      throw ShapeError("confusion: values must be 0 or 1");
    ++c[labels[i]][preds[i]];
  }
  return c;
}

/// Unweighted mean of per-class F1; precision or recall with a zero
/// denominator counts as 0.
inline double macro_f1(std::span<const int> preds, std::span<const int> labels) {
  const auto c = confusion_matrix(preds, labels);
  double sum = 0;
  for (int k = 0; k < 2; ++k) {
    const double tp = static_cast<double>(c[k][k]);
    const double fp = static_cast<double>(c[1 - k][k]);
    const double fn = static_cast<double>(c[k][1 - k]);
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / 2;
}

inline double accuracy(std::span<const int> preds, std::span<const int> labels) {
  const auto c = confusion_matrix(preds, labels);
  const auto n = c[0][0] + c[0][1] + c[1][0] + c[1][1];
  if (n == 0) throw ShapeError("accuracy: empty input");
  return static_cast<double>(c[0][0] + c[1][1]) / static_cast<double>(n);
}

struct MetricsReport {
  double auc = 0;
  double macro_f1 = 0;
  double accuracy = 0;
  std::string split;  // "val" or "test"
  long long n = 0;
  Confusion confusion{};

  bool operator==(const MetricsReport&) const = default;
};

/// Scores are P(class 1); predictions are the argmax of the logits.
inline MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> preds,
                                     std::span<const int> labels, std::string split) {
  MetricsReport r;
  r.auc = auc(scores, labels);
  r.macro_f1 = macro_f1(preds, labels);
  r.accuracy = accuracy(preds, labels);
  r.confusion = confusion_matrix(preds, labels);
  r.n = static_cast<long long>(labels.size());
  r.split = std::move(split);
  return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  return {{"split", r.split},         {"n", r.n},
          {"auc", r.auc},             {"macro_f1", r.macro_f1},
          {"accuracy", r.accuracy},   {"confusion", r.confusion}};
}

inline MetricsReport metrics_from_json(const nlohmann::ordered_json& j) {
  MetricsReport r;
  r.split = j.at("split");
  r.n = j.at("n");
  r.auc = j.at("auc");
  r.macro_f1 = j.at("macro_f1");
  r.accuracy = j.at("accuracy");
  r.confusion = j.at("confusion").get<Confusion>();
  return r;
}

}  // namespace fusionprog
