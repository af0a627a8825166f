#pragma once

// Verification suites behind `fusionprog verify`: oracle equivalence of the
// losses and metrics, closed-form loss values, finite-difference gradient
// checks and augmentation statistics.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fusionprog/augment.hpp"
#include "fusionprog/core/rng.hpp"
#include "fusionprog/losses.hpp"
#include "fusionprog/metrics.hpp"
#include "fusionprog/model.hpp"
#include "fusionprog/training.hpp"
#include "fusionprog/verify/oracles.hpp"

namespace fusionprog::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }
  void add(std::string name, bool ok, std::string detail) { checks.push_back({std::move(name), ok, std::move(detail)}); }
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline MatR<double> random_rows(Rng& rng, int n, int d, bool normalize) {
  MatR<double> m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) m(i, k) = rng.normal();
    if (normalize) m.row(i).normalize();
  }
  return m;
}

inline oracle::Rows to_rows(const MatR<double>& m) {
  oracle::Rows r(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) r[i][k] = m(i, k);
  return r;
}

inline MatR<double> normalized(const MatR<double>& z) {
  MatR<double> y = z;
  for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i).normalize();
  return y;
}

// Gradient of f(normalize(Z)) w.r.t. Z given the gradient w.r.t. normalize(Z).
inline MatR<double> through_normalize(const MatR<double>& z, const MatR<double>& g) {
  MatR<double> out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double n = z.row(i).norm();
    const auto y = z.row(i) / n;
    out.row(i) = (g.row(i) - y.dot(g.row(i)) * y) / n;
  }
  return out;
}

inline double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace detail

/// Vectorized losses vs the direct-summation oracle on random batches
/// (n <= 8 views, d <= 8, 64-bit).
inline SuiteResult verify_loss_oracles(int trials = 1000, std::uint64_t seed = 20240611, double tol = 1e-6) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult res{"loss_oracles", {}, 0};
  Rng rng(seed);
  double max_same = 0, max_cross = 0, max_sym = 0, max_intra = 0, max_inter = 0, max_fmcl = 0, max_ce = 0;
  int degenerate_mismatch = 0;
  for (int t = 0; t < trials; ++t) {
    const int m = 1 + static_cast<int>(rng.below(4));  // samples, two views each
    const int n = 2 * m;
    const int d = 1 + static_cast<int>(rng.below(8));
    const double tau = rng.uniform(0.05, 1.0);
    std::vector<int> labels(n), view_of(n);
    std::vector<int> sample_label(m);
    for (auto& l : sample_label) l = static_cast<int>(rng.below(2));
    for (int r = 0; r < n; ++r) {
      view_of[r] = r % m;
      labels[r] = sample_label[r % m];
    }
    // Independent labels per row exercise empty positive sets.
    std::vector<int> free_labels(n);
    for (auto& l : free_labels) l = static_cast<int>(rng.below(3));

    const auto X = detail::random_rows(rng, n, d, true), Y = detail::random_rows(rng, n, d, true);
    const auto A = detail::random_rows(rng, n, d, true), D = detail::random_rows(rng, n, d, true),
               S = detail::random_rows(rng, n, d, true);
    const auto rx = detail::to_rows(X), ry = detail::to_rows(Y);

    const auto same = supcon_pairwise<double>(X, X, free_labels, tau, Pairing::SameViews, false);
    max_same = std::max(max_same, std::abs(same.value - oracle::supcon(rx, rx, free_labels, tau, true)));
    if (same.degenerate != (oracle::supcon_totals(rx, rx, free_labels, tau, true).count == 0)) ++degenerate_mismatch;
    const auto cross = supcon_pairwise<double>(X, Y, free_labels, tau, Pairing::CrossViews, false);
    max_cross = std::max(max_cross, std::abs(cross.value - oracle::supcon(rx, ry, free_labels, tau, false)));
    const auto sym = supcon_symmetric<double>(X, Y, free_labels, tau, false);
    max_sym = std::max(max_sym, std::abs(sym.value - oracle::supcon_symmetric(rx, ry, free_labels, tau)));

    EmbeddingSet<double> E{A, D, S, labels, view_of};
    const auto ra = detail::to_rows(A), rd = detail::to_rows(D), rs = detail::to_rows(S);
    max_intra = std::max(max_intra, std::abs(loss_intra<double>(E, tau, false).value - oracle::intra(ra, rd, rs, labels, tau)));
    max_inter = std::max(max_inter, std::abs(loss_inter<double>(E, tau, false).value - oracle::inter(ra, rd, rs, labels, tau)));
    max_fmcl = std::max(max_fmcl,
                        std::abs(loss_fmcl<double>(X, labels, view_of, tau, false).value - oracle::fmcl(rx, labels, tau)));

    const MatR<double> logits = detail::random_rows(rng, n, 2, false) * 3.0;
    max_ce = std::max(max_ce, std::abs(cross_entropy<double>(logits, labels).value -
                                       oracle::cross_entropy(detail::to_rows(logits), labels)));
  }
  const std::string n = " over " + std::to_string(trials) + " batches";
  res.add("supcon same-view", max_same <= tol, "max |diff| " + detail::sci(max_same) + n);
  res.add("supcon cross-view", max_cross <= tol, "max |diff| " + detail::sci(max_cross) + n);
  res.add("supcon symmetric pair", max_sym <= tol, "max |diff| " + detail::sci(max_sym) + n);
  res.add("L_intra", max_intra <= tol, "max |diff| " + detail::sci(max_intra) + n);
  res.add("L_inter", max_inter <= tol, "max |diff| " + detail::sci(max_inter) + n);
  res.add("L_FMCL", max_fmcl <= tol, "max |diff| " + detail::sci(max_fmcl) + n);
  res.add("cross-entropy", max_ce <= tol, "max |diff| " + detail::sci(max_ce) + n);
  res.add("degenerate flag", degenerate_mismatch == 0,
          std::to_string(degenerate_mismatch) + " flag mismatches vs oracle anchor count");
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// All-equal embeddings: every logit is equal, so each anchor's loss is ln|K(i)|.
inline SuiteResult verify_closed_form(double tol = 1e-9) {
  SuiteResult res{"closed_form", {}, 0};
  Rng rng(5);
  double worst = 0;
  for (int n = 2; n <= 8; ++n) {
    for (int d : {1, 4, 8}) {
      MatR<double> X(n, d);
      const auto v = detail::random_rows(rng, 1, d, true);
      for (int i = 0; i < n; ++i) X.row(i) = v.row(0);
      std::vector<int> labels(n, 0), view_of(n);
      for (int i = 0; i < n; ++i) view_of[i] = i / 2 + (n % 2 && i == n - 1 ? -1 : 0);
      for (double tau : {0.1, 0.5}) {
        const double same = supcon_pairwise<double>(X, X, labels, tau, Pairing::SameViews, false).value;
        const double cross = supcon_pairwise<double>(X, X, labels, tau, Pairing::CrossViews, false).value;
        worst = std::max({worst, std::abs(same - std::log(n - 1.0)), std::abs(cross - std::log(static_cast<double>(n)))});
        if (n % 2 == 0) {
          const double f = loss_fmcl<double>(X, labels, view_of, tau, false).value;
          worst = std::max(worst, std::abs(f - std::log(n - 1.0)));
        }
      }
    }
  }
  MatR<double> X4(4, 3);
  for (int i = 0; i < 4; ++i) X4.row(i) << 0.6, 0.0, 0.8;
  const std::vector<int> lab4{1, 1, 1, 1};
  const double l4 = supcon_pairwise<double>(X4, X4, lab4, 0.1, Pairing::SameViews, false).value;
  res.add("n=4 same-class views, |K|=3", std::abs(l4 - std::log(3.0)) <= tol,
          "loss " + std::to_string(l4) + " vs ln 3 = " + std::to_string(std::log(3.0)));
  res.add("all-equal batches n=2..8", worst <= tol, "max |loss - ln|K(i)|| " + detail::sci(worst));
  return res;
}

/// auc vs the O(n^2) pairwise oracle (with ties) and macro-F1 vs explicit
/// confusion counts, both compared exactly.
inline SuiteResult verify_metric_oracles(int trials = 2000, std::uint64_t seed = 99) {
  SuiteResult res{"metric_oracles", {}, 0};
  Rng rng(seed);
  int auc_mismatch = 0, f1_mismatch = 0, auc_tested = 0;
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + static_cast<int>(rng.below(49));
    std::vector<double> scores(n);
    std::vector<int> labels(n), preds(n);
    const int levels = 1 + static_cast<int>(rng.below(6));  // few levels force ties
    for (int i = 0; i < n; ++i) {
      scores[i] = t % 2 ? static_cast<double>(rng.below(levels)) / levels : rng.uniform();
      labels[i] = static_cast<int>(rng.below(2));
      preds[i] = static_cast<int>(rng.below(2));
    }
    if (t % 7 == 0) std::fill(preds.begin(), preds.end(), 0);
    const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
    if (both) {
      ++auc_tested;
      if (auc(scores, labels) != oracle::auc_pairwise(scores, labels)) ++auc_mismatch;
    }
    if (macro_f1(preds, labels) != oracle::macro_f1(preds, labels)) ++f1_mismatch;
  }
  res.add("auc vs pairwise oracle", auc_mismatch == 0,
          std::to_string(auc_mismatch) + " mismatches in " + std::to_string(auc_tested) + " sets (n <= 50, with ties)");
  res.add("macro_f1 vs confusion oracle", f1_mismatch == 0,
          std::to_string(f1_mismatch) + " mismatches in " + std::to_string(trials) + " sets");

  const std::vector<int> half{0, 1, 0, 1}, zeros{0, 0, 0, 0};
  const double f = macro_f1(zeros, half);
  res.add("all-zero predictions, half positive", f == 1.0 / 3.0, "macro_f1 = " + std::to_string(f) + " (expect 1/3)");
  const std::vector<double> s2{0.9, 0.1};
  const std::vector<int> l2{1, 0};
  const std::vector<double> flat(10, 0.3);
  const std::vector<int> l10{0, 1, 0, 1, 0, 1, 0, 1, 1, 1};
  res.add("perfect ranking and all ties", auc(s2, l2) == 1.0 && auc(flat, l10) == 0.5, "auc 1.0 and 0.5");
  return res;
}

// ---------------------------------------------------------------------------
// Gradient checks

struct GradStats {
  double max_rel = 0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // points where the +-h stencil crosses a ReLU/max-pool kink
  std::string worst;
};

/// Central differences with step h on every entry of `values`. An entry that
/// fails at h and passes at h/100 sits within h of a non-differentiable point;
/// it is counted in `kinks` instead of the error statistic.
inline void check_entries(std::span<double> values, std::span<const double> analytic,
                          const std::function<double()>& loss, const std::string& label, GradStats& st,
                          double h = 1e-5, double tol = 1e-4, double floor = 1e-6) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto central = [&](double step) {
      const double orig = values[i];
      values[i] = orig + step;
      const double up = loss();
      values[i] = orig - step;
      const double down = loss();
      values[i] = orig;
      return (up - down) / (2 * step);
    };
    double rel = detail::rel_error(analytic[i], central(h), floor);
    if (rel >= tol) {
      const double fine = detail::rel_error(analytic[i], central(h / 100), floor);
      if (fine < tol) {
        ++st.kinks;
        rel = fine;
      }
    }
    ++st.checked;
    if (rel > st.max_rel) {
      st.max_rel = rel;
      st.worst = label + "[" + std::to_string(i) + "]";
    }
  }
}

/// Finite-difference checks for every loss w.r.t. raw (pre-normalization)
/// embeddings.
inline SuiteResult verify_loss_gradients(int batches = 20, double tol = 1e-4) {
  SuiteResult res{"loss_gradients", {}, 0};
  Rng rng(314);
  GradStats same, cross, sym, intra, inter, fmcl, ce;
  for (int b = 0; b < batches; ++b) {
    const int m = 2 + static_cast<int>(rng.below(3)), n = 2 * m, d = 2 + static_cast<int>(rng.below(7));
    const double tau = rng.uniform(0.1, 1.0);
    std::vector<int> labels(n), view_of(n);
    for (int r = 0; r < n; ++r) {
      view_of[r] = r % m;
      labels[r] = (r % m) % 2;
    }
    auto flat = [](const MatR<double>& z) { return std::vector<double>(z.data(), z.data() + z.size()); };
    auto as_mat = [](std::vector<double>& v, int rows, int cols) { return nn::MapR<double>(v.data(), rows, cols); };

    // Pairwise losses with the X side perturbed; Y fixed and normalized.
    std::vector<double> zx = flat(detail::random_rows(rng, n, d, false));
    const MatR<double> Y = detail::random_rows(rng, n, d, true);
    {
      const MatR<double> zxm = as_mat(zx, n, d);
      auto r = supcon_pairwise<double>(detail::normalized(zxm), detail::normalized(zxm), labels, tau, Pairing::SameViews);
      const auto g = flat(detail::through_normalize(zxm, r.dX + r.dY));
      check_entries(zx, g, [&] {
        const MatR<double> z = as_mat(zx, n, d);
        const auto x = detail::normalized(z);
        return static_cast<double>(supcon_pairwise<double>(x, x, labels, tau, Pairing::SameViews, false).value);
      }, "same", same);
    }
    {
      const MatR<double> zxm = as_mat(zx, n, d);
      auto r = supcon_pairwise<double>(detail::normalized(zxm), Y, labels, tau, Pairing::CrossViews);
      check_entries(zx, flat(detail::through_normalize(zxm, r.dX)), [&] {
        const MatR<double> z = as_mat(zx, n, d);
        return static_cast<double>(
            supcon_pairwise<double>(detail::normalized(z), Y, labels, tau, Pairing::CrossViews, false).value);
      }, "cross", cross);
      auto s = supcon_symmetric<double>(detail::normalized(zxm), Y, labels, tau);
      check_entries(zx, flat(detail::through_normalize(zxm, s.dX)), [&] {
        const MatR<double> z = as_mat(zx, n, d);
        return static_cast<double>(supcon_symmetric<double>(detail::normalized(z), Y, labels, tau, false).value);
      }, "symmetric", sym);
      auto f = loss_fmcl<double>(detail::normalized(zxm), labels, view_of, tau);
      check_entries(zx, flat(detail::through_normalize(zxm, f.dX)), [&] {
        const MatR<double> z = as_mat(zx, n, d);
        return static_cast<double>(loss_fmcl<double>(detail::normalized(z), labels, view_of, tau, false).value);
      }, "fmcl", fmcl);
    }
    // Intra/inter: perturb each modality in turn.
    std::vector<double> za = flat(detail::random_rows(rng, n, d, false)), zd = flat(detail::random_rows(rng, n, d, false)),
                        zs = flat(detail::random_rows(rng, n, d, false));
    auto set_of = [&] {
      return EmbeddingSet<double>{detail::normalized(as_mat(za, n, d)), detail::normalized(as_mat(zd, n, d)),
                                  detail::normalized(as_mat(zs, n, d)), labels, view_of};
    };
    const auto E = set_of();
    const auto gi = loss_intra<double>(E, tau);
    const auto ge = loss_inter<double>(E, tau);
    const std::array<std::vector<double>*, 3> zs3{&za, &zd, &zs};
    const std::array<const MatR<double>*, 3> gi3{&gi.dA, &gi.dD, &gi.dS}, ge3{&ge.dA, &ge.dD, &ge.dS};
    const char* names[] = {"A", "D", "S"};
    for (int k = 0; k < 3; ++k) {
      const MatR<double> zk = as_mat(*zs3[k], n, d);
      check_entries(*zs3[k], flat(detail::through_normalize(zk, *gi3[k])),
                    [&] { return static_cast<double>(loss_intra<double>(set_of(), tau, false).value); },
                    std::string("intra.") + names[k], intra);
      check_entries(*zs3[k], flat(detail::through_normalize(zk, *ge3[k])),
                    [&] { return static_cast<double>(loss_inter<double>(set_of(), tau, false).value); },
                    std::string("inter.") + names[k], inter);
    }
    std::vector<double> zl = flat(detail::random_rows(rng, n, 2, false) * 2.0);
    const auto c = cross_entropy<double>(as_mat(zl, n, 2), labels);
    check_entries(zl, flat(c.dlogits), [&] { return cross_entropy<double>(as_mat(zl, n, 2), labels).value; }, "ce", ce);
  }
  auto add = [&](const char* name, const GradStats& s) {
    res.add(name, s.max_rel < tol,
            "max rel err " + detail::sci(s.max_rel) + " over " + std::to_string(s.checked) + " entries" +
                (s.kinks ? ", " + std::to_string(s.kinks) + " kink points" : ""));
  };
  add("d supcon(same)/dZ", same);
  add("d supcon(cross)/dZ", cross);
  add("d supcon(symmetric)/dZ", sym);
  add("d L_intra/dZ", intra);
  add("d L_inter/dZ", inter);
  add("d L_FMCL/dZ", fmcl);
  add("d CE/dlogits", ce);
  return res;
}

/// Tiny network for parameter gradient checks: 4 slices of 8x8, 3 attributes.
inline ModelConfig tiny_model_config(Backbone backbone, FusionMode mode) {
  ModelConfig c;
  c.image.backbone = backbone;
  c.image.in_channels = 4;
  c.image.cnn_channels = {4, 8, 64};
  c.image.resnet_blocks = {1, 1, 1, 1};
  c.image.resnet_width = 2;  // 2 * 32 = 64 features
  c.projection_hidden = 62;
  c.structured.in_dim = 3;
  c.fusion.mode = mode;
  return c;
}

/// Every parameter entry of a tiny network against central differences, for
/// the averaged stage-1 contrastive objective and the stage-2 cross-entropy.
inline SuiteResult verify_network_gradients(Backbone backbone = Backbone::SmallCnn,
                                            FusionMode mode = FusionMode::Hierarchical, double tol = 1e-4) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult res{std::string("network_gradients_") + to_string(backbone) + "_" + to_string(mode), {}, 0};
  const ModelConfig mc = tiny_model_config(backbone, mode);
  nn::FusionNetwork<double> net(mc);
  net.init(11);
  // Randomize every entry (zero-initialized ones included) so no branch is trivially zero.
  Rng prng(12);
  for (auto* p : net.params())
    for (auto& v : p->value) v = prng.uniform(-0.5, 0.5) * std::sqrt(6.0 / std::max(1, p->fan_in));

  const int m = 3, V = 2, R = m * V;
  Rng rng(13);
  nn::BatchInputs<double> in{nn::Tensor<double>(R, 4, 8, 8), nn::Tensor<double>(R, 4, 8, 8), nn::Tensor<double>(R, 3)};
  for (auto* t : {&in.adc, &in.dwi, &in.structured})
    for (auto& v : t->data) v = rng.normal();
  std::vector<int> labels(R), view_of(R);
  for (int r = 0; r < R; ++r) {
    view_of[r] = r % m;
    labels[r] = (r % m) == 1;
  }
  TrainConfig cfg;
  cfg.contrastive.strategy = CombineStrategy::AverageAll;
  cfg.contrastive.temperature = 0.5;

  auto contrastive = [&] {
    return fusionprog::detail::contrastive_batch<double>(net, in, labels, view_of, cfg, 0, 0, false).total;
  };
  auto ce_loss = [&] { return cross_entropy<double>(net.classify(net.embed(in)).matrix(), labels).value; };

  for (int objective = 0; objective < 2; ++objective) {
    net.zero_grad();
    if (objective == 0) {
      fusionprog::detail::contrastive_batch<double>(net, in, labels, view_of, cfg, 0, 0, true);
    } else {
      const auto logits = net.classify(net.embed(in));
      const auto ce = cross_entropy<double>(logits.matrix(), labels);
      net.backward_logits(nn::Tensor<double>::from_matrix(ce.dlogits));
    }
    std::function<double()> loss = objective == 0 ? std::function<double()>(contrastive) : std::function<double()>(ce_loss);
    for (const auto& module : net.module_names()) {
      if (objective == 0 && module == "classifier") continue;  // not part of the stage-1 objective
      GradStats st;
      for (auto* p : net.module_params(module)) {
        const std::vector<double> analytic(p->grad.begin(), p->grad.end());
        check_entries(p->value, analytic, loss, p->name, st);
      }
      if (st.checked == 0) continue;
      res.add(std::string(objective == 0 ? "contrastive" : "cross-entropy") + " d/d " + module, st.max_rel < tol,
              "max rel err " + detail::sci(st.max_rel) + " over " + std::to_string(st.checked) + " entries" +
                  (st.kinks ? ", " + std::to_string(st.kinks) + " kink points" : "") +
                  (st.max_rel >= tol ? " (worst " + st.worst + ")" : ""));
    }
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Patch-mask and structured-dropout rates against binomial expectations.
inline SuiteResult verify_augment_statistics(int draws = 10000, std::uint64_t seed = 8) {
  SuiteResult res{"augment_statistics", {}, 0};
  AugmentPolicy p;
  p.flip_prob = 0;
  p.noise_prob = 0;
  p.blur_std_range = {0.0, 0.0};
  p.patch_size = 32;
  p.patch_mask_prob = 0.5;
  ImageVolume vol(Modality::DWI, 1, 224, 224);
  std::fill(vol.voxels.begin(), vol.voxels.end(), 1.0f);
  std::vector<long long> masked(49, 0);
  Rng rng(seed);
  for (int t = 0; t < draws; ++t) {
    const auto out = augment_image(vol, p, rng);
    for (int py = 0; py < 7; ++py)
      for (int px = 0; px < 7; ++px) masked[py * 7 + px] += out.at(0, py * 32 + 5, px * 32 + 7) == 0.0f;
  }
  double worst = 0;
  for (auto c : masked) worst = std::max(worst, std::abs(static_cast<double>(c) / draws - 0.5));
  res.add("patch mask rate per patch (49 patches)", worst <= 0.02,
          "max |rate - 0.5| = " + std::to_string(worst) + " over " + std::to_string(draws) + " draws");

  const std::vector<double> ones(62, 1.0);
  double sum = 0;
  for (int t = 0; t < draws; ++t) {
    const auto out = augment_structured(ones, p, rng);
    for (double v : out) sum += v;
  }
  const double mean = sum / draws;
  // Sum = 2 * Binomial(62, 0.5): sd 2 * sqrt(62 / 4) per draw.
  const double sd_mean = 2.0 * std::sqrt(62.0 * 0.25) / std::sqrt(static_cast<double>(draws));
  res.add("structured dropout survivor mean", std::abs(mean - 62.0) <= 3 * sd_mean,
          "mean sum " + std::to_string(mean) + " vs 62 (3 sigma = " + std::to_string(3 * sd_mean) + ")");
  return res;
}

inline std::vector<std::string> suite_names() { return {"losses", "metrics", "gradients", "augment"}; }

/// losses: oracle equivalence, closed forms and gradient checks of the losses
/// and of a tiny network; gradients: every backbone and fusion mode; metrics;
/// augment: sampling statistics.
inline std::vector<SuiteResult> run_suite(const std::string& name) {
  std::vector<SuiteResult> out;
  auto timed = [&](auto fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = fn();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  };
  const bool all = name == "all";
  if (all || name == "losses") {
    timed([] { return verify_loss_oracles(); });
    timed([] { return verify_closed_form(); });
  }
  if (all || name == "losses" || name == "gradients") {
    timed([] { return verify_loss_gradients(); });
    timed([] { return verify_network_gradients(Backbone::SmallCnn, FusionMode::Hierarchical); });
  }
  if (all || name == "gradients") {
    timed([] { return verify_network_gradients(Backbone::SmallCnn, FusionMode::Average); });
    timed([] { return verify_network_gradients(Backbone::Resnet50Style, FusionMode::Hierarchical); });
  }
  if (all || name == "metrics") timed([] { return verify_metric_oracles(); });
  if (all || name == "augment") timed([] { return verify_augment_statistics(); });
  if (out.empty()) throw ConfigError("unknown verify suite '" + name + "' (expected losses, metrics, gradients, augment or all)");
  return out;
}

}  // namespace fusionprog::verify
