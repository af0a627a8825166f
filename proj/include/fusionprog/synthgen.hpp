#pragma once

// Synthetic multimodal cohorts with per-modality control of class separability.
//
// Image model: every brain carries one ellipsoidal blob (darker in ADC, brighter
// in DWI) whose contrast against healthy tissue equals the modality's signal
// strength. Positives get a large lesion, negatives a small benign spot, except
// that a fraction `overlap_fraction` of each class gets the other class's
// extent. The extent class is drawn independently per modality, so ADC and DWI
// carry complementary evidence. Tabular model: informative columns are shifted
// by `tabular_signal_strength` (in latent standard deviations) for positives.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fusionprog/core/error.hpp"
#include "fusionprog/core/parallel.hpp"
#include "fusionprog/core/rng.hpp"
#include "fusionprog/datamodel.hpp"
#include "fusionprog/preprocess.hpp"

namespace fusionprog {

struct SynthConfig {
  int n_patients = 200;
  int n_slices = 18;
  int height = 64;
  int width = 64;
  int n_attrs = 62;
  int n_informative_attrs = 8;
  double adc_signal_strength = 0.5;
  double dwi_signal_strength = 0.5;
  double tabular_signal_strength = 0.45;
  double missing_rate_max = 0.154;
  double class_prior = 0.5;
  double overlap_fraction = 0.3;
  double noise_std = 0.08;
  double bias_field_strength = 0.15;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_patients < 1) throw ConfigError("synth: n_patients must be >= 1");
    if (n_slices < 1) throw ConfigError("synth: n_slices must be >= 1");
    if (height < 8 || width < 8) throw ConfigError("synth: height and width must be >= 8");
    if (n_attrs < 1) throw ConfigError("synth: n_attrs must be >= 1");
    if (n_informative_attrs < 0 || n_informative_attrs > n_attrs)
      throw ConfigError("synth: n_informative_attrs must be in [0, n_attrs]");
    if (adc_signal_strength < 0 || dwi_signal_strength < 0 || tabular_signal_strength < 0)
      throw ConfigError("synth: signal strengths must be >= 0");
    if (adc_signal_strength >= 0.95) throw ConfigError("synth: adc_signal_strength must be < 0.95 (ADC lesions darken)");
    if (!(missing_rate_max >= 0 && missing_rate_max <= 1)) throw ConfigError("synth: missing_rate_max must be in [0,1]");
    if (!(class_prior > 0 && class_prior < 1)) throw ConfigError("synth: class_prior must be in (0,1)");
    if (!(overlap_fraction >= 0 && overlap_fraction <= 1)) throw ConfigError("synth: overlap_fraction must be in [0,1]");
    if (noise_std < 0 || bias_field_strength < 0) throw ConfigError("synth: noise and bias strengths must be >= 0");
  }
};

enum class AttrKind { Continuous, Binary, Ordinal };

struct AttrSpec {
  std::string name;
  AttrKind kind;
  double center;  // continuous/ordinal: value at latent 0; binary: prevalence
  double scale;   // continuous/ordinal: units per latent sd
  double lo, hi;  // clamp range
  int decimals;   // rounding for continuous columns
};

namespace detail {

inline const std::vector<AttrSpec>& attribute_catalog() {
  using K = AttrKind;
  static const std::vector<AttrSpec> catalog = {
      {"age", K::Continuous, 70, 12, 18, 100, 0},
      {"sex_female", K::Binary, 0.40, 0, 0, 1, 0},
      {"thrombolysis", K::Binary, 0.10, 0, 0, 1, 0},
      {"diabetes", K::Binary, 0.42, 0, 0, 1, 0},
      {"smoking", K::Binary, 0.40, 0, 0, 1, 0},
      {"onset_to_admission_delay", K::Binary, 0.73, 0, 0, 1, 0},
      {"hyperlipidemia", K::Binary, 0.57, 0, 0, 1, 0},
      {"hypertension", K::Binary, 0.79, 0, 0, 1, 0},
      {"cardiac_history", K::Binary, 0.25, 0, 0, 1, 0},
      {"nihss_total", K::Ordinal, 6, 4, 0, 42, 0},
      {"nihss_1a_consciousness", K::Ordinal, 1, 1, 0, 3, 0},
      {"nihss_1b_questions", K::Ordinal, 1, 1, 0, 2, 0},
      {"nihss_1c_commands", K::Ordinal, 1, 1, 0, 2, 0},
      {"nihss_2_gaze", K::Ordinal, 1, 1, 0, 2, 0},
      {"nihss_3_visual", K::Ordinal, 1, 1, 0, 3, 0},
      {"nihss_4_facial_palsy", K::Ordinal, 1, 1, 0, 3, 0},
      {"nihss_5a_motor_left_arm", K::Ordinal, 1, 1, 0, 4, 0},
      {"nihss_5b_motor_right_arm", K::Ordinal, 1, 1, 0, 4, 0},
      {"nihss_6a_motor_left_leg", K::Ordinal, 1, 1, 0, 4, 0},
      {"nihss_6b_motor_right_leg", K::Ordinal, 1, 1, 0, 4, 0},
      {"nihss_7_ataxia", K::Ordinal, 1, 1, 0, 2, 0},
      {"nihss_8_sensory", K::Ordinal, 1, 1, 0, 2, 0},
      {"nihss_9_language", K::Ordinal, 1, 1, 0, 3, 0},
      {"nihss_10_dysarthria", K::Ordinal, 1, 1, 0, 2, 0},
      {"nihss_11_extinction", K::Ordinal, 1, 1, 0, 2, 0},
      {"systolic_bp", K::Continuous, 155, 25, 70, 260, 0},
      {"diastolic_bp", K::Continuous, 88, 15, 40, 160, 0},
      {"heart_rate", K::Continuous, 80, 14, 35, 180, 0},
      {"glucose", K::Continuous, 140, 45, 40, 600, 0},
      {"hba1c", K::Continuous, 6.6, 1.4, 4, 15, 1},
      {"total_cholesterol", K::Continuous, 180, 40, 80, 400, 0},
      {"ldl", K::Continuous, 110, 35, 30, 300, 0},
      {"hdl", K::Continuous, 45, 12, 15, 120, 0},
      {"triglycerides", K::Continuous, 140, 60, 30, 800, 0},
      {"creatinine", K::Continuous, 1.1, 0.4, 0.3, 10, 1},
      {"egfr", K::Continuous, 70, 22, 5, 150, 0},
      {"bun", K::Continuous, 17, 7, 3, 120, 0},
      {"hemoglobin", K::Continuous, 13.5, 1.8, 6, 20, 1},
      {"hematocrit", K::Continuous, 40, 5, 18, 60, 0},
      {"wbc", K::Continuous, 8, 2.5, 2, 30, 1},
      {"platelets", K::Continuous, 220, 60, 30, 600, 0},
      {"inr", K::Continuous, 1.05, 0.15, 0.8, 4, 2},
      {"aptt", K::Continuous, 30, 4, 18, 80, 0},
      {"sodium", K::Continuous, 138, 3.5, 120, 155, 0},
      {"potassium", K::Continuous, 3.9, 0.45, 2.5, 6.5, 1},
      {"alt", K::Continuous, 25, 12, 5, 300, 0},
      {"ast", K::Continuous, 27, 12, 5, 300, 0},
      {"uric_acid", K::Continuous, 5.8, 1.6, 1, 14, 1},
      {"crp", K::Continuous, 0.8, 0.6, 0, 20, 1},
      {"bmi", K::Continuous, 24.5, 3.8, 14, 45, 1},
      {"atrial_fibrillation", K::Binary, 0.18, 0, 0, 1, 0},
      {"prior_stroke", K::Binary, 0.22, 0, 0, 1, 0},
      {"prior_tia", K::Binary, 0.06, 0, 0, 1, 0},
      {"chronic_kidney_disease", K::Binary, 0.12, 0, 0, 1, 0},
      {"peripheral_artery_disease", K::Binary, 0.04, 0, 0, 1, 0},
      {"heart_failure", K::Binary, 0.07, 0, 0, 1, 0},
      {"alcohol_use", K::Binary, 0.20, 0, 0, 1, 0},
      {"statin_use", K::Binary, 0.30, 0, 0, 1, 0},
      {"antiplatelet_use", K::Binary, 0.35, 0, 0, 1, 0},
      {"anticoagulant_use", K::Binary, 0.08, 0, 0, 1, 0},
      {"antihypertensive_use", K::Binary, 0.55, 0, 0, 1, 0},
      {"modified_rankin_prestroke", K::Ordinal, 0.5, 0.8, 0, 5, 0},
  };
  return catalog;
}

// Which columns carry class signal, in order of preference (NIHSS first, so
// dropping NIHSS removes most of the structured signal).
inline const std::vector<std::string>& informative_priority() {
  static const std::vector<std::string> order = {
      "nihss_total",          "age",          "nihss_1a_consciousness", "nihss_4_facial_palsy",
      "nihss_5a_motor_left_arm", "nihss_6a_motor_left_leg", "nihss_9_language", "nihss_10_dysarthria",
      "nihss_5b_motor_right_arm", "nihss_6b_motor_right_leg", "glucose", "atrial_fibrillation",
      "cardiac_history",      "nihss_2_gaze", "nihss_3_visual",         "hypertension",
  };
  return order;
}

// Inverse standard normal CDF (Acklam's rational approximation, |err| < 1.2e-9).
inline double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - plow) return -normal_quantile(1 - p);
  const double q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

inline double round_to(double v, int decimals) {
  const double f = std::pow(10.0, decimals);
  return std::round(v * f) / f;
}

enum StreamTag : std::uint64_t { kLabel = 11, kLesion = 12, kImage = 13, kTabular = 14, kMissRate = 15, kMissing = 16 };

}  // namespace detail

/// Column specs for an n-attribute schema: the catalog, truncated or extended
/// with generic continuous variables.
inline std::vector<AttrSpec> synth_attribute_specs(int n_attrs) {
  const auto& cat = detail::attribute_catalog();
  std::vector<AttrSpec> out;
  for (int j = 0; j < n_attrs; ++j) {
    if (j < static_cast<int>(cat.size())) {
      out.push_back(cat[j]);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "clinical_var_%03d", j);
      out.push_back({buf, AttrKind::Continuous, 50, 10, 0, 100, 1});
    }
  }
  return out;
}

/// Indices of the informative columns for a config.
inline std::vector<int> synth_informative_columns(const SynthConfig& cfg) {
  const auto specs = synth_attribute_specs(cfg.n_attrs);
  std::vector<int> cols;
  for (const auto& name : detail::informative_priority()) {
    if (static_cast<int>(cols.size()) >= cfg.n_informative_attrs) break;
    for (int j = 0; j < cfg.n_attrs; ++j)
      if (specs[j].name == name) cols.push_back(j);
  }
  for (int j = 0; static_cast<int>(cols.size()) < cfg.n_informative_attrs && j < cfg.n_attrs; ++j)
    if (std::find(cols.begin(), cols.end(), j) == cols.end()) cols.push_back(j);
  std::sort(cols.begin(), cols.end());
  return cols;
}

/// Labels for the whole cohort; if sampling produced a single class the last
/// label is flipped so both classes are present.
inline std::vector<int> synth_labels(const SynthConfig& cfg) {
  std::vector<int> labels(cfg.n_patients);
  for (int i = 0; i < cfg.n_patients; ++i) {
    Rng rng = Rng::keyed(cfg.seed, {detail::kLabel, static_cast<std::uint64_t>(i)});
    labels[i] = rng.bernoulli(cfg.class_prior) ? 1 : 0;
  }
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (cfg.n_patients > 1 && (pos == 0 || pos == cfg.n_patients)) labels.back() = 1 - labels.back();
  return labels;
}

inline std::string synth_patient_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%05d", index);
  return buf;
}

/// Lesion geometry shared by both modalities of a patient; extent differs.
struct LesionSite {
  double cy, cx, cz;  // voxel coordinates
};

struct BlobDraw {
  bool large = false;
  double radius = 0;  // in-plane radius, pixels
  double aspect = 1;  // ry / rx
};

namespace detail {

inline BlobDraw draw_blob(Rng& rng, int label, double overlap, int height) {
  BlobDraw b;
  const bool flipped = rng.bernoulli(overlap);
  b.large = (label == 1) != flipped;
  b.radius = b.large ? rng.uniform(0.10, 0.20) * height : rng.uniform(0.05, 0.09) * height;
  b.aspect = rng.uniform(0.75, 1.3);
  return b;
}

inline ImageVolume render_volume(const SynthConfig& cfg, Modality m, int index, int label, const LesionSite& site,
                                 BlobDraw* blob_out) {
  Rng rng = Rng::keyed(cfg.seed, {kImage, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(m)});
  const int S = cfg.n_slices, H = cfg.height, W = cfg.width;
  ImageVolume vol(m, S, H, W, synth_patient_id(index));

  const double brain_ry = 0.44 * H * rng.uniform(0.95, 1.05);
  const double brain_rx = 0.38 * W * rng.uniform(0.95, 1.05);
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double phase1 = rng.uniform(0, 2 * std::numbers::pi), phase2 = rng.uniform(0, 2 * std::numbers::pi);
  const double freq = rng.uniform(2.5, 4.0);
  double bias[5];
  for (double& c : bias) c = rng.normal(0.0, cfg.bias_field_strength / 2.0);

  const BlobDraw blob = draw_blob(rng, label, cfg.overlap_fraction, H);
  if (blob_out) *blob_out = blob;
  const double strength = m == Modality::ADC ? cfg.adc_signal_strength : cfg.dwi_signal_strength;
  const double sign = m == Modality::ADC ? -1.0 : 1.0;
  const double rx = blob.radius, ry = blob.radius * blob.aspect;
  const double rz = std::clamp(blob.radius / H * S * 1.5, 1.0, std::max(1.0, S / 2.0));

  for (int s = 0; s < S; ++s) {
    const double zt = S > 1 ? (s - (S - 1) / 2.0) / (S * 0.75) : 0.0;
    const double taper = std::sqrt(std::max(0.2, 1.0 - zt * zt));
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double dy = (y - cy) / (brain_ry * taper), dx = (x - cx) / (brain_rx * taper);
        if (dx * dx + dy * dy > 1.0) continue;
        // Healthy tissue: mild gray/white texture plus noise.
        double v = 1.0 + 0.06 * std::sin(freq * dx * std::numbers::pi + phase1) *
                             std::cos(freq * dy * std::numbers::pi + phase2);
        const double ly = (y - site.cy) / ry, lx = (x - site.cx) / rx, lz = (s - site.cz) / rz;
        if (lx * lx + ly * ly + lz * lz <= 1.0) v += sign * strength;
        v += rng.normal(0.0, cfg.noise_std);
        const double nxp = dx * taper, nyp = dy * taper;
        v *= std::exp(bias[0] * nxp + bias[1] * nyp + bias[2] * nxp * nxp + bias[3] * nxp * nyp + bias[4] * nyp * nyp);
        vol.at(s, y, x) = static_cast<float>(std::max(0.02, v));
      }
  }
  return vol;
}

}  // namespace detail

/// Ground-truth draws behind a generated patient, for oracles and tests.
struct SynthTruth {
  BlobDraw adc_blob;
  BlobDraw dwi_blob;
  LesionSite site{};
};

/// Generates patient `index` of the cohort. Depends only on (cfg, index).
inline Sample generate_patient(const SynthConfig& cfg, int index, int label, SynthTruth* truth = nullptr) {
  Rng site_rng = Rng::keyed(cfg.seed, {detail::kLesion, static_cast<std::uint64_t>(index)});
  LesionSite site;
  site.cy = (cfg.height - 1) / 2.0 + site_rng.uniform(-0.18, 0.18) * cfg.height;
  site.cx = (cfg.width - 1) / 2.0 + site_rng.uniform(-0.15, 0.15) * cfg.width;
  site.cz = (cfg.n_slices - 1) / 2.0 + site_rng.uniform(-0.2, 0.2) * cfg.n_slices;

  Sample s;
  SynthTruth t;
  t.site = site;
  s.adc = detail::render_volume(cfg, Modality::ADC, index, label, site, &t.adc_blob);
  s.dwi = detail::render_volume(cfg, Modality::DWI, index, label, site, &t.dwi_blob);
  s.label = label;
  if (truth) *truth = t;

  const auto specs = synth_attribute_specs(cfg.n_attrs);
  std::vector<std::string> names;
  for (const auto& sp : specs) names.push_back(sp.name);
  const auto schema = AttributeSchema::from_names(names);

  const auto informative = synth_informative_columns(cfg);
  Rng tab = Rng::keyed(cfg.seed, {detail::kTabular, static_cast<std::uint64_t>(index)});
  Rng miss = Rng::keyed(cfg.seed, {detail::kMissing, static_cast<std::uint64_t>(index)});
  s.structured.schema = schema;
  s.structured.values.resize(cfg.n_attrs);
  s.structured.missing_mask.assign(cfg.n_attrs, false);
  for (int j = 0; j < cfg.n_attrs; ++j) {
    const auto& sp = specs[j];
    const bool info = std::binary_search(informative.begin(), informative.end(), j);
    const double z = tab.normal() + (info && label == 1 ? cfg.tabular_signal_strength : 0.0);
    double v = 0;
    switch (sp.kind) {
      case AttrKind::Binary:
        v = z > detail::normal_quantile(1.0 - sp.center) ? 1.0 : 0.0;
        break;
      case AttrKind::Ordinal:
        v = std::clamp(std::round(sp.center + sp.scale * z), sp.lo, sp.hi);
        break;
      case AttrKind::Continuous:
        v = detail::round_to(std::clamp(sp.center + sp.scale * z, sp.lo, sp.hi), sp.decimals);
        break;
    }
    s.structured.values[j] = v;
    Rng rate_rng = Rng::keyed(cfg.seed, {detail::kMissRate, static_cast<std::uint64_t>(j)});
    const double rate = rate_rng.uniform(0.0, cfg.missing_rate_max);
    if (miss.bernoulli(rate)) s.structured.missing_mask[j] = true;
  }
  return s;
}

/// In-memory cohort (no disk I/O).
inline std::vector<Sample> generate_samples(const SynthConfig& cfg, std::vector<SynthTruth>* truths = nullptr) {
  cfg.validate();
  const auto labels = synth_labels(cfg);
  std::vector<Sample> out(cfg.n_patients);
  std::vector<SynthTruth> t(cfg.n_patients);
  parallel_for(static_cast<std::size_t>(cfg.n_patients),
               [&](std::size_t i) { out[i] = generate_patient(cfg, static_cast<int>(i), labels[i], &t[i]); });
  if (truths) *truths = std::move(t);
  return out;
}

/// Writes `<out>/manifest.csv` plus `<out>/volumes/<pid>/{adc,dwi}/` and returns
/// the manifest.
inline Manifest generate_cohort(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const auto labels = synth_labels(cfg);
  std::filesystem::create_directories(out_dir);
  Manifest m;
  m.base_dir = out_dir;
  m.entries.resize(cfg.n_patients);
  parallel_for(static_cast<std::size_t>(cfg.n_patients), [&](std::size_t i) {
    const Sample s = generate_patient(cfg, static_cast<int>(i), labels[i]);
    const std::string pid = s.adc.patient_id;
    const std::filesystem::path adc_rel = std::filesystem::path("volumes") / pid / "adc";
    const std::filesystem::path dwi_rel = std::filesystem::path("volumes") / pid / "dwi";
    write_volume(out_dir / adc_rel, s.adc);
    write_volume(out_dir / dwi_rel, s.dwi);
    m.entries[i] = ManifestEntry{pid, adc_rel, dwi_rel, s.label, s.structured};
  });
  m.schema = m.entries.front().structured.schema;
  for (auto& e : m.entries) e.structured.schema = m.schema;
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

// ---------------------------------------------------------------------------
// Oracle statistics (know the generator, not the learned model).

/// Lesion-load statistic: after bias flattening, counts brain voxels that
/// deviate from the slice's median in the lesion direction by more than half
/// the configured contrast. Larger for larger blobs when the blob is visible.
inline double oracle_image_score(const ImageVolume& vol, double strength) {
  const ImageVolume flat = correct_bias(vol, 16);
  const double sign = vol.modality == Modality::ADC ? -1.0 : 1.0;
  double count = 0;
  std::vector<float> brain;
  for (int s = 0; s < flat.n_slices; ++s) {
    brain.clear();
    for (float v : flat.slice(s))
      if (v > 0.03f) brain.push_back(v);
    if (brain.empty()) continue;
    auto mid = brain.begin() + static_cast<std::ptrdiff_t>(brain.size() / 2);
    std::nth_element(brain.begin(), mid, brain.end());
    const double median = *mid;
    for (float v : flat.slice(s))
      if (v > 0.03f && sign * (v - median) > strength / 2.0) count += 1;
  }
  return count;
}

/// Sum of the informative columns (observed entries only), sign-aligned with
/// the positive class.
inline double oracle_tabular_score(const StructuredRecord& r, const std::vector<int>& informative,
                                   const std::vector<AttrSpec>& specs) {
  double s = 0;
  for (int j : informative) {
    if (r.missing_mask[j]) continue;
    const auto& sp = specs[j];
    s += sp.kind == AttrKind::Binary ? r.values[j] : (r.values[j] - sp.center) / sp.scale;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Cohort summary

struct AttributeSummary {
  std::string name;
  bool binary = false;
  // per class: {median, iqr} for continuous, {yes, no} for binary
  std::array<std::array<double, 2>, 2> stats{};
};

struct CohortSummary {
  std::array<std::size_t, 2> class_counts{};
  std::vector<AttributeSummary> attributes;

  std::string to_markdown() const;
};

namespace detail {
// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::nan("");
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::string display_name(const std::string& n, bool binary) {
  static const std::map<std::string, std::string> known = {
      {"age", "Median age (IQR)"},
      {"nihss_total", "Median initial NIHSS (IQR)"},
      {"sex_female", "Sex (females/males)"},
      {"thrombolysis", "Thrombolysis treatment (yes/no)"},
      {"diabetes", "Diabetes (yes/no)"},
      {"smoking", "Smoking (yes/no)"},
      {"onset_to_admission_delay", "Onset-to-admission delay (yes/no)"},
      {"hyperlipidemia", "Hyperlipidemia (yes/no)"},
      {"hypertension", "Hypertension (yes/no)"},
      {"cardiac_history", "Cardiac history (yes/no)"},
  };
  if (auto it = known.find(n); it != known.end()) return it->second;
  return binary ? n + " (yes/no)" : "Median " + n + " (IQR)";
}

inline std::string fmt1(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}
}  // namespace detail

/// Per-class counts, median/IQR for continuous attributes and yes/no counts
/// for binary ones (observed values only).
inline CohortSummary describe_cohort(const Manifest& manifest) {
  CohortSummary out;
  for (const auto& e : manifest.entries) ++out.class_counts[e.label];
  if (!manifest.schema) return out;
  const std::size_t n_attrs = manifest.schema->size();
  for (std::size_t j = 0; j < n_attrs; ++j) {
    AttributeSummary a;
    a.name = manifest.schema->names[j];
    std::array<std::vector<double>, 2> vals;
    for (const auto& e : manifest.entries)
      if (!e.structured.missing_mask[j]) vals[e.label].push_back(e.structured.values[j]);
    a.binary = true;
    for (const auto& cls : vals)
      for (double v : cls)
        if (v != 0.0 && v != 1.0) a.binary = false;
    for (int c = 0; c < 2; ++c) {
      auto& v = vals[c];
      if (a.binary) {
        const auto yes = static_cast<double>(std::count(v.begin(), v.end(), 1.0));
        a.stats[c] = {yes, static_cast<double>(v.size()) - yes};
      } else {
        std::sort(v.begin(), v.end());
        a.stats[c] = {detail::quantile_sorted(v, 0.5),
                      detail::quantile_sorted(v, 0.75) - detail::quantile_sorted(v, 0.25)};
      }
    }
    out.attributes.push_back(std::move(a));
  }
  return out;
}

inline std::string CohortSummary::to_markdown() const {
  std::ostringstream os;
  os << "| Clinical attributes | mRS=[0,2] (N=" << class_counts[0] << ") | mRS=[3,6] (N=" << class_counts[1]
     << ") |\n|---|---|---|\n";
  // Table-1 rows first, in their conventional order, then everything else.
  static const std::vector<std::string> lead = {"age",      "nihss_total",  "sex_female",
                                                "thrombolysis", "diabetes",  "smoking",
                                                "onset_to_admission_delay", "hyperlipidemia", "hypertension",
                                                "cardiac_history"};
  std::vector<const AttributeSummary*> order;
  for (const auto& n : lead)
    for (const auto& a : attributes)
      if (a.name == n) order.push_back(&a);
  for (const auto& a : attributes)
    if (std::find(lead.begin(), lead.end(), a.name) == lead.end()) order.push_back(&a);
  for (const auto* a : order) {
    os << "| " << detail::display_name(a->name, a->binary) << " | ";
    for (int c = 0; c < 2; ++c) {
      if (a->binary)
        os << static_cast<long long>(a->stats[c][0]) << " / " << static_cast<long long>(a->stats[c][1]);
      else
        os << detail::fmt1(a->stats[c][0]) << " (" << detail::fmt1(a->stats[c][1]) << ")";
      os << (c == 0 ? " | " : " |\n");
    }
  }
  return os.str();
}

}  // namespace fusionprog
