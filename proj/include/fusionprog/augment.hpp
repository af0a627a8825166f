#pragma once

// Stage-1 stochastic views. A stage-2 policy is the identity for both modalities.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "fusionprog/core/error.hpp"
#include "fusionprog/core/rng.hpp"
#include "fusionprog/datamodel.hpp"

namespace fusionprog {

enum class Stage { Stage1 = 1, Stage2 = 2 };

struct AugmentPolicy {
  double flip_prob = 0.5;
  std::pair<double, double> blur_std_range{0.1, 2.0};
  double noise_prob = 0.2;
  double noise_std = 0.05;  // fraction of the volume's intensity range
  int patch_size = 32;
  double patch_mask_prob = 0.5;
  double structured_dropout = 0.5;
  Stage stage = Stage::Stage1;

  void validate() const {
    for (double p : {flip_prob, noise_prob, patch_mask_prob, structured_dropout})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augment: probabilities must be in [0,1]");
    if (!(blur_std_range.first >= 0.0 && blur_std_range.first <= blur_std_range.second))
      throw ConfigError("augment: blur range must be non-negative and ordered");
    if (!(noise_std >= 0.0)) throw ConfigError("augment: noise_std must be >= 0");
    if (patch_size < 1) throw ConfigError("augment: patch_size must be >= 1");
    if (structured_dropout >= 1.0) throw ConfigError("augment: structured_dropout must be < 1");
  }

  static AugmentPolicy identity() {
    AugmentPolicy p;
    p.stage = Stage::Stage2;
    return p;
  }
};

namespace detail {

inline std::vector<float> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += (k[i + r] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma))));
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

// Separable blur with clamped borders.
inline void blur_slice(std::span<float> img, int H, int W, const std::vector<float>& k) {
  const int r = static_cast<int>(k.size() / 2);
  std::vector<float> tmp(img.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img[y * W + std::clamp(x + i, 0, W - 1)];
      tmp[y * W + x] = acc;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[std::clamp(y + i, 0, H - 1) * W + x];
      img[y * W + x] = acc;
    }
}

}  // namespace detail

/// Patch grid for masking: ceil(H/p) x ceil(W/p) tiles, edge tiles may be partial.
inline std::vector<bool> draw_patch_mask(int H, int W, const AugmentPolicy& policy, Rng& rng) {
  const int ph = (H + policy.patch_size - 1) / policy.patch_size;
  const int pw = (W + policy.patch_size - 1) / policy.patch_size;
  std::vector<bool> mask(static_cast<std::size_t>(ph) * pw);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(policy.patch_mask_prob);
  return mask;
}

/// Flip, blur, noise, patch mask, in that order. The flip and the patch
/// pattern are shared by all slices.
inline ImageVolume augment_image(const ImageVolume& vol, const AugmentPolicy& policy, Rng& rng) {
  if (policy.stage == Stage::Stage2) return vol;
  policy.validate();
  ImageVolume out = vol;
  const int H = vol.height, W = vol.width;

  if (rng.bernoulli(policy.flip_prob))
    for (int s = 0; s < vol.n_slices; ++s)
      for (int y = 0; y < H; ++y) {
        auto row = out.slice(s).subspan(static_cast<std::size_t>(y) * W, W);
        std::reverse(row.begin(), row.end());
      }

  const double sigma = rng.uniform(policy.blur_std_range.first, policy.blur_std_range.second);
  if (sigma > 0) {
    const auto k = detail::gaussian_kernel(sigma);
    for (int s = 0; s < vol.n_slices; ++s) detail::blur_slice(out.slice(s), H, W, k);
  }

  if (rng.bernoulli(policy.noise_prob)) {
    const auto [lo, hi] = std::minmax_element(out.voxels.begin(), out.voxels.end());
    const double sd = policy.noise_std * static_cast<double>(*hi - *lo);
    for (float& v : out.voxels) v += static_cast<float>(rng.normal(0.0, sd));
  }

  const auto mask = draw_patch_mask(H, W, policy, rng);
  const int pw = (W + policy.patch_size - 1) / policy.patch_size;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (mask[static_cast<std::size_t>(y / policy.patch_size) * pw + x / policy.patch_size])
        for (int s = 0; s < vol.n_slices; ++s) out.at(s, y, x) = 0.0f;
  return out;
}

/// Inverted dropout over the attribute vector.
inline std::vector<double> augment_structured(const std::vector<double>& values, const AugmentPolicy& policy, Rng& rng) {
  if (policy.stage == Stage::Stage2) return values;
  policy.validate();
  const double keep_scale = 1.0 / (1.0 - policy.structured_dropout);
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j)
    out[j] = rng.bernoulli(policy.structured_dropout) ? 0.0 : values[j] * keep_scale;
  return out;
}

}  // namespace fusionprog
