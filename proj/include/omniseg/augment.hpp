#pragma once

#include <algorithm>
#include <stdexcept>

#include "omniseg/image.hpp"
#include "omniseg/mask.hpp"
#include "omniseg/rng.hpp"
#include "omniseg/util.hpp"

namespace omniseg {

// ---------------------------------------------------------------------------
// Teacher/student augmentation. The geometric menu is flips only, so masks,
// points and boxes move between views exactly — no resampling ambiguity.
// Photometric changes never touch label geometry.
// ---------------------------------------------------------------------------

struct GeoTransform {
  bool flip_h = false;  // mirror left-right; applying twice is the identity
  bool operator==(const GeoTransform&) const = default;
};

struct PhotoTransform {
  double noise_sigma = 0.0;
  double channel_gains[3] = {1.0, 1.0, 1.0};
};

struct AugmentConfig {
  double flip_prob = 0.5;
  double noise_sigma = 0.05;  // strong view only
  double gain_lo = 0.8;       // strong view per-channel gain range
  double gain_hi = 1.2;

  void validate() const {
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0,1]");
    if (!(noise_sigma >= 0.0 && noise_sigma <= 0.1)) {
      throw ConfigError("noise_sigma must lie in [0, 0.1]");
    }
    if (!(0.8 <= gain_lo && gain_lo <= gain_hi && gain_hi <= 1.2)) {
      throw ConfigError("channel gains must satisfy 0.8 <= lo <= hi <= 1.2");
    }
  }
};

inline FloatImage flip_image_h(const FloatImage& img) {
  FloatImage out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const std::size_t src = (std::size_t(r) * img.width + c) * 3;
      const std::size_t dst = (std::size_t(r) * img.width + (img.width - 1 - c)) * 3;
      out.rgb[dst] = img.rgb[src];
      out.rgb[dst + 1] = img.rgb[src + 1];
      out.rgb[dst + 2] = img.rgb[src + 2];
    }
  }
  return out;
}

inline BitMask flip_mask_h(const BitMask& m) {
  BitMask out(m.height, m.width);
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) out.set(r, m.width - 1 - c, m.test(r, c));
  }
  return out;
}

struct WeakView {
  FloatImage image;
  GeoTransform geo;
};

struct StrongView {
  FloatImage image;
  GeoTransform geo;
  PhotoTransform photo;
};

/// Teacher view: maybe flip, nothing else. Consumes exactly one rng draw.
inline WeakView weak_augment(const FloatImage& image, Rng& rng, const AugmentConfig& cfg = {}) {
  cfg.validate();
  WeakView v;
  v.geo.flip_h = rng.bernoulli(cfg.flip_prob);
  v.image = v.geo.flip_h ? flip_image_h(image) : image;
  return v;
}

/// Student view: flip, then per-channel gain, then additive Gaussian noise
/// (one draw per pixel, shared across channels), clamped back to [0,1].
/// Draw order is fixed: flip, gains r/g/b, noise in raster order.
inline StrongView strong_augment(const FloatImage& image, Rng& rng,
                                 const AugmentConfig& cfg = {}) {
  cfg.validate();
  StrongView v;
  v.geo.flip_h = rng.bernoulli(cfg.flip_prob);
  v.image = v.geo.flip_h ? flip_image_h(image) : image;
  v.photo.noise_sigma = cfg.noise_sigma;
  for (double& gain : v.photo.channel_gains) gain = rng.uniform(cfg.gain_lo, cfg.gain_hi);
  const std::size_t n_pixels = v.image.rgb.size() / 3;
  std::vector<double> noise(n_pixels);
  if (cfg.noise_sigma > 0.0) rng.fill_normal(noise);
  double* px = v.image.rgb.data();
  for (std::size_t i = 0; i < n_pixels; ++i, px += 3) {
    const double eps = cfg.noise_sigma * (cfg.noise_sigma > 0.0 ? noise[i] : 0.0);
    for (int ch = 0; ch < 3; ++ch) {
      px[ch] = std::clamp(px[ch] * v.photo.channel_gains[ch] + eps, 0.0, 1.0);
    }
  }
  return v;
}

/// Re-express a mask produced in view `from` in the frame of view `to`.
/// With flips as the only geometry this is a flip iff the views disagree.
inline BitMask transfer_mask(const BitMask& m, GeoTransform from, GeoTransform to) {
  return from.flip_h != to.flip_h ? flip_mask_h(m) : m;
}

inline PixelPoint transform_point(PixelPoint p, GeoTransform geo, int width) {
  if (geo.flip_h) p.col = width - 1 - p.col;
  return p;
}

inline PixelBox transform_box(PixelBox b, GeoTransform geo, int width) {
  if (geo.flip_h) {
    const int c0 = width - b.col1;
    const int c1 = width - b.col0;
    b.col0 = c0;
    b.col1 = c1;
  }
  return b;
}

}  // namespace omniseg
