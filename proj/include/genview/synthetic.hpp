#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "genview/errors.hpp"
#include "genview/rng.hpp"
#include "genview/tensor.hpp"

namespace genview {

// Structured token-grid dataset: every sample is an environment texture with
// a contiguous foreground blob whose tokens carry the class signal. Class
// signals share a common "objectness" direction (so first-component
// attention separates blob from background for every class) plus a
// class-specific orthogonal direction (so classes stay distinguishable).
struct DatasetConfig {
  int classes = 8;
  int samples_per_class = 24;
  int height = 8;
  int width = 8;
  int channels = 24;
  int environments = 24;
  double common_signal = 1.2;      // weight of the shared foreground direction
  double class_signal = 1.5;       // weight of the class-specific direction
  double feature_noise_sigma = 0.08;
  double background_sigma = 0.35;
  double blob_min_fraction = 0.25;  // per-axis blob extent bounds
  double blob_max_fraction = 0.65;
};

struct SyntheticSample {
  FeatureMap image;
  int class_id = 0;       // label
  int content_class = 0;  // actual foreground semantics; differs from class_id after a flip
  AttentionMap foreground_mask;  // ground truth, binary
  int environment_id = 0;

  double true_foreground_proportion() const {
    double s = 0.0;
    for (double v : foreground_mask.data) s += v;
    return s / static_cast<double>(foreground_mask.data.size());
  }
};

// Frozen ground truth shared by the dataset and the view simulator: class
// directions and per-environment background textures.
struct SyntheticWorld {
  DatasetConfig config;
  std::vector<EmbeddingVector> class_means;          // C x K
  std::vector<std::vector<double>> environment_textures;  // E x (H*W*K)

  SyntheticSample make_sample(int class_label, int content_class,
                              int environment_id, Rng& rng) const;
};

namespace detail {

// Gram-Schmidt a fresh gaussian direction against the given basis.
inline EmbeddingVector orthonormal_direction(
    const std::vector<EmbeddingVector>& basis, int dim, Rng& rng) {
  for (int attempt = 0; attempt < 32; ++attempt) {
    EmbeddingVector v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) {
      const double proj = dot(v, b);
      for (int i = 0; i < dim; ++i) v[i] -= proj * b[i];
    }
    const double n = norm(v);
    if (n > 1e-6) {
      for (double& x : v) x /= n;
      return v;
    }
  }
  throw InvalidConfig("could not build orthonormal class directions");
}

}  // namespace detail

inline SyntheticWorld build_world(const DatasetConfig& cfg, Rng& rng) {
  if (cfg.classes < 2) throw InvalidConfig("dataset needs at least 2 classes");
  if (cfg.samples_per_class < 8) {
    throw InvalidConfig("dataset needs at least 8 samples per class");
  }
  if (cfg.height < 2 || cfg.width < 2 || cfg.channels < 1) {
    throw InvalidConfig("dataset grid must be at least 2x2x1");
  }
  if (cfg.environments < 1) throw InvalidConfig("dataset needs >= 1 environment");
  if (cfg.channels < cfg.classes + 1) {
    throw InvalidConfig("channels must be >= classes + 1 for orthogonal signals");
  }
  if (!(cfg.blob_min_fraction > 0.0) || !(cfg.blob_min_fraction <= cfg.blob_max_fraction) ||
      !(cfg.blob_max_fraction <= 1.0)) {
    throw InvalidConfig("blob fractions must satisfy 0 < min <= max <= 1");
  }

  SyntheticWorld world;
  world.config = cfg;

  // All-positive shared direction with one dominant coordinate. Fitted first
  // components approximate +/- this vector; the largest-entry sign convention
  // then always orients them toward the foreground, whichever coordinate the
  // noise hands the argmax to.
  EmbeddingVector common(cfg.channels, 1.0);
  common[0] = 2.0;
  {
    const double n = detail::norm(common);
    for (double& x : common) x /= n;
  }
  std::vector<EmbeddingVector> basis;
  basis.push_back(common);

  world.class_means.resize(cfg.classes);
  for (int c = 0; c < cfg.classes; ++c) {
    EmbeddingVector dir = detail::orthonormal_direction(basis, cfg.channels, rng);
    basis.push_back(dir);
    EmbeddingVector mean(cfg.channels);
    for (int k = 0; k < cfg.channels; ++k) {
      mean[k] = cfg.common_signal * common[k] + cfg.class_signal * dir[k];
    }
    world.class_means[c] = std::move(mean);
  }

  const std::size_t field = static_cast<std::size_t>(cfg.height) * cfg.width * cfg.channels;
  world.environment_textures.resize(cfg.environments);
  for (int e = 0; e < cfg.environments; ++e) {
    auto& tex = world.environment_textures[e];
    tex.resize(field);
    for (double& x : tex) x = cfg.background_sigma * rng.normal();
  }
  return world;
}

inline SyntheticSample SyntheticWorld::make_sample(int class_label, int content_class,
                                                   int environment_id, Rng& rng) const {
  const auto& cfg = config;
  SyntheticSample s;
  s.class_id = class_label;
  s.content_class = content_class;
  s.environment_id = environment_id;
  s.image = FeatureMap(cfg.height, cfg.width, cfg.channels);
  s.foreground_mask = AttentionMap(cfg.height, cfg.width);

  const auto& tex = environment_textures[environment_id];
  for (std::size_t i = 0; i < s.image.data.size(); ++i) {
    s.image.data[i] = tex[i] + cfg.feature_noise_sigma * rng.normal();
  }

  // Contiguous foreground rectangle, extent drawn per axis.
  auto extent = [&](int full) {
    const double frac = cfg.blob_min_fraction +
                        (cfg.blob_max_fraction - cfg.blob_min_fraction) * rng.uniform();
    return std::clamp(static_cast<int>(std::lround(frac * full)), 1, full);
  };
  const int bh = extent(cfg.height);
  const int bw = extent(cfg.width);
  const int top = static_cast<int>(rng.uniform_int(0, cfg.height - bh));
  const int left = static_cast<int>(rng.uniform_int(0, cfg.width - bw));

  const auto& mean = class_means[content_class];
  for (int h = top; h < top + bh; ++h) {
    for (int w = left; w < left + bw; ++w) {
      auto tok = s.image.token(h, w);
      for (int k = 0; k < cfg.channels; ++k) {
        tok[k] = mean[k] + cfg.feature_noise_sigma * rng.normal();
      }
      s.foreground_mask.at(h, w) = 1.0;
    }
  }
  return s;
}

struct Dataset {
  SyntheticWorld world;
  std::vector<SyntheticSample> samples;
};

inline Dataset generate_dataset(const DatasetConfig& cfg, Rng& rng) {
  Dataset ds;
  ds.world = build_world(cfg, rng);
  ds.samples.reserve(static_cast<std::size_t>(cfg.classes) * cfg.samples_per_class);
  for (int c = 0; c < cfg.classes; ++c) {
    for (int i = 0; i < cfg.samples_per_class; ++i) {
      const int env = static_cast<int>(rng.uniform_int(0, cfg.environments - 1));
      ds.samples.push_back(ds.world.make_sample(c, c, env, rng));
    }
  }
  return ds;
}

// Stand-in for the external generator at toy scale: always resamples the
// background environment and blob placement (diversity); with probability
// min(1, kappa * (l/1000) * (1 - p_true)) the foreground semantics flip to a
// different class (a false positive). High noise on low-foreground samples
// flips most often.
inline SyntheticSample simulate_generative_view(const SyntheticWorld& world,
                                                const SyntheticSample& source,
                                                int noise_level, double drift_kappa,
                                                Rng& rng) {
  if (noise_level < 0 || noise_level > 1000) {
    throw LevelOutOfRange("noise level outside [0, 1000]");
  }
  if (drift_kappa < 0.0) throw InvalidConfig("drift_kappa must be >= 0");

  const double p_true = source.true_foreground_proportion();
  const double flip_prob =
      std::min(1.0, drift_kappa * (noise_level / 1000.0) * (1.0 - p_true));

  int content = source.content_class;
  if (flip_prob > 0.0 && rng.bernoulli(flip_prob)) {
    const int c = world.config.classes;
    int other = static_cast<int>(rng.uniform_int(0, c - 2));
    if (other >= content) ++other;
    content = other;
  }
  const int env = static_cast<int>(rng.uniform_int(0, world.config.environments - 1));
  return world.make_sample(source.class_id, content, env, rng);
}

// Token-grid analogue of the standard augmentation stack: random
// crop-and-resize (nearest neighbor) plus additive gaussian noise. drift and
// apply_probability govern the generative path, not this function.
struct AugmentationPolicy {
  double crop_min_fraction = 0.7;
  double crop_max_fraction = 1.0;
  double additive_noise_sigma = 0.02;
  double drift_kappa = 0.0;
  double apply_probability = 1.0;  // alpha

  void validate() const {
    if (!(crop_min_fraction > 0.0) || !(crop_min_fraction <= crop_max_fraction) ||
        !(crop_max_fraction <= 1.0)) {
      throw InvalidConfig("crop fractions must satisfy 0 < min <= max <= 1");
    }
    if (additive_noise_sigma < 0.0) throw InvalidConfig("noise sigma must be >= 0");
    if (drift_kappa < 0.0) throw InvalidConfig("drift_kappa must be >= 0");
    if (apply_probability < 0.0 || apply_probability > 1.0) {
      throw InvalidConfig("apply probability must lie in [0, 1]");
    }
  }
};

inline SyntheticSample standard_augment(const SyntheticSample& sample,
                                        const AugmentationPolicy& policy, Rng& rng) {
  const int h = sample.image.height;
  const int w = sample.image.width;
  const int k = sample.image.channels;

  auto window = [&](int full) {
    const double frac = policy.crop_min_fraction +
                        (policy.crop_max_fraction - policy.crop_min_fraction) * rng.uniform();
    return std::clamp(static_cast<int>(std::lround(frac * full)), 1, full);
  };
  const int ch = window(h);
  const int cw = window(w);
  const int top = static_cast<int>(rng.uniform_int(0, h - ch));
  const int left = static_cast<int>(rng.uniform_int(0, w - cw));

  SyntheticSample out;
  out.class_id = sample.class_id;
  out.content_class = sample.content_class;
  out.environment_id = sample.environment_id;
  out.image = FeatureMap(h, w, k);
  out.foreground_mask = AttentionMap(h, w);

  for (int y = 0; y < h; ++y) {
    const int sy = top + std::min(ch - 1, (y * ch) / h);
    for (int x = 0; x < w; ++x) {
      const int sx = left + std::min(cw - 1, (x * cw) / w);
      auto dst = out.image.token(y, x);
      auto src = sample.image.token(sy, sx);
      for (int c = 0; c < k; ++c) {
        dst[c] = src[c] + policy.additive_noise_sigma * rng.normal();
      }
      out.foreground_mask.at(y, x) = sample.foreground_mask.at(sy, sx);
    }
  }
  return out;
}

// True with probability alpha: use the generative positive view; otherwise
// the positive view is a standard augmentation of the original.
inline bool apply_genview_probability(double alpha, Rng& rng) {
  if (alpha < 0.0 || alpha > 1.0) throw OutOfRange("alpha must lie in [0, 1]");
  return rng.uniform() < alpha;
}

}  // namespace genview
