#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genview/errors.hpp"
#include "genview/rng.hpp"
#include "genview/tensor.hpp"

namespace genview {

// The five noise scales used for view generation; higher steps are capped
// away to avoid excessive semantic distortion.
inline constexpr std::array<int, 5> kNoiseLevels{0, 100, 200, 300, 400};
inline constexpr int kMaxNoiseLevel = 400;

// Forward-process schedule: betas[i] is the variance added at step i+1,
// alpha_bars[l] the cumulative product of (1 - beta) up to step l, with
// alpha_bars[0] = 1 so level 0 is the identity.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;  // size num_steps + 1

  int num_steps() const { return static_cast<int>(betas.size()); }
};

inline NoiseSchedule build_noise_schedule(int num_steps = 1000,
                                          double beta_start = 1e-4,
                                          double beta_end = 0.02) {
  if (num_steps < 1) throw InvalidRange("schedule needs num_steps >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw InvalidRange("schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.betas.resize(num_steps);
  s.alphas.resize(num_steps);
  s.alpha_bars.resize(num_steps + 1);
  s.alpha_bars[0] = 1.0;
  for (int i = 0; i < num_steps; ++i) {
    s.betas[i] = num_steps == 1
                     ? beta_start
                     : beta_start + i * (beta_end - beta_start) / (num_steps - 1);
    s.alphas[i] = 1.0 - s.betas[i];
    s.alpha_bars[i + 1] = s.alpha_bars[i] * s.alphas[i];
  }
  return s;
}

// Fraction of entries strictly above the threshold. Ties sit below on
// purpose: an all-equal map claims no foreground.
inline double foreground_proportion(const AttentionMap& attention, double threshold) {
  if (!std::isfinite(threshold)) throw InvalidValue("non-finite threshold");
  std::size_t above = 0;
  for (double v : attention.data) {
    if (v > threshold) ++above;
  }
  return static_cast<double>(above) / static_cast<double>(attention.data.size());
}

struct ThresholdCalibration {
  double threshold = 0.0;
  double realized_fraction = 0.0;  // fraction strictly above threshold
  // Advisory: the strictly-above mass fell below half the target, which
  // means the attention orientation (or the input) is suspect.
  bool orientation_flip = false;
};

// Picks the threshold whose strictly-above fraction over the pooled values
// is closest to target_fraction (smallest such value on ties).
inline ThresholdCalibration calibrate_threshold(
    std::span<const AttentionMap> attention_maps, double target_fraction = 0.4) {
  if (attention_maps.empty()) throw EmptyInput("no attention maps to calibrate on");
  if (!(target_fraction > 0.0) || !(target_fraction < 1.0)) {
    throw OutOfRange("target_fraction must lie in (0, 1)");
  }

  std::vector<double> pooled;
  for (const auto& m : attention_maps) {
    pooled.insert(pooled.end(), m.data.begin(), m.data.end());
  }
  std::sort(pooled.begin(), pooled.end());
  const double n = static_cast<double>(pooled.size());

  ThresholdCalibration best;
  double best_gap = 2.0;
  for (std::size_t i = 0; i < pooled.size();) {
    const double candidate = pooled[i];
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == candidate) ++j;
    const double above = static_cast<double>(pooled.size() - j) / n;
    const double gap = std::abs(above - target_fraction);
    if (gap < best_gap) {
      best_gap = gap;
      best.threshold = candidate;
      best.realized_fraction = above;
    }
    i = j;
  }
  best.orientation_flip = best.realized_fraction < target_fraction * 0.5;
  return best;
}

// l = min(100 * floor(p / 0.2), 400). The small nudge keeps exact fifths
// (0.2, 0.4, ...) on the upper side when they arrive as nearest doubles.
inline int adaptive_noise_level(double p) {
  if (!(p >= 0.0) || !(p <= 1.0)) {
    throw OutOfRange("foreground proportion must lie in [0, 1]");
  }
  const int bucket = static_cast<int>(std::floor(p / 0.2 + 1e-9));
  return std::min(100 * bucket, kMaxNoiseLevel);
}

enum class SelectionStrategy { Constant, Random, Adaptive };

struct NoisePolicy {
  SelectionStrategy strategy = SelectionStrategy::Adaptive;
  int constant_level = 200;  // only for Constant
};

inline int select_noise_level(const NoisePolicy& policy, double p, Rng& rng) {
  switch (policy.strategy) {
    case SelectionStrategy::Constant: {
      const bool known =
          std::find(kNoiseLevels.begin(), kNoiseLevels.end(),
                    policy.constant_level) != kNoiseLevels.end();
      if (!known) {
        throw InvalidConstant("constant noise level must be one of {0,100,200,300,400}");
      }
      return policy.constant_level;
    }
    case SelectionStrategy::Random:
      return kNoiseLevels[static_cast<std::size_t>(rng.uniform_int(0, 4))];
    case SelectionStrategy::Adaptive:
      return adaptive_noise_level(p);
  }
  throw InvalidConstant("unknown selection strategy");
}

// sqrt(abar_l) * c + sqrt(1 - abar_l) * eps. Level 0 returns c exactly and
// consumes no draws.
inline EmbeddingVector noisy_embedding(const EmbeddingVector& c, int level,
                                       const NoiseSchedule& schedule, Rng& rng) {
  if (level < 0 || level > schedule.num_steps()) {
    throw LevelOutOfRange("noise level " + std::to_string(level) +
                          " outside [0, " + std::to_string(schedule.num_steps()) + "]");
  }
  if (level == 0) return c;
  const double abar = schedule.alpha_bars[level];
  const double signal = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  EmbeddingVector out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    out[i] = signal * c[i] + noise * rng.normal();
  }
  return out;
}

// Per-image result of the offline analysis phase. noise_level here is always
// the adaptive mapping of the measured proportion; the strategy-selected
// level lives on the request.
struct ForegroundAnalysis {
  double proportion = 0.0;
  double threshold = 0.0;
  int noise_level = 0;
  AttentionMap attention;
};

// Record handed to the external image generator. The sampler consumes the
// noised conditional embedding plus these controls; nothing here executes
// the generation.
struct GeneratorRequest {
  std::string sample_id;
  EmbeddingVector noised_embedding;
  int noise_level = 0;
  int denoising_steps = 20;
  double guidance_scale = 10.0;
  std::uint64_t latent_seed = 0;
  std::string generator_params_tag = "external-default";
};

struct RequestOptions {
  int denoising_steps = 20;
  double guidance_scale = 10.0;
  std::string generator_params_tag = "external-default";
};

inline ForegroundAnalysis analyze_foreground(const FeatureMap& features,
                                             const PcaProjector& projector,
                                             double threshold) {
  ForegroundAnalysis analysis;
  analysis.attention = min_max_normalize(project_first_component(projector, features));
  analysis.threshold = threshold;
  analysis.proportion = foreground_proportion(analysis.attention, threshold);
  analysis.noise_level = adaptive_noise_level(analysis.proportion);
  return analysis;
}

// Full offline pipeline for one image: attention -> proportion -> level ->
// noised embedding -> request.
inline std::pair<ForegroundAnalysis, GeneratorRequest> analyze_and_request(
    const std::string& sample_id, const EmbeddingVector& conditional_embedding,
    const FeatureMap& features, const PcaProjector& projector, double threshold,
    const NoisePolicy& policy, const NoiseSchedule& schedule, Rng& rng,
    const RequestOptions& options = {}) {
  if (options.denoising_steps < 1) {
    throw InvalidRange("denoising steps must be >= 1");
  }
  ForegroundAnalysis analysis = analyze_foreground(features, projector, threshold);

  GeneratorRequest request;
  request.sample_id = sample_id;
  request.noise_level = select_noise_level(policy, analysis.proportion, rng);
  request.noised_embedding =
      noisy_embedding(conditional_embedding, request.noise_level, schedule, rng);
  request.denoising_steps = options.denoising_steps;
  request.guidance_scale = options.guidance_scale;
  request.latent_seed = rng.next_u64();
  request.generator_params_tag = options.generator_params_tag;
  return {std::move(analysis), std::move(request)};
}

struct AttentionCalibration {
  PcaProjector projector;
  double threshold = 0.0;
  double realized_fraction = 0.0;
  bool flipped = false;  // component was re-oriented by the mass rule
};

// Offline calibration over a feature-map sample: global PCA on pooled
// tokens, then the pooled-quantile threshold. If the mass rule advises a
// flip, the component is negated and the threshold recomputed once.
inline AttentionCalibration calibrate_attention(
    std::span<const FeatureMap> features, double target_fraction = 0.4) {
  if (features.empty()) throw EmptyInput("no feature maps to calibrate on");
  PcaAccumulator acc(features.front().channels);
  for (const auto& map : features) acc.add_tokens(map);
  AttentionCalibration cal;
  cal.projector = acc.fit();

  auto attentions = [&](const PcaProjector& projector) {
    std::vector<AttentionMap> maps;
    maps.reserve(features.size());
    for (const auto& f : features) {
      maps.push_back(min_max_normalize(project_first_component(projector, f)));
    }
    return maps;
  };

  auto maps = attentions(cal.projector);
  ThresholdCalibration tc = calibrate_threshold(maps, target_fraction);
  if (tc.orientation_flip) {
    for (double& x : cal.projector.first_component) x = -x;
    maps = attentions(cal.projector);
    tc = calibrate_threshold(maps, target_fraction);
    cal.flipped = true;
  }
  cal.threshold = tc.threshold;
  cal.realized_fraction = tc.realized_fraction;
  return cal;
}

}  // namespace genview
