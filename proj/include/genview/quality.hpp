#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "genview/errors.hpp"
#include "genview/tensor.hpp"

namespace genview {

// Per-pair quality: foreground-foreground and background-background cosine,
// and their difference. A pair whose aggregated region vanished is flagged
// and pinned at the minimum quality instead of aborting the batch.
struct PairQuality {
  double foreground_sim = 0.0;
  double background_sim = 0.0;
  double quality = 0.0;  // foreground_sim - background_sim
  bool zero_region = false;
};

// Foreground map = min-max normalized first-component projection; background
// map = its elementwise complement.
inline std::pair<AttentionMap, AttentionMap> foreground_background_maps(
    const FeatureMap& map, const PcaProjector& projector) {
  AttentionMap fg = min_max_normalize(project_first_component(projector, map));
  AttentionMap bg(fg.height, fg.width);
  for (std::size_t i = 0; i < fg.data.size(); ++i) bg.data[i] = 1.0 - fg.data[i];
  return {std::move(fg), std::move(bg)};
}

inline PairQuality pair_quality(const FeatureMap& map_a, const FeatureMap& map_b,
                                const PcaProjector& projector) {
  if (map_a.height != map_b.height || map_a.width != map_b.width ||
      map_a.channels != map_b.channels) {
    throw DimensionMismatch("pair_quality views disagree in shape");
  }
  const auto [fg_a, bg_a] = foreground_background_maps(map_a, projector);
  const auto [fg_b, bg_b] = foreground_background_maps(map_b, projector);

  const EmbeddingVector zf_a = spatial_aggregate(fg_a, map_a);
  const EmbeddingVector zb_a = spatial_aggregate(bg_a, map_a);
  const EmbeddingVector zf_b = spatial_aggregate(fg_b, map_b);
  const EmbeddingVector zb_b = spatial_aggregate(bg_b, map_b);

  PairQuality q;
  try {
    q.foreground_sim = cosine_similarity(zf_a, zf_b);
    q.background_sim = cosine_similarity(zb_a, zb_b);
    q.quality = q.foreground_sim - q.background_sim;
  } catch (const ZeroVector&) {
    // A vanished region signals an unusable pair; give it the floor.
    q.foreground_sim = -1.0;
    q.background_sim = 1.0;
    q.quality = -2.0;
    q.zero_region = true;
  }
  return q;
}

// Softmax over the batch qualities, max-subtracted. Order preserved.
inline std::vector<double> batch_weights(std::span<const double> qualities) {
  if (qualities.empty()) throw EmptyInput("batch_weights on empty batch");
  double hi = qualities[0];
  for (double q : qualities) {
    if (!std::isfinite(q)) throw NonFinite("non-finite quality score");
    hi = std::max(hi, q);
  }
  std::vector<double> w(qualities.size());
  double z = 0.0;
  for (std::size_t i = 0; i < qualities.size(); ++i) {
    w[i] = std::exp(qualities[i] - hi);
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

// n * sum_i w_i L_i. The n factor keeps uniform weights on the same
// optimization scale as the unweighted batch total.
inline double reweight_batch_loss(std::span<const double> weights,
                                  std::span<const double> per_pair_losses) {
  if (weights.size() != per_pair_losses.size()) {
    throw LengthMismatch("weights and losses differ in length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    s += weights[i] * per_pair_losses[i];
  }
  return static_cast<double>(weights.size()) * s;
}

// Qualities for a batch of view pairs under one projector. With no projector
// given, PCA is refit on all tokens of all views in the batch (both views
// pooled); if that covariance is degenerate every attention map is the
// neutral 0.5 and all qualities collapse to zero.
inline std::vector<PairQuality> batch_pair_qualities(
    std::span<const std::pair<const FeatureMap*, const FeatureMap*>> pairs,
    const PcaProjector* global_projector = nullptr) {
  if (pairs.empty()) throw EmptyInput("batch_pair_qualities on empty batch");

  std::optional<PcaProjector> local;
  const PcaProjector* projector = global_projector;
  if (projector == nullptr) {
    PcaAccumulator acc(pairs.front().first->channels);
    for (const auto& [a, b] : pairs) {
      acc.add_tokens(*a);
      acc.add_tokens(*b);
    }
    try {
      local = acc.fit();
      projector = &*local;
    } catch (const DegenerateCovariance&) {
      // Neutral attention (all 0.5) makes z_f == z_b, hence q == 0.
      std::vector<PairQuality> qs(pairs.size());
      return qs;
    }
  }

  std::vector<PairQuality> qs;
  qs.reserve(pairs.size());
  for (const auto& [a, b] : pairs) qs.push_back(pair_quality(*a, *b, *projector));
  return qs;
}

}  // namespace genview
