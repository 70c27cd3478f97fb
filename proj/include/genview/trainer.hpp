#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genview/adaptive.hpp"
#include "genview/encoder.hpp"
#include "genview/errors.hpp"
#include "genview/losses.hpp"
#include "genview/quality.hpp"
#include "genview/rng.hpp"
#include "genview/synthetic.hpp"
#include "genview/tensor.hpp"

namespace genview {

enum class LossFamily { InfoNce, NegCosine, SwavKl };
enum class WeightingMode { Uniform, Quality };

struct LossOptions {
  LossFamily family = LossFamily::InfoNce;
  double tau = 0.2;                     // InfoNCE temperature
  double sinkhorn_epsilon = 0.05;
  int sinkhorn_iterations = 3;
  double prototype_temperature = 0.1;   // softmax temperature over prototype scores
};

struct ViewPair {
  const FeatureMap* view_a = nullptr;
  const FeatureMap* view_b = nullptr;
};

// Quantities held constant through the backward pass: the quality weights
// (data-dependent coefficients, not trainable signals) and the
// stop-gradient targets of the cosine and assignment losses. The
// finite-difference harness evaluates the loss with this same context so
// analytic and numeric gradients agree by construction.
struct BatchContext {
  std::vector<double> weights;
  std::vector<PairQuality> qualities;
  std::vector<std::vector<double>> cosine_targets_for_a;  // frozen z of view b
  std::vector<std::vector<double>> cosine_targets_for_b;  // frozen z of view a
  Matrix assignment_targets;  // frozen per-row target distributions (KL)
};

namespace detail {

inline std::vector<double> softmax_scaled(std::span<const double> scores,
                                          double temperature) {
  double hi = scores[0];
  for (double s : scores) hi = std::max(hi, s);
  std::vector<double> out(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - hi) / temperature);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

}  // namespace detail

inline void validate_loss_setup(const ToyEncoder& enc, const LossOptions& opts) {
  if (opts.family == LossFamily::NegCosine && !enc.config.use_predictor) {
    throw InvalidConfig("negative-cosine training needs the predictor head");
  }
  if (opts.family == LossFamily::SwavKl && enc.config.prototypes < 2) {
    throw InvalidConfig("assignment training needs at least 2 prototypes");
  }
}

inline BatchContext prepare_batch_context(const ToyEncoder& enc,
                                          std::span<const ViewPair> batch,
                                          const LossOptions& opts,
                                          WeightingMode weighting,
                                          const PcaProjector* quality_projector = nullptr) {
  validate_loss_setup(enc, opts);
  const std::size_t n = batch.size();
  if (n == 0) throw EmptyInput("empty batch");

  BatchContext ctx;
  std::vector<std::pair<const FeatureMap*, const FeatureMap*>> pairs;
  pairs.reserve(n);
  for (const auto& pr : batch) pairs.emplace_back(pr.view_a, pr.view_b);
  ctx.qualities = batch_pair_qualities(pairs, quality_projector);

  if (weighting == WeightingMode::Quality) {
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = ctx.qualities[i].quality;
    ctx.weights = batch_weights(q);
  } else {
    ctx.weights.assign(n, 1.0 / static_cast<double>(n));
  }

  if (opts.family == LossFamily::NegCosine) {
    ctx.cosine_targets_for_a.resize(n);
    ctx.cosine_targets_for_b.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ctx.cosine_targets_for_a[i] = forward(enc, batch[i].view_b->data).projection;
      ctx.cosine_targets_for_b[i] = forward(enc, batch[i].view_a->data).projection;
    }
  } else if (opts.family == LossFamily::SwavKl) {
    Matrix scores(static_cast<int>(n), enc.prototypes.rows);
    for (std::size_t i = 0; i < n; ++i) {
      const auto act = forward(enc, batch[i].view_b->data);
      const auto zh = detail::normalized(act.projection);
      for (int p = 0; p < enc.prototypes.rows; ++p) {
        scores(static_cast<int>(i), p) = detail::dot(enc.prototypes.row(p), zh);
      }
    }
    const Matrix sk = sinkhorn_knopp(scores, opts.sinkhorn_epsilon, opts.sinkhorn_iterations);
    // Rows of the assignment sum to 1/n; scale to distributions.
    ctx.assignment_targets = Matrix(sk.rows, sk.cols);
    for (int i = 0; i < sk.rows; ++i) {
      for (int j = 0; j < sk.cols; ++j) {
        ctx.assignment_targets(i, j) = sk(i, j) * static_cast<double>(n);
      }
    }
  }
  return ctx;
}

struct BatchEvaluation {
  double objective = 0.0;      // sum_i w_i L_i (what the optimizer descends)
  double reported_loss = 0.0;  // n * objective, the recalibrated batch total
  std::vector<double> per_pair_losses;
  EncoderGradients grads;
};

namespace detail {

struct PairForward {
  ForwardActivations a;
  ForwardActivations b;
};

inline std::vector<PairForward> forward_batch(const ToyEncoder& enc,
                                              std::span<const ViewPair> batch) {
  std::vector<PairForward> fwd;
  fwd.reserve(batch.size());
  for (const auto& pr : batch) {
    fwd.push_back({forward(enc, pr.view_a->data), forward(enc, pr.view_b->data)});
  }
  return fwd;
}

}  // namespace detail

// Loss value under the frozen context (weights and targets from ctx, all
// differentiable branches recomputed from the encoder's current weights).
inline double batch_loss_frozen(const ToyEncoder& enc, std::span<const ViewPair> batch,
                                const LossOptions& opts, const BatchContext& ctx) {
  const std::size_t n = batch.size();
  const auto fwd = detail::forward_batch(enc, batch);
  double objective = 0.0;

  switch (opts.family) {
    case LossFamily::InfoNce: {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::vector<double>> negatives;
        negatives.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) negatives.push_back(fwd[j].a.projection);
        }
        objective += ctx.weights[i] *
                     info_nce(fwd[i].a.projection, fwd[i].b.projection, negatives, opts.tau);
      }
      break;
    }
    case LossFamily::NegCosine: {
      for (std::size_t i = 0; i < n; ++i) {
        const double li = 0.5 * (neg_cosine(fwd[i].a.prediction, ctx.cosine_targets_for_a[i]) +
                                 neg_cosine(fwd[i].b.prediction, ctx.cosine_targets_for_b[i]));
        objective += ctx.weights[i] * li;
      }
      break;
    }
    case LossFamily::SwavKl: {
      for (std::size_t i = 0; i < n; ++i) {
        const auto zh = detail::normalized(fwd[i].a.projection);
        std::vector<double> scores(enc.prototypes.rows);
        for (int p = 0; p < enc.prototypes.rows; ++p) {
          scores[p] = detail::dot(enc.prototypes.row(p), zh);
        }
        const auto predicted = detail::softmax_scaled(scores, opts.prototype_temperature);
        objective += ctx.weights[i] *
                     kl_divergence_row(ctx.assignment_targets.row(static_cast<int>(i)), predicted);
      }
      break;
    }
  }
  return objective;
}

// Analytic gradients of sum_i w_i L_i with the context's weights and targets
// treated as constants.
inline BatchEvaluation evaluate_batch(const ToyEncoder& enc,
                                      std::span<const ViewPair> batch,
                                      const LossOptions& opts, const BatchContext& ctx) {
  const std::size_t n = batch.size();
  const auto fwd = detail::forward_batch(enc, batch);

  BatchEvaluation eval;
  eval.per_pair_losses.assign(n, 0.0);
  eval.grads = EncoderGradients::zeros_like(enc);

  const int zdim = enc.config.projection_dim;
  std::vector<std::vector<double>> d_z_a(n, std::vector<double>(zdim, 0.0));
  std::vector<std::vector<double>> d_z_b(n, std::vector<double>(zdim, 0.0));
  std::vector<std::vector<double>> d_p_a(n);
  std::vector<std::vector<double>> d_p_b(n);

  switch (opts.family) {
    case LossFamily::InfoNce: {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::vector<double>> negatives;
        std::vector<std::size_t> negative_index;
        negatives.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          negatives.push_back(fwd[j].a.projection);
          negative_index.push_back(j);
        }
        const auto g = info_nce_grad(fwd[i].a.projection, fwd[i].b.projection,
                                     negatives, opts.tau);
        eval.per_pair_losses[i] = g.loss;
        const double wi = ctx.weights[i];
        for (int d = 0; d < zdim; ++d) {
          d_z_a[i][d] += wi * g.d_anchor[d];
          d_z_b[i][d] += wi * g.d_positive[d];
        }
        for (std::size_t k = 0; k < negative_index.size(); ++k) {
          auto& acc = d_z_a[negative_index[k]];
          for (int d = 0; d < zdim; ++d) acc[d] += wi * g.d_negatives[k][d];
        }
      }
      break;
    }
    case LossFamily::NegCosine: {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& ta = ctx.cosine_targets_for_a[i];
        const auto& tb = ctx.cosine_targets_for_b[i];
        eval.per_pair_losses[i] = 0.5 * (neg_cosine(fwd[i].a.prediction, ta) +
                                         neg_cosine(fwd[i].b.prediction, tb));
        const double wi = ctx.weights[i];
        auto ga = neg_cosine_grad(fwd[i].a.prediction, ta);
        auto gb = neg_cosine_grad(fwd[i].b.prediction, tb);
        for (double& v : ga) v *= 0.5 * wi;
        for (double& v : gb) v *= 0.5 * wi;
        d_p_a[i] = std::move(ga);
        d_p_b[i] = std::move(gb);
      }
      break;
    }
    case LossFamily::SwavKl: {
      const double temp = opts.prototype_temperature;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& z = fwd[i].a.projection;
        const auto zh = detail::normalized(z);
        std::vector<double> scores(enc.prototypes.rows);
        for (int p = 0; p < enc.prototypes.rows; ++p) {
          scores[p] = detail::dot(enc.prototypes.row(p), zh);
        }
        const auto predicted = detail::softmax_scaled(scores, temp);
        const auto target = ctx.assignment_targets.row(static_cast<int>(i));
        eval.per_pair_losses[i] = kl_divergence_row(target, predicted);

        const double wi = ctx.weights[i];
        std::vector<double> d_scores(enc.prototypes.rows);
        for (int p = 0; p < enc.prototypes.rows; ++p) {
          d_scores[p] = wi * (predicted[p] - target[p]) / temp;
        }
        std::vector<double> g_zh(zdim, 0.0);
        for (int p = 0; p < enc.prototypes.rows; ++p) {
          auto proto = enc.prototypes.row(p);
          auto grad_row = eval.grads.prototypes.row(p);
          for (int d = 0; d < zdim; ++d) {
            g_zh[d] += d_scores[p] * proto[d];
            grad_row[d] += d_scores[p] * zh[d];
          }
        }
        const auto dz = detail::unnormalize_gradient(z, zh, g_zh);
        for (int d = 0; d < zdim; ++d) d_z_a[i][d] += dz[d];
      }
      break;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    backward_into(enc, fwd[i].a, d_z_a[i], d_p_a[i], eval.grads);
    backward_into(enc, fwd[i].b, d_z_b[i], d_p_b[i], eval.grads);
  }

  eval.reported_loss = reweight_batch_loss(ctx.weights, eval.per_pair_losses);
  eval.objective = eval.reported_loss / static_cast<double>(n);
  return eval;
}

// ---------------------------------------------------------------------------
// Training runs
// ---------------------------------------------------------------------------

struct TrainerConfig {
  DatasetConfig data;
  AugmentationPolicy augment;
  int feature_dim = 32;
  int projection_dim = 16;
  double encoder_init_scale = 1.0;
  LossOptions loss;
  WeightingMode weighting = WeightingMode::Quality;
  bool quality_use_global_projector = false;
  NoisePolicy strategy;
  double target_fraction = 0.4;
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 0.4;
  double probe_holdout = 0.3;
  double probe_learning_rate = 1.0;
  int probe_max_epochs = 500;
  double probe_tolerance = 1e-6;
  std::uint64_t seed = 42;
};

// Everything the run measured. wall_clock_seconds is informational only and
// stays out of the serialized report so identical (config, seed) runs emit
// identical bytes.
struct ExperimentReport {
  std::uint64_t seed = 0;
  int epochs = 0;
  int batch_size = 0;
  std::vector<double> epoch_losses;  // mean weighted per-pair loss per epoch
  double probe_accuracy = 0.0;
  double mean_quality_clean = std::numeric_limits<double>::quiet_NaN();
  double mean_quality_corrupted = std::numeric_limits<double>::quiet_NaN();
  double mean_weight_clean = std::numeric_limits<double>::quiet_NaN();
  double mean_weight_corrupted = std::numeric_limits<double>::quiet_NaN();
  // Fraction of mixed batches where corrupted pairs averaged a lower weight.
  double corrupted_lower_weight_fraction = std::numeric_limits<double>::quiet_NaN();
  std::size_t mixed_batch_count = 0;
  std::size_t mixed_batch_corrupt_lower_count = 0;
  double realized_flip_rate = std::numeric_limits<double>::quiet_NaN();
  double genview_applied_fraction = 0.0;
  double mean_selected_level = std::numeric_limits<double>::quiet_NaN();
  double max_weight_spread = 0.0;
  double wall_clock_seconds = 0.0;
};

struct ProbeOptions {
  double learning_rate = 1.0;
  int max_epochs = 500;
  double tolerance = 1e-6;
};

// Multinomial logistic regression on frozen features, full-batch gradient
// descent from zero weights (convex, so no random init is needed), run to
// the loss-change tolerance or the epoch cap. Returns held-out accuracy.
inline double linear_probe(const Matrix& features, const std::vector<int>& labels,
                           const std::vector<int>& train_idx,
                           const std::vector<int>& test_idx,
                           const ProbeOptions& opts = {}) {
  if (features.rows != static_cast<int>(labels.size())) {
    throw LengthMismatch("features and labels disagree in length");
  }
  if (train_idx.empty() || test_idx.empty()) {
    throw EmptyInput("probe needs non-empty train and test splits");
  }
  int classes = 0;
  for (int idx : train_idx) classes = std::max(classes, labels[idx] + 1);
  for (int idx : test_idx) classes = std::max(classes, labels[idx] + 1);
  {
    std::vector<char> seen(classes, 0);
    int distinct = 0;
    for (int idx : train_idx) {
      if (!seen[labels[idx]]) {
        seen[labels[idx]] = 1;
        ++distinct;
      }
    }
    if (distinct < 2) throw SingleClass("probe train split has fewer than 2 classes");
  }

  const int d = features.cols;
  Matrix w(classes, d);
  std::vector<double> bias(classes, 0.0);
  const double inv_n = 1.0 / static_cast<double>(train_idx.size());

  double lr = opts.learning_rate;
  double prev_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    Matrix gw(classes, d);
    std::vector<double> gb(classes, 0.0);
    double loss = 0.0;
    for (int idx : train_idx) {
      auto f = features.row(idx);
      std::vector<double> logits(classes);
      for (int c = 0; c < classes; ++c) logits[c] = detail::dot(w.row(c), f) + bias[c];
      const auto probs = detail::softmax_scaled(logits, 1.0);
      loss -= inv_n * std::log(std::max(probs[labels[idx]], 1e-300));
      for (int c = 0; c < classes; ++c) {
        const double g = inv_n * (probs[c] - (c == labels[idx] ? 1.0 : 0.0));
        gb[c] += g;
        auto row = gw.row(c);
        for (int j = 0; j < d; ++j) row[j] += g * f[j];
      }
    }
    if (!std::isfinite(loss)) throw DivergedLoss("probe loss became non-finite");
    if (loss > prev_loss) lr *= 0.5;
    if (std::abs(prev_loss - loss) < opts.tolerance) break;
    prev_loss = loss;
    for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] -= lr * gw.data[i];
    for (int c = 0; c < classes; ++c) bias[c] -= lr * gb[c];
  }

  int correct = 0;
  for (int idx : test_idx) {
    auto f = features.row(idx);
    int best = 0;
    double best_score = detail::dot(w.row(0), f) + bias[0];
    for (int c = 1; c < classes; ++c) {
      const double s = detail::dot(w.row(c), f) + bias[c];
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    if (best == labels[idx]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

namespace detail {

inline double safe_mean(double sum, std::size_t count) {
  return count == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : sum / static_cast<double>(count);
}

}  // namespace detail

inline ExperimentReport train_run(const TrainerConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.augment.validate();
  if (cfg.epochs < 0 || cfg.batch_size < 1) {
    throw InvalidConfig("epochs must be >= 0 and batch_size >= 1");
  }

  Rng master(cfg.seed);
  Rng rng_data = master.derive("dataset");
  Rng rng_train = master.derive("train");
  Rng rng_probe = master.derive("probe");

  Dataset ds = generate_dataset(cfg.data, rng_data);
  const std::size_t n_samples = ds.samples.size();

  // Offline phase: global attention calibration, then the measured
  // foreground proportion that drives adaptive selection.
  std::vector<FeatureMap> images;
  images.reserve(n_samples);
  for (const auto& s : ds.samples) images.push_back(s.image);
  const AttentionCalibration calib = calibrate_attention(images, cfg.target_fraction);
  std::vector<double> measured_p(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto attention =
        min_max_normalize(project_first_component(calib.projector, ds.samples[i].image));
    measured_p[i] = foreground_proportion(attention, calib.threshold);
  }

  EncoderConfig enc_cfg;
  enc_cfg.input_dim = cfg.data.height * cfg.data.width * cfg.data.channels;
  enc_cfg.feature_dim = cfg.feature_dim;
  enc_cfg.projection_dim = cfg.projection_dim;
  enc_cfg.use_predictor = cfg.loss.family == LossFamily::NegCosine;
  enc_cfg.prototypes = cfg.loss.family == LossFamily::SwavKl ? 8 : 0;
  enc_cfg.init_scale = cfg.encoder_init_scale;
  ToyEncoder enc = ToyEncoder::init(enc_cfg, rng_train);
  validate_loss_setup(enc, cfg.loss);

  ExperimentReport report;
  report.seed = cfg.seed;
  report.epochs = cfg.epochs;
  report.batch_size = cfg.batch_size;

  double sum_q_clean = 0.0, sum_q_corrupt = 0.0;
  double sum_w_clean = 0.0, sum_w_corrupt = 0.0;
  std::size_t n_clean = 0, n_corrupt = 0;
  std::size_t mixed_batches = 0, mixed_batches_corrupt_lower = 0;
  std::size_t genview_applications = 0, flips = 0, total_pairs = 0;
  double level_sum = 0.0;

  std::vector<int> order(n_samples);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates driven by the training stream.
    for (std::size_t i = n_samples; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_train.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss_sum = 0.0;
    std::size_t epoch_pairs = 0;

    for (std::size_t start = 0; start < n_samples; start += cfg.batch_size) {
      const std::size_t stop = std::min(n_samples, start + cfg.batch_size);
      const std::size_t bn = stop - start;
      if (bn < 2) break;  // a single pair has no negatives and no batch softmax

      std::vector<SyntheticSample> views_a, views_b;
      std::vector<char> corrupted(bn, 0);
      views_a.reserve(bn);
      views_b.reserve(bn);
      for (std::size_t bi = 0; bi < bn; ++bi) {
        const int idx = order[start + bi];
        const SyntheticSample& sample = ds.samples[idx];
        views_a.push_back(standard_augment(sample, cfg.augment, rng_train));
        if (apply_genview_probability(cfg.augment.apply_probability, rng_train)) {
          const int level = select_noise_level(cfg.strategy, measured_p[idx], rng_train);
          SyntheticSample generated = simulate_generative_view(
              ds.world, sample, level, cfg.augment.drift_kappa, rng_train);
          ++genview_applications;
          level_sum += level;
          if (generated.content_class != sample.class_id) {
            ++flips;
            corrupted[bi] = 1;
          }
          views_b.push_back(standard_augment(generated, cfg.augment, rng_train));
        } else {
          views_b.push_back(standard_augment(sample, cfg.augment, rng_train));
        }
      }
      total_pairs += bn;

      std::vector<ViewPair> batch(bn);
      for (std::size_t bi = 0; bi < bn; ++bi) {
        batch[bi] = {&views_a[bi].image, &views_b[bi].image};
      }
      const PcaProjector* projector =
          cfg.quality_use_global_projector ? &calib.projector : nullptr;
      const BatchContext ctx =
          prepare_batch_context(enc, batch, cfg.loss, cfg.weighting, projector);
      const BatchEvaluation eval = evaluate_batch(enc, batch, cfg.loss, ctx);
      if (!std::isfinite(eval.objective)) {
        throw DivergedLoss("training loss became non-finite at epoch " +
                           std::to_string(epoch));
      }

      auto params = parameter_view(enc);
      const auto flat = gradient_flat(eval.grads);
      for (std::size_t i = 0; i < params.size(); ++i) {
        *params[i] -= cfg.learning_rate * flat[i];
      }

      epoch_loss_sum += eval.reported_loss;
      epoch_pairs += bn;

      double w_lo = ctx.weights[0], w_hi = ctx.weights[0];
      double wc = 0.0, wg = 0.0, qc = 0.0, qg = 0.0;
      std::size_t nc = 0, ng = 0;
      for (std::size_t bi = 0; bi < bn; ++bi) {
        w_lo = std::min(w_lo, ctx.weights[bi]);
        w_hi = std::max(w_hi, ctx.weights[bi]);
        if (corrupted[bi]) {
          wg += ctx.weights[bi];
          qg += ctx.qualities[bi].quality;
          ++ng;
        } else {
          wc += ctx.weights[bi];
          qc += ctx.qualities[bi].quality;
          ++nc;
        }
      }
      report.max_weight_spread = std::max(report.max_weight_spread, w_hi - w_lo);
      sum_w_clean += wc;
      sum_w_corrupt += wg;
      sum_q_clean += qc;
      sum_q_corrupt += qg;
      n_clean += nc;
      n_corrupt += ng;
      if (nc > 0 && ng > 0) {
        ++mixed_batches;
        if (wg / ng < wc / nc) ++mixed_batches_corrupt_lower;
      }
    }

    report.epoch_losses.push_back(epoch_pairs == 0 ? 0.0
                                                   : epoch_loss_sum / epoch_pairs);
  }

  report.mean_quality_clean = detail::safe_mean(sum_q_clean, n_clean);
  report.mean_quality_corrupted = detail::safe_mean(sum_q_corrupt, n_corrupt);
  report.mean_weight_clean = detail::safe_mean(sum_w_clean, n_clean);
  report.mean_weight_corrupted = detail::safe_mean(sum_w_corrupt, n_corrupt);
  report.corrupted_lower_weight_fraction =
      detail::safe_mean(static_cast<double>(mixed_batches_corrupt_lower), mixed_batches);
  report.mixed_batch_count = mixed_batches;
  report.mixed_batch_corrupt_lower_count = mixed_batches_corrupt_lower;
  report.realized_flip_rate =
      detail::safe_mean(static_cast<double>(flips), genview_applications);
  report.genview_applied_fraction =
      total_pairs == 0 ? 0.0
                       : static_cast<double>(genview_applications) /
                             static_cast<double>(total_pairs);
  report.mean_selected_level = detail::safe_mean(level_sum, genview_applications);

  // Linear probe on frozen backbone features of the un-augmented samples.
  Matrix probe_features(static_cast<int>(n_samples), cfg.feature_dim);
  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto act = forward(enc, ds.samples[i].image.data);
    for (int d = 0; d < cfg.feature_dim; ++d) {
      probe_features(static_cast<int>(i), d) = act.features[d];
    }
    labels[i] = ds.samples[i].class_id;
  }
  std::vector<std::vector<int>> by_class(cfg.data.classes);
  for (std::size_t i = 0; i < n_samples; ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  std::vector<int> train_idx, test_idx;
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_probe.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(members[i - 1], members[j]);
    }
    const auto holdout = static_cast<std::size_t>(
        std::lround(cfg.probe_holdout * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < holdout ? test_idx : train_idx).push_back(members[i]);
    }
  }
  ProbeOptions probe_opts;
  probe_opts.learning_rate = cfg.probe_learning_rate;
  probe_opts.max_epochs = cfg.probe_max_epochs;
  probe_opts.tolerance = cfg.probe_tolerance;
  report.probe_accuracy = linear_probe(probe_features, labels, train_idx, test_idx, probe_opts);

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Max relative error between the analytic batch gradient and central finite
// differences of the frozen-context loss over every parameter.
inline double gradient_check(ToyEncoder& enc, std::span<const ViewPair> batch,
                             const LossOptions& opts, WeightingMode weighting,
                             double eps = 1e-5) {
  const BatchContext ctx = prepare_batch_context(enc, batch, opts, weighting);
  const BatchEvaluation eval = evaluate_batch(enc, batch, opts, ctx);
  const auto analytic = gradient_flat(eval.grads);
  auto params = parameter_view(enc);

  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + eps;
    const double hi = batch_loss_frozen(enc, batch, opts, ctx);
    *params[i] = saved - eps;
    const double lo = batch_loss_frozen(enc, batch, opts, ctx);
    *params[i] = saved;
    const double fd = (hi - lo) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic[i] - fd) / denom);
  }
  return max_rel;
}

}  // namespace genview
