// Acceptance suite: one check per shipped property, one pass/fail line each.
// Every tolerance is pinned here; the binary exits non-zero if any check
// fails or overruns its time budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "genview/adaptive.hpp"
#include "genview/commands.hpp"
#include "genview/container.hpp"
#include "genview/losses.hpp"
#include "genview/quality.hpp"
#include "genview/tensor.hpp"
#include "genview/trainer.hpp"
#include "oracles.hpp"

namespace {

using namespace genview;

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& message) {
    if (!condition && ok) {
      ok = false;
      detail = message;
    }
  }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

TrainerConfig acceptance_trainer_defaults() {
  // The CLI defaults are the single source of truth for the toy runs.
  return trainer_config_from(RunConfig());
}

// ---------------------------------------------------------------------------

void check_level_mapping(Check& c) {
  for (int m = 0; m <= 1000; ++m) {
    const double p = static_cast<double>(m) / 1000.0;
    const int expected = std::min(100 * (m / 200), 400);  // integer arithmetic oracle
    const int got = adaptive_noise_level(p);
    c.require(got == expected, "p=" + std::to_string(p) + " gave " +
                                   std::to_string(got) + ", oracle says " +
                                   std::to_string(expected));
    if (!c.ok) return;
  }
}

void check_noising_moments(Check& c) {
  const NoiseSchedule schedule = build_noise_schedule();
  const int dim = 64;
  const int draws = 10000;
  for (const int level : {100, 400}) {
    Rng rng(1000 + level);
    EmbeddingVector unit(dim, 0.0);
    unit[0] = 1.0;
    const double abar = schedule.alpha_bars[level];
    const double expected = abar + dim * (1.0 - abar);

    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const EmbeddingVector out = noisy_embedding(unit, level, schedule, rng);
      double norm_sq = 0.0;
      for (double v : out) norm_sq += v * v;
      sum += norm_sq;
      sum_sq += norm_sq * norm_sq;
    }
    const double mean = sum / draws;
    const double variance = sum_sq / draws - mean * mean;
    const double standard_error = std::sqrt(variance / draws);
    c.require(std::abs(mean - expected) <= 3.0 * standard_error,
              "level " + std::to_string(level) + ": |" + std::to_string(mean) +
                  " - " + std::to_string(expected) + "| > 3 SE (" +
                  std::to_string(standard_error) + ")");
  }
}

void check_schedule(Check& c) {
  const NoiseSchedule s = build_noise_schedule();
  const auto oracle = oracles::naive_alpha_bars(s.betas);
  for (int l = 0; l <= s.num_steps(); ++l) {
    c.require(std::abs(s.alpha_bars[l] - oracle[l]) < 1e-12,
              "alpha_bar[" + std::to_string(l) + "] drifts from the product oracle");
    if (l > 0) {
      c.require(s.alpha_bars[l] < s.alpha_bars[l - 1],
                "alpha_bar is not strictly decreasing at " + std::to_string(l));
    }
    if (!c.ok) return;
  }
}

void check_weight_contract(Check& c) {
  Rng rng(4242);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 30));
    std::vector<double> q(n);
    for (double& x : q) x = 3.0 * rng.normal();

    const auto w = batch_weights(q);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    c.require(std::abs(sum - 1.0) <= 1e-9, "weights sum to " + std::to_string(sum));

    std::vector<double> shifted(q);
    const double shift = 5.0 * rng.normal();
    for (double& x : shifted) x += shift;
    const auto ws = batch_weights(shifted);
    for (int i = 0; i < n; ++i) {
      c.require(std::abs(w[i] - ws[i]) <= 1e-9, "shift invariance violated");
    }

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n; i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.uniform_int(0, i - 1)]);
    }
    std::vector<double> qp(n);
    for (int i = 0; i < n; ++i) qp[i] = q[perm[i]];
    const auto wp = batch_weights(qp);
    for (int i = 0; i < n; ++i) {
      c.require(std::abs(wp[i] - w[perm[i]]) <= 1e-12,
                "permutation equivariance violated");
    }

    for (int i = 0; i < n && c.ok; ++i) {
      for (int j = 0; j < n; ++j) {
        if (q[i] > q[j]) {
          c.require(w[i] > w[j], "order preservation violated");
        }
      }
    }
    if (!c.ok) return;
  }
}

void check_quality_constructions(Check& c) {
  PcaProjector p;
  p.mean = {0, 0, 0, 0};
  const double s = 1.0 / std::sqrt(2.0);
  p.first_component = {s, s, 0, 0};
  p.fitted_on = 2;

  auto two_token = [](std::vector<double> fg, std::vector<double> bg) {
    FeatureMap m(2, 1, 4);
    for (int k = 0; k < 4; ++k) {
      m.at(0, 0, k) = fg[k];
      m.at(1, 0, k) = bg[k];
    }
    return m;
  };

  {
    Rng rng(7);
    const FeatureMap same = oracles::random_feature_map(3, 3, 4, rng);
    const PairQuality q = pair_quality(same, same, p);
    c.require(std::abs(q.quality) <= 1e-9, "identical views should give q = 0");
  }
  {
    const PairQuality q = pair_quality(two_token({1, 0, 0, 0}, {0, 0, 1, 0}),
                                       two_token({1, 0, 0, 0}, {0, 0, 0, 1}), p);
    c.require(std::abs(q.quality - 1.0) <= 1e-9, "shared-foreground pair should give q = 1");
  }
  {
    const PairQuality q = pair_quality(two_token({1, 0, 0, 0}, {0, 0, 1, 1}),
                                       two_token({0, 1, 0, 0}, {0, 0, 1, 1}), p);
    c.require(std::abs(q.quality + 1.0) <= 1e-9,
              "orthogonal-foreground pair should give q = -1");
  }

  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    PcaProjector rp;
    rp.mean = oracles::random_vector(5, rng);
    rp.first_component = oracles::unit(oracles::random_vector(5, rng));
    rp.fitted_on = 2;
    const FeatureMap map = oracles::random_feature_map(4, 4, 5, rng);
    const auto [fg, bg] = foreground_background_maps(map, rp);
    for (std::size_t i = 0; i < fg.data.size(); ++i) {
      c.require(std::abs(fg.data[i] + bg.data[i] - 1.0) <= 1e-12,
                "foreground/background complement identity violated");
    }
    if (!c.ok) return;
  }
}

void check_loss_oracles(Check& c) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 2 + static_cast<int>(rng.uniform_int(0, 8));
    const auto z1 = oracles::random_vector(dim, rng);
    const auto z2 = oracles::random_vector(dim, rng);
    std::vector<std::vector<double>> negs;
    const int n_neg = 1 + static_cast<int>(rng.uniform_int(0, 6));
    for (int k = 0; k < n_neg; ++k) negs.push_back(oracles::random_vector(dim, rng));
    const double got = info_nce(z1, z2, negs, 0.2);
    const double expected = oracles::naive_info_nce(z1, z2, negs, 0.2);
    c.require(std::abs(got - expected) <= 1e-10,
              "info_nce differs from the naive reference by " +
                  std::to_string(std::abs(got - expected)));
    if (!c.ok) return;
  }
  c.require(info_nce(std::vector<double>{1.0, 2.0}, std::vector<double>{0.5, -1.0},
                     std::vector<std::vector<double>>{}, 0.2) == 0.0,
            "zero-negative info_nce must be exactly 0");

  for (int trial = 0; trial < 100 && c.ok; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 5));
    const int p = 2 + static_cast<int>(rng.uniform_int(0, 8));
    std::vector<std::vector<double>> pred(n, std::vector<double>(p));
    std::vector<std::vector<double>> targ(n, std::vector<double>(p));
    Matrix mp(n, p), mt(n, p);
    for (int i = 0; i < n; ++i) {
      double sp = 0.0, st = 0.0;
      for (int j = 0; j < p; ++j) {
        pred[i][j] = 0.02 + rng.uniform();
        targ[i][j] = 0.02 + rng.uniform();
        sp += pred[i][j];
        st += targ[i][j];
      }
      for (int j = 0; j < p; ++j) {
        pred[i][j] /= sp;
        targ[i][j] /= st * n;
        mp(i, j) = pred[i][j];
        mt(i, j) = targ[i][j];
      }
    }
    const double got = swav_kl(mp, mt);
    const double expected = oracles::naive_swav_kl(pred, targ);
    c.require(std::abs(got - expected) <= 1e-10,
              "swav_kl differs from the naive reference");
  }

  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const int p = 2 + static_cast<int>(rng.uniform_int(0, 6));
    // Well-conditioned regime: score spread comparable to epsilon.
    Matrix scores(n, p);
    for (double& x : scores.data) x = 0.5 * rng.normal();
    const Matrix q = sinkhorn_knopp(scores, 0.5, 50);
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int j = 0; j < p; ++j) row += q(i, j);
      c.require(std::abs(row - 1.0 / n) <= 1e-9, "assignment row sum off");
    }
    for (int j = 0; j < p; ++j) {
      double col = 0.0;
      for (int i = 0; i < n; ++i) col += q(i, j);
      c.require(std::abs(col - 1.0 / p) <= 1e-6, "assignment column sum off");
    }
  }
}

void check_gradients(Check& c) {
  Rng rng(23);
  const LossFamily families[] = {LossFamily::InfoNce, LossFamily::NegCosine};
  const WeightingMode modes[] = {WeightingMode::Uniform, WeightingMode::Quality};
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 2, w = 2;
    const int k = 2 + static_cast<int>(rng.uniform_int(0, 2));
    const int batch_n = 3 + static_cast<int>(rng.uniform_int(0, 2));
    EncoderConfig cfg;
    cfg.input_dim = h * w * k;
    // Wide enough that no random view deadens the whole rectifier layer,
    // which would zero a projection and (correctly) raise ZeroVector.
    cfg.feature_dim = 10 + static_cast<int>(rng.uniform_int(0, 4));
    cfg.projection_dim = 4 + static_cast<int>(rng.uniform_int(0, 2));
    const LossFamily family = families[trial % 2];
    const WeightingMode mode = modes[(trial / 2) % 2];
    cfg.use_predictor = family == LossFamily::NegCosine;
    ToyEncoder enc = ToyEncoder::init(cfg, rng);
    c.require(enc.parameter_count() <= 2000, "gradient-check config too large");

    std::vector<FeatureMap> va, vb;
    for (int i = 0; i < batch_n; ++i) {
      va.push_back(oracles::random_feature_map(h, w, k, rng));
      vb.push_back(oracles::random_feature_map(h, w, k, rng));
    }
    std::vector<ViewPair> batch;
    for (int i = 0; i < batch_n; ++i) batch.push_back({&va[i], &vb[i]});

    LossOptions opts;
    opts.family = family;
    const double err = gradient_check(enc, batch, opts, mode, 1e-5);
    c.require(err < 1e-4, "max relative gradient error " + std::to_string(err) +
                              " on trial " + std::to_string(trial));
    if (!c.ok) return;
  }
}

void check_pca_oracle(Check& c) {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const int count = 20 + static_cast<int>(rng.uniform_int(0, 60));
    const auto stretch = oracles::random_vector(dim, rng, 1.5);
    std::vector<EmbeddingVector> samples;
    for (int i = 0; i < count; ++i) {
      auto v = oracles::random_vector(dim, rng);
      for (int d = 0; d < dim; ++d) v[d] *= 0.2 + std::abs(stretch[d]);
      samples.push_back(std::move(v));
    }
    const PcaProjector p = fit_pca(samples);
    const auto oracle = oracles::top_eigenvector(oracles::covariance_of(samples));
    const double cosine = std::abs(oracles::dot(p.first_component, oracle));
    c.require(cosine >= 0.999, "PCA component cosine " + std::to_string(cosine) +
                                   " below 0.999 on trial " + std::to_string(trial));
    if (!c.ok) return;
  }
}

void check_quality_direction(Check& c) {
  TrainerConfig base = acceptance_trainer_defaults();
  base.augment.drift_kappa = 2.0;
  base.augment.apply_probability = 1.0;
  base.strategy = {SelectionStrategy::Constant, 400};

  std::vector<double> quality_acc, uniform_acc;
  std::size_t mixed = 0, mixed_lower = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainerConfig cfg = base;
    cfg.seed = seed;
    cfg.weighting = WeightingMode::Quality;
    const ExperimentReport q = train_run(cfg);
    quality_acc.push_back(q.probe_accuracy);
    mixed += q.mixed_batch_count;
    mixed_lower += q.mixed_batch_corrupt_lower_count;

    cfg.weighting = WeightingMode::Uniform;
    uniform_acc.push_back(train_run(cfg).probe_accuracy);
  }
  const double med_q = median(quality_acc);
  const double med_u = median(uniform_acc);
  c.require(med_q > med_u, "median quality-weighted probe " + std::to_string(med_q) +
                               " does not exceed uniform " + std::to_string(med_u));
  c.require(mixed > 0, "no mixed batches observed");
  const double lower_fraction = static_cast<double>(mixed_lower) / mixed;
  c.require(lower_fraction >= 0.95,
            "corrupted pairs out-weighted clean in " +
                std::to_string(1.0 - lower_fraction) + " of mixed batches");
}

void check_strategy_direction(Check& c) {
  TrainerConfig base = acceptance_trainer_defaults();
  base.augment.drift_kappa = 2.0;
  base.augment.apply_probability = 1.0;
  base.weighting = WeightingMode::Uniform;

  auto run_strategy = [&](NoisePolicy policy, std::vector<double>& acc,
                          std::vector<double>& flips) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      TrainerConfig cfg = base;
      cfg.seed = seed;
      cfg.strategy = policy;
      const ExperimentReport r = train_run(cfg);
      acc.push_back(r.probe_accuracy);
      flips.push_back(r.realized_flip_rate);
    }
  };

  std::vector<double> as_acc, as_flips, rs_acc, rs_flips, cs_acc, cs_flips;
  run_strategy({SelectionStrategy::Adaptive, 0}, as_acc, as_flips);
  run_strategy({SelectionStrategy::Random, 0}, rs_acc, rs_flips);
  run_strategy({SelectionStrategy::Constant, 400}, cs_acc, cs_flips);

  c.require(median(as_acc) >= median(rs_acc),
            "adaptive probe " + std::to_string(median(as_acc)) +
                " fell below random " + std::to_string(median(rs_acc)));
  c.require(median(as_acc) >= median(cs_acc),
            "adaptive probe " + std::to_string(median(as_acc)) +
                " fell below constant-400 " + std::to_string(median(cs_acc)));
  c.require(median(as_flips) < median(cs_flips),
            "adaptive flip rate " + std::to_string(median(as_flips)) +
                " not below constant-400 " + std::to_string(median(cs_flips)));
}

void check_alpha_direction(Check& c) {
  TrainerConfig base = acceptance_trainer_defaults();
  // Mild generator imperfection: the full method (adaptive selection plus
  // quality weighting) keeps false positives rare, so the sweep isolates the
  // application-probability trend.
  base.augment.drift_kappa = 0.5;
  base.strategy = {SelectionStrategy::Adaptive, 0};
  base.weighting = WeightingMode::Quality;

  std::vector<double> medians;
  for (const double alpha : {0.0, 0.5, 1.0}) {
    std::vector<double> acc;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      TrainerConfig cfg = base;
      cfg.seed = seed;
      cfg.augment.apply_probability = alpha;
      acc.push_back(train_run(cfg).probe_accuracy);
    }
    medians.push_back(median(acc));
  }
  c.require(medians[1] >= medians[0],
            "probe at alpha 0.5 (" + std::to_string(medians[1]) +
                ") fell below alpha 0 (" + std::to_string(medians[0]) + ")");
  c.require(medians[2] >= medians[1],
            "probe at alpha 1.0 (" + std::to_string(medians[2]) +
                ") fell below alpha 0.5 (" + std::to_string(medians[1]) + ")");
}

void check_determinism(Check& c) {
  namespace fs = std::filesystem;
  const fs::path dir = "acceptance_scratch";
  fs::remove_all(dir);
  fs::create_directories(dir);

  RunConfig cfg;
  cfg.set("trainer.classes", "2");
  cfg.set("trainer.samples_per_class", "8");
  cfg.set("trainer.height", "5");
  cfg.set("trainer.width", "5");
  cfg.set("trainer.channels", "8");
  cfg.set("trainer.epochs", "3");
  cfg.set("trainer.batch_size", "8");
  cfg.set("trainer.feature_dim", "12");
  cfg.set("trainer.projection_dim", "6");
  cfg.set("trainer.drift_kappa", "2");

  cmd_train(cfg, (dir / "a.txt").string());
  cmd_train(cfg, (dir / "b.txt").string());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  const std::string a = slurp(dir / "a.txt");
  c.require(!a.empty(), "train report is empty");
  c.require(a == slurp(dir / "b.txt"), "train reports differ across identical runs");

  Rng rng(5);
  std::vector<NamedTensor> tensors;
  NamedTensor t;
  t.id = "payload";
  t.dims = {16, 3};
  for (int i = 0; i < 48; ++i) t.values.push_back(static_cast<float>(rng.normal()));
  t.values[0] = 0.0f;
  t.values[1] = -0.0f;
  t.values[2] = 1e-40f;  // denormal survives the round trip
  tensors.push_back(t);
  write_container((dir / "t1.gvtf").string(), tensors);
  const auto back = read_container((dir / "t1.gvtf").string());
  c.require(back.size() == 1 &&
                std::memcmp(back[0].values.data(), tensors[0].values.data(),
                            tensors[0].values.size() * sizeof(float)) == 0,
            "container payload is not bit-exact after a round trip");
  write_container((dir / "t2.gvtf").string(), back);
  c.require(slurp(dir / "t1.gvtf") == slurp(dir / "t2.gvtf"),
            "container files differ after write-read-write");
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Check&)> fn;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "noise-level mapping matches the integer oracle on the 0.001 grid", 1.0,
       check_level_mapping},
      {2, "noised-embedding norm matches the moment identity within 3 SE", 5.0,
       check_noising_moments},
      {3, "cumulative schedule matches brute force and decreases strictly", 1.0,
       check_schedule},
      {4, "batch softmax: normalized, equivariant, shift-invariant, monotone", 5.0,
       check_weight_contract},
      {5, "hand-built quality extremes and mask complement identity", 1.0,
       check_quality_constructions},
      {6, "loss values match naive references; assignment marginals hold", 10.0,
       check_loss_oracles},
      {7, "analytic gradients match finite differences on 20 configs", 30.0,
       check_gradients},
      {8, "power-iteration PCA matches dense eigendecomposition", 5.0,
       check_pca_oracle},
      {9, "quality reweighting beats uniform and down-weights corrupted pairs", 120.0,
       check_quality_direction},
      {10, "adaptive selection beats random and constant-400 with fewer flips", 180.0,
       check_strategy_direction},
      {11, "probe accuracy is non-decreasing in the application probability", 120.0,
       check_alpha_direction},
      {12, "training reports and containers are byte-deterministic", 30.0,
       check_determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.fn(check);
    } catch (const std::exception& e) {
      check.require(false, std::string("exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.require(elapsed < criterion.budget_seconds,
                  "took " + std::to_string(elapsed) + " s, budget " +
                      std::to_string(criterion.budget_seconds) + " s");
    if (check.ok) {
      std::printf("[PASS] %2d %s (%.2f s)\n", criterion.id, criterion.name, elapsed);
    } else {
      std::printf("[FAIL] %2d %s (%.2f s): %s\n", criterion.id, criterion.name,
                  elapsed, check.detail.c_str());
      ++failures;
    }
  }
  if (failures > 0) {
    std::printf("%d of %zu checks failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu checks passed\n", criteria.size());
  return 0;
}
