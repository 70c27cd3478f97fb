#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "genview/quality.hpp"
#include "oracles.hpp"

using namespace genview;

namespace {

PcaProjector diagonal_projector() {
  PcaProjector p;
  p.mean = {0, 0, 0, 0};
  const double s = 1.0 / std::sqrt(2.0);
  p.first_component = {s, s, 0, 0};
  p.fitted_on = 2;
  return p;
}

// 2x1 map: token 0 is the foreground, token 1 the background.
FeatureMap two_token_map(const std::vector<double>& fg, const std::vector<double>& bg) {
  FeatureMap m(2, 1, static_cast<int>(fg.size()));
  for (std::size_t k = 0; k < fg.size(); ++k) {
    m.at(0, 0, static_cast<int>(k)) = fg[k];
    m.at(1, 0, static_cast<int>(k)) = bg[k];
  }
  return m;
}

}  // namespace

TEST_CASE("foreground and background maps are complements") {
  Rng rng(3);
  PcaProjector p;
  p.mean = oracles::random_vector(6, rng);
  p.first_component = oracles::unit(oracles::random_vector(6, rng));
  p.fitted_on = 2;
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMap map = oracles::random_feature_map(4, 5, 6, rng);
    const auto [fg, bg] = foreground_background_maps(map, p);
    for (std::size_t i = 0; i < fg.data.size(); ++i) {
      CHECK(fg.data[i] + bg.data[i] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(fg.data[i] >= 0.0);
      CHECK(fg.data[i] <= 1.0);
    }
  }
}

TEST_CASE("constant maps give the neutral half/half attention") {
  PcaProjector p = diagonal_projector();
  FeatureMap constant(3, 3, 4);
  for (double& x : constant.data) x = 2.0;
  const auto [fg, bg] = foreground_background_maps(constant, p);
  for (double v : fg.data) CHECK(v == doctest::Approx(0.5));
  for (double v : bg.data) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("a two-token map splits into one-hot masks") {
  PcaProjector p;
  p.mean = {0, 0};
  p.first_component = {1, 0};
  p.fitted_on = 2;
  FeatureMap m(2, 1, 2);
  m.at(0, 0, 0) = 2;
  m.at(1, 0, 0) = 5;
  const auto [fg, bg] = foreground_background_maps(m, p);
  CHECK(fg.data[0] == doctest::Approx(0.0));
  CHECK(fg.data[1] == doctest::Approx(1.0));
  CHECK(bg.data[0] == doctest::Approx(1.0));
  CHECK(bg.data[1] == doctest::Approx(0.0));
}

TEST_CASE("pair_quality of identical views is neutral") {
  Rng rng(7);
  const FeatureMap map = oracles::random_feature_map(3, 3, 4, rng);
  const PairQuality q = pair_quality(map, map, diagonal_projector());
  CHECK(q.foreground_sim == doctest::Approx(1.0));
  CHECK(q.background_sim == doctest::Approx(1.0));
  CHECK(q.quality == doctest::Approx(0.0));
  CHECK_FALSE(q.zero_region);
}

TEST_CASE("hand-built pairs reach the quality extremes") {
  const PcaProjector p = diagonal_projector();

  SUBCASE("identical foregrounds, orthogonal backgrounds: q = 1") {
    const FeatureMap a = two_token_map({1, 0, 0, 0}, {0, 0, 1, 0});
    const FeatureMap b = two_token_map({1, 0, 0, 0}, {0, 0, 0, 1});
    const PairQuality q = pair_quality(a, b, p);
    CHECK(q.foreground_sim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(q.background_sim == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(q.quality == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("orthogonal foregrounds, identical backgrounds: q = -1") {
    const FeatureMap a = two_token_map({1, 0, 0, 0}, {0, 0, 1, 1});
    const FeatureMap b = two_token_map({0, 1, 0, 0}, {0, 0, 1, 1});
    const PairQuality q = pair_quality(a, b, p);
    CHECK(q.foreground_sim == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(q.background_sim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(q.quality == doctest::Approx(-1.0).epsilon(1e-9));
  }
}

TEST_CASE("pair_quality is symmetric and scale invariant") {
  Rng rng(11);
  PcaProjector p;
  p.mean = oracles::random_vector(5, rng, 0.1);
  p.first_component = oracles::unit(oracles::random_vector(5, rng));
  p.fitted_on = 2;
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureMap a = oracles::random_feature_map(3, 4, 5, rng);
    const FeatureMap b = oracles::random_feature_map(3, 4, 5, rng);
    const PairQuality ab = pair_quality(a, b, p);
    const PairQuality ba = pair_quality(b, a, p);
    CHECK(ab.quality == doctest::Approx(ba.quality).epsilon(1e-12));
    CHECK(ab.quality >= -2.0);
    CHECK(ab.quality <= 2.0);

    // Common positive rescaling of both views leaves the scores alone.
    FeatureMap a2 = a, b2 = b;
    for (double& x : a2.data) x *= 4.0;
    for (double& x : b2.data) x *= 4.0;
    PcaProjector p2 = p;
    for (double& x : p2.mean) x *= 4.0;
    const PairQuality scaled = pair_quality(a2, b2, p2);
    CHECK(scaled.foreground_sim == doctest::Approx(ab.foreground_sim).epsilon(1e-9));
    CHECK(scaled.background_sim == doctest::Approx(ab.background_sim).epsilon(1e-9));
  }
}

TEST_CASE("batch scoring with a refit projector ignores common rescaling") {
  Rng rng(37);
  std::vector<FeatureMap> views_a, views_b, scaled_a, scaled_b;
  for (int i = 0; i < 6; ++i) {
    views_a.push_back(oracles::random_feature_map(4, 4, 5, rng));
    views_b.push_back(oracles::random_feature_map(4, 4, 5, rng));
    scaled_a.push_back(views_a.back());
    scaled_b.push_back(views_b.back());
    for (double& x : scaled_a.back().data) x *= 6.25;
    for (double& x : scaled_b.back().data) x *= 6.25;
  }
  std::vector<std::pair<const FeatureMap*, const FeatureMap*>> pairs, scaled;
  for (int i = 0; i < 6; ++i) {
    pairs.emplace_back(&views_a[i], &views_b[i]);
    scaled.emplace_back(&scaled_a[i], &scaled_b[i]);
  }
  const auto base = batch_pair_qualities(pairs);
  const auto after = batch_pair_qualities(scaled);
  for (int i = 0; i < 6; ++i) {
    CHECK(after[i].foreground_sim ==
          doctest::Approx(base[i].foreground_sim).epsilon(1e-9));
    CHECK(after[i].background_sim ==
          doctest::Approx(base[i].background_sim).epsilon(1e-9));
    CHECK(after[i].quality == doctest::Approx(base[i].quality).epsilon(1e-9));
  }
}

TEST_CASE("a vanished region pins the pair at minimum quality") {
  const PcaProjector p = diagonal_projector();
  const FeatureMap a = two_token_map({1, 0, 0, 0}, {0, 0, 0, 0});
  const FeatureMap b = two_token_map({1, 0, 0, 0}, {0, 0, 0, 0});
  const PairQuality q = pair_quality(a, b, p);
  CHECK(q.zero_region);
  CHECK(q.quality == doctest::Approx(-2.0));
  CHECK(q.quality == q.foreground_sim - q.background_sim);
}

TEST_CASE("batch_weights is a proper softmax") {
  SUBCASE("uniform qualities give uniform weights") {
    const std::vector<double> q(4, 1.3);
    const auto w = batch_weights(q);
    for (double x : w) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("hand softmax") {
    const std::vector<double> q = {std::log(2.0), 0.0};
    const auto w = batch_weights(q);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("shift invariance") {
    const std::vector<double> q = {0.5, -0.2, 1.7, 0.0};
    std::vector<double> shifted = q;
    for (double& x : shifted) x += 5.0;
    const auto a = batch_weights(q);
    const auto b = batch_weights(shifted);
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }

  SUBCASE("permutation equivariance, order preservation, normalization") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform_int(0, 14));
      std::vector<double> q(n);
      for (double& x : q) x = 4.0 * rng.normal();
      const auto w = batch_weights(q);
      double sum = std::accumulate(w.begin(), w.end(), 0.0);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      for (int i = 0; i < n; ++i) {
        CHECK(w[i] > 0.0);
        CHECK(w[i] < 1.0 + 1e-15);
        for (int j = 0; j < n; ++j) {
          if (q[i] > q[j]) CHECK(w[i] > w[j]);
        }
      }
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = n; i > 1; --i) {
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      std::vector<double> qp(n);
      for (int i = 0; i < n; ++i) qp[i] = q[perm[i]];
      const auto wp = batch_weights(qp);
      for (int i = 0; i < n; ++i) {
        CHECK(wp[i] == doctest::Approx(w[perm[i]]).epsilon(1e-12));
      }
    }
  }

  CHECK_THROWS_AS(batch_weights(std::vector<double>{}), EmptyInput);
  CHECK_THROWS_AS(batch_weights(std::vector<double>{std::nan("")}), NonFinite);
}

TEST_CASE("reweight_batch_loss keeps the baseline scale") {
  SUBCASE("uniform weights reproduce the unweighted total") {
    const std::vector<double> w(3, 1.0 / 3.0);
    const std::vector<double> losses = {1, 2, 3};
    CHECK(reweight_batch_loss(w, losses) == doctest::Approx(6.0));
  }

  SUBCASE("full concentration scales the chosen pair by n") {
    const std::vector<double> w = {1, 0, 0};
    const std::vector<double> losses = {2, 5, 5};
    CHECK(reweight_batch_loss(w, losses) == doctest::Approx(6.0));
  }

  SUBCASE("hand arithmetic") {
    const std::vector<double> w = {2.0 / 3.0, 1.0 / 3.0};
    const std::vector<double> losses = {0.3, 0.9};
    CHECK(reweight_batch_loss(w, losses) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("uniform equivalence holds for arbitrary losses") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_int(0, 9));
      std::vector<double> losses(n);
      for (double& x : losses) x = 3.0 * rng.normal();
      const std::vector<double> w(n, 1.0 / n);
      CHECK(reweight_batch_loss(w, losses) ==
            doctest::Approx(std::accumulate(losses.begin(), losses.end(), 0.0))
                .epsilon(1e-9));
    }
  }

  CHECK_THROWS_AS(
      reweight_batch_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0}),
      LengthMismatch);
}
