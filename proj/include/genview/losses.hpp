#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "genview/errors.hpp"
#include "genview/tensor.hpp"

namespace genview {

namespace detail {

// u = z / ||z||; throws on (near-)zero input.
inline std::vector<double> normalized(std::span<const double> z) {
  const double n = norm(z);
  if (n <= 1e-12) throw ZeroVector("cannot normalize (near-)zero vector");
  std::vector<double> u(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) u[i] = z[i] / n;
  return u;
}

// Pulls a gradient w.r.t. the unit vector back to the raw vector:
// dz = (g - (g . u) u) / ||z||.
inline std::vector<double> unnormalize_gradient(std::span<const double> z,
                                                std::span<const double> u,
                                                std::span<const double> g) {
  const double n = norm(z);
  const double gu = dot(g, u);
  std::vector<double> dz(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) dz[i] = (g[i] - gu * u[i]) / n;
  return dz;
}

}  // namespace detail

// -log( exp(s_pos/tau) / (exp(s_pos/tau) + sum_k exp(s_k/tau)) ), the
// positive term kept in the denominator. Inputs are L2-normalized first by
// default; similarities are then plain dot products.
inline double info_nce(std::span<const double> anchor,
                       std::span<const double> positive,
                       std::span<const std::vector<double>> negatives,
                       double tau, bool normalize = true) {
  if (!(tau > 0.0)) throw InvalidTemperature("temperature must be > 0");
  if (anchor.size() != positive.size()) {
    throw DimensionMismatch("anchor and positive dimensions differ");
  }
  for (const auto& n : negatives) {
    if (n.size() != anchor.size()) {
      throw DimensionMismatch("negative dimension differs from anchor");
    }
  }
  if (negatives.empty()) return 0.0;

  std::vector<double> u(anchor.begin(), anchor.end());
  std::vector<double> v(positive.begin(), positive.end());
  if (normalize) {
    u = detail::normalized(anchor);
    v = detail::normalized(positive);
  }
  const double s_pos = detail::dot(u, v) / tau;

  // log(1 + sum_k exp(s_k - s_pos)) via a stable log-sum-exp over all terms.
  double hi = s_pos;
  std::vector<double> s_neg(negatives.size());
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    std::vector<double> n(negatives[k].begin(), negatives[k].end());
    if (normalize) n = detail::normalized(negatives[k]);
    s_neg[k] = detail::dot(u, n) / tau;
    hi = std::max(hi, s_neg[k]);
  }
  double z = std::exp(s_pos - hi);
  for (double s : s_neg) z += std::exp(s - hi);
  return -(s_pos - hi - std::log(z));
}

struct InfoNceGradient {
  double loss = 0.0;
  std::vector<double> d_anchor;
  std::vector<double> d_positive;
  std::vector<std::vector<double>> d_negatives;
};

// Loss plus analytic gradients w.r.t. the raw (pre-normalization) inputs.
inline InfoNceGradient info_nce_grad(std::span<const double> anchor,
                                     std::span<const double> positive,
                                     std::span<const std::vector<double>> negatives,
                                     double tau, bool normalize = true) {
  if (!(tau > 0.0)) throw InvalidTemperature("temperature must be > 0");
  InfoNceGradient out;
  out.d_anchor.assign(anchor.size(), 0.0);
  out.d_positive.assign(positive.size(), 0.0);
  out.d_negatives.assign(negatives.size(), std::vector<double>(anchor.size(), 0.0));
  if (negatives.empty()) return out;

  const std::vector<double> u =
      normalize ? detail::normalized(anchor)
                : std::vector<double>(anchor.begin(), anchor.end());
  const std::vector<double> v =
      normalize ? detail::normalized(positive)
                : std::vector<double>(positive.begin(), positive.end());
  std::vector<std::vector<double>> ns(negatives.size());
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    ns[k] = normalize ? detail::normalized(negatives[k])
                      : std::vector<double>(negatives[k].begin(), negatives[k].end());
  }

  const double s_pos = detail::dot(u, v) / tau;
  std::vector<double> s_neg(negatives.size());
  double hi = s_pos;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    s_neg[k] = detail::dot(u, ns[k]) / tau;
    hi = std::max(hi, s_neg[k]);
  }
  double z = std::exp(s_pos - hi);
  for (double s : s_neg) z += std::exp(s - hi);
  out.loss = -(s_pos - hi - std::log(z));

  // Softmax over {positive, negatives}; dL/ds_pos = pi_pos - 1, dL/ds_k = pi_k.
  const double pi_pos = std::exp(s_pos - hi) / z;
  std::vector<double> g_u(u.size(), 0.0);
  std::vector<double> g_v(v.size(), 0.0);
  const double c_pos = (pi_pos - 1.0) / tau;
  for (std::size_t i = 0; i < u.size(); ++i) {
    g_u[i] += c_pos * v[i];
    g_v[i] += c_pos * u[i];
  }
  for (std::size_t k = 0; k < ns.size(); ++k) {
    const double pi_k = std::exp(s_neg[k] - hi) / z;
    const double c_k = pi_k / tau;
    std::vector<double> g_n(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      g_u[i] += c_k * ns[k][i];
      g_n[i] = c_k * u[i];
    }
    out.d_negatives[k] = normalize
                             ? detail::unnormalize_gradient(negatives[k], ns[k], g_n)
                             : std::move(g_n);
  }
  out.d_anchor = normalize ? detail::unnormalize_gradient(anchor, u, g_u)
                           : std::move(g_u);
  out.d_positive = normalize ? detail::unnormalize_gradient(positive, v, g_v)
                             : std::move(g_v);
  return out;
}

// -(p/||p||) . (z/||z||). The target z is a constant: no gradient is defined
// through it (stop-gradient convention).
inline double neg_cosine(std::span<const double> p, std::span<const double> z) {
  return -cosine_similarity(p, z);
}

// Gradient of neg_cosine w.r.t. p only; the z branch is identically zero by
// the stop-gradient contract.
inline std::vector<double> neg_cosine_grad(std::span<const double> p,
                                           std::span<const double> z) {
  const std::vector<double> ph = detail::normalized(p);
  const std::vector<double> zh = detail::normalized(z);
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = -zh[i];
  return detail::unnormalize_gradient(p, ph, g);
}

// Q = exp(scores / epsilon), row-max subtracted, then alternating
// normalization to uniform marginals (rows 1/n, columns 1/P) for the given
// number of rounds, finishing with a row step so rows sum to 1/n exactly.
inline Matrix sinkhorn_knopp(const Matrix& scores, double epsilon = 0.05,
                             int iterations = 3) {
  if (!(epsilon > 0.0)) throw InvalidRange("sinkhorn epsilon must be > 0");
  if (iterations < 1) throw InvalidRange("sinkhorn needs iterations >= 1");
  const int n = scores.rows;
  const int p = scores.cols;
  if (n < 1 || p < 1) throw DimensionMismatch("sinkhorn on empty matrix");

  Matrix q(n, p);
  for (int i = 0; i < n; ++i) {
    double hi = scores(i, 0);
    for (int j = 1; j < p; ++j) hi = std::max(hi, scores(i, j));
    if (!std::isfinite(hi)) throw NonFinite("non-finite sinkhorn scores");
    for (int j = 0; j < p; ++j) {
      q(i, j) = std::exp((scores(i, j) - hi) / epsilon);
      if (!std::isfinite(q(i, j))) {
        throw NonFinite("sinkhorn exponentiation overflowed; raise epsilon");
      }
    }
  }

  const double row_target = 1.0 / n;
  const double col_target = 1.0 / p;
  auto row_step = [&] {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) s += q(i, j);
      if (s <= 0.0) throw NonFinite("sinkhorn row underflowed to zero; raise epsilon");
      const double f = row_target / s;
      for (int j = 0; j < p; ++j) q(i, j) *= f;
    }
  };
  auto col_step = [&] {
    for (int j = 0; j < p; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += q(i, j);
      if (s <= 0.0) throw NonFinite("sinkhorn column underflowed to zero; raise epsilon");
      const double f = col_target / s;
      for (int i = 0; i < n; ++i) q(i, j) *= f;
    }
  };

  for (int it = 0; it < iterations; ++it) {
    row_step();
    col_step();
  }
  row_step();
  return q;
}

// KL of one target row against one predicted row, 0 log 0 = 0.
inline double kl_divergence_row(std::span<const double> target,
                                std::span<const double> predicted) {
  if (target.size() != predicted.size()) {
    throw DimensionMismatch("KL rows differ in length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    s += target[i] * std::log(target[i] / predicted[i]);
  }
  return s;
}

namespace detail {

inline void check_distribution_rows(const Matrix& m, const char* what) {
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw InvalidDistribution(std::string(what) + " row has invalid entries");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw InvalidDistribution(std::string(what) + " row does not sum to 1");
    }
  }
}

}  // namespace detail

// Mean over rows of KL(target_row || predicted_row). Targets are assignment
// rows (summing to 1/n) and are renormalized to distributions here; the
// assignment side drives the expectation.
inline double swav_kl(const Matrix& predicted, const Matrix& targets) {
  if (predicted.rows != targets.rows || predicted.cols != targets.cols) {
    throw DimensionMismatch("predicted and target shapes differ");
  }
  detail::check_distribution_rows(predicted, "predicted");
  double total = 0.0;
  for (int i = 0; i < predicted.rows; ++i) {
    double tsum = 0.0;
    for (int j = 0; j < targets.cols; ++j) {
      const double v = targets(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw InvalidDistribution("target row has invalid entries");
      }
      tsum += v;
    }
    if (tsum <= 0.0) throw InvalidDistribution("target row sums to zero");
    std::vector<double> t(targets.cols);
    for (int j = 0; j < targets.cols; ++j) t[j] = targets(i, j) / tsum;
    total += kl_divergence_row(t, predicted.row(i));
  }
  return total / predicted.rows;
}

}  // namespace genview
