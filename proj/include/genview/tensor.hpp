#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "genview/errors.hpp"

namespace genview {

using EmbeddingVector = std::vector<double>;

// H x W x K spatial feature tensor, row-major [h][w][k]. Each token (h, w)
// is a contiguous K-dim slice.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int k)
      : height(h), width(w), channels(k),
        data(static_cast<std::size_t>(h) * w * k, 0.0) {
    if (h < 1 || w < 1 || k < 1) {
      throw DimensionMismatch("FeatureMap dimensions must be >= 1");
    }
  }

  int tokens() const { return height * width; }

  double& at(int h, int w, int k) {
    return data[(static_cast<std::size_t>(h) * width + w) * channels + k];
  }
  double at(int h, int w, int k) const {
    return data[(static_cast<std::size_t>(h) * width + w) * channels + k];
  }

  std::span<const double> token(int h, int w) const {
    return {data.data() + (static_cast<std::size_t>(h) * width + w) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<double> token(int h, int w) {
    return {data.data() + (static_cast<std::size_t>(h) * width + w) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const double> token(int flat_index) const {
    return {data.data() + static_cast<std::size_t>(flat_index) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<double> token(int flat_index) {
    return {data.data() + static_cast<std::size_t>(flat_index) * channels,
            static_cast<std::size_t>(channels)};
  }
};

struct ScalarMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  ScalarMap() = default;
  ScalarMap(int h, int w)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0.0) {
    if (h < 1 || w < 1) {
      throw DimensionMismatch("ScalarMap dimensions must be >= 1");
    }
  }

  double& at(int h, int w) { return data[static_cast<std::size_t>(h) * width + w]; }
  double at(int h, int w) const { return data[static_cast<std::size_t>(h) * width + w]; }
};

// Min-max normalized map in [0, 1]; high values mark likely foreground.
struct AttentionMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  AttentionMap() = default;
  AttentionMap(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
    if (h < 1 || w < 1) {
      throw DimensionMismatch("AttentionMap dimensions must be >= 1");
    }
  }

  double& at(int h, int w) { return data[static_cast<std::size_t>(h) * width + w]; }
  double at(int h, int w) const { return data[static_cast<std::size_t>(h) * width + w]; }
};

// Dense row-major matrix, the shared small linear-algebra carrier.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  std::span<double> row(int r) {
    return {data.data() + static_cast<std::size_t>(r) * cols,
            static_cast<std::size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols,
            static_cast<std::size_t>(cols)};
  }
};

// Mean and the leading principal direction of a sample of K-dim vectors.
struct PcaProjector {
  std::vector<double> mean;
  std::vector<double> first_component;  // unit norm
  std::size_t fitted_on = 0;

  int dim() const { return static_cast<int>(mean.size()); }
};

namespace detail {

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> v) {
  return std::sqrt(dot(v, v));
}

// Orients v so its largest-magnitude entry is non-negative (first such index
// on ties). Gives fit_pca a reproducible sign.
inline void apply_sign_convention(std::vector<double>& v) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best) {
      best = a;
      arg = i;
    }
  }
  if (v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
}

// Cyclic Jacobi sweep eigensolver for the top eigenvector; fallback path of
// fit_pca for small K when power iteration stalls.
inline std::vector<double> jacobi_top_eigenvector(Matrix a) {
  const int n = a.rows;
  Matrix v(n, n);
  for (int i = 0; i < n; ++i) v(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p);
          const double aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a(p, i);
          const double aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = v(i, p);
          const double viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (a(i, i) > a(best, best)) best = i;
  }
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = v(i, best);
  return out;
}

}  // namespace detail

// Streaming accumulator for PCA over token vectors: keeps sum(x) and
// sum(x x^T), so feature maps can be pooled without materializing a sample
// list.
class PcaAccumulator {
 public:
  explicit PcaAccumulator(int dim) : dim_(dim), sum_(dim, 0.0), outer_(dim, dim) {
    if (dim < 1) throw DimensionMismatch("PCA dimension must be >= 1");
  }

  void add(std::span<const double> v) {
    if (static_cast<int>(v.size()) != dim_) {
      throw DimensionMismatch("PCA sample has dimension " +
                              std::to_string(v.size()) + ", expected " +
                              std::to_string(dim_));
    }
    if (!detail::all_finite(v)) throw InvalidValue("non-finite PCA sample");
    for (int i = 0; i < dim_; ++i) {
      sum_[i] += v[i];
      for (int j = i; j < dim_; ++j) outer_(i, j) += v[i] * v[j];
    }
    ++count_;
  }

  void add_tokens(const FeatureMap& map) {
    for (int t = 0; t < map.tokens(); ++t) add(map.token(t));
  }

  std::size_t count() const { return count_; }

  // Mean and unit top eigenvector of the (population) covariance. Power
  // iteration, tolerance 1e-10, at most 10,000 rounds; Jacobi fallback for
  // K <= 64 when the gap is too small to converge.
  PcaProjector fit() const {
    if (count_ < 2) throw EmptyInput("PCA needs at least 2 samples");
    const double n = static_cast<double>(count_);

    std::vector<double> mean(dim_);
    for (int i = 0; i < dim_; ++i) mean[i] = sum_[i] / n;

    Matrix cov(dim_, dim_);
    double trace = 0.0;
    for (int i = 0; i < dim_; ++i) {
      for (int j = i; j < dim_; ++j) {
        const double c = outer_(i, j) / n - mean[i] * mean[j];
        cov(i, j) = c;
        cov(j, i) = c;
      }
      // Clamp diagonal round-off so the degeneracy test sees a true zero.
      if (cov(i, i) < 0.0) cov(i, i) = 0.0;
      trace += cov(i, i);
    }
    if (!(trace > 0.0)) {
      throw DegenerateCovariance("all samples identical (zero covariance)");
    }

    std::vector<double> v(dim_);
    bool converged = false;
    // Start from the covariance row sums: one free multiplication by cov.
    for (int i = 0; i < dim_; ++i) {
      double s = 0.0;
      for (int j = 0; j < dim_; ++j) s += cov(i, j);
      v[i] = s;
    }
    double vn = detail::norm(v);
    if (vn < 1e-300) {
      std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(dim_)));
    } else {
      for (double& x : v) x /= vn;
    }

    std::vector<double> next(dim_);
    for (int iter = 0; iter < 10000; ++iter) {
      for (int i = 0; i < dim_; ++i) next[i] = detail::dot(cov.row(i), v);
      const double nn = detail::norm(next);
      if (nn < 1e-300) {
        // Iterate fell in the null space; restart from a basis vector.
        std::fill(next.begin(), next.end(), 0.0);
        next[iter % dim_] = 1.0;
      } else {
        for (double& x : next) x /= nn;
      }
      double delta = 0.0;
      for (int i = 0; i < dim_; ++i) delta = std::max(delta, std::abs(next[i] - v[i]));
      v = next;
      if (delta < 1e-10) {
        converged = true;
        break;
      }
    }
    if (!converged && dim_ <= 64) {
      v = detail::jacobi_top_eigenvector(cov);
      const double nn = detail::norm(v);
      for (double& x : v) x /= nn;
    }

    double lambda = 0.0;
    for (int i = 0; i < dim_; ++i) lambda += v[i] * detail::dot(cov.row(i), v);
    if (lambda <= 1e-12 * trace) {
      throw DegenerateCovariance("top eigenvalue numerically zero");
    }

    detail::apply_sign_convention(v);
    return PcaProjector{std::move(mean), std::move(v), count_};
  }

 private:
  int dim_;
  std::vector<double> sum_;
  Matrix outer_;
  std::size_t count_ = 0;
};

inline PcaProjector fit_pca(const std::vector<EmbeddingVector>& samples) {
  if (samples.size() < 2) throw EmptyInput("PCA needs at least 2 samples");
  PcaAccumulator acc(static_cast<int>(samples.front().size()));
  for (const auto& s : samples) acc.add(s);
  return acc.fit();
}

// Signed distance of every token along the first component, mean removed.
inline ScalarMap project_first_component(const PcaProjector& projector,
                                         const FeatureMap& map) {
  if (map.channels != projector.dim()) {
    throw DimensionMismatch("feature channels " + std::to_string(map.channels) +
                            " != projector dim " + std::to_string(projector.dim()));
  }
  ScalarMap out(map.height, map.width);
  for (int t = 0; t < map.tokens(); ++t) {
    auto tok = map.token(t);
    double s = 0.0;
    for (int k = 0; k < map.channels; ++k) {
      s += (tok[k] - projector.mean[k]) * projector.first_component[k];
    }
    out.data[t] = s;
  }
  return out;
}

// (x - min) / (max - min); a constant map normalizes to 0.5 everywhere
// (neither foreground nor background claimed).
inline AttentionMap min_max_normalize(const ScalarMap& map) {
  if (!detail::all_finite(map.data)) {
    throw InvalidValue("non-finite values in scalar map");
  }
  const auto [lo_it, hi_it] = std::minmax_element(map.data.begin(), map.data.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  AttentionMap out(map.height, map.width);
  if (range < 1e-12) {
    std::fill(out.data.begin(), out.data.end(), 0.5);
    return out;
  }
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    out.data[i] = (map.data[i] - lo) / range;
  }
  return out;
}

inline double cosine_similarity(std::span<const double> a,
                                std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("cosine_similarity dimension mismatch");
  }
  const double na = detail::norm(a);
  const double nb = detail::norm(b);
  if (na <= 1e-12 || nb <= 1e-12) {
    throw ZeroVector("cosine_similarity on (near-)zero vector");
  }
  return std::clamp(detail::dot(a, b) / (na * nb), -1.0, 1.0);
}

// z[k] = sum_{h,w} weights[h,w] * map[h,w,k]; plain weighted sum, no
// normalization.
inline EmbeddingVector spatial_aggregate(const AttentionMap& weights,
                                         const FeatureMap& map) {
  if (weights.height != map.height || weights.width != map.width) {
    throw DimensionMismatch("spatial_aggregate grid mismatch");
  }
  EmbeddingVector out(map.channels, 0.0);
  for (int t = 0; t < map.tokens(); ++t) {
    const double w = weights.data[t];
    auto tok = map.token(t);
    for (int k = 0; k < map.channels; ++k) out[k] += w * tok[k];
  }
  return out;
}

}  // namespace genview
