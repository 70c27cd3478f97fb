#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "genview/errors.hpp"
#include "genview/rng.hpp"
#include "genview/tensor.hpp"

namespace genview {

enum class Nonlinearity { Rectifier, Identity };

// Minimal differentiable encoder: flatten -> linear feature layer with one
// elementwise nonlinearity -> linear projector -> optional linear predictor.
// Prototype vectors are extra trainable weights used by the assignment loss.
struct EncoderConfig {
  int input_dim = 0;       // H * W * K of the flattened view
  int feature_dim = 64;    // h
  int projection_dim = 32; // z (and p)
  bool use_predictor = false;
  int prototypes = 0;      // 0 disables the prototype head
  Nonlinearity nonlinearity = Nonlinearity::Rectifier;
  double init_scale = 1.0;
};

struct ToyEncoder {
  EncoderConfig config;
  Matrix w1;          // feature_dim x input_dim
  Matrix w2;          // projection_dim x feature_dim
  Matrix w3;          // projection_dim x projection_dim (predictor)
  Matrix prototypes;  // prototypes x projection_dim

  static ToyEncoder init(const EncoderConfig& cfg, Rng& rng) {
    if (cfg.input_dim < 1 || cfg.feature_dim < 1 || cfg.projection_dim < 1) {
      throw InvalidConfig("encoder dimensions must be >= 1");
    }
    ToyEncoder enc;
    enc.config = cfg;
    auto gaussian = [&rng](Matrix& m, int rows, int cols, double scale) {
      m = Matrix(rows, cols);
      for (double& x : m.data) x = scale * rng.normal();
    };
    gaussian(enc.w1, cfg.feature_dim, cfg.input_dim,
             cfg.init_scale * std::sqrt(2.0 / cfg.input_dim));
    gaussian(enc.w2, cfg.projection_dim, cfg.feature_dim,
             cfg.init_scale * std::sqrt(2.0 / cfg.feature_dim));
    if (cfg.use_predictor) {
      gaussian(enc.w3, cfg.projection_dim, cfg.projection_dim,
               cfg.init_scale * std::sqrt(2.0 / cfg.projection_dim));
    }
    if (cfg.prototypes > 0) {
      gaussian(enc.prototypes, cfg.prototypes, cfg.projection_dim,
               cfg.init_scale * std::sqrt(2.0 / cfg.projection_dim));
    }
    return enc;
  }

  std::size_t parameter_count() const {
    return w1.data.size() + w2.data.size() + w3.data.size() + prototypes.data.size();
  }
};

// Activations retained for the backward pass.
struct ForwardActivations {
  std::vector<double> input;      // x
  std::vector<double> pre;        // w1 x
  std::vector<double> features;   // h = phi(w1 x)
  std::vector<double> projection; // z = w2 h
  std::vector<double> prediction; // p = w3 z (empty without predictor)
};

namespace detail {

inline std::vector<double> matvec(const Matrix& m, std::span<const double> v) {
  std::vector<double> out(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) out[r] = dot(m.row(r), v);
  return out;
}

inline std::vector<double> matvec_transposed(const Matrix& m,
                                             std::span<const double> v) {
  std::vector<double> out(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double vr = v[r];
    auto row = m.row(r);
    for (int c = 0; c < m.cols; ++c) out[c] += vr * row[c];
  }
  return out;
}

inline void add_outer(Matrix& acc, std::span<const double> u,
                      std::span<const double> v, double scale = 1.0) {
  for (int r = 0; r < acc.rows; ++r) {
    const double ur = scale * u[r];
    auto row = acc.row(r);
    for (int c = 0; c < acc.cols; ++c) row[c] += ur * v[c];
  }
}

}  // namespace detail

inline ForwardActivations forward(const ToyEncoder& enc, std::span<const double> x) {
  if (static_cast<int>(x.size()) != enc.config.input_dim) {
    throw ShapeMismatch("encoder input has wrong dimension");
  }
  ForwardActivations act;
  act.input.assign(x.begin(), x.end());
  act.pre = detail::matvec(enc.w1, x);
  act.features = act.pre;
  if (enc.config.nonlinearity == Nonlinearity::Rectifier) {
    for (double& v : act.features) v = v > 0.0 ? v : 0.0;
  }
  act.projection = detail::matvec(enc.w2, act.features);
  if (enc.config.use_predictor) {
    act.prediction = detail::matvec(enc.w3, act.projection);
  }
  return act;
}

inline std::pair<ForwardActivations, ForwardActivations> forward_pair(
    const ToyEncoder& enc, const FeatureMap& view_a, const FeatureMap& view_b) {
  return {forward(enc, view_a.data), forward(enc, view_b.data)};
}

struct EncoderGradients {
  Matrix w1, w2, w3, prototypes;

  static EncoderGradients zeros_like(const ToyEncoder& enc) {
    EncoderGradients g;
    g.w1 = Matrix(enc.w1.rows, enc.w1.cols);
    g.w2 = Matrix(enc.w2.rows, enc.w2.cols);
    g.w3 = Matrix(enc.w3.rows, enc.w3.cols);
    g.prototypes = Matrix(enc.prototypes.rows, enc.prototypes.cols);
    return g;
  }
};

// Backpropagates one sample's upstream gradients into the weight gradients.
// d_projection is dL/dz; d_prediction (optional) is dL/dp and flows through
// the predictor into z as well.
inline void backward_into(const ToyEncoder& enc, const ForwardActivations& act,
                          std::span<const double> d_projection,
                          std::span<const double> d_prediction,
                          EncoderGradients& grads) {
  std::vector<double> dz(d_projection.begin(), d_projection.end());
  if (!d_prediction.empty()) {
    detail::add_outer(grads.w3, d_prediction, act.projection);
    const std::vector<double> via_pred = detail::matvec_transposed(enc.w3, d_prediction);
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += via_pred[i];
  }
  detail::add_outer(grads.w2, dz, act.features);
  std::vector<double> dh = detail::matvec_transposed(enc.w2, dz);
  if (enc.config.nonlinearity == Nonlinearity::Rectifier) {
    for (std::size_t i = 0; i < dh.size(); ++i) {
      if (act.pre[i] <= 0.0) dh[i] = 0.0;
    }
  }
  detail::add_outer(grads.w1, dh, act.input);
}

// Flat views over all trainable parameters, fixed order; used by SGD and the
// finite-difference harness.
inline std::vector<double*> parameter_view(ToyEncoder& enc) {
  std::vector<double*> view;
  view.reserve(enc.parameter_count());
  for (double& x : enc.w1.data) view.push_back(&x);
  for (double& x : enc.w2.data) view.push_back(&x);
  for (double& x : enc.w3.data) view.push_back(&x);
  for (double& x : enc.prototypes.data) view.push_back(&x);
  return view;
}

inline std::vector<double> gradient_flat(const EncoderGradients& g) {
  std::vector<double> flat;
  flat.reserve(g.w1.data.size() + g.w2.data.size() + g.w3.data.size() +
               g.prototypes.data.size());
  flat.insert(flat.end(), g.w1.data.begin(), g.w1.data.end());
  flat.insert(flat.end(), g.w2.data.begin(), g.w2.data.end());
  flat.insert(flat.end(), g.w3.data.begin(), g.w3.data.end());
  flat.insert(flat.end(), g.prototypes.data.begin(), g.prototypes.data.end());
  return flat;
}

}  // namespace genview
