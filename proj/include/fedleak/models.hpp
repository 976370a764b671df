/*
 * Copyright 2026 The fedleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Small differentiable models: per-sample loss, exact gradients with respect
// to parameters and inputs, and the mixed second derivative
// d(grad_theta)/dx used by the update-Jacobian analysis.
//
// Parameter layouts:
//   linear / logistic : [w_1 .. w_p, (b)]            (bias optional)
//   mlp1              : [W1 (h x p, row-major), b1 (h), W2 (o x h, row-major),
//                        b2 (o)], tanh hidden layer.
// mlp1 with output_dim == 1 uses squared error; output_dim >= 2 uses softmax
// cross-entropy with an integer label in [0, output_dim).

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "fedleak/common.hpp"
#include "fedleak/seed.hpp"

namespace fedleak {

enum class ModelKind { kLinearRegression, kLogisticRegression, kMlp1 };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinearRegression:
      return "linear-regression";
    case ModelKind::kLogisticRegression:
      return "logistic-regression";
    case ModelKind::kMlp1:
      return "mlp1";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "linear-regression" || s == "linear") return ModelKind::kLinearRegression;
  if (s == "logistic-regression" || s == "logistic") return ModelKind::kLogisticRegression;
  if (s == "mlp1") return ModelKind::kMlp1;
  throw Error("unknown model kind: " + std::string(s));
}

struct ModelSpec {
  ModelKind kind = ModelKind::kLinearRegression;
  int input_dim = 1;
  int hidden_dim = 0;  // mlp1 only
  int output_dim = 1;
  bool bias = true;  // linear / logistic only; mlp1 always has biases

  static ModelSpec linear(int p, bool bias = true) {
    return {ModelKind::kLinearRegression, p, 0, 1, bias};
  }
  static ModelSpec logistic(int p, bool bias = true) {
    return {ModelKind::kLogisticRegression, p, 0, 1, bias};
  }
  static ModelSpec mlp1(int p, int hidden, int out = 1) {
    return {ModelKind::kMlp1, p, hidden, out, true};
  }

  int param_dim() const {
    switch (kind) {
      case ModelKind::kLinearRegression:
      case ModelKind::kLogisticRegression:
        return input_dim + (bias ? 1 : 0);
      case ModelKind::kMlp1:
        return input_dim * hidden_dim + hidden_dim + hidden_dim * output_dim +
               output_dim;
    }
    return 0;
  }

  bool classification() const {
    return kind == ModelKind::kLogisticRegression ||
           (kind == ModelKind::kMlp1 && output_dim >= 2);
  }

  void validate() const {
    if (input_dim < 1) throw Error("ModelSpec: input_dim must be >= 1");
    if (output_dim < 1) throw Error("ModelSpec: output_dim must be >= 1");
    if (kind == ModelKind::kMlp1) {
      if (hidden_dim < 1) throw Error("ModelSpec: mlp1 needs hidden_dim >= 1");
    } else if (output_dim != 1) {
      throw Error("ModelSpec: linear/logistic models have a scalar output");
    }
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Labels must be finite; classification labels must lie in the label set.
inline void validate_sample(const ModelSpec& spec, const Vector& x, double y) {
  if (x.size() != spec.input_dim) {
    throw Error("sample dimension " + std::to_string(x.size()) +
                " does not match input_dim " + std::to_string(spec.input_dim));
  }
  if (!x.allFinite() || !std::isfinite(y)) throw Error("sample has non-finite entries");
  if (spec.kind == ModelKind::kLogisticRegression && y != 0.0 && y != 1.0) {
    throw Error("logistic label must be 0 or 1");
  }
  if (spec.kind == ModelKind::kMlp1 && spec.output_dim >= 2) {
    if (y != std::floor(y) || y < 0 || y >= spec.output_dim) {
      throw Error("class label out of range");
    }
  }
}

namespace detail {

inline void check_dims(const ModelSpec& spec, const ParamVector& theta, const Vector& x) {
  if (theta.size() != spec.param_dim()) {
    throw Error("parameter length " + std::to_string(theta.size()) +
                " does not match param_dim " + std::to_string(spec.param_dim()));
  }
  if (x.size() != spec.input_dim) {
    throw Error("input length " + std::to_string(x.size()) +
                " does not match input_dim " + std::to_string(spec.input_dim));
  }
}

inline double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Generalized linear model z = w.x + b with scalar link loss.
struct GlmTerms {
  double loss;
  double dz;   // dl/dz
  double dzz;  // d2l/dz2
};

inline GlmTerms glm_terms(const ModelSpec& spec, const ParamVector& theta,
                          const Vector& x, double y) {
  const int p = spec.input_dim;
  double z = theta.head(p).dot(x);
  if (spec.bias) z += theta(p);
  if (spec.kind == ModelKind::kLinearRegression) {
    const double r = z - y;
    return {0.5 * r * r, r, 1.0};
  }
  const double s = sigmoid(z);
  // softplus(z) - y z is the cross-entropy for y in [0, 1].
  return {softplus(z) - y * z, s - y, s * (1.0 - s)};
}

inline Vector augmented(const ModelSpec& spec, const Vector& x) {
  if (!spec.bias) return x;
  Vector xa(x.size() + 1);
  xa.head(x.size()) = x;
  xa(x.size()) = 1.0;
  return xa;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MlpView {
  Eigen::Map<const RowMajor> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const RowMajor> w2;
  Eigen::Map<const Vector> b2;

  MlpView(const ModelSpec& s, const ParamVector& t)
      : w1(t.data(), s.hidden_dim, s.input_dim),
        b1(t.data() + s.hidden_dim * s.input_dim, s.hidden_dim),
        w2(t.data() + s.hidden_dim * s.input_dim + s.hidden_dim, s.output_dim,
           s.hidden_dim),
        b2(t.data() + s.hidden_dim * s.input_dim + s.hidden_dim +
               s.output_dim * s.hidden_dim,
           s.output_dim) {}
};

struct MlpForward {
  Vector h;         // tanh activations
  Vector out;       // output logits / prediction
  double loss = 0;  // per-sample loss
  Vector d_out;     // dl/d out
  Matrix h_out;     // d2l/d out^2
};

inline MlpForward mlp_forward(const ModelSpec& spec, const MlpView& m,
                              const Vector& x, double y) {
  MlpForward f;
  f.h = (m.w1 * x + m.b1).array().tanh().matrix();
  f.out = m.w2 * f.h + m.b2;
  const int o = spec.output_dim;
  if (o == 1) {
    const double r = f.out(0) - y;
    f.loss = 0.5 * r * r;
    f.d_out = Vector::Constant(1, r);
    f.h_out = Matrix::Identity(1, 1);
    return f;
  }
  const double mx = f.out.maxCoeff();
  const Vector e = (f.out.array() - mx).exp().matrix();
  const double z = e.sum();
  const Vector s = e / z;
  const int label = static_cast<int>(y);
  f.loss = (mx + std::log(z)) - f.out(label);
  f.d_out = s;
  f.d_out(label) -= 1.0;
  f.h_out = Matrix(s.asDiagonal()) - s * s.transpose();
  return f;
}

// Writes (dW1, db1, dW2, db2) into a flat vector with the parameter layout.
inline void pack_mlp(const ModelSpec& s, const Matrix& dw1, const Vector& db1,
                     const Matrix& dw2, const Vector& db2, Eigen::Ref<Vector> out) {
  const int h = s.hidden_dim, p = s.input_dim, o = s.output_dim;
  Eigen::Map<RowMajor>(out.data(), h, p) = dw1;
  out.segment(h * p, h) = db1;
  Eigen::Map<RowMajor>(out.data() + h * p + h, o, h) = dw2;
  out.segment(h * p + h + o * h, o) = db2;
}

}  // namespace detail

/// Uniform entries in [-1/sqrt(fan_in), 1/sqrt(fan_in)] where fan_in is the
/// input width of the layer owning the parameter. Deterministic in `seed`.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, "init_params"));
  ParamVector theta(spec.param_dim());
  auto fill = [&](Eigen::Index begin, Eigen::Index count, int fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index i = begin; i < begin + count; ++i) theta(i) = u(rng);
  };
  if (spec.kind == ModelKind::kMlp1) {
    const int h = spec.hidden_dim, p = spec.input_dim, o = spec.output_dim;
    fill(0, h * p + h, p);
    fill(h * p + h, o * h + o, h);
  } else {
    fill(0, theta.size(), spec.input_dim);
  }
  return theta;
}

inline double loss(const ModelSpec& spec, const ParamVector& theta, const Vector& x,
                   double y) {
  detail::check_dims(spec, theta, x);
  if (spec.kind == ModelKind::kMlp1) {
    return detail::mlp_forward(spec, detail::MlpView(spec, theta), x, y).loss;
  }
  return detail::glm_terms(spec, theta, x, y).loss;
}

inline Vector grad_theta(const ModelSpec& spec, const ParamVector& theta,
                         const Vector& x, double y) {
  detail::check_dims(spec, theta, x);
  if (spec.kind != ModelKind::kMlp1) {
    const auto t = detail::glm_terms(spec, theta, x, y);
    return t.dz * detail::augmented(spec, x);
  }
  const detail::MlpView m(spec, theta);
  const auto f = detail::mlp_forward(spec, m, x, y);
  const Vector d_a = ((m.w2.transpose() * f.d_out).array() *
                      (1.0 - f.h.array().square())).matrix();
  Vector g(spec.param_dim());
  detail::pack_mlp(spec, d_a * x.transpose(), d_a, f.d_out * f.h.transpose(), f.d_out,
                   g);
  return g;
}

inline Vector grad_x(const ModelSpec& spec, const ParamVector& theta, const Vector& x,
                     double y) {
  detail::check_dims(spec, theta, x);
  if (spec.kind != ModelKind::kMlp1) {
    const auto t = detail::glm_terms(spec, theta, x, y);
    return t.dz * theta.head(spec.input_dim);
  }
  const detail::MlpView m(spec, theta);
  const auto f = detail::mlp_forward(spec, m, x, y);
  const Vector d_a = ((m.w2.transpose() * f.d_out).array() *
                      (1.0 - f.h.array().square())).matrix();
  return m.w1.transpose() * d_a;
}

/// d x p matrix with entry (a, c) = d(grad_theta)_a / d x_c. Only the p
/// user-visible features are differentiated; the bias column is constant.
inline Matrix mixed_jacobian(const ModelSpec& spec, const ParamVector& theta,
                             const Vector& x, double y) {
  detail::check_dims(spec, theta, x);
  const int p = spec.input_dim;
  const int d = spec.param_dim();
  if (spec.kind != ModelKind::kMlp1) {
    const auto t = detail::glm_terms(spec, theta, x, y);
    Matrix j = t.dzz * detail::augmented(spec, x) * theta.head(p).transpose();
    j.topRows(p).diagonal().array() += t.dz;
    return j;
  }

  const detail::MlpView m(spec, theta);
  const auto f = detail::mlp_forward(spec, m, x, y);
  const Vector sech2 = (1.0 - f.h.array().square()).matrix();
  const Vector d_h = m.w2.transpose() * f.d_out;
  const Vector d_a = (d_h.array() * sech2.array()).matrix();

  Matrix j(d, p);
  for (int c = 0; c < p; ++c) {
    const Vector dh_c = (sech2.array() * m.w1.col(c).array()).matrix();
    const Vector dd_out = f.h_out * (m.w2 * dh_c);
    const Vector dd_h = m.w2.transpose() * dd_out;
    const Vector dd_a = (dd_h.array() * sech2.array() -
                         2.0 * d_h.array() * f.h.array() * dh_c.array())
                            .matrix();
    Matrix dw1 = dd_a * x.transpose();
    dw1.col(c) += d_a;
    detail::pack_mlp(spec, dw1, dd_a, dd_out * f.h.transpose() + f.d_out * dh_c.transpose(),
                     dd_out, j.col(c));
  }
  return j;
}

struct GradientCheckReport {
  double max_rel_error_theta = 0.0;
  double max_rel_error_x = 0.0;
  bool ok = true;
  std::string message;
};

// Relative error with a unit floor on the denominator, so entries whose true
// value is ~0 are compared in absolute terms.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

/// Compares grad_theta and grad_x against central differences of loss.
inline GradientCheckReport check_gradients(const ModelSpec& spec, const ParamVector& theta,
                                           const Vector& x, double y, double h = 1e-6) {
  GradientCheckReport report;
  if (!(h > 0)) {
    report.ok = false;
    report.message = "step must be positive";
    return report;
  }
  if (theta.size() != spec.param_dim() || x.size() != spec.input_dim) {
    report.ok = false;
    report.message = "dimension mismatch";
    return report;
  }
  if (!theta.allFinite() || !x.allFinite() || !std::isfinite(y)) {
    report.ok = false;
    report.message = "non-finite input";
    return report;
  }

  const Vector gt = grad_theta(spec, theta, x, y);
  ParamVector tp = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    tp(i) = theta(i) + h;
    const double up = loss(spec, tp, x, y);
    tp(i) = theta(i) - h;
    const double down = loss(spec, tp, x, y);
    tp(i) = theta(i);
    report.max_rel_error_theta =
        std::max(report.max_rel_error_theta, relative_error(gt(i), (up - down) / (2 * h)));
  }

  const Vector gx = grad_x(spec, theta, x, y);
  Vector xp = x;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    xp(c) = x(c) + h;
    const double up = loss(spec, theta, xp, y);
    xp(c) = x(c) - h;
    const double down = loss(spec, theta, xp, y);
    xp(c) = x(c);
    report.max_rel_error_x =
        std::max(report.max_rel_error_x, relative_error(gx(c), (up - down) / (2 * h)));
  }
  if (!std::isfinite(report.max_rel_error_theta) || !std::isfinite(report.max_rel_error_x)) {
    report.ok = false;
    report.message = "non-finite finite-difference result";
  }
  return report;
}

}  // namespace fedleak
