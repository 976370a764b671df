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

// Jacobian of the local model update with respect to the batch features,
// its numerical rank and kernel, and near-collision batches built from the
// kernel.
//
// Column ordering is sample-major: column b * p + c is feature c of sample b.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "fedleak/common.hpp"
#include "fedleak/fedcore.hpp"
#include "fedleak/models.hpp"
#include "fedleak/seed.hpp"

namespace fedleak {

inline constexpr double kDefaultRankTolerance = 1e-10;
inline constexpr double kDefaultFdStep = 1e-6;

enum class JacobianMethod { kFiniteDifference, kAnalyticE1 };

inline std::string_view to_string(JacobianMethod m) {
  return m == JacobianMethod::kFiniteDifference ? "finite-difference" : "analytic-e1";
}

inline JacobianMethod parse_jacobian_method(std::string_view s) {
  if (s == "finite-difference" || s == "fd") return JacobianMethod::kFiniteDifference;
  if (s == "analytic-e1" || s == "analytic") return JacobianMethod::kAnalyticE1;
  throw Error("unknown jacobian method: " + std::string(s));
}

struct RankResult {
  int rank = 0;
  Vector singular_values;  // nonincreasing
};

struct UpdateJacobian {
  Matrix jacobian;  // d x Bp
  Vector singular_values;
  int numerical_rank = 0;
  double tolerance = kDefaultRankTolerance;
  JacobianMethod method = JacobianMethod::kFiniteDifference;

  int kernel_dim() const { return static_cast<int>(jacobian.cols()) - numerical_rank; }
};

/// Rank = number of singular values above tol * sigma_max.
inline RankResult numerical_rank(const Matrix& j, double tol = kDefaultRankTolerance) {
  if (!(tol > 0 && tol < 1)) throw Error("numerical_rank: tolerance must be in (0, 1)");
  if (!j.allFinite()) throw Error("numerical_rank: matrix has non-finite entries");
  RankResult r;
  if (j.size() == 0) {
    r.singular_values = Vector();
    return r;
  }
  Eigen::JacobiSVD<Matrix> svd(j);
  r.singular_values = svd.singularValues();
  const double smax = r.singular_values.size() ? r.singular_values(0) : 0.0;
  if (smax <= 0) return r;
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
    if (r.singular_values(i) > tol * smax) ++r.rank;
  }
  return r;
}

/// Orthonormal basis of Ker(J) as the columns of a Bp x (Bp - rank) matrix,
/// taken from the trailing right singular vectors.
inline Matrix null_space_basis(const Matrix& j, double tol = kDefaultRankTolerance) {
  if (!j.allFinite()) throw Error("null_space_basis: matrix has non-finite entries");
  const Eigen::Index n = j.cols();
  if (n == 0) return Matrix(0, 0);
  Eigen::JacobiSVD<Matrix> svd(j, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  Eigen::Index rank = 0;
  if (smax > 0) {
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > tol * smax) ++rank;
    }
  }
  return svd.matrixV().rightCols(n - rank);
}

namespace detail {

inline UpdateJacobian finish_jacobian(Matrix j, double tol, JacobianMethod method) {
  UpdateJacobian out;
  auto rank = numerical_rank(j, tol);
  out.jacobian = std::move(j);
  out.singular_values = std::move(rank.singular_values);
  out.numerical_rank = rank.rank;
  out.tolerance = tol;
  out.method = method;
  return out;
}

}  // namespace detail

/// Central differences of the E-epoch single-batch update map, one column
/// per (sample, feature). Labels are held fixed.
inline UpdateJacobian update_jacobian_fd(const ModelSpec& spec, const Batch& batch,
                                         const ParamVector& theta,
                                         const LocalTraining& schedule,
                                         double h = kDefaultFdStep,
                                         double tol = kDefaultRankTolerance) {
  if (!(h > 0)) throw Error("update_jacobian_fd: step must be positive");
  if (batch.empty()) throw Error("update_jacobian_fd: empty batch");
  const int p = spec.input_dim;
  const Eigen::Index cols = static_cast<Eigen::Index>(batch.size()) * p;
  Matrix j(spec.param_dim(), cols);
  Batch work = batch;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (int c = 0; c < p; ++c) {
      const double x0 = batch[b].x(c);
      work[b].x(c) = x0 + h;
      const Vector up = update_map(spec, work, theta, schedule);
      work[b].x(c) = x0 - h;
      const Vector down = update_map(spec, work, theta, schedule);
      work[b].x(c) = x0;
      j.col(static_cast<Eigen::Index>(b) * p + c) = (up - down) / (2 * h);
    }
  }
  if (!j.allFinite()) throw Error("update_jacobian_fd: non-finite entries (check step size)");
  return detail::finish_jacobian(std::move(j), tol, JacobianMethod::kFiniteDifference);
}

/// Closed form for a single local step: J = -(eta / B) [M_1 ... M_B] with
/// M_b the mixed Jacobian d(grad_theta)/dx at sample b. Exact only for E = 1,
/// since later epochs move theta as a function of the batch.
inline UpdateJacobian update_jacobian_analytic_e1(const ModelSpec& spec, const Batch& batch,
                                                  const ParamVector& theta,
                                                  const LocalTraining& schedule,
                                                  double tol = kDefaultRankTolerance) {
  if (schedule.local_epochs != 1) {
    throw Error("update_jacobian_analytic_e1: requires E = 1; use the finite-difference method");
  }
  if (batch.empty()) throw Error("update_jacobian_analytic_e1: empty batch");
  const int p = spec.input_dim;
  const double scale = -schedule.learning_rate / static_cast<double>(batch.size());
  Matrix j(spec.param_dim(), static_cast<Eigen::Index>(batch.size()) * p);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    j.middleCols(static_cast<Eigen::Index>(b) * p, p) =
        scale * mixed_jacobian(spec, theta, batch[b].x, batch[b].y);
  }
  return detail::finish_jacobian(std::move(j), tol, JacobianMethod::kAnalyticE1);
}

inline UpdateJacobian update_jacobian(const ModelSpec& spec, const Batch& batch,
                                      const ParamVector& theta, const LocalTraining& schedule,
                                      JacobianMethod method, double h = kDefaultFdStep,
                                      double tol = kDefaultRankTolerance) {
  if (method == JacobianMethod::kAnalyticE1) {
    return update_jacobian_analytic_e1(spec, batch, theta, schedule, tol);
  }
  return update_jacobian_fd(spec, batch, theta, schedule, h, tol);
}

/// Sufficient condition for a nontrivial kernel: d < B * p.
inline bool check_sufficient_condition(long d, long batch_size, long p) {
  if (d < 1 || batch_size < 1 || p < 1) throw Error("check_sufficient_condition: positive integers required");
  return d < batch_size * p;
}

struct CollisionCertificate {
  Batch base_batch;
  Batch perturbed_batch;
  Vector delta_x;        // length Bp, sample-major
  double delta_x_norm = 0.0;
  double update_gap = 0.0;   // ||update(x + dx) - update(x)||
  double update_norm = 0.0;  // ||update(x)||
  int kernel_dim = 0;
};

struct CollisionOptions {
  double fd_step = kDefaultFdStep;
  double rank_tolerance = kDefaultRankTolerance;
};

/// Builds dx = magnitude * (seeded random unit vector in Ker(J)) with J from
/// finite differences, then re-runs local training on x + dx to measure the
/// actual gap.
inline CollisionCertificate construct_collision(const ModelSpec& spec, const Batch& batch,
                                                const ParamVector& theta,
                                                const LocalTraining& schedule, double magnitude,
                                                std::uint64_t seed,
                                                const CollisionOptions& options = {}) {
  if (!(magnitude >= 0)) throw Error("construct_collision: magnitude must be >= 0");
  const auto uj = update_jacobian_fd(spec, batch, theta, schedule, options.fd_step,
                                     options.rank_tolerance);
  const Matrix basis = null_space_basis(uj.jacobian, options.rank_tolerance);
  if (basis.cols() == 0) throw Error("construct_collision: Jacobian has a trivial kernel");

  Rng rng(derive_seed(seed, "collision"));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector coeff(basis.cols());
  for (Eigen::Index i = 0; i < coeff.size(); ++i) coeff(i) = normal(rng);
  Vector direction = basis * coeff;
  direction /= direction.norm();

  CollisionCertificate cert;
  cert.kernel_dim = static_cast<int>(basis.cols());
  cert.base_batch = batch;
  cert.delta_x = magnitude * direction;
  cert.delta_x_norm = cert.delta_x.norm();
  cert.perturbed_batch = with_features(batch, flatten_features(batch) + cert.delta_x);
  const Vector base = update_map(spec, cert.base_batch, theta, schedule);
  const Vector moved = update_map(spec, cert.perturbed_batch, theta, schedule);
  cert.update_gap = (moved - base).norm();
  cert.update_norm = base.norm();
  return cert;
}

}  // namespace fedleak
