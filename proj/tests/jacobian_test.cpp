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

#include "fedleak/jacobian.hpp"

#include <limits>
#include <random>

#include "gtest/gtest.h"
#include "oracles.hpp"

namespace fedleak {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

TEST(UpdateJacobianTest, ZeroLearningRateGivesZeroMatrix) {
  const auto spec = ModelSpec::mlp1(2, 3);
  const auto batch = testing::random_batch(spec, 3, 1);
  const auto uj = update_jacobian_fd(spec, batch, init_params(spec, 1), {0.0, 2});
  EXPECT_EQ(uj.jacobian, Matrix::Zero(spec.param_dim(), 6));
  EXPECT_EQ(uj.numerical_rank, 0);
  const auto ua = update_jacobian_analytic_e1(spec, batch, init_params(spec, 1), {0.0, 1});
  EXPECT_TRUE(ua.jacobian.isZero(0.0));
}

TEST(UpdateJacobianTest, LinearSingleSampleClosedForm) {
  const auto spec = ModelSpec::linear(2, false);
  const Batch batch{{vec({2, 1}), 1.0}};
  Matrix expected(2, 2);
  expected << -0.3, 0, -0.1, -0.1;
  const LocalTraining sched{0.1, 1};
  const auto fd = update_jacobian_fd(spec, batch, vec({1, 0}), sched);
  const auto an = update_jacobian_analytic_e1(spec, batch, vec({1, 0}), sched);
  EXPECT_LE((fd.jacobian - expected).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((an.jacobian - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((fd.jacobian - an.jacobian).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(fd.method, JacobianMethod::kFiniteDifference);
  EXPECT_EQ(an.method, JacobianMethod::kAnalyticE1);
}

TEST(UpdateJacobianTest, MultiEpochMatchesDirectionalDerivatives) {
  const auto spec = ModelSpec::mlp1(2, 4);
  const auto batch = testing::random_batch(spec, 3, 17);
  const auto theta = init_params(spec, 5);
  const LocalTraining sched{0.2, 2};
  const auto uj = update_jacobian_fd(spec, batch, theta, sched);
  const Vector x0 = flatten_features(batch);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int k = 0; k < 5; ++k) {
    Vector v(x0.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n(rng);
    v.normalize();
    // Oracle: central difference of the update map along v, step 1e-5.
    const double h = 1e-5;
    const Vector up = update_map(spec, with_features(batch, x0 + h * v), theta, sched);
    const Vector down = update_map(spec, with_features(batch, x0 - h * v), theta, sched);
    const Vector directional = (up - down) / (2 * h);
    EXPECT_LE((uj.jacobian * v - directional).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(UpdateJacobianTest, AnalyticRefusesMultipleEpochs) {
  const auto spec = ModelSpec::linear(2);
  const auto batch = testing::random_batch(spec, 2, 1);
  EXPECT_THROW(update_jacobian_analytic_e1(spec, batch, init_params(spec, 0), {0.1, 2}), Error);
}

TEST(UpdateJacobianTest, DuplicateSamplesGiveIdenticalBlocks) {
  const auto spec = ModelSpec::logistic(3);
  auto batch = testing::random_batch(spec, 1, 4);
  batch.push_back(batch.front());
  const auto uj = update_jacobian_analytic_e1(spec, batch, init_params(spec, 2), {0.5, 1});
  EXPECT_EQ(uj.jacobian.leftCols(3), uj.jacobian.rightCols(3));
}

TEST(UpdateJacobianTest, AnalyticAgreesWithFiniteDifferenceOnE1) {
  for (const auto& spec : {ModelSpec::linear(3), ModelSpec::logistic(4), ModelSpec::mlp1(2, 4)}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto batch = testing::random_batch(spec, 3, seed + 20);
      const auto theta = testing::random_instance(spec, seed).theta;
      const LocalTraining sched{0.1, 1};
      const auto fd = update_jacobian_fd(spec, batch, theta, sched);
      const auto an = update_jacobian_analytic_e1(spec, batch, theta, sched);
      EXPECT_LE((fd.jacobian - an.jacobian).cwiseAbs().maxCoeff(), 1e-4);
    }
  }
}

TEST(NumericalRankTest, ZeroMatrixHasRankZero) {
  const auto r = numerical_rank(Matrix::Zero(4, 6));
  EXPECT_EQ(r.rank, 0);
}

TEST(NumericalRankTest, WideGaussianHasFullRowRank) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix m = gaussian_matrix(5, 8, seed);
    // Oracle: rank-revealing QR, an independent factorization.
    Eigen::ColPivHouseholderQR<Matrix> qr(m);
    EXPECT_EQ(qr.rank(), 5);
    const auto r = numerical_rank(m);
    EXPECT_EQ(r.rank, 5);
    for (Eigen::Index i = 1; i < r.singular_values.size(); ++i) {
      EXPECT_GE(r.singular_values(i - 1), r.singular_values(i));
    }
  }
}

TEST(NumericalRankTest, RepeatedColumnsLoseRank) {
  Matrix m = gaussian_matrix(8, 5, 3);
  m.col(4) = m.col(1);
  EXPECT_LE(numerical_rank(m).rank, 4);
}

TEST(NumericalRankTest, RejectsBadInput) {
  Matrix m = Matrix::Ones(2, 2);
  EXPECT_THROW(numerical_rank(m, 0.0), Error);
  EXPECT_THROW(numerical_rank(m, 1.0), Error);
  m(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(numerical_rank(m), Error);
}

TEST(NullSpaceTest, ZeroMatrixKernelIsEverything) {
  const Matrix basis = null_space_basis(Matrix::Zero(3, 4));
  ASSERT_EQ(basis.rows(), 4);
  ASSERT_EQ(basis.cols(), 4);
  EXPECT_LE((basis.transpose() * basis - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NullSpaceTest, FullColumnRankHasEmptyBasis) {
  EXPECT_EQ(null_space_basis(gaussian_matrix(6, 4, 1)).cols(), 0);
}

TEST(NullSpaceTest, CoordinateKernel) {
  Matrix j(2, 3);
  j << 1, 0, 0, 0, 1, 0;
  const Matrix basis = null_space_basis(j);
  ASSERT_EQ(basis.cols(), 1);
  EXPECT_NEAR(std::abs(basis(2, 0)), 1.0, 1e-15);
  EXPECT_NEAR(basis(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(basis(1, 0), 0.0, 1e-15);
}

TEST(NullSpaceTest, BasisIsAnnihilatedOnUpdateJacobians) {
  const auto spec = ModelSpec::mlp1(2, 4);
  for (int b : {9, 10, 12}) {
    const auto batch = testing::random_batch(spec, b, static_cast<std::uint64_t>(b));
    const auto uj = update_jacobian_fd(spec, batch, init_params(spec, 1), {0.1, 2});
    EXPECT_LE(uj.numerical_rank, std::min<int>(17, 2 * b));
    const Matrix basis = null_space_basis(uj.jacobian);
    EXPECT_GE(basis.cols(), 2 * b - 17);
    const double spectral = uj.singular_values(0);
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
      EXPECT_LE((uj.jacobian * basis.col(c)).norm(), 1e-8 * spectral);
    }
    EXPECT_LE((basis.transpose() * basis - Matrix::Identity(basis.cols(), basis.cols()))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(SufficientConditionTest, StrictInequality) {
  EXPECT_TRUE(check_sufficient_condition(5, 3, 2));
  EXPECT_FALSE(check_sufficient_condition(6, 3, 2));
  EXPECT_FALSE(check_sufficient_condition(8, 4, 2));
  EXPECT_THROW(check_sufficient_condition(0, 1, 1), Error);
}

TEST(SufficientConditionTest, ImpliesNonemptyKernel) {
  for (const auto& spec : {ModelSpec::linear(2), ModelSpec::logistic(3), ModelSpec::mlp1(2, 2)}) {
    for (int b = 1; b <= 6; ++b) {
      if (!check_sufficient_condition(spec.param_dim(), b, spec.input_dim)) continue;
      const auto batch = testing::random_batch(spec, b, static_cast<std::uint64_t>(b + 40));
      const auto uj = update_jacobian_fd(spec, batch, init_params(spec, 2), {0.1, 1});
      EXPECT_GT(null_space_basis(uj.jacobian).cols(), 0);
    }
  }
}

TEST(CollisionTest, ZeroMagnitudeHasExactlyZeroGap) {
  const auto spec = ModelSpec::mlp1(2, 4);
  const auto batch = testing::random_batch(spec, 10, 2);
  const auto cert = construct_collision(spec, batch, init_params(spec, 3), {0.1, 1}, 0.0, 1);
  EXPECT_EQ(cert.update_gap, 0.0);
  EXPECT_EQ(cert.delta_x_norm, 0.0);
}

TEST(CollisionTest, LinearGapIsQuadraticInMagnitude) {
  // d = 3 < Bp = 6. For E = 1 the update is exactly quadratic in x, so
  // gap / magnitude^2 is a constant C up to the error of the FD kernel.
  const auto spec = ModelSpec::linear(2, true);
  const auto batch = testing::random_batch(spec, 3, 8);
  const auto theta = init_params(spec, 1);
  std::vector<double> c;
  for (double m : {1e-2, 1e-3, 1e-4}) {
    const auto cert = construct_collision(spec, batch, theta, {0.1, 1}, m, 7);
    c.push_back(cert.update_gap / (m * m));
  }
  EXPECT_GT(c[0], 0.0);
  EXPECT_NEAR(c[1] / c[0], 1.0, 0.01);
  EXPECT_NEAR(c[2] / c[0], 1.0, 0.05);
}

TEST(CollisionTest, Mlp1NearCollisionAndSecondOrderScaling) {
  const auto spec = ModelSpec::mlp1(2, 4);
  const auto batch = testing::random_batch(spec, 10, 5);
  const auto theta = init_params(spec, 11);
  const LocalTraining sched{0.1, 2};
  const auto base = construct_collision(spec, batch, theta, sched, 1e-3, 3);
  EXPECT_GT(base.kernel_dim, 0);
  EXPECT_NEAR(base.delta_x_norm, 1e-3, 1e-15);
  EXPECT_LE(base.update_gap / base.update_norm, 1e-4);
  for (double c : {0.1, 0.01}) {
    const auto scaled = construct_collision(spec, batch, theta, sched, 1e-3 * c, 3);
    const double ratio = scaled.update_gap / base.update_gap;
    EXPECT_GE(ratio, c * c / 3);
    EXPECT_LE(ratio, c * c * 3);
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    EXPECT_EQ(base.perturbed_batch[b].y, batch[b].y);
  }
}

TEST(CollisionTest, TrivialKernelThrows) {
  const auto spec = ModelSpec::mlp1(2, 4);
  const auto batch = testing::random_batch(spec, 2, 5);
  EXPECT_THROW(construct_collision(spec, batch, init_params(spec, 1), {0.1, 1}, 1e-3, 3), Error);
}

}  // namespace
}  // namespace fedleak
