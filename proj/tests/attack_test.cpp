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

#include "fedleak/attack.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "oracles.hpp"

namespace fedleak {
namespace {

struct Scenario {
  ModelSpec spec;
  Batch batch;
  std::vector<double> labels;
  ParamVector theta;
  LocalTraining schedule;
  Vector target;
};

Scenario logistic_scenario(int b, std::uint64_t seed, LocalTraining schedule = {0.1, 1}) {
  Scenario s{ModelSpec::logistic(5, true), {}, {}, {}, schedule, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < b; ++i) {
    Vector x(5);
    for (Eigen::Index j = 0; j < 5; ++j) x(j) = u(rng);
    const double y = u(rng) < 0.5 ? 0.0 : 1.0;
    s.batch.push_back({x, y});
    s.labels.push_back(y);
  }
  s.theta = init_params(s.spec, seed + 1);
  s.target = update_map(s.spec, s.batch, s.theta, s.schedule);
  return s;
}

TEST(UpdateDistanceTest, ClosedFormValues) {
  const Vector v = Vector::LinSpaced(4, 1, 4);
  EXPECT_EQ(update_distance(v, v, Distance::kSquaredL2).value, 0.0);
  EXPECT_NEAR(update_distance(2 * v, v, Distance::kCosine).value, 0.0, 1e-15);
  EXPECT_NEAR(update_distance(-v, v, Distance::kCosine).value, 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(update_distance(v + Vector::Constant(4, 0.5).cwiseProduct(Vector::Unit(4, 0)),
                                   v, Distance::kSquaredL2)
                       .value,
                   0.25);
  const auto z = update_distance(Vector::Zero(4), v, Distance::kCosine);
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.value, 1.0);
  EXPECT_FALSE(update_distance(Vector::Zero(4), v, Distance::kSquaredL2).degenerate);
}

TEST(AttackObjectiveTest, ZeroAtTheTrueBatch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = logistic_scenario(3, seed, {0.1, 2});
    for (auto metric : {Distance::kSquaredL2, Distance::kCosine}) {
      EXPECT_LE(attack_objective(s.spec, s.theta, s.batch, s.target, s.schedule, metric).value,
                1e-15);
    }
  }
}

TEST(AttackObjectiveTest, CosineIgnoresTargetScale) {
  const auto s = logistic_scenario(2, 4);
  EXPECT_NEAR(
      attack_objective(s.spec, s.theta, s.batch, 3.0 * s.target, s.schedule, Distance::kCosine)
          .value,
      0.0, 1e-15);
}

TEST(ReconstructTest, StartingAtTheTruthStaysThere) {
  const auto s = logistic_scenario(2, 5);
  AttackConfig cfg;
  cfg.rounds = 50;
  const auto tr = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg, s.batch);
  ASSERT_EQ(tr.rounds(), 50u);
  for (std::size_t b = 0; b < s.batch.size(); ++b) EXPECT_EQ(tr.final_batch[b].x, s.batch[b].x);
  EXPECT_EQ(tr.objective.back(), 0.0);
}

TEST(ReconstructTest, SingleSampleLogisticIsRecovered) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = logistic_scenario(1, 100 + seed);
    AttackConfig cfg;
    cfg.seed = seed;
    const auto tr = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
    EXPECT_EQ(tr.rounds(), 2000u);
    EXPECT_FALSE(tr.diverged);
    if (matched_relative_error(tr.final_batch, s.batch) <= 1e-2) ++ok;
  }
  EXPECT_GE(ok, 8);
}

TEST(ReconstructTest, UnderdeterminedBatchIsNotRecovered) {
  // d = 6 < Bp = 20: the attacker drives the objective down but lands on a
  // different batch.
  double worst_single = 0.0, best_four = 1e9;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    AttackConfig cfg;
    cfg.seed = seed;
    const auto one = logistic_scenario(1, 200 + seed);
    const auto four = logistic_scenario(4, 200 + seed);
    worst_single = std::max(
        worst_single,
        matched_relative_error(
            reconstruct(one.spec, one.theta, one.target, one.labels, one.schedule, cfg).final_batch,
            one.batch));
    best_four = std::min(
        best_four,
        matched_relative_error(reconstruct(four.spec, four.theta, four.target, four.labels,
                                           four.schedule, cfg)
                                   .final_batch,
                               four.batch));
  }
  EXPECT_GT(best_four, 100 * worst_single);
  EXPECT_GT(best_four, 0.1);
}

TEST(ReconstructTest, PlainGdObjectiveIsMonotone) {
  const auto s = logistic_scenario(2, 7, {0.1, 2});
  AttackConfig cfg;
  cfg.optimizer = AttackOptimizer::kPlainGd;
  cfg.step_size = 10.0;
  cfg.rounds = 200;
  const auto tr = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
  double prev = tr.initial_objective;
  for (double f : tr.objective) {
    EXPECT_LE(f, prev);
    prev = f;
  }
  EXPECT_LT(tr.objective.back(), tr.initial_objective);
}

TEST(ReconstructTest, AdaGradReducesObjective) {
  const auto s = logistic_scenario(1, 8);
  AttackConfig cfg;
  cfg.optimizer = AttackOptimizer::kAdaptivePerCoordinate;
  cfg.step_size = 0.5;
  cfg.rounds = 300;
  const auto tr = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
  EXPECT_LT(tr.objective.back(), 1e-3 * tr.initial_objective);
}

TEST(ReconstructTest, DeterministicForFixedSeed) {
  const auto s = logistic_scenario(2, 9);
  AttackConfig cfg;
  cfg.rounds = 100;
  cfg.seed = 42;
  const auto a = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
  const auto b = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.mismatch, b.mismatch);
  cfg.seed = 43;
  const auto c = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
  EXPECT_NE(a.objective, c.objective);
}

TEST(ReconstructTest, CosineAttackIsInvariantToLearningRateScale) {
  // Doubling eta doubles every E = 1 update exactly, so the cosine objective
  // along the whole trajectory is unchanged.
  auto s = logistic_scenario(1, 10);
  AttackConfig cfg;
  cfg.metric = Distance::kCosine;
  cfg.rounds = 300;
  const auto a = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
  LocalTraining doubled{2 * s.schedule.learning_rate, 1};
  const Vector target2 = update_map(s.spec, s.batch, s.theta, doubled);
  const auto b = reconstruct(s.spec, s.theta, target2, s.labels, doubled, cfg);
  EXPECT_NEAR(a.objective.back(), b.objective.back(), 1e-6);
}

TEST(ReconstructTest, AnalyticGradientMatchesFiniteDifference) {
  for (auto metric : {Distance::kSquaredL2, Distance::kCosine}) {
    for (const auto& spec : {ModelSpec::linear(3), ModelSpec::logistic(4), ModelSpec::mlp1(2, 3)}) {
      const auto batch = testing::random_batch(spec, 2, 13);
      std::vector<double> labels;
      for (const auto& s : batch) labels.push_back(s.y);
      const auto theta = init_params(spec, 2);
      const LocalTraining sched{0.1, 1};
      const Vector target = update_map(spec, batch, theta, sched);
      AttackConfig cfg;
      cfg.metric = metric;
      cfg.rounds = 30;
      cfg.seed = 5;
      const auto fd = reconstruct(spec, theta, target, labels, sched, cfg);
      cfg.gradient = AttackGradient::kAnalyticE1;
      const auto an = reconstruct(spec, theta, target, labels, sched, cfg);
      ASSERT_EQ(fd.rounds(), an.rounds());
      for (std::size_t t = 0; t < fd.rounds(); ++t) {
        EXPECT_NEAR(fd.objective[t], an.objective[t],
                    1e-5 * std::max(1.0, std::abs(fd.objective[t])));
      }
    }
  }
}

TEST(ReconstructTest, AnalyticGradientRejectsMultipleEpochs) {
  const auto s = logistic_scenario(1, 3, {0.1, 2});
  AttackConfig cfg;
  cfg.gradient = AttackGradient::kAnalyticE1;
  cfg.rounds = 5;
  EXPECT_THROW(reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg), Error);
}

TEST(ReconstructTest, LabelReconstructionKeepsLogisticLabelsInRange) {
  const auto s = logistic_scenario(1, 11);
  AttackConfig cfg;
  cfg.reconstruct_labels = true;
  cfg.rounds = 200;
  const auto tr = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg);
  for (const auto& b : tr.iterates) {
    EXPECT_GE(b[0].y, 0.0);
    EXPECT_LE(b[0].y, 1.0);
  }
  const auto soft = ModelSpec::mlp1(2, 3, 3);
  EXPECT_THROW(reconstruct(soft, init_params(soft, 1), Vector::Zero(soft.param_dim()), {0.0},
                           s.schedule, cfg),
               Error);
}

TEST(ReconstructTest, RejectsBadInputs) {
  const auto s = logistic_scenario(1, 12);
  AttackConfig cfg;
  EXPECT_THROW(reconstruct(s.spec, s.theta, s.target, {}, s.schedule, cfg), Error);
  EXPECT_THROW(reconstruct(s.spec, s.theta, Vector::Zero(3), s.labels, s.schedule, cfg), Error);
  cfg.rounds = 0;
  EXPECT_THROW(reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg), Error);
}

TEST(RegretStatisticTest, SumOverRootT) {
  ReconstructionTrace tr;
  tr.mismatch = {1.0, 2.0, 3.0, 2.0};
  const auto r = regret_statistic(tr);
  EXPECT_DOUBLE_EQ(r.sum_mismatch, 8.0);
  EXPECT_DOUBLE_EQ(r.c_hat, 4.0);
  EXPECT_EQ(regret_statistic(ReconstructionTrace{}).c_hat, 0.0);
}

TEST(RegretStatisticTest, MismatchVanishesAtTheTruth) {
  const auto s = logistic_scenario(3, 14);
  AttackConfig cfg;
  cfg.rounds = 3;
  const auto tr = reconstruct(s.spec, s.theta, s.target, s.labels, s.schedule, cfg, s.batch);
  for (double m : tr.mismatch) EXPECT_LE(m, 1e-12);
}

TEST(MatchedRelativeErrorTest, PermutationInvariant) {
  const auto s = logistic_scenario(4, 15);
  Batch shuffled{s.batch[2], s.batch[0], s.batch[3], s.batch[1]};
  EXPECT_EQ(matched_relative_error(shuffled, s.batch), 0.0);
  Batch shifted = s.batch;
  shifted[1].x(0) += 0.3;
  double den = 0.0;
  for (const auto& b : s.batch) den += b.x.squaredNorm();
  EXPECT_NEAR(matched_relative_error(shifted, s.batch), 0.3 / std::sqrt(den), 1e-12);
}

}  // namespace
}  // namespace fedleak
