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

// Gradient-inversion attacker. Given the global model and one observed
// update, it searches for a batch whose simulated local update is closest to
// the observation under a chosen distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fedleak/common.hpp"
#include "fedleak/fedcore.hpp"
#include "fedleak/matching.hpp"
#include "fedleak/models.hpp"
#include "fedleak/seed.hpp"

namespace fedleak {

enum class Distance { kSquaredL2, kCosine };
enum class AttackOptimizer { kPlainGd, kAdaptivePerCoordinate, kAdaptiveMoment };
enum class AttackInit { kZeros, kGaussian, kUniform };
enum class AttackGradient { kFiniteDifference, kAnalyticE1 };
enum class StepSchedule { kConstant, kMultiStep };

inline std::string_view to_string(Distance d) {
  return d == Distance::kSquaredL2 ? "squared-l2" : "cosine";
}
inline std::string_view to_string(AttackOptimizer o) {
  switch (o) {
    case AttackOptimizer::kPlainGd:
      return "plain-gd";
    case AttackOptimizer::kAdaptivePerCoordinate:
      return "adaptive-per-coordinate";
    case AttackOptimizer::kAdaptiveMoment:
      return "adaptive-moment";
  }
  return "unknown";
}
inline std::string_view to_string(AttackInit i) {
  switch (i) {
    case AttackInit::kZeros:
      return "zeros";
    case AttackInit::kGaussian:
      return "gaussian";
    case AttackInit::kUniform:
      return "uniform";
  }
  return "unknown";
}
inline std::string_view to_string(AttackGradient g) {
  return g == AttackGradient::kFiniteDifference ? "finite-difference" : "analytic-e1";
}
inline std::string_view to_string(StepSchedule s) {
  return s == StepSchedule::kConstant ? "constant" : "multistep";
}

inline Distance parse_distance(std::string_view s) {
  if (s == "squared-l2") return Distance::kSquaredL2;
  if (s == "cosine") return Distance::kCosine;
  throw Error("unknown distance: " + std::string(s));
}
inline AttackOptimizer parse_attack_optimizer(std::string_view s) {
  if (s == "plain-gd") return AttackOptimizer::kPlainGd;
  if (s == "adaptive-per-coordinate" || s == "adagrad") return AttackOptimizer::kAdaptivePerCoordinate;
  if (s == "adaptive-moment" || s == "adam") return AttackOptimizer::kAdaptiveMoment;
  throw Error("unknown attack optimizer: " + std::string(s));
}
inline AttackInit parse_attack_init(std::string_view s) {
  if (s == "zeros") return AttackInit::kZeros;
  if (s == "gaussian") return AttackInit::kGaussian;
  if (s == "uniform") return AttackInit::kUniform;
  throw Error("unknown attack init: " + std::string(s));
}
inline AttackGradient parse_attack_gradient(std::string_view s) {
  if (s == "finite-difference" || s == "fd") return AttackGradient::kFiniteDifference;
  if (s == "analytic-e1" || s == "analytic") return AttackGradient::kAnalyticE1;
  throw Error("unknown attack gradient mode: " + std::string(s));
}
inline StepSchedule parse_step_schedule(std::string_view s) {
  if (s == "constant") return StepSchedule::kConstant;
  if (s == "multistep") return StepSchedule::kMultiStep;
  throw Error("unknown step schedule: " + std::string(s));
}

struct AttackConfig {
  Distance metric = Distance::kSquaredL2;
  AttackOptimizer optimizer = AttackOptimizer::kAdaptiveMoment;
  double step_size = 0.05;
  int rounds = 2000;
  AttackInit init = AttackInit::kGaussian;
  // gaussian: mean / standard deviation; uniform: center / half-width.
  double init_center = 0.0;
  double init_scale = 1.0;
  std::uint64_t seed = 0;
  bool reconstruct_labels = false;
  AttackGradient gradient = AttackGradient::kFiniteDifference;
  double fd_step = 1e-6;
  // multistep: step x0.1 at 3/8, 5/8 and 7/8 of the rounds.
  StepSchedule schedule = StepSchedule::kMultiStep;
  double divergence_factor = 1e6;

  void validate() const {
    if (rounds < 1) throw Error("AttackConfig: rounds must be >= 1");
    if (!(step_size > 0)) throw Error("AttackConfig: step size must be > 0");
    if (!(fd_step > 0)) throw Error("AttackConfig: fd_step must be > 0");
    if (!(init_scale >= 0)) throw Error("AttackConfig: init_scale must be >= 0");
  }
};

struct ObjectiveValue {
  double value = 0.0;
  bool degenerate = false;  // cosine against a zero vector
};

inline ObjectiveValue update_distance(const Vector& simulated, const Vector& target,
                                      Distance metric) {
  if (simulated.size() != target.size()) throw Error("update_distance: length mismatch");
  if (metric == Distance::kSquaredL2) return {(simulated - target).squaredNorm(), false};
  const double nu = simulated.norm();
  const double nv = target.norm();
  if (nu == 0.0 || nv == 0.0) return {1.0, true};
  return {std::max(0.0, 1.0 - simulated.dot(target) / (nu * nv)), false};
}

/// Dist(Grad(theta, candidate), target) where Grad replays the full local
/// schedule on the candidate batch.
inline ObjectiveValue attack_objective(const ModelSpec& spec, const ParamVector& theta,
                                       const Batch& candidate, const Vector& target_update,
                                       const LocalTraining& schedule, Distance metric) {
  if (candidate.empty()) throw Error("attack_objective: empty candidate batch");
  for (const auto& s : candidate) {
    if (s.x.size() != spec.input_dim) throw Error("attack_objective: candidate dimension mismatch");
  }
  return update_distance(update_map(spec, candidate, theta, schedule), target_update, metric);
}

struct ReconstructionTrace {
  std::vector<Batch> iterates;      // candidate after each round
  std::vector<double> objective;    // objective at each iterate
  std::vector<double> mismatch;     // ||mean grad(candidate) - target gradient||
  Batch final_batch;
  double initial_objective = 0.0;
  bool diverged = false;
  bool degenerate = false;

  std::size_t rounds() const { return objective.size(); }
};

namespace detail {

class AttackProblem {
 public:
  AttackProblem(const ModelSpec& spec, const ParamVector& theta, const Vector& target,
                const std::vector<double>& labels, const LocalTraining& schedule,
                const AttackConfig& config)
      : spec_(spec), theta_(theta), target_(target), schedule_(schedule), config_(config) {
    template_.resize(labels.size());
    for (std::size_t b = 0; b < labels.size(); ++b) {
      template_[b].x = Vector::Zero(spec.input_dim);
      template_[b].y = labels[b];
    }
    target_gradient_ =
        -target / (schedule.learning_rate * static_cast<double>(schedule.local_epochs));
  }

  Eigen::Index feature_len() const {
    return static_cast<Eigen::Index>(template_.size()) * spec_.input_dim;
  }
  Eigen::Index size() const {
    return feature_len() + (config_.reconstruct_labels ? static_cast<Eigen::Index>(template_.size()) : 0);
  }

  Batch batch(const Vector& z) const {
    Batch out = with_features(template_, z.head(feature_len()));
    if (config_.reconstruct_labels) {
      for (std::size_t b = 0; b < out.size(); ++b) {
        out[b].y = z(feature_len() + static_cast<Eigen::Index>(b));
      }
    }
    return out;
  }

  ObjectiveValue objective(const Vector& z) const {
    return attack_objective(spec_, theta_, batch(z), target_, schedule_, config_.metric);
  }

  double mismatch(const Batch& candidate) const {
    return (mean_gradient(spec_, theta_, candidate) - target_gradient_).norm();
  }

  // Keeps soft logistic labels inside [0, 1].
  void project(Vector& z) const {
    if (!config_.reconstruct_labels || spec_.kind != ModelKind::kLogisticRegression) return;
    auto labels = z.tail(static_cast<Eigen::Index>(template_.size()));
    labels = labels.cwiseMax(0.0).cwiseMin(1.0);
  }

  // A zero objective is a global minimum of a nonnegative function, so the
  // gradient there is exactly zero.
  Vector gradient(const Vector& z, double f0) const {
    Vector g = Vector::Zero(z.size());
    if (f0 == 0.0) return g;
    Eigen::Index first_fd = 0;
    if (config_.gradient == AttackGradient::kAnalyticE1) {
      g.head(feature_len()) = analytic_feature_gradient(z);
      first_fd = feature_len();
    }
    Vector work = z;
    const double h = config_.fd_step;
    for (Eigen::Index i = first_fd; i < z.size(); ++i) {
      work(i) = z(i) + h;
      const double up = objective(work).value;
      work(i) = z(i) - h;
      const double down = objective(work).value;
      work(i) = z(i);
      g(i) = (up - down) / (2 * h);
    }
    return g;
  }

 private:
  Vector analytic_feature_gradient(const Vector& z) const {
    if (schedule_.local_epochs != 1) {
      throw Error("analytic attack gradient requires E = 1");
    }
    const Batch cand = batch(z);
    const Vector u = update_map(spec_, cand, theta_, schedule_);
    Vector d_u;
    if (config_.metric == Distance::kSquaredL2) {
      d_u = 2.0 * (u - target_);
    } else {
      const double nu = u.norm(), nv = target_.norm();
      if (nu == 0.0 || nv == 0.0) return Vector::Zero(feature_len());
      d_u = -(target_ / (nu * nv) - (u.dot(target_) / (nu * nu * nu * nv)) * u);
    }
    const int p = spec_.input_dim;
    const double scale = -schedule_.learning_rate / static_cast<double>(cand.size());
    Vector g(feature_len());
    for (std::size_t b = 0; b < cand.size(); ++b) {
      g.segment(static_cast<Eigen::Index>(b) * p, p) =
          scale * mixed_jacobian(spec_, theta_, cand[b].x, cand[b].y).transpose() * d_u;
    }
    return g;
  }

  const ModelSpec& spec_;
  const ParamVector& theta_;
  const Vector& target_;
  LocalTraining schedule_;
  const AttackConfig& config_;
  Batch template_;
  Vector target_gradient_;
};

inline double scheduled_step(const AttackConfig& c, int round) {
  if (c.schedule == StepSchedule::kConstant) return c.step_size;
  double s = c.step_size;
  for (int num : {3, 5, 7}) {
    if (round >= (c.rounds * num) / 8) s *= 0.1;
  }
  return s;
}

}  // namespace detail

/// Runs the attacker for config.rounds rounds. `labels` fixes the batch size
/// and, unless labels are reconstructed, the labels used by the simulation.
/// `start` overrides the seeded initialization.
inline ReconstructionTrace reconstruct(const ModelSpec& spec, const ParamVector& theta,
                                       const Vector& target_update,
                                       const std::vector<double>& labels,
                                       const LocalTraining& schedule, const AttackConfig& config,
                                       const std::optional<Batch>& start = std::nullopt) {
  config.validate();
  if (labels.empty()) throw Error("reconstruct: batch size must be >= 1");
  if (target_update.size() != spec.param_dim()) throw Error("reconstruct: target length mismatch");
  if (config.reconstruct_labels && spec.kind == ModelKind::kMlp1 && spec.output_dim >= 2) {
    throw Error("reconstruct: label reconstruction is not supported for softmax heads");
  }

  detail::AttackProblem problem(spec, theta, target_update, labels, schedule, config);
  Vector z(problem.size());
  if (start) {
    if (start->size() != labels.size()) throw Error("reconstruct: start batch size mismatch");
    z.head(problem.feature_len()) = flatten_features(*start);
    if (config.reconstruct_labels) {
      for (std::size_t b = 0; b < labels.size(); ++b) {
        z(problem.feature_len() + static_cast<Eigen::Index>(b)) = (*start)[b].y;
      }
    }
  } else {
    Rng rng(derive_seed(config.seed, "attack_init"));
    std::normal_distribution<double> normal(config.init_center, config.init_scale);
    std::uniform_real_distribution<double> uniform(config.init_center - config.init_scale,
                                                   config.init_center + config.init_scale);
    for (Eigen::Index i = 0; i < problem.feature_len(); ++i) {
      switch (config.init) {
        case AttackInit::kZeros:
          z(i) = 0.0;
          break;
        case AttackInit::kGaussian:
          z(i) = normal(rng);
          break;
        case AttackInit::kUniform:
          z(i) = uniform(rng);
          break;
      }
    }
    if (config.reconstruct_labels) {
      z.tail(static_cast<Eigen::Index>(labels.size())).setConstant(spec.classification() ? 0.5 : config.init_center);
    }
  }

  ReconstructionTrace trace;
  ObjectiveValue f = problem.objective(z);
  trace.initial_objective = f.value;
  trace.degenerate = f.degenerate;

  const Eigen::Index n = z.size();
  Vector m1 = Vector::Zero(n), m2 = Vector::Zero(n);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  trace.iterates.reserve(static_cast<std::size_t>(config.rounds));
  for (int t = 0; t < config.rounds; ++t) {
    const Vector g = problem.gradient(z, f.value);
    const double step = detail::scheduled_step(config, t);
    switch (config.optimizer) {
      case AttackOptimizer::kAdaptiveMoment: {
        m1 = kBeta1 * m1 + (1 - kBeta1) * g;
        m2 = kBeta2 * m2 + (1 - kBeta2) * g.cwiseAbs2();
        const double c1 = 1 - std::pow(kBeta1, t + 1);
        const double c2 = 1 - std::pow(kBeta2, t + 1);
        z -= step * ((m1 / c1).array() / ((m2 / c2).array().sqrt() + kEps)).matrix();
        problem.project(z);
        f = problem.objective(z);
        break;
      }
      case AttackOptimizer::kAdaptivePerCoordinate: {
        m2 += g.cwiseAbs2();
        z -= step * (g.array() / (m2.array().sqrt() + kEps)).matrix();
        problem.project(z);
        f = problem.objective(z);
        break;
      }
      case AttackOptimizer::kPlainGd: {
        // Armijo backtracking; if no trial point decreases, stay put.
        const double g2 = g.squaredNorm();
        double s = step;
        for (int k = 0; k < 40 && g2 > 0; ++k, s *= 0.5) {
          Vector trial = z - s * g;
          problem.project(trial);
          const ObjectiveValue ft = problem.objective(trial);
          if (std::isfinite(ft.value) && ft.value <= f.value - 1e-4 * s * g2) {
            z = std::move(trial);
            f = ft;
            break;
          }
        }
        break;
      }
    }
    trace.degenerate = trace.degenerate || f.degenerate;
    if (!std::isfinite(f.value) ||
        (trace.initial_objective > 0 &&
         f.value > config.divergence_factor * trace.initial_objective)) {
      trace.diverged = true;
      break;
    }
    Batch cand = problem.batch(z);
    trace.mismatch.push_back(problem.mismatch(cand));
    trace.objective.push_back(f.value);
    trace.iterates.push_back(std::move(cand));
  }
  trace.final_batch = trace.iterates.empty() ? problem.batch(z) : trace.iterates.back();
  return trace;
}

struct RegretStatistic {
  double sum_mismatch = 0.0;
  double c_hat = 0.0;  // sum_mismatch / sqrt(T_att)
};

inline RegretStatistic regret_statistic(const ReconstructionTrace& trace) {
  RegretStatistic r;
  if (trace.mismatch.empty()) return r;
  for (double m : trace.mismatch) r.sum_mismatch += m;
  r.c_hat = r.sum_mismatch / std::sqrt(static_cast<double>(trace.mismatch.size()));
  return r;
}

/// sqrt(sum_i ||xr_i - x_pi(i)||^2) / sqrt(sum_i ||x_i||^2) under the optimal pairing.
inline double matched_relative_error(const Batch& reconstructed, const Batch& original) {
  const auto m = match_samples(reconstructed, original);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    num += (reconstructed[i].x - original[static_cast<std::size_t>(m.permutation[i])].x).squaredNorm();
    den += original[i].x.squaredNorm();
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace fedleak
