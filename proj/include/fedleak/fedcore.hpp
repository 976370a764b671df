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

// FedAvg server loop and the client-side local training routine.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedleak/common.hpp"
#include "fedleak/models.hpp"
#include "fedleak/seed.hpp"

namespace fedleak {

enum class Aggregation { kSizeWeighted, kUniformDelta };

inline std::string_view to_string(Aggregation a) {
  return a == Aggregation::kSizeWeighted ? "size-weighted" : "uniform-delta";
}

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "size-weighted") return Aggregation::kSizeWeighted;
  if (s == "uniform-delta") return Aggregation::kUniformDelta;
  throw Error("unknown aggregation mode: " + std::string(s));
}

struct ClientDataset {
  int client_id = 0;
  int input_dim = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    if (samples.empty()) throw Error("client " + std::to_string(client_id) + " has no samples");
    for (const auto& s : samples) {
      if (s.x.size() != input_dim) throw Error("client dataset has inconsistent dimension");
    }
  }
};

struct TrainConfig {
  int clients = 1;        // K
  int rounds = 1;         // T
  int local_epochs = 1;   // E
  int batch_size = 1;     // B
  double learning_rate = 0.1;
  Aggregation aggregation = Aggregation::kSizeWeighted;
  std::uint64_t seed = 0;

  void validate() const {
    if (clients < 1) throw Error("TrainConfig: K must be >= 1");
    if (rounds < 0) throw Error("TrainConfig: T must be >= 0");
    if (local_epochs < 1) throw Error("TrainConfig: E must be >= 1");
    if (batch_size < 1) throw Error("TrainConfig: B must be >= 1");
    if (!(learning_rate > 0)) throw Error("TrainConfig: learning rate must be > 0");
  }
};

// What the semi-honest server knows about the local schedule.
struct LocalTraining {
  double learning_rate = 0.1;
  int local_epochs = 1;

  static LocalTraining from(const TrainConfig& c) { return {c.learning_rate, c.local_epochs}; }
};

struct ModelUpdate {
  Vector delta;  // theta_after - theta_before
  int round = 0;
  int client = 0;
  int epochs = 0;
  // One index set per executed batch, epoch-major.
  std::vector<std::vector<std::size_t>> batch_plan;
};

/// Splits the dataset into ceil(n / B) batches after a shuffle keyed by
/// (seed, epoch_index). The last batch holds the remainder.
inline std::vector<std::vector<std::size_t>> partition_data(const ClientDataset& dataset,
                                                            int batch_size,
                                                            std::uint64_t seed,
                                                            int epoch_index) {
  if (dataset.samples.empty()) throw Error("partition_data: empty dataset");
  if (batch_size < 1) throw Error("partition_data: batch size must be >= 1");
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "partition", epoch_index));
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t b = static_cast<std::size_t>(batch_size);
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve((n + b - 1) / b);
  for (std::size_t start = 0; start < n; start += b) {
    const std::size_t stop = std::min(n, start + b);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

inline Vector mean_gradient(const ModelSpec& spec, const ParamVector& theta,
                            std::span<const Sample> batch) {
  if (batch.empty()) throw Error("mean_gradient: empty batch");
  Vector g = Vector::Zero(spec.param_dim());
  for (const auto& s : batch) g += grad_theta(spec, theta, s.x, s.y);
  return g / static_cast<double>(batch.size());
}

/// theta - (eta / |batch|) * sum_b grad_theta(theta, x_b, y_b).
inline ParamVector sgd_step(const ModelSpec& spec, const ParamVector& theta,
                            std::span<const Sample> batch, double learning_rate) {
  return theta - learning_rate * mean_gradient(spec, theta, batch);
}

/// E full-batch steps on a single batch: the local update a client with
/// n == B performs. Order of `batch` is the summation order.
inline ParamVector local_train(const ModelSpec& spec, std::span<const Sample> batch,
                               const ParamVector& theta, const LocalTraining& schedule) {
  ParamVector t = theta;
  for (int e = 0; e < schedule.local_epochs; ++e) {
    t = sgd_step(spec, t, batch, schedule.learning_rate);
  }
  return t;
}

/// Delta theta of local_train on one batch.
inline Vector update_map(const ModelSpec& spec, std::span<const Sample> batch,
                         const ParamVector& theta, const LocalTraining& schedule) {
  return local_train(spec, batch, theta, schedule) - theta;
}

struct ClientResult {
  ParamVector theta;
  ModelUpdate update;
};

inline std::uint64_t client_seed(const TrainConfig& config, int round, int client) {
  return derive_seed(config.seed, "client", round, client);
}

/// E epochs x ceil(n/B) mini-batch SGD steps starting from the global model.
inline ClientResult client_update(const ModelSpec& spec, const ClientDataset& dataset,
                                  const ParamVector& theta_global, const TrainConfig& config,
                                  int round = 0) {
  config.validate();
  dataset.validate();
  if (dataset.input_dim != spec.input_dim) throw Error("client_update: dimension mismatch");
  if (theta_global.size() != spec.param_dim()) throw Error("client_update: bad parameter length");

  const std::uint64_t seed = client_seed(config, round, dataset.client_id);
  ClientResult result{theta_global, {}};
  std::vector<Sample> batch;
  for (int e = 0; e < config.local_epochs; ++e) {
    for (auto& idx : partition_data(dataset, config.batch_size, seed, e)) {
      batch.clear();
      for (std::size_t i : idx) batch.push_back(dataset.samples[i]);
      result.theta = sgd_step(spec, result.theta, batch, config.learning_rate);
      result.update.batch_plan.push_back(std::move(idx));
    }
  }
  result.update.delta = result.theta - theta_global;
  result.update.round = round;
  result.update.client = dataset.client_id;
  result.update.epochs = config.local_epochs;
  return result;
}

struct RoundResult {
  ParamVector theta_next;
  std::vector<ModelUpdate> updates;
  std::vector<ParamVector> client_thetas;
};

/// Combines client models. size-weighted: sum_k (n_k / N) theta_k;
/// uniform-delta: theta + (1/K) sum_k delta_k.
inline ParamVector aggregate(const ParamVector& theta, std::span<const ParamVector> client_thetas,
                             std::span<const std::size_t> sizes, Aggregation mode) {
  if (client_thetas.empty()) throw Error("aggregate: no clients");
  if (client_thetas.size() != sizes.size()) throw Error("aggregate: size list mismatch");
  ParamVector next = ParamVector::Zero(theta.size());
  if (mode == Aggregation::kSizeWeighted) {
    const double total =
        static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
    for (std::size_t k = 0; k < client_thetas.size(); ++k) {
      next += (static_cast<double>(sizes[k]) / total) * client_thetas[k];
    }
    return next;
  }
  for (const auto& tk : client_thetas) next += tk - theta;
  return theta + next / static_cast<double>(client_thetas.size());
}

inline RoundResult fedavg_round(const ModelSpec& spec, std::span<const ClientDataset> clients,
                                const ParamVector& theta, const TrainConfig& config,
                                int round = 0) {
  if (clients.empty()) throw Error("fedavg_round: empty client list");
  RoundResult r;
  std::vector<std::size_t> sizes;
  for (const auto& c : clients) {
    auto res = client_update(spec, c, theta, config, round);
    r.client_thetas.push_back(std::move(res.theta));
    r.updates.push_back(std::move(res.update));
    sizes.push_back(c.size());
  }
  r.theta_next = aggregate(theta, r.client_thetas, sizes, config.aggregation);
  return r;
}

struct TrainingTrace {
  std::vector<ParamVector> thetas;             // theta_0 .. theta_T
  std::vector<std::vector<ModelUpdate>> updates;  // updates[t][k], computed at thetas[t]
};

inline TrainingTrace run_training(const ModelSpec& spec, std::span<const ClientDataset> clients,
                                  const ParamVector& theta0, const TrainConfig& config) {
  config.validate();
  TrainingTrace trace;
  trace.thetas.push_back(theta0);
  for (int t = 0; t < config.rounds; ++t) {
    auto r = fedavg_round(spec, clients, trace.thetas.back(), config, t);
    trace.thetas.push_back(std::move(r.theta_next));
    trace.updates.push_back(std::move(r.updates));
  }
  return trace;
}

/// (1/K) sum_k (1/n_k) sum_i loss(theta, x_i, y_i).
inline double global_loss(const ModelSpec& spec, std::span<const ClientDataset> clients,
                          const ParamVector& theta) {
  if (clients.empty()) throw Error("global_loss: no clients");
  double total = 0.0;
  for (const auto& c : clients) {
    double local = 0.0;
    for (const auto& s : c.samples) local += loss(spec, theta, s.x, s.y);
    total += local / static_cast<double>(c.size());
  }
  return total / static_cast<double>(clients.size());
}

}  // namespace fedleak
