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

// Synthetic client data drawn from a teacher model, and CSV input/output
// (features first, label in the last column).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedleak/common.hpp"
#include "fedleak/config.hpp"
#include "fedleak/fedcore.hpp"
#include "fedleak/models.hpp"
#include "fedleak/privacy.hpp"
#include "fedleak/seed.hpp"

namespace fedleak {

struct SyntheticSpec {
  DataDomain domain;
  int clients = 1;
  int samples_per_client = 1;
  double label_noise = 0.0;
};

/// Teacher that produced the labels. Linear and logistic teachers use
/// weights[0] (length p) and bias[0]; the softmax teacher one row per class.
struct Teacher {
  std::vector<Vector> weights;
  std::vector<double> bias;
};

struct SyntheticData {
  std::vector<ClientDataset> clients;
  Teacher teacher;
};

/// Regression heads get a linear teacher plus Gaussian noise, logistic a
/// Bernoulli draw from the logistic teacher, softmax heads a categorical
/// draw from a softmax teacher.
inline SyntheticData generate_synthetic_data(const ModelSpec& spec, const SyntheticSpec& desc,
                                             std::uint64_t seed) {
  spec.validate();
  if (desc.domain.dim() != spec.input_dim) throw Error("synthetic data: domain dimension mismatch");
  if (data_diameter(desc.domain) <= 0) throw Error("synthetic data: degenerate domain");
  if (desc.clients < 1 || desc.samples_per_client < 1) {
    throw Error("synthetic data: need at least one client and one sample");
  }
  if (!(desc.label_noise >= 0)) throw Error("synthetic data: label noise must be >= 0");

  const int p = spec.input_dim;
  const int classes = spec.kind == ModelKind::kMlp1 && spec.output_dim >= 2 ? spec.output_dim : 1;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticData out;
  Rng teacher_rng(derive_seed(seed, "teacher"));
  const Vector center = 0.5 * (desc.domain.lo + desc.domain.hi);
  for (int c = 0; c < classes; ++c) {
    Vector w(p);
    for (int i = 0; i < p; ++i) w(i) = normal(teacher_rng);
    out.teacher.weights.push_back(w);
    // Centre the decision surface in the box so both classes appear.
    out.teacher.bias.push_back(-w.dot(center) + 0.25 * normal(teacher_rng));
  }

  for (int k = 0; k < desc.clients; ++k) {
    Rng rng(derive_seed(seed, "client_data", k));
    ClientDataset ds;
    ds.client_id = k;
    ds.input_dim = p;
    for (int i = 0; i < desc.samples_per_client; ++i) {
      Vector x(p);
      for (int c = 0; c < p; ++c) {
        x(c) = desc.domain.lo(c) + (desc.domain.hi(c) - desc.domain.lo(c)) * unit(rng);
      }
      double y = 0.0;
      const double z = out.teacher.weights[0].dot(x) + out.teacher.bias[0];
      if (spec.kind == ModelKind::kLogisticRegression) {
        y = unit(rng) < 1.0 / (1.0 + std::exp(-z)) ? 1.0 : 0.0;
      } else if (classes > 1) {
        Vector logits(classes);
        for (int c = 0; c < classes; ++c) {
          logits(c) = out.teacher.weights[static_cast<std::size_t>(c)].dot(x) +
                      out.teacher.bias[static_cast<std::size_t>(c)];
        }
        Vector prob = (logits.array() - logits.maxCoeff()).exp();
        prob /= prob.sum();
        double u = unit(rng);
        int label = classes - 1;
        for (int c = 0; c < classes; ++c) {
          if (u < prob(c)) {
            label = c;
            break;
          }
          u -= prob(c);
        }
        y = label;
      } else {
        y = z + (desc.label_noise > 0 ? desc.label_noise * normal(rng) : 0.0);
      }
      ds.samples.push_back({std::move(x), y});
    }
    out.clients.push_back(std::move(ds));
  }
  return out;
}

inline SyntheticSpec synthetic_spec(const ExperimentConfig& cfg, int samples_per_client) {
  return {cfg.domain(), cfg.train.clients, samples_per_client, cfg.data.label_noise};
}

/// Reads "x_1,...,x_p,y" rows. A first line that does not parse as numbers
/// is taken as a header.
inline std::vector<Sample> load_csv(const std::string& path, int input_dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read data file: " + path);
  std::vector<Sample> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;
      throw Error(path + ":" + std::to_string(lineno) + ": non-numeric value");
    }
    if (static_cast<int>(vals.size()) != input_dim + 1) {
      throw Error(path + ":" + std::to_string(lineno) + ": expected " +
                  std::to_string(input_dim + 1) + " columns");
    }
    Sample s;
    s.x = Eigen::Map<const Vector>(vals.data(), input_dim);
    s.y = vals.back();
    rows.push_back(std::move(s));
  }
  if (rows.empty()) throw Error("data file has no rows: " + path);
  return rows;
}

inline void save_csv(const std::string& path, const std::vector<Sample>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write data file: " + path);
  if (rows.empty()) return;
  const auto p = rows.front().x.size();
  for (Eigen::Index c = 0; c < p; ++c) out << "x" << c + 1 << ',';
  out << "y\n";
  for (const auto& s : rows) {
    for (Eigen::Index c = 0; c < p; ++c) out << format_double(s.x(c)) << ',';
    out << format_double(s.y) << '\n';
  }
}

/// Contiguous, as-even-as-possible split of rows across clients.
inline std::vector<ClientDataset> split_clients(const std::vector<Sample>& rows, int clients,
                                                int input_dim) {
  if (clients < 1 || static_cast<std::size_t>(clients) > rows.size()) {
    throw Error("split_clients: need 1 <= clients <= rows");
  }
  std::vector<ClientDataset> out(static_cast<std::size_t>(clients));
  const std::size_t n = rows.size();
  for (int k = 0; k < clients; ++k) {
    const std::size_t begin = n * static_cast<std::size_t>(k) / static_cast<std::size_t>(clients);
    const std::size_t end = n * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(clients);
    auto& ds = out[static_cast<std::size_t>(k)];
    ds.client_id = k;
    ds.input_dim = input_dim;
    ds.samples.assign(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                      rows.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

/// Client datasets for one experiment. For CSV input the file is split
/// across train.clients and samples_per_client is ignored.
inline std::vector<ClientDataset> make_client_data(const ExperimentConfig& cfg,
                                                   int samples_per_client, std::uint64_t seed) {
  if (cfg.data.source == "csv") {
    auto clients =
        split_clients(load_csv(cfg.data.csv_path, cfg.model.input_dim), cfg.train.clients,
                      cfg.model.input_dim);
    for (const auto& c : clients) {
      for (const auto& s : c.samples) validate_sample(cfg.model, s.x, s.y);
    }
    return clients;
  }
  return generate_synthetic_data(cfg.model, synthetic_spec(cfg, samples_per_client), seed).clients;
}

}  // namespace fedleak
