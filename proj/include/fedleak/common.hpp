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

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedleak {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Flat model parameter vector, length ModelSpec::param_dim().
using ParamVector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  Vector x;
  double y = 0.0;
};

using Batch = std::vector<Sample>;

// Stacks the features of a batch sample-major: [x_1; x_2; ...; x_B].
inline Vector flatten_features(const Batch& batch) {
  if (batch.empty()) return Vector();
  const Eigen::Index p = batch.front().x.size();
  Vector flat(static_cast<Eigen::Index>(batch.size()) * p);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].x.size() != p) throw Error("flatten_features: ragged batch");
    flat.segment(static_cast<Eigen::Index>(b) * p, p) = batch[b].x;
  }
  return flat;
}

// Inverse of flatten_features; labels are copied from `like`.
inline Batch with_features(const Batch& like, const Vector& flat) {
  Batch out = like;
  if (out.empty()) return out;
  const Eigen::Index p = out.front().x.size();
  if (flat.size() != static_cast<Eigen::Index>(out.size()) * p) {
    throw Error("with_features: length does not match batch shape");
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].x = flat.segment(static_cast<Eigen::Index>(b) * p, p);
  }
  return out;
}

inline std::vector<double> labels_of(const Batch& batch) {
  std::vector<double> ys;
  ys.reserve(batch.size());
  for (const auto& s : batch) ys.push_back(s.y);
  return ys;
}

}  // namespace fedleak
