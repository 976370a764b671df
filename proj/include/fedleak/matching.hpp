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

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "fedleak/common.hpp"

namespace fedleak {

inline constexpr int kExhaustiveMatchLimit = 8;

/// Kuhn-Munkres with potentials on a square cost matrix. Returns assignment
/// a with row i matched to column a[i].
inline std::vector<int> min_cost_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw Error("min_cost_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

struct Matching {
  // reconstructed[i] is paired with original[permutation[i]].
  std::vector<int> permutation;
  double total_cost = 0.0;
};

inline Matrix pairwise_distances(const Batch& reconstructed, const Batch& original) {
  Matrix cost(static_cast<Eigen::Index>(reconstructed.size()),
              static_cast<Eigen::Index>(original.size()));
  for (std::size_t i = 0; i < reconstructed.size(); ++i) {
    for (std::size_t j = 0; j < original.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (reconstructed[i].x - original[j].x).norm();
    }
  }
  return cost;
}

/// Minimum total Euclidean cost pairing. Exhaustive up to 8 samples,
/// assignment algorithm beyond.
inline Matching match_samples(const Batch& reconstructed, const Batch& original) {
  if (reconstructed.size() != original.size()) throw Error("match_samples: batch size mismatch");
  const int n = static_cast<int>(original.size());
  const Matrix cost = pairwise_distances(reconstructed, original);
  Matching best;
  if (n == 0) return best;

  if (n > kExhaustiveMatchLimit) {
    best.permutation = min_cost_assignment(cost);
  } else {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
      if (c < best_cost) {
        best_cost = c;
        best.permutation = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  best.total_cost = 0.0;
  for (int i = 0; i < n; ++i) best.total_cost += cost(i, best.permutation[i]);
  return best;
}

}  // namespace fedleak
