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

// Leakage measurement, distortion, constant estimation and the leakage
// upper bound
//
//   eps_p <= 1 + sqrt((ln 2 + poly(B)) / (2B)) - c_a / (2D) * Delta,
//
// valid with probability >= 1 - exp(-poly(B)) when
// Delta >= 2 c_2 c_b E / (c_a sqrt(T)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fedleak/attack.hpp"
#include "fedleak/common.hpp"
#include "fedleak/matching.hpp"
#include "fedleak/models.hpp"
#include "fedleak/seed.hpp"

namespace fedleak {

/// poly(B): either ln B or coeff * B^exponent.
struct PolyChoice {
  enum class Kind { kLog, kPower };
  Kind kind = Kind::kLog;
  double coeff = 1.0;
  double exponent = 1.0;

  static PolyChoice log() { return {}; }
  static PolyChoice power(double coeff, double exponent) { return {Kind::kPower, coeff, exponent}; }

  double operator()(double b) const {
    return kind == Kind::kLog ? std::log(b) : coeff * std::pow(b, exponent);
  }

  std::string label() const {
    if (kind == Kind::kLog) return "lnB";
    std::ostringstream os;
    os << coeff << "*B^" << exponent;
    return os.str();
  }

  // Accepts "lnB" or "<coeff>*B^<exponent>".
  static PolyChoice parse(const std::string& s) {
    if (s == "lnB" || s == "ln B" || s == "log") return log();
    const auto star = s.find("*B^");
    if (star == std::string::npos) throw Error("cannot parse poly(B) choice: " + s);
    try {
      return power(std::stod(s.substr(0, star)), std::stod(s.substr(star + 3)));
    } catch (const std::exception&) {
      throw Error("cannot parse poly(B) choice: " + s);
    }
  }
};

struct BoundInputs {
  int batch_size = 1;           // B
  double distortion = 0.0;      // Delta_k
  double c_a = 1.0;
  double c_b = 1.0;
  double c_0 = 0.0;             // carried for reporting; the bound does not use it
  double c_2 = 1.0;
  int local_epochs = 1;         // E
  int attacker_rounds = 1;      // T
  double diameter = 1.0;        // D
  PolyChoice poly;

  void validate() const {
    if (batch_size < 1) throw Error("BoundInputs: B must be >= 1");
    if (!(c_a > 0) || !(c_b >= c_a)) throw Error("BoundInputs: need 0 < c_a <= c_b");
    if (!(c_0 <= c_2)) throw Error("BoundInputs: need c_0 <= c_2");
    if (!(diameter > 0)) throw Error("BoundInputs: D must be > 0");
    if (!(distortion >= 0)) throw Error("BoundInputs: Delta must be >= 0");
    if (local_epochs < 1 || attacker_rounds < 1) throw Error("BoundInputs: E and T must be >= 1");
    if (!(poly(static_cast<double>(batch_size)) >= 0)) throw Error("BoundInputs: poly(B) must be >= 0");
  }
};

struct BoundResult {
  double bound = 0.0;
  double tail_probability = 0.0;  // exp(-poly(B))
  double threshold = 0.0;         // 2 c_2 c_b E / (c_a sqrt(T))
  bool precondition_ok = false;
  bool distortion_above_one = false;
};

inline double bound_threshold(const BoundInputs& in) {
  return 2.0 * in.c_2 * in.c_b * in.local_epochs /
         (in.c_a * std::sqrt(static_cast<double>(in.attacker_rounds)));
}

inline bool check_bound_precondition(const BoundInputs& in) {
  return in.distortion >= bound_threshold(in);
}

/// Evaluates the bound regardless of the precondition; the result carries
/// the flag so callers can discard non-applicable values.
inline BoundResult leakage_upper_bound(const BoundInputs& in) {
  in.validate();
  const double b = static_cast<double>(in.batch_size);
  const double poly = in.poly(b);
  BoundResult r;
  r.bound = 1.0 + std::sqrt((std::numbers::ln2 + poly) / (2.0 * b)) -
            in.c_a / (2.0 * in.diameter) * in.distortion;
  r.tail_probability = std::exp(-poly);
  r.threshold = bound_threshold(in);
  r.precondition_ok = in.distortion >= r.threshold;
  r.distortion_above_one = in.distortion > 1.0;
  return r;
}

inline double hoeffding_tail(long t, double eps) {
  if (t < 1) throw Error("hoeffding_tail: T must be >= 1");
  if (!(eps >= 0)) throw Error("hoeffding_tail: epsilon must be >= 0");
  return 2.0 * std::exp(-2.0 * static_cast<double>(t) * eps * eps);
}

struct DataDomain {
  Vector lo;
  Vector hi;

  int dim() const { return static_cast<int>(lo.size()); }

  static DataDomain cube(int p, double lo, double hi) {
    return {Vector::Constant(p, lo), Vector::Constant(p, hi)};
  }
};

/// Euclidean diagonal of the box. Zero for a degenerate box, which callers
/// must reject as a normalizer.
inline double data_diameter(const DataDomain& domain) {
  if (domain.lo.size() != domain.hi.size() || domain.lo.size() == 0) {
    throw Error("data_diameter: malformed domain");
  }
  if (!domain.lo.allFinite() || !domain.hi.allFinite()) throw Error("data_diameter: unbounded domain");
  if ((domain.hi.array() < domain.lo.array()).any()) throw Error("data_diameter: hi < lo");
  return (domain.hi - domain.lo).norm();
}

inline double distortion_extent(const Vector& g, const Vector& g_distorted) {
  if (g.size() != g_distorted.size()) throw Error("distortion_extent: dimension mismatch");
  return (g - g_distorted).norm();
}

/// ||mean grad(theta, distorted batch) - mean grad(theta, batch)||.
inline double batch_distortion_extent(const ModelSpec& spec, const ParamVector& theta,
                                      const Batch& original, const Batch& distorted) {
  return distortion_extent(mean_gradient(spec, theta, original),
                           mean_gradient(spec, theta, distorted));
}

/// v + magnitude * u with u a seeded random unit vector.
inline Vector apply_distortion(const Vector& v, double magnitude, std::uint64_t seed) {
  if (!(magnitude >= 0)) throw Error("apply_distortion: magnitude must be >= 0");
  if (magnitude == 0.0 || v.size() == 0) return v;
  Rng rng(derive_seed(seed, "distortion"));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(v.size());
  do {
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
  } while (u.norm() == 0.0);
  return v + (magnitude / u.norm()) * u;
}

struct LipschitzEstimate {
  double c_a = 0.0;
  double c_b = 0.0;
  int kept = 0;
  int skipped = 0;
};

/// ||x1 - x2|| / ||grad_theta(x1) - grad_theta(x2)|| at a shared label; +inf
/// when the gradients coincide.
inline double lipschitz_ratio(const ModelSpec& spec, const ParamVector& theta, const Vector& x1,
                              const Vector& x2, double y) {
  const double gap = (grad_theta(spec, theta, x1, y) - grad_theta(spec, theta, x2, y)).norm();
  if (gap == 0.0) return std::numeric_limits<double>::infinity();
  return (x1 - x2).norm() / gap;
}

/// Samples pairs uniformly in the box with a label drawn from `labels`;
/// c_a = min ratio and c_b = max ratio over pairs with a nonzero gradient gap.
inline LipschitzEstimate estimate_lipschitz_constants(const ModelSpec& spec,
                                                      const ParamVector& theta,
                                                      const DataDomain& domain,
                                                      std::span<const double> labels,
                                                      int num_pairs, std::uint64_t seed) {
  if (num_pairs < 2) throw Error("estimate_lipschitz_constants: need at least 2 pairs");
  if (labels.empty()) throw Error("estimate_lipschitz_constants: empty label set");
  if (domain.dim() != spec.input_dim) throw Error("estimate_lipschitz_constants: domain dimension mismatch");
  data_diameter(domain);

  Rng rng(derive_seed(seed, "lipschitz_pairs"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&] {
    Vector x(domain.dim());
    for (int c = 0; c < domain.dim(); ++c) {
      x(c) = domain.lo(c) + (domain.hi(c) - domain.lo(c)) * unit(rng);
    }
    return x;
  };
  LipschitzEstimate est;
  est.c_a = std::numeric_limits<double>::infinity();
  est.c_b = 0.0;
  for (int i = 0; i < num_pairs; ++i) {
    const Vector x1 = draw();
    const Vector x2 = draw();
    const auto li = static_cast<std::size_t>(unit(rng) * static_cast<double>(labels.size()));
    const double y = labels[std::min(li, labels.size() - 1)];
    const double r = lipschitz_ratio(spec, theta, x1, x2, y);
    if (!std::isfinite(r) || (x1 - x2).norm() == 0.0) {
      ++est.skipped;
      continue;
    }
    ++est.kept;
    est.c_a = std::min(est.c_a, r);
    est.c_b = std::max(est.c_b, r);
  }
  if (est.kept == 0) throw Error("estimate_lipschitz_constants: all sampled pairs are degenerate");
  return est;
}

struct RegretConstants {
  double c_0 = 0.0;
  double c_2 = 0.0;
};

/// Brackets the per-run c_hat = sum mismatch / sqrt(T) over a set of runs.
inline RegretConstants estimate_regret_constants(std::span<const ReconstructionTrace> traces) {
  if (traces.empty()) throw Error("estimate_regret_constants: no traces");
  RegretConstants rc{std::numeric_limits<double>::infinity(), 0.0};
  for (const auto& t : traces) {
    const double c = regret_statistic(t).c_hat;
    rc.c_0 = std::min(rc.c_0, c);
    rc.c_2 = std::max(rc.c_2, c);
  }
  return rc;
}

/// One attacked batch: the attacker's trace and the true samples.
struct AttackedBatch {
  const ReconstructionTrace* trace = nullptr;
  Batch originals;
};

struct LeakageMeasurement {
  double eps_p = 0.0;
  // distances[run][round * B + i]: clamped ||xr_{t,i} - x_i|| / D
  std::vector<std::vector<double>> normalized_distances;
  std::size_t samples = 0;
};

/// eps_p = 1 - mean over runs, samples and attacker rounds of
/// min(||xr_{t,i} - x_i||, D) / D. Reconstruction slots are paired with the
/// originals once per run, by the optimal matching of the final iterate.
inline LeakageMeasurement privacy_leakage(std::span<const AttackedBatch> runs, double diameter) {
  if (runs.empty()) throw Error("privacy_leakage: no runs");
  if (!(diameter > 0)) throw Error("privacy_leakage: D must be > 0");
  LeakageMeasurement out;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& run : runs) {
    if (run.trace == nullptr || run.trace->iterates.empty()) throw Error("privacy_leakage: empty trace");
    const auto& iters = run.trace->iterates;
    const auto matching = match_samples(iters.back(), run.originals);
    std::vector<double> dist;
    dist.reserve(iters.size() * run.originals.size());
    double run_sum = 0.0;
    for (const auto& batch : iters) {
      if (batch.size() != run.originals.size()) throw Error("privacy_leakage: batch size mismatch");
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& orig = run.originals[static_cast<std::size_t>(matching.permutation[i])];
        const double d = std::min((batch[i].x - orig.x).norm(), diameter) / diameter;
        dist.push_back(d);
        run_sum += d;
      }
    }
    // Each run contributes the mean over its own rounds, weighted by its samples.
    total += run_sum / static_cast<double>(iters.size());
    count += run.originals.size();
    out.samples += run.originals.size();
    out.normalized_distances.push_back(std::move(dist));
  }
  out.eps_p = 1.0 - total / static_cast<double>(count);
  return out;
}

struct LeakageReport {
  double eps_p = 0.0;
  double bound = 0.0;
  bool precondition_ok = false;
  double tail_probability = 0.0;
  LeakageMeasurement measurement;
};

inline LeakageReport leakage_report(std::span<const AttackedBatch> runs, const BoundInputs& inputs) {
  LeakageReport r;
  r.measurement = privacy_leakage(runs, inputs.diameter);
  r.eps_p = r.measurement.eps_p;
  const auto b = leakage_upper_bound(inputs);
  r.bound = b.bound;
  r.precondition_ok = b.precondition_ok;
  r.tail_probability = b.tail_probability;
  return r;
}

}  // namespace fedleak
