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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "fedleak/attack.hpp"
#include "fedleak/config.hpp"
#include "fedleak/fedcore.hpp"
#include "fedleak/harness.hpp"
#include "fedleak/jacobian.hpp"
#include "fedleak/matching.hpp"
#include "fedleak/models.hpp"
#include "fedleak/privacy.hpp"
#include "oracles.hpp"

namespace fedleak {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void require(bool cond, const std::string& what) {
    if (cond) return;
    failures += (pass ? "" : "; ") + what;
    pass = false;
  }
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;  // 0 means no runtime limit
  std::function<void(Outcome&)> body;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---- 1: gradients against central differences --------------------------

void gradient_correctness(Outcome& o) {
  struct Kind {
    ModelSpec spec;
    double tol;
  };
  const Kind kinds[] = {{ModelSpec::linear(5), 1e-7},
                        {ModelSpec::logistic(5), 1e-5},
                        {ModelSpec::mlp1(2, 4, 1), 1e-5},
                        {ModelSpec::mlp1(3, 5, 3), 1e-5}};
  for (const auto& k : kinds) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto in = testing::random_instance(k.spec, 1000 + seed);
      const auto f_theta = [&](const Vector& t) { return loss(k.spec, t, in.x, in.y); };
      const auto f_x = [&](const Vector& x) { return loss(k.spec, in.theta, x, in.y); };
      const Vector gt = grad_theta(k.spec, in.theta, in.x, in.y);
      const Vector gx = grad_x(k.spec, in.theta, in.x, in.y);
      worst = std::max(worst, testing::max_rel_error(gt, testing::fd_gradient(f_theta, in.theta)));
      worst = std::max(worst, testing::max_rel_error(gx, testing::fd_gradient(f_x, in.x)));
    }
    const std::string label = std::string(to_string(k.spec.kind)) + "(out=" +
                              std::to_string(k.spec.output_dim) + ")";
    o.require(worst <= k.tol, label + " max rel err " + fmt(worst));
    o.detail << label << " " << fmt(worst) << "  ";
  }
}

// ---- 2: analytic vs finite-difference update Jacobian --------------------

void jacobian_equivalence(Outcome& o) {
  double worst = 0.0;
  for (const auto& spec : {ModelSpec::linear(4), ModelSpec::logistic(5)}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const int b = 1 + static_cast<int>(seed % 4);
      const auto batch = testing::random_batch(spec, b, 300 + seed);
      const auto theta = testing::random_instance(spec, 700 + seed).theta;
      const LocalTraining sched{0.05 + 0.01 * static_cast<double>(seed), 1};
      const auto an = update_jacobian_analytic_e1(spec, batch, theta, sched);
      const auto fd = update_jacobian_fd(spec, batch, theta, sched);
      worst = std::max(worst, (an.jacobian - fd.jacobian).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst <= 1e-4, "max entry gap " + fmt(worst));
  o.detail << "max entrywise gap " << fmt(worst) << " over 40 instances";
}

// ---- 3: rank behaviour of the mlp1 update Jacobian ----------------------

void rank_behaviour(Outcome& o) {
  const auto spec = ModelSpec::mlp1(2, 4, 1);
  const int d = spec.param_dim();
  const int p = spec.input_dim;
  o.require(d == 17, "d = " + std::to_string(d));
  int flip = -1;
  for (int b = 1; b <= 10; ++b) {
    const auto batch = testing::random_batch(spec, b, 50 + static_cast<std::uint64_t>(b));
    const auto uj = update_jacobian_fd(spec, batch, init_params(spec, 5), {0.1, 1});
    const bool flag = check_sufficient_condition(d, b, p);
    if (flag && flip < 0) flip = b;
    o.require(uj.numerical_rank <= std::min(d, b * p), "rank above min(d, Bp) at B=" + std::to_string(b));
    if (d < b * p) {
      o.require(uj.kernel_dim() >= b * p - d, "kernel too small at B=" + std::to_string(b));
    }
    o.detail << "B=" << b << ":r" << uj.numerical_rank << "/k" << uj.kernel_dim() << " ";
  }
  o.require(flip == 9, "flag flipped at B=" + std::to_string(flip));
  o.detail << "flag flips at B=" << flip;
}

// ---- 4: collision certificate -------------------------------------------

void collision_certificate(Outcome& o) {
  const auto spec = ModelSpec::mlp1(2, 4, 1);
  const auto batch = testing::random_batch(spec, 10, 5);
  const auto theta = init_params(spec, 11);
  const LocalTraining sched{0.1, 2};
  const auto base = construct_collision(spec, batch, theta, sched, 1e-3, 3);
  const double rel = base.update_gap / base.update_norm;
  o.require(base.kernel_dim > 0, "empty kernel");
  o.require(rel <= 1e-4, "relative gap " + fmt(rel));
  o.detail << "kernel " << base.kernel_dim << ", rel gap " << fmt(rel);
  for (double c : {0.1, 0.01}) {
    const auto scaled = construct_collision(spec, batch, theta, sched, 1e-3 * c, 3);
    const double ratio = scaled.update_gap / base.update_gap;
    o.require(ratio >= c * c / 3 && ratio <= c * c * 3, "ratio " + fmt(ratio) + " at c=" + fmt(c));
    o.detail << ", ratio(c=" << c << ")/c^2 " << fmt(ratio / (c * c));
  }
  const auto zero = construct_collision(spec, batch, theta, sched, 0.0, 3);
  o.require(zero.update_gap == 0.0, "zero magnitude gap " + fmt(zero.update_gap));
}

// ---- 5: single-sample logistic reconstruction ---------------------------

void attack_sanity(Outcome& o) {
  const auto spec = ModelSpec::logistic(5, true);
  const LocalTraining sched{0.1, 1};
  int recovered = 0;
  double worst_truth = 0.0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    std::mt19937_64 rng(9000 + trial);
    std::uniform_real_distribution<double> u(0, 1);
    Vector x(5);
    for (Eigen::Index j = 0; j < 5; ++j) x(j) = u(rng);
    const Batch batch{{x, u(rng) < 0.5 ? 0.0 : 1.0}};
    const auto theta = init_params(spec, 100 + trial);
    const Vector target = update_map(spec, batch, theta, sched);
    worst_truth = std::max(
        worst_truth, attack_objective(spec, theta, batch, target, sched, Distance::kSquaredL2).value);
    AttackConfig ac;
    ac.optimizer = AttackOptimizer::kAdaptiveMoment;
    ac.rounds = 2000;
    ac.seed = trial;
    const auto tr = reconstruct(spec, theta, target, labels_of(batch), sched, ac);
    const double err = matched_relative_error(tr.final_batch, batch);
    if (err <= 1e-2) ++recovered;
  }
  o.require(recovered >= 8, std::to_string(recovered) + "/10 recovered");
  o.require(worst_truth <= 1e-15, "objective at truth " + fmt(worst_truth));
  o.detail << recovered << "/10 trials within 1e-2, objective at truth " << fmt(worst_truth);
}

// ---- 6: leakage metric --------------------------------------------------

ReconstructionTrace constant_trace(const Batch& b, int rounds) {
  ReconstructionTrace tr;
  for (int t = 0; t < rounds; ++t) tr.iterates.push_back(b);
  tr.final_batch = b;
  return tr;
}

Sample at(std::initializer_list<double> v) {
  Sample s;
  s.x = Vector(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) s.x(i++) = d;
  return s;
}

double eps_of(const Batch& recon, const Batch& orig, double diameter) {
  const auto tr = constant_trace(recon, 3);
  const AttackedBatch run{&tr, orig};
  return privacy_leakage(std::span(&run, 1), diameter).eps_p;
}

void leakage_metric(Outcome& o) {
  const Batch orig{at({0, 0}), at({1, 1})};
  o.require(eps_of(orig, orig, 2.0) == 1.0, "perfect reconstruction");
  o.require(std::abs(eps_of({at({2, 0}), at({1, 3})}, orig, 2.0)) <= 1e-15, "all distances D");
  o.require(std::abs(eps_of({at({0, 0}), at({1, 3})}, orig, 2.0) - 0.5) <= 1e-15, "mixed {0, D}");
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0.0;
  for (int b = 1; b <= 8; ++b) {
    Batch x, r;
    for (int i = 0; i < b; ++i) {
      x.push_back(at({u(rng), u(rng), u(rng)}));
      r.push_back(at({u(rng), u(rng), u(rng)}));
    }
    const double base = eps_of(r, x, 2.0);
    const double oracle =
        1.0 - testing::brute_force_assignment_cost(pairwise_distances(r, x)) / (2.0 * b);
    worst = std::max(worst, std::abs(base - oracle));
    std::vector<std::size_t> perm(static_cast<std::size_t>(b));
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    Batch rp;
    for (auto i : perm) rp.push_back(r[i]);
    worst = std::max(worst, std::abs(eps_of(rp, x, 2.0) - base));
  }
  o.require(worst <= 1e-12, "permutation gap " + fmt(worst));
  o.detail << "analytic cases exact, B<=8 exhaustive gap " << fmt(worst);
}

// ---- 7: bound evaluator -------------------------------------------------

BoundInputs worked_example() {
  BoundInputs in;
  in.batch_size = 8;
  in.distortion = 1.0;
  in.c_a = 1.0;
  in.c_b = 1.0;
  in.c_2 = 1.0;
  in.diameter = 2.0;
  in.attacker_rounds = 4;
  return in;
}

void bound_evaluator(Outcome& o) {
  const auto r = leakage_upper_bound(worked_example());
  o.require(std::abs(r.bound - 1.16628) <= 1e-5, "example bound " + fmt(r.bound));
  o.detail << "example bound " << std::setprecision(7) << r.bound;

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    auto in = worked_example();
    in.c_a = u(rng);
    in.c_b = in.c_a + u(rng);
    in.c_2 = u(rng);
    in.diameter = u(rng);
    in.batch_size = 1 + rep;
    double prev = std::numeric_limits<double>::infinity();
    for (double delta = 0.0; delta <= 5.0; delta += 0.05) {
      in.distortion = delta;
      const double b = leakage_upper_bound(in).bound;
      o.require(b <= prev, "increase in delta at " + fmt(delta));
      prev = b;
    }
  }
  auto in = worked_example();
  double prev = std::numeric_limits<double>::infinity();
  for (int b = 2; b <= 1024; ++b) {
    in.batch_size = b;
    const double v = leakage_upper_bound(in).bound;
    o.require(v <= prev, "increase in B at " + std::to_string(b));
    prev = v;
  }
  const auto eq = worked_example();
  o.require(bound_threshold(eq) == 1.0 && check_bound_precondition(eq),
            "threshold equality not accepted");
  o.detail << ", monotone in delta and B, boundary accepted";
}

// ---- 8 and 10: desk sweep -----------------------------------------------

ExperimentConfig desk_sweep_config() {
  return load_config(FEDLEAK_SOURCE_DIR "/config/bound_sweep.toml");
}

void bound_consistency(Outcome& o, const fs::path& dir) {
  const auto cfg = desk_sweep_config();
  o.require(cfg.model == ModelSpec::logistic(5, true), "config model");
  o.require(cfg.sweep.batch_sizes == std::vector<int>({1, 2, 4, 8}), "config batch sizes");
  o.require(cfg.privacy.trials == 10, "config trials");
  o.require(cfg.privacy.distortions == std::vector<double>({0.25, 0.5, 1.0}), "config distortions");
  const auto r = run_sweep(cfg, dir);
  int applicable = 0, failed = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (const auto& row : r.bound_rows) {
    if (row.status != "ok") ++failed;
    if (row.status == "ok" && row.precondition_ok) {
      ++applicable;
      tightest = std::min(tightest, row.bound - row.eps_p);
    }
  }
  o.require(failed == 0, std::to_string(failed) + " failed rows");
  o.require(applicable > 0, "no row satisfies the precondition");
  for (const auto& v : r.violations) {
    o.require(false, "violation " + to_json(v).dump());
  }
  o.detail << r.bound_rows.size() << " rows, " << applicable
           << " with precondition_ok, min(bound - eps_p) " << fmt(tightest) << ", "
           << r.violations.size() << " violations";
}

void determinism(Outcome& o, const fs::path& first, const fs::path& second) {
  run_sweep(desk_sweep_config(), second);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(first)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(fs::relative(e.path(), first));
  }
  std::sort(files.begin(), files.end());
  o.require(files.size() >= 3, "only " + std::to_string(files.size()) + " CSV files");
  for (const auto& f : files) {
    o.require(fs::exists(second / f) && slurp(first / f) == slurp(second / f), f.string() + " differs");
  }
  o.detail << files.size() << " CSV files byte-identical";
}

// ---- 9: FedAvg degeneracy -----------------------------------------------

ClientDataset client_of(const ModelSpec& spec, int id, int n, std::uint64_t seed) {
  ClientDataset c;
  c.client_id = id;
  c.input_dim = spec.input_dim;
  c.samples = testing::random_batch(spec, n, seed);
  return c;
}

void fedavg_degeneracy(Outcome& o) {
  double worst_gd = 0.0, worst_agg = 0.0;
  for (const auto& spec : {ModelSpec::linear(3), ModelSpec::logistic(4), ModelSpec::mlp1(2, 4, 1),
                           ModelSpec::mlp1(2, 3, 3)}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const int n = 2 + static_cast<int>(seed);
      const std::vector<ClientDataset> one{client_of(spec, 0, n, 40 + seed)};
      TrainConfig tc;
      tc.clients = 1;
      tc.local_epochs = 1;
      tc.batch_size = n;
      tc.learning_rate = 0.15;
      tc.seed = seed;
      const auto theta0 = init_params(spec, seed);
      const auto trace = run_training(spec, one, theta0, tc);
      Vector g = Vector::Zero(spec.param_dim());
      for (const auto& s : one[0].samples) g += grad_theta(spec, theta0, s.x, s.y);
      const Vector gd = theta0 - tc.learning_rate * g / n;
      worst_gd = std::max(worst_gd, (trace.thetas[1] - gd).cwiseAbs().maxCoeff());

      const std::vector<ClientDataset> many{client_of(spec, 0, 6, 60 + seed),
                                            client_of(spec, 1, 6, 70 + seed),
                                            client_of(spec, 2, 6, 80 + seed)};
      TrainConfig mc;
      mc.clients = 3;
      mc.batch_size = 2;
      mc.local_epochs = 2;
      mc.rounds = 3;
      mc.seed = seed;
      const auto a = run_training(spec, many, theta0, mc);
      mc.aggregation = Aggregation::kUniformDelta;
      const auto b = run_training(spec, many, theta0, mc);
      worst_agg = std::max(worst_agg, (a.thetas.back() - b.thetas.back()).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst_gd <= 1e-12, "GD step gap " + fmt(worst_gd));
  o.require(worst_agg <= 1e-12, "aggregation gap " + fmt(worst_agg));
  o.detail << "GD step gap " << fmt(worst_gd) << ", aggregation modes gap " << fmt(worst_agg);
}

}  // namespace
}  // namespace fedleak

int main() {
  using namespace fedleak;
  const auto root = fs::temp_directory_path() / "fedleak_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto sweep_a = root / "sweep_a";
  const auto sweep_b = root / "sweep_b";

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", 10, gradient_correctness},
      {2, "Jacobian equivalence", 30, jacobian_equivalence},
      {3, "rank behaviour", 120, rank_behaviour},
      {4, "collision certificate", 60, collision_certificate},
      {5, "attack sanity", 300, attack_sanity},
      {6, "leakage metric", 0, leakage_metric},
      {7, "bound evaluator", 0, bound_evaluator},
      {8, "empirical bound consistency", 900, [&](Outcome& o) { bound_consistency(o, sweep_a); }},
      {9, "FedAvg degeneracy", 0, fedavg_degeneracy},
      {10, "determinism", 0, [&](Outcome& o) { determinism(o, sweep_a, sweep_b); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0) o.require(secs < c.limit_s, "runtime " + fmt(secs) + " s");
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " ("
              << std::fixed << std::setprecision(2) << secs << " s) " << std::defaultfloat
              << std::setprecision(6) << o.detail.str()
              << (o.pass ? "" : " | failed: " + o.failures) << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
