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

// Command-line front end. Kept in the library so tests can drive it with
// string streams.

#include <filesystem>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedleak/config.hpp"
#include "fedleak/harness.hpp"
#include "fedleak/privacy.hpp"
#include "json.hpp"

namespace fedleak {

namespace detail {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config,-c", o.config, "TOML experiment file (defaults apply when omitted)");
  sub->add_option("--set", o.sets, "override a key, e.g. --set train.rounds=5")->take_all();
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--out,-o", o.out, "output directory");
}

inline ExperimentConfig resolve_config(const CommonOptions& o) {
  std::vector<std::string> sets = o.sets;
  if (o.seed) sets.push_back("master_seed=" + std::to_string(*o.seed));
  if (!o.out.empty()) sets.push_back("output_dir=\"" + o.out + "\"");
  if (o.config.empty()) return parse_config("", sets);
  return load_config(o.config, sets);
}

inline SweepPoint configured_point(const ExperimentConfig& cfg) {
  const int n = cfg.data.samples_per_client == 0 ? cfg.train.batch_size : cfg.data.samples_per_client;
  return {cfg.train.batch_size, cfg.train.local_epochs, n};
}

inline std::vector<double> vec_of(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

inline int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out) {
  const auto ctx = prepare_trial(cfg, configured_point(cfg), 0);
  const std::filesystem::path dir = cfg.output_dir;
  {
    auto csv = open_output(dir / "training.csv");
    csv << "round,global_loss,client0_update_norm\n";
    for (std::size_t t = 0; t < ctx.training.thetas.size(); ++t) {
      csv << t << ',' << csv_num(global_loss(cfg.model, ctx.clients, ctx.training.thetas[t])) << ',';
      csv << (t < ctx.training.updates.size() ? csv_num(ctx.training.updates[t][0].delta.norm())
                                               : std::string("nan"))
          << '\n';
    }
  }
  for (const auto& c : ctx.clients) {
    std::filesystem::create_directories(dir / "data");
    save_csv((dir / "data" / ("client_" + std::to_string(c.client_id) + ".csv")).string(), c.samples);
  }
  out << "clients: " << ctx.clients.size() << ", rounds: " << ctx.train.rounds
      << ", B = " << ctx.train.batch_size << ", E = " << ctx.train.local_epochs << '\n';
  out << "initial global loss: " << global_loss(cfg.model, ctx.clients, ctx.training.thetas.front())
      << '\n';
  out << "final global loss: " << global_loss(cfg.model, ctx.clients, ctx.training.thetas.back())
      << '\n';
  out << "wrote " << (dir / "training.csv").string() << '\n';
  return 0;
}

inline int cmd_jacobian(const ExperimentConfig& cfg, std::ostream& out) {
  const auto ctx = prepare_trial(cfg, configured_point(cfg), 0);
  const auto a = analyze_jacobian(cfg, ctx);
  const long d = cfg.model.param_dim();
  const long b = static_cast<long>(ctx.batch.size());
  const long p = cfg.model.input_dim;
  out << "d = " << d << ", B = " << b << ", p = " << p << '\n';
  out << "sufficient condition: " << (a.sufficient ? "true" : "false") << " (" << d
      << (a.sufficient ? " < " : " >= ") << b * p << ")\n";
  out << "method: " << to_string(a.jacobian.method) << '\n';
  out << "numerical rank: " << a.jacobian.numerical_rank << " (relative tolerance "
      << a.jacobian.tolerance << ")\n";
  out << "kernel dimension: " << a.jacobian.kernel_dim() << '\n';

  const std::filesystem::path dir = cfg.output_dir;
  JacobianRow row;
  row.d = static_cast<int>(d);
  row.batch = static_cast<int>(b);
  row.p = static_cast<int>(p);
  row.rank = a.jacobian.numerical_rank;
  row.kernel_dim = a.jacobian.kernel_dim();
  row.batch_size = ctx.point.batch_size;
  row.local_epochs = ctx.point.local_epochs;
  row.method = std::string(to_string(a.jacobian.method));
  row.sufficient = a.sufficient;
  if (a.collision) {
    const auto& c = *a.collision;
    row.update_gap = c.update_gap;
    row.relative_gap = c.update_norm > 0 ? c.update_gap / c.update_norm : row.relative_gap;
    out << "collision: |dx| = " << c.delta_x_norm << ", update gap = " << c.update_gap
        << ", |update| = " << c.update_norm << '\n';
    write_json(dir / "collision.json", to_json(c));
  } else {
    out << "collision: none (trivial kernel)\n";
  }
  write_jacobian_rows(dir / "jacobian.csv", {row});
  write_matrix_csv(dir / "jacobian_matrix.csv", a.jacobian.jacobian);
  write_matrix_csv(dir / "singular_values.csv", a.jacobian.singular_values);
  out << "wrote " << (dir / "jacobian.csv").string() << '\n';
  return 0;
}

inline int cmd_attack(const ExperimentConfig& cfg, double delta, std::ostream& out) {
  const auto ctx = prepare_trial(cfg, configured_point(cfg), 0);
  const auto run = run_attack(cfg, ctx, delta, cfg.diameter());
  const std::filesystem::path dir = cfg.output_dir;
  write_attack_trace(dir / "attack_trace.csv", run.trace, ctx.batch);
  nlohmann::json j{{"config_hash", config_hash(cfg)},
                   {"delta_k", delta},
                   {"rounds", run.trace.rounds()},
                   {"initial_objective", run.trace.initial_objective},
                   {"final_objective", run.trace.objective.back()},
                   {"final_relative_error", run.final_relative_error},
                   {"eps_p", run.eps_p},
                   {"c_hat", run.c_hat},
                   {"diverged", run.trace.diverged},
                   {"degenerate", run.trace.degenerate},
                   {"original_batch", to_json(ctx.batch)},
                   {"reconstructed_batch", to_json(run.trace.final_batch)}};
  write_json(dir / "attack_result.json", j);
  out << "attack rounds: " << run.trace.rounds() << (run.trace.diverged ? " (diverged)" : "") << '\n';
  out << "objective: " << run.trace.initial_objective << " -> " << run.trace.objective.back() << '\n';
  out << "final matched relative error: " << run.final_relative_error << '\n';
  out << "eps_p: " << run.eps_p << '\n';
  out << "c_hat: " << run.c_hat << '\n';
  out << "wrote " << (dir / "attack_trace.csv").string() << '\n';
  return 0;
}

struct BoundOptions {
  int batch_size = 0;
  double delta = 0.0;
  double c_a = 1.0;
  std::optional<double> c_b;
  double c_0 = 0.0;
  double c_2 = 1.0;
  double diameter = 0.0;
  std::string poly = "lnB";
  int epochs = 1;
  int rounds = 1;
};

inline int cmd_bound(const BoundOptions& o, std::ostream& out) {
  BoundInputs in;
  in.batch_size = o.batch_size;
  in.distortion = o.delta;
  in.c_a = o.c_a;
  in.c_b = o.c_b.value_or(o.c_a);
  in.c_0 = o.c_0;
  in.c_2 = o.c_2;
  in.diameter = o.diameter;
  in.poly = PolyChoice::parse(o.poly);
  in.local_epochs = o.epochs;
  in.attacker_rounds = o.rounds;
  const auto r = leakage_upper_bound(in);
  out << "bound: " << r.bound << '\n';
  out << "tail probability: " << r.tail_probability << '\n';
  out << "precondition threshold: " << r.threshold << '\n';
  out << "precondition: " << (r.precondition_ok ? "satisfied" : "not satisfied") << '\n';
  if (r.distortion_above_one) out << "note: distortion extent above 1\n";
  return 0;
}

inline int cmd_estimate_constants(const ExperimentConfig& cfg, std::ostream& out) {
  const auto pt = configured_point(cfg);
  std::vector<ReconstructionTrace> traces;
  LipschitzEstimate lip{std::numeric_limits<double>::infinity(), 0.0, 0, 0};
  for (int r = 0; r < cfg.privacy.trials; ++r) {
    const auto ctx = prepare_trial(cfg, pt, r);
    const auto labels = labels_of(ctx.batch);
    const auto e = estimate_lipschitz_constants(
        cfg.model, ctx.theta, cfg.domain(), labels, cfg.privacy.lipschitz_pairs,
        derive_seed(cfg.master_seed, "lipschitz", pt.batch_size, pt.local_epochs,
                    pt.samples_per_client, r));
    lip.c_a = std::min(lip.c_a, e.c_a);
    lip.c_b = std::max(lip.c_b, e.c_b);
    lip.kept += e.kept;
    lip.skipped += e.skipped;
    traces.push_back(run_attack(cfg, ctx, 0.0, cfg.diameter()).trace);
  }
  const auto rc = estimate_regret_constants(traces);
  out << "c_a: " << lip.c_a << '\n' << "c_b: " << lip.c_b << '\n';
  out << "pairs kept: " << lip.kept << ", skipped: " << lip.skipped << '\n';
  out << "c_0: " << rc.c_0 << '\n' << "c_2: " << rc.c_2 << '\n';
  out << "D: " << cfg.diameter() << '\n';
  write_json(std::filesystem::path(cfg.output_dir) / "constants.json",
             {{"config_hash", config_hash(cfg)},
              {"trials", cfg.privacy.trials},
              {"c_a", lip.c_a},
              {"c_b", lip.c_b},
              {"pairs_kept", lip.kept},
              {"pairs_skipped", lip.skipped},
              {"c_0", rc.c_0},
              {"c_2", rc.c_2},
              {"D", cfg.diameter()}});
  return 0;
}

inline int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out) {
  const std::filesystem::path dir = cfg.output_dir;
  const auto r = run_sweep(cfg, dir);
  int applicable = 0;
  for (const auto& row : r.bound_rows) applicable += row.status == "ok" && row.precondition_ok;
  int failed = 0;
  for (const auto& rec : r.records) failed += rec.status != "ok";
  out << "config hash: " << r.config_hash << '\n';
  out << "records: " << r.records.size() << " (" << failed << " failed)\n";
  out << "bound rows: " << r.bound_rows.size() << ", precondition satisfied: " << applicable << '\n';
  out << "bound violations: " << r.violations.size() << '\n';
  out << "wrote " << (dir / "bound_sweep.csv").string() << '\n';
  return 0;
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace detail;
  CLI::App app{"fedleak: federated learning privacy laboratory", "fedleak"};
  app.require_subcommand(1);

  CommonOptions common;
  auto* simulate = app.add_subcommand("simulate", "run FedAvg and write the loss curve");
  auto* jacobian = app.add_subcommand("jacobian", "rank, kernel and a collision for one batch");
  auto* attack = app.add_subcommand("attack", "reconstruct client 0's batch from its update");
  auto* bound = app.add_subcommand("bound", "evaluate the leakage upper bound");
  auto* constants = app.add_subcommand("estimate-constants", "estimate c_a, c_b, c_0, c_2");
  auto* sweep = app.add_subcommand("sweep", "run a full (B, E, n) sweep");
  for (auto* s : {simulate, jacobian, attack, bound, constants, sweep}) add_common(s, common);

  double attack_delta = 0.0;
  attack->add_option("--delta", attack_delta, "distortion extent applied to the update")
      ->check(CLI::NonNegativeNumber);

  BoundOptions bo;
  bound->add_option("--B", bo.batch_size, "batch size")->required()->check(CLI::PositiveNumber);
  bound->add_option("--delta", bo.delta, "distortion extent")->required();
  bound->add_option("--c-a", bo.c_a, "lower bi-Lipschitz constant");
  bound->add_option("--c-b", bo.c_b, "upper bi-Lipschitz constant (default c_a)");
  bound->add_option("--c0", bo.c_0, "lower regret constant");
  bound->add_option("--c2", bo.c_2, "upper regret constant");
  bound->add_option("--D", bo.diameter, "data diameter")->required();
  bound->add_option("--poly", bo.poly, "poly(B): lnB or <c>*B^<a>");
  bound->add_option("--E", bo.epochs, "local epochs");
  bound->add_option("--T", bo.rounds, "attacker rounds");

  if (argc <= 1) {
    err << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (bound->parsed()) return cmd_bound(bo, out);
    const auto cfg = resolve_config(common);
    if (simulate->parsed()) return cmd_simulate(cfg, out);
    if (jacobian->parsed()) return cmd_jacobian(cfg, out);
    if (attack->parsed()) return cmd_attack(cfg, attack_delta, out);
    if (constants->parsed()) return cmd_estimate_constants(cfg, out);
    if (sweep->parsed()) return cmd_sweep(cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace fedleak
