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

// Seeded experiment orchestration: one trial trains FedAvg, attacks the
// last update of client 0, analyses the update Jacobian of its batch and
// evaluates the leakage bound. A sweep repeats trials over (B, E, n).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedleak/attack.hpp"
#include "fedleak/config.hpp"
#include "fedleak/data.hpp"
#include "fedleak/fedcore.hpp"
#include "fedleak/jacobian.hpp"
#include "fedleak/matching.hpp"
#include "fedleak/models.hpp"
#include "fedleak/privacy.hpp"
#include "fedleak/seed.hpp"
#include "json.hpp"

namespace fedleak {

struct SweepPoint {
  int batch_size = 1;
  int local_epochs = 1;
  int samples_per_client = 1;  // resolved: never 0
};

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg) {
  auto bs = cfg.sweep.batch_sizes.empty() ? std::vector<int>{cfg.train.batch_size} : cfg.sweep.batch_sizes;
  auto es = cfg.sweep.local_epochs.empty() ? std::vector<int>{cfg.train.local_epochs} : cfg.sweep.local_epochs;
  auto ns = cfg.sweep.samples_per_client.empty() ? std::vector<int>{cfg.data.samples_per_client}
                                                 : cfg.sweep.samples_per_client;
  std::vector<SweepPoint> out;
  for (int b : bs) {
    for (int e : es) {
      for (int n : ns) out.push_back({b, e, n == 0 ? b : n});
    }
  }
  return out;
}

/// Everything an attacker-side analysis needs from one training run.
struct TrialContext {
  SweepPoint point;
  int trial = 0;
  TrainConfig train;
  std::vector<ClientDataset> clients;
  TrainingTrace training;
  ParamVector theta;  // global model the attacked update started from
  Batch batch;        // client 0's samples
  Vector update;      // client 0's update in the last round
  LocalTraining schedule;
};

inline TrialContext prepare_trial(const ExperimentConfig& cfg, const SweepPoint& pt, int trial) {
  if (cfg.train.rounds < 1) throw Error("train.rounds must be >= 1 to observe an update");
  TrialContext ctx;
  ctx.point = pt;
  ctx.trial = trial;
  ctx.train = cfg.train;
  ctx.train.batch_size = pt.batch_size;
  ctx.train.local_epochs = pt.local_epochs;
  ctx.train.seed = derive_seed(cfg.master_seed, "train", pt.batch_size, pt.local_epochs,
                               pt.samples_per_client, trial);
  ctx.clients = make_client_data(cfg, pt.samples_per_client,
                                 derive_seed(cfg.master_seed, "data", pt.batch_size,
                                             pt.local_epochs, pt.samples_per_client, trial));
  const ParamVector theta0 =
      init_params(cfg.model, derive_seed(cfg.master_seed, "init", pt.batch_size, pt.local_epochs,
                                         pt.samples_per_client, trial));
  ctx.training = run_training(cfg.model, ctx.clients, theta0, ctx.train);
  const int last = ctx.train.rounds - 1;
  ctx.theta = ctx.training.thetas[static_cast<std::size_t>(last)];
  ctx.update = ctx.training.updates[static_cast<std::size_t>(last)][0].delta;
  ctx.batch = ctx.clients[0].samples;
  ctx.schedule = LocalTraining::from(ctx.train);
  return ctx;
}

struct AttackRun {
  double distortion = 0.0;  // Delta_k, exact by construction
  Vector target;
  ReconstructionTrace trace;
  double eps_p = 0.0;
  double c_hat = 0.0;
  double final_relative_error = 0.0;
  double runtime_ms = 0.0;
};

/// The observed update with its implied gradient -update / (eta E) moved by
/// exactly `distortion` in gradient space.
inline Vector distorted_update(const Vector& update, const LocalTraining& schedule,
                               double distortion, std::uint64_t seed) {
  if (distortion == 0.0) return update;
  const double scale = schedule.learning_rate * schedule.local_epochs;
  return -scale * apply_distortion(-update / scale, distortion, seed);
}

inline AttackRun run_attack(const ExperimentConfig& cfg, const TrialContext& ctx, double distortion,
                            double diameter) {
  const auto start = std::chrono::steady_clock::now();
  const auto& pt = ctx.point;
  AttackRun run;
  run.distortion = distortion;
  run.target = distorted_update(ctx.update, ctx.schedule, distortion,
                                derive_seed(cfg.master_seed, "distortion", pt.batch_size,
                                            pt.local_epochs, pt.samples_per_client, ctx.trial,
                                            distortion));
  AttackConfig ac = cfg.attack;
  // Same initial candidate for every distortion of a trial.
  ac.seed = derive_seed(cfg.master_seed, "attack", pt.batch_size, pt.local_epochs,
                        pt.samples_per_client, ctx.trial);
  run.trace = reconstruct(cfg.model, ctx.theta, run.target, labels_of(ctx.batch), ctx.schedule, ac);
  if (run.trace.iterates.empty()) throw Error("attack diverged on its first round");
  const AttackedBatch ab{&run.trace, ctx.batch};
  run.eps_p = privacy_leakage(std::span(&ab, 1), diameter).eps_p;
  run.c_hat = regret_statistic(run.trace).c_hat;
  run.final_relative_error = matched_relative_error(run.trace.final_batch, ctx.batch);
  run.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return run;
}

struct JacobianAnalysis {
  UpdateJacobian jacobian;
  bool sufficient = false;  // d < (batch samples) * p
  std::optional<CollisionCertificate> collision;
};

/// The analytic route needs E = 1; other points fall back to finite
/// differences and the result records which method ran.
inline JacobianAnalysis analyze_jacobian(const ExperimentConfig& cfg, const TrialContext& ctx) {
  JacobianAnalysis a;
  const auto method = cfg.jacobian.method == JacobianMethod::kAnalyticE1 &&
                              ctx.schedule.local_epochs == 1
                          ? JacobianMethod::kAnalyticE1
                          : JacobianMethod::kFiniteDifference;
  a.jacobian = update_jacobian(cfg.model, ctx.batch, ctx.theta, ctx.schedule, method,
                               cfg.jacobian.fd_step, cfg.jacobian.rank_tolerance);
  a.sufficient = check_sufficient_condition(cfg.model.param_dim(),
                                            static_cast<long>(ctx.batch.size()),
                                            cfg.model.input_dim);
  if (a.jacobian.kernel_dim() > 0) {
    const auto& pt = ctx.point;
    a.collision = construct_collision(
        cfg.model, ctx.batch, ctx.theta, ctx.schedule, cfg.jacobian.collision_magnitude,
        derive_seed(cfg.master_seed, "collision", pt.batch_size, pt.local_epochs,
                    pt.samples_per_client, ctx.trial),
        {cfg.jacobian.fd_step, cfg.jacobian.rank_tolerance});
  }
  return a;
}

// ---- output rows ---------------------------------------------------------

struct BoundRow {
  int batch_size = 0;
  std::string poly_choice;
  double delta_k = 0.0;
  double bound = std::numeric_limits<double>::quiet_NaN();
  double eps_p = std::numeric_limits<double>::quiet_NaN();
  bool precondition_ok = false;
  int local_epochs = 0;
  int samples = 0;
  int trial = 0;
  double c_a = std::numeric_limits<double>::quiet_NaN();
  double c_b = std::numeric_limits<double>::quiet_NaN();
  double c_0 = std::numeric_limits<double>::quiet_NaN();
  double c_2 = std::numeric_limits<double>::quiet_NaN();
  double threshold = std::numeric_limits<double>::quiet_NaN();
  double tail_probability = std::numeric_limits<double>::quiet_NaN();
  double diameter = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";

  bool violates() const { return status == "ok" && precondition_ok && eps_p > bound; }
};

struct JacobianRow {
  int d = 0;
  int batch = 0;  // samples in the analysed batch
  int p = 0;
  int rank = -1;
  int kernel_dim = -1;
  double update_gap = std::numeric_limits<double>::quiet_NaN();
  int batch_size = 0;
  int local_epochs = 0;
  int trial = 0;
  std::string method;
  bool sufficient = false;
  double relative_gap = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct ResultRecord {
  std::string experiment_id;
  std::string config_hash;
  int batch_size = 0;
  int local_epochs = 0;
  int samples = 0;
  int trial = 0;
  int d = 0;
  int p = 0;
  double delta_k = 0.0;
  double eps_p = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::string, double>> bounds;  // poly label -> bound
  bool precondition_ok = false;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  int rank = -1;
  int kernel_dim = -1;
  double update_gap = std::numeric_limits<double>::quiet_NaN();
  double c_a = std::numeric_limits<double>::quiet_NaN();
  double c_b = std::numeric_limits<double>::quiet_NaN();
  double c_hat = std::numeric_limits<double>::quiet_NaN();
  double c_0 = std::numeric_limits<double>::quiet_NaN();
  double c_2 = std::numeric_limits<double>::quiet_NaN();
  double final_relative_error = std::numeric_limits<double>::quiet_NaN();
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  bool degenerate = false;
  double runtime_ms = 0.0;
  std::string status = "ok";
};

inline nlohmann::json to_json(const ResultRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& [poly, b] : r.bounds) bounds.push_back({{"poly", poly}, {"bound", num(b)}});
  return {{"experiment_id", r.experiment_id},
          {"config_hash", r.config_hash},
          {"B", r.batch_size},
          {"E", r.local_epochs},
          {"n", r.samples},
          {"trial", r.trial},
          {"d", r.d},
          {"p", r.p},
          {"delta_k", num(r.delta_k)},
          {"eps_p", num(r.eps_p)},
          {"bounds", bounds},
          {"precondition_ok", r.precondition_ok},
          {"threshold", num(r.threshold)},
          {"rank", r.rank},
          {"kernel_dim", r.kernel_dim},
          {"update_gap", num(r.update_gap)},
          {"c_a", num(r.c_a)},
          {"c_b", num(r.c_b)},
          {"c_hat", num(r.c_hat)},
          {"c_0", num(r.c_0)},
          {"c_2", num(r.c_2)},
          {"final_relative_error", num(r.final_relative_error)},
          {"final_objective", num(r.final_objective)},
          {"diverged", r.diverged},
          {"degenerate", r.degenerate},
          {"runtime_ms", r.runtime_ms},
          {"status", r.status}};
}

inline nlohmann::json to_json(const Batch& batch) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : batch) {
    out.push_back({{"x", std::vector<double>(s.x.data(), s.x.data() + s.x.size())}, {"y", s.y}});
  }
  return out;
}

inline nlohmann::json to_json(const CollisionCertificate& c) {
  return {{"kernel_dim", c.kernel_dim},
          {"delta_x_norm", c.delta_x_norm},
          {"update_gap", c.update_gap},
          {"update_norm", c.update_norm},
          {"base_batch", to_json(c.base_batch)},
          {"perturbed_batch", to_json(c.perturbed_batch)}};
}

// ---- CSV -----------------------------------------------------------------

namespace detail {

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  return format_double(v);
}

inline std::string csv_bool(bool b) { return b ? "true" : "false"; }

// Quotes a free-text field when it holds a comma or quote.
inline std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline const char* kBoundSweepHeader =
    "B,poly_choice,delta_k,bound,eps_p,precondition_ok,E,n,trial,c_a,c_b,c_0,c_2,threshold,"
    "tail_probability,D,status";
inline const char* kJacobianHeader =
    "d,B,p,rank,kernel_dim,update_gap,sweep_B,E,trial,method,sufficient,relative_gap,status";
inline const char* kAttackTraceHeader = "round,objective,mismatch,mean_matched_distance";

inline void write_bound_rows(const std::filesystem::path& path, const std::vector<BoundRow>& rows) {
  using namespace detail;
  auto out = open_output(path);
  out << kBoundSweepHeader << '\n';
  for (const auto& r : rows) {
    out << r.batch_size << ',' << csv_text(r.poly_choice) << ',' << csv_num(r.delta_k) << ','
        << csv_num(r.bound) << ',' << csv_num(r.eps_p) << ',' << csv_bool(r.precondition_ok) << ','
        << r.local_epochs << ',' << r.samples << ',' << r.trial << ',' << csv_num(r.c_a) << ','
        << csv_num(r.c_b) << ',' << csv_num(r.c_0) << ',' << csv_num(r.c_2) << ','
        << csv_num(r.threshold) << ',' << csv_num(r.tail_probability) << ','
        << csv_num(r.diameter) << ',' << csv_text(r.status) << '\n';
  }
}

inline void write_jacobian_rows(const std::filesystem::path& path,
                                const std::vector<JacobianRow>& rows) {
  using namespace detail;
  auto out = open_output(path);
  out << kJacobianHeader << '\n';
  for (const auto& r : rows) {
    out << r.d << ',' << r.batch << ',' << r.p << ',' << r.rank << ',' << r.kernel_dim << ','
        << csv_num(r.update_gap) << ',' << r.batch_size << ',' << r.local_epochs << ',' << r.trial
        << ',' << r.method << ',' << csv_bool(r.sufficient) << ',' << csv_num(r.relative_gap)
        << ',' << csv_text(r.status) << '\n';
  }
}

/// Per-round distances use the pairing of the final iterate, as the leakage
/// measurement does.
inline void write_attack_trace(const std::filesystem::path& path, const ReconstructionTrace& trace,
                               const Batch& originals) {
  using namespace detail;
  auto out = open_output(path);
  out << kAttackTraceHeader << '\n';
  if (trace.iterates.empty()) return;
  const auto m = match_samples(trace.iterates.back(), originals);
  for (std::size_t t = 0; t < trace.rounds(); ++t) {
    double dist = 0.0;
    const auto& it = trace.iterates[t];
    for (std::size_t i = 0; i < it.size(); ++i) {
      dist += (it[i].x - originals[static_cast<std::size_t>(m.permutation[i])].x).norm();
    }
    out << t + 1 << ',' << csv_num(trace.objective[t]) << ',' << csv_num(trace.mismatch[t]) << ','
        << csv_num(dist / static_cast<double>(it.size())) << '\n';
  }
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  auto out = detail::open_output(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << (j ? "," : "") << detail::csv_num(m(i, j));
    }
    out << '\n';
  }
}

// ---- sweep ---------------------------------------------------------------

struct SweepResult {
  std::vector<ResultRecord> records;  // one per (point, trial, distortion)
  std::vector<BoundRow> bound_rows;   // one per (point, trial, distortion, poly)
  std::vector<JacobianRow> jacobian_rows;  // one per (point, trial)
  std::vector<ResultRecord> violations;
  std::string config_hash;
};

namespace detail {

struct TrialOutcome {
  std::optional<TrialContext> ctx;
  std::optional<JacobianAnalysis> jac;
  std::optional<LipschitzEstimate> lip;
  std::vector<AttackRun> runs;  // parallel to the distortion list
  double shared_ms = 0.0;
  std::string error;
};

inline std::string trace_name(const SweepPoint& pt, std::size_t distortion_index) {
  return "attack_trace_B" + std::to_string(pt.batch_size) + "_E" +
         std::to_string(pt.local_epochs) + "_n" + std::to_string(pt.samples_per_client) + "_d" +
         std::to_string(distortion_index) + ".csv";
}

}  // namespace detail

/// Runs every (point, trial) and evaluates the bound for every distortion
/// and poly(B) choice. c_0 and c_2 are the min and max per-run regret
/// statistic over the trials of a (point, distortion) pair, so rows are
/// formed after the whole point has run. A failing trial becomes flagged rows.
/// When out_dir is non-empty the CSV tables, records.jsonl and summary.txt
/// are written there.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {}) {
  cfg.validate();
  SweepResult result;
  result.config_hash = config_hash(cfg);
  const double diameter = cfg.diameter();
  const auto polys = cfg.poly_choices();
  const auto& distortions = cfg.privacy.distortions;
  const int d = cfg.model.param_dim();
  const int p = cfg.model.input_dim;
  std::ostringstream summary;
  summary << "experiment: " << cfg.name << "\nconfig_hash: " << result.config_hash
          << "\nmodel: " << to_string(cfg.model.kind) << " (d = " << d << ", p = " << p
          << ")\nD: " << format_double(diameter) << "\ntrials per point: " << cfg.privacy.trials
          << "\n\n";

  for (const auto& pt : sweep_points(cfg)) {
    std::vector<detail::TrialOutcome> outcomes(static_cast<std::size_t>(cfg.privacy.trials));
    for (int r = 0; r < cfg.privacy.trials; ++r) {
      auto& o = outcomes[static_cast<std::size_t>(r)];
      const auto start = std::chrono::steady_clock::now();
      try {
        o.ctx = prepare_trial(cfg, pt, r);
        o.jac = analyze_jacobian(cfg, *o.ctx);
        std::vector<double> labels = labels_of(o.ctx->batch);
        o.lip = estimate_lipschitz_constants(
            cfg.model, o.ctx->theta, cfg.domain(), labels, cfg.privacy.lipschitz_pairs,
            derive_seed(cfg.master_seed, "lipschitz", pt.batch_size, pt.local_epochs,
                        pt.samples_per_client, r));
        o.shared_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        for (double delta : distortions) o.runs.push_back(run_attack(cfg, *o.ctx, delta, diameter));
      } catch (const std::exception& e) {
        o.error = e.what();
        o.runs.clear();
      }
    }

    // Regret constants bracket the runs that share a distorted target law.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<RegretConstants> rcs(distortions.size(), RegretConstants{nan, nan});
    for (std::size_t k = 0; k < distortions.size(); ++k) {
      std::vector<ReconstructionTrace> traces;
      for (const auto& o : outcomes) {
        if (o.error.empty()) traces.push_back(o.runs[k].trace);
      }
      if (!traces.empty()) rcs[k] = estimate_regret_constants(traces);
    }

    std::vector<double> mean_eps(distortions.size(), 0.0);
    std::vector<int> eps_count(distortions.size(), 0);
    int point_rows_ok = 0, point_precondition = 0, point_failures = 0;
    for (int r = 0; r < cfg.privacy.trials; ++r) {
      const auto& o = outcomes[static_cast<std::size_t>(r)];
      JacobianRow jr;
      jr.d = d;
      jr.p = p;
      jr.batch = o.ctx ? static_cast<int>(o.ctx->batch.size()) : pt.samples_per_client;
      jr.batch_size = pt.batch_size;
      jr.local_epochs = pt.local_epochs;
      jr.trial = r;
      if (o.jac) {
        jr.rank = o.jac->jacobian.numerical_rank;
        jr.kernel_dim = o.jac->jacobian.kernel_dim();
        jr.method = std::string(to_string(o.jac->jacobian.method));
        jr.sufficient = o.jac->sufficient;
        if (o.jac->collision) {
          jr.update_gap = o.jac->collision->update_gap;
          jr.relative_gap = o.jac->collision->update_norm > 0
                                ? o.jac->collision->update_gap / o.jac->collision->update_norm
                                : std::numeric_limits<double>::quiet_NaN();
        }
      } else {
        jr.sufficient = check_sufficient_condition(d, pt.samples_per_client, p);
      }
      if (!o.error.empty()) jr.status = "error: " + o.error;
      result.jacobian_rows.push_back(jr);

      for (std::size_t k = 0; k < distortions.size(); ++k) {
        ResultRecord rec;
        rec.experiment_id = cfg.name;
        rec.config_hash = result.config_hash;
        rec.batch_size = pt.batch_size;
        rec.local_epochs = pt.local_epochs;
        rec.samples = pt.samples_per_client;
        rec.trial = r;
        rec.d = d;
        rec.p = p;
        rec.delta_k = distortions[k];
        rec.rank = jr.rank;
        rec.kernel_dim = jr.kernel_dim;
        rec.update_gap = jr.update_gap;
        const auto& rc = rcs[k];
        rec.c_0 = rc.c_0;
        rec.c_2 = rc.c_2;
        rec.status = jr.status;
        rec.runtime_ms = o.shared_ms;

        std::vector<BoundRow> rows;
        for (const auto& poly : polys) {
          BoundRow row;
          row.batch_size = pt.batch_size;
          row.poly_choice = poly.label();
          row.delta_k = distortions[k];
          row.local_epochs = pt.local_epochs;
          row.samples = pt.samples_per_client;
          row.trial = r;
          row.diameter = diameter;
          row.c_0 = rc.c_0;
          row.c_2 = rc.c_2;
          row.status = jr.status;
          rows.push_back(row);
        }

        if (o.error.empty()) {
          const auto& run = o.runs[k];
          rec.eps_p = run.eps_p;
          rec.c_a = o.lip->c_a;
          rec.c_b = o.lip->c_b;
          rec.c_hat = run.c_hat;
          rec.final_relative_error = run.final_relative_error;
          rec.final_objective = run.trace.objective.back();
          rec.diverged = run.trace.diverged;
          rec.degenerate = run.trace.degenerate;
          rec.runtime_ms += run.runtime_ms;
          mean_eps[k] += run.eps_p;
          ++eps_count[k];
          for (std::size_t q = 0; q < polys.size(); ++q) {
            BoundInputs in;
            in.batch_size = pt.batch_size;
            in.distortion = distortions[k];
            in.c_a = o.lip->c_a;
            in.c_b = o.lip->c_b;
            in.c_0 = rc.c_0;
            in.c_2 = rc.c_2;
            in.local_epochs = pt.local_epochs;
            in.attacker_rounds = static_cast<int>(run.trace.rounds());
            in.diameter = diameter;
            in.poly = polys[q];
            const auto b = leakage_upper_bound(in);
            auto& row = rows[q];
            row.bound = b.bound;
            row.eps_p = run.eps_p;
            row.precondition_ok = b.precondition_ok;
            row.c_a = in.c_a;
            row.c_b = in.c_b;
            row.threshold = b.threshold;
            row.tail_probability = b.tail_probability;
            rec.bounds.emplace_back(row.poly_choice, b.bound);
            rec.threshold = b.threshold;
            rec.precondition_ok = b.precondition_ok;
            ++point_rows_ok;
            if (b.precondition_ok) ++point_precondition;
          }
        } else {
          ++point_failures;
        }
        for (auto& row : rows) {
          if (row.violates()) result.violations.push_back(rec);
          result.bound_rows.push_back(std::move(row));
        }
        result.records.push_back(std::move(rec));
      }

      if (!out_dir.empty() && cfg.sweep.write_traces && r == 0 && o.error.empty()) {
        for (std::size_t k = 0; k < distortions.size(); ++k) {
          write_attack_trace(out_dir / "traces" / detail::trace_name(pt, k), o.runs[k].trace,
                             o.ctx->batch);
        }
      }
    }

    summary << "point B=" << pt.batch_size << " E=" << pt.local_epochs
            << " n=" << pt.samples_per_client
            << "  sufficient condition: " << (check_sufficient_condition(d, pt.samples_per_client, p) ? "true" : "false")
            << '\n';
    for (std::size_t k = 0; k < distortions.size(); ++k) {
      summary << "  delta=" << format_double(distortions[k]) << "  c_2=" << format_double(rcs[k].c_2)
              << "  mean eps_p="
              << (eps_count[k] ? format_double(mean_eps[k] / eps_count[k]) : std::string("nan"))
              << " over " << eps_count[k] << " trials\n";
    }
    summary << "  bound rows: " << point_rows_ok << ", precondition satisfied: " << point_precondition
            << ", failed records: " << point_failures << '\n';
  }

  summary << "\nbound violations: " << result.violations.size() << '\n';
  for (const auto& v : result.violations) summary << "  " << to_json(v).dump() << '\n';

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_bound_rows(out_dir / "bound_sweep.csv", result.bound_rows);
    write_jacobian_rows(out_dir / "jacobian.csv", result.jacobian_rows);
    auto rec_out = detail::open_output(out_dir / "records.jsonl");
    for (const auto& r : result.records) rec_out << to_json(r).dump() << '\n';
    auto sum_out = detail::open_output(out_dir / "summary.txt");
    sum_out << summary.str();
  }
  return result;
}

}  // namespace fedleak
