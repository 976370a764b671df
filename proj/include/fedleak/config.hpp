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

// Experiment configuration: TOML documents (see config/schema.md), --set
// overrides and a canonical hash.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedleak/attack.hpp"
#include "fedleak/common.hpp"
#include "fedleak/fedcore.hpp"
#include "fedleak/jacobian.hpp"
#include "fedleak/models.hpp"
#include "fedleak/privacy.hpp"
#include "fedleak/seed.hpp"

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

namespace fedleak {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::string csv_path;
  int samples_per_client = 0;  // 0: one batch per client (n = B)
  double lo = 0.0;
  double hi = 1.0;
  double label_noise = 0.0;  // linear teacher only
};

struct JacobianConfig {
  JacobianMethod method = JacobianMethod::kFiniteDifference;
  double fd_step = kDefaultFdStep;
  double rank_tolerance = kDefaultRankTolerance;
  double collision_magnitude = 1e-3;
};

struct PrivacyConfig {
  double diameter = 0.0;  // 0: diagonal of the data box
  std::vector<std::string> poly{"lnB"};
  std::vector<double> distortions{0.0};
  int trials = 10;
  int lipschitz_pairs = 200;
};

struct SweepConfig {
  std::vector<int> batch_sizes;         // empty: train.batch_size
  std::vector<int> local_epochs;        // empty: train.local_epochs
  std::vector<int> samples_per_client;  // empty: data.samples_per_client
  bool write_traces = true;             // attack traces of trial 0 per point
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t master_seed = 0;
  std::string output_dir = "out";
  ModelSpec model = ModelSpec::logistic(5, true);
  DataConfig data;
  TrainConfig train;
  AttackConfig attack;
  JacobianConfig jacobian;
  PrivacyConfig privacy;
  SweepConfig sweep;

  DataDomain domain() const { return DataDomain::cube(model.input_dim, data.lo, data.hi); }

  double diameter() const { return privacy.diameter > 0 ? privacy.diameter : data_diameter(domain()); }

  std::vector<PolyChoice> poly_choices() const {
    std::vector<PolyChoice> out;
    for (const auto& s : privacy.poly) out.push_back(PolyChoice::parse(s));
    return out;
  }

  void validate() const {
    model.validate();
    if (data.source != "synthetic" && data.source != "csv") {
      throw Error("config: data.source must be 'synthetic' or 'csv'");
    }
    if (data.source == "csv" && data.csv_path.empty()) throw Error("config: data.csv_path is required");
    if (!(data.lo < data.hi)) throw Error("config: data.lo must be < data.hi");
    if (data.samples_per_client < 0) throw Error("config: data.samples_per_client must be >= 0");
    if (!(data.label_noise >= 0)) throw Error("config: data.label_noise must be >= 0");
    train.validate();
    attack.validate();
    if (!(jacobian.fd_step > 0)) throw Error("config: jacobian.fd_step must be > 0");
    if (!(jacobian.rank_tolerance > 0 && jacobian.rank_tolerance < 1)) {
      throw Error("config: jacobian.rank_tolerance must be in (0, 1)");
    }
    if (!(jacobian.collision_magnitude >= 0)) throw Error("config: jacobian.collision_magnitude must be >= 0");
    if (privacy.diameter < 0) throw Error("config: privacy.diameter must be >= 0");
    if (privacy.trials < 1) throw Error("config: privacy.trials must be >= 1");
    if (privacy.lipschitz_pairs < 2) throw Error("config: privacy.lipschitz_pairs must be >= 2");
    if (privacy.poly.empty()) throw Error("config: privacy.poly must not be empty");
    poly_choices();
    if (privacy.distortions.empty()) throw Error("config: privacy.distortions must not be empty");
    for (double d : privacy.distortions) {
      if (!(d >= 0)) throw Error("config: distortions must be >= 0");
    }
    for (int b : sweep.batch_sizes) {
      if (b < 1) throw Error("config: sweep.batch_sizes must be >= 1");
    }
    for (int e : sweep.local_epochs) {
      if (e < 1) throw Error("config: sweep.local_epochs must be >= 1");
    }
    for (int n : sweep.samples_per_client) {
      if (n < 0) throw Error("config: sweep.samples_per_client must be >= 0");
    }
  }
};

namespace detail {

// Every accepted key, by section. "" is the top level.
inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"", {"name", "master_seed", "output_dir"}},
      {"model", {"kind", "input_dim", "hidden_dim", "output_dim", "bias"}},
      {"data", {"source", "csv_path", "samples_per_client", "lo", "hi", "label_noise"}},
      {"train", {"clients", "rounds", "local_epochs", "batch_size", "learning_rate", "aggregation"}},
      {"attack",
       {"metric", "optimizer", "step_size", "rounds", "init", "init_center", "init_scale",
        "reconstruct_labels", "gradient", "fd_step", "schedule", "divergence_factor"}},
      {"jacobian", {"method", "fd_step", "rank_tolerance", "collision_magnitude"}},
      {"privacy", {"diameter", "poly", "distortions", "trials", "lipschitz_pairs"}},
      {"sweep", {"batch_sizes", "local_epochs", "samples_per_client", "write_traces"}},
  };
  return schema;
}

inline void check_keys(const toml::table& root) {
  const auto& schema = config_schema();
  for (const auto& [key, node] : root) {
    const std::string k(key.str());
    if (node.is_table()) {
      const auto it = schema.find(k);
      if (it == schema.end() || k.empty()) throw Error("config: unknown section [" + k + "]");
      for (const auto& [sub, _] : *node.as_table()) {
        if (!it->second.count(std::string(sub.str()))) {
          throw Error("config: unknown key " + k + "." + std::string(sub.str()));
        }
      }
    } else if (!schema.at("").count(k)) {
      throw Error("config: unknown key " + k);
    }
  }
}

inline std::string key_name(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

inline const toml::node* find_node(const toml::table& root, const std::string& section,
                                   const std::string& key) {
  if (section.empty()) return root.get(key);
  const auto* sec = root.get_as<toml::table>(section);
  return sec ? sec->get(key) : nullptr;
}

template <typename T>
void read(const toml::table& root, const std::string& section, const std::string& key, T& out) {
  const toml::node* n = find_node(root, section, key);
  if (!n) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (!n->is_boolean()) throw Error("config: " + key_name(section, key) + " must be a boolean");
    out = *n->value<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!n->is_string()) throw Error("config: " + key_name(section, key) + " must be a string");
    out = *n->value<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!n->is_integer()) throw Error("config: " + key_name(section, key) + " must be an integer");
    const auto v = *n->value<std::int64_t>();
    if (std::is_unsigned_v<T> && v < 0) throw Error("config: " + key_name(section, key) + " must be >= 0");
    out = static_cast<T>(v);
  } else {
    if (!n->is_number()) throw Error("config: " + key_name(section, key) + " must be a number");
    out = *n->value<double>();
  }
}

template <typename T>
void read_list(const toml::table& root, const std::string& section, const std::string& key,
               std::vector<T>& out) {
  const toml::node* n = find_node(root, section, key);
  if (!n) return;
  const auto* arr = n->as_array();
  if (!arr) throw Error("config: " + key_name(section, key) + " must be an array");
  out.clear();
  for (const auto& item : *arr) {
    std::optional<T> v;
    if constexpr (std::is_same_v<T, std::string>) {
      if (item.is_string()) v = item.value<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (item.is_integer()) v = static_cast<T>(*item.value<std::int64_t>());
    } else {
      if (item.is_number()) v = item.value<double>();
    }
    if (!v) throw Error("config: " + key_name(section, key) + " has an element of the wrong type");
    out.push_back(*v);
  }
}

// "section.key=value". The value is read as a TOML value when it parses as
// one and as a bare string otherwise.
inline void apply_override(toml::table& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("--set expects key=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  const auto dot = path.find('.');
  const std::string section = dot == std::string::npos ? "" : path.substr(0, dot);
  const std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
  const auto& schema = config_schema();
  const auto it = schema.find(section);
  if (it == schema.end() || !it->second.count(key)) throw Error("--set: unknown key " + path);

  toml::table parsed;
  try {
    parsed = toml::parse("v = " + raw);
  } catch (const toml::parse_error&) {
    parsed.insert_or_assign("v", raw);
  }
  toml::table* target = &root;
  if (!section.empty()) {
    if (!root.contains(section)) root.insert(section, toml::table{});
    target = root.get_as<toml::table>(section);
    if (!target) throw Error("--set: " + section + " is not a section");
  }
  target->insert_or_assign(key, *parsed.get("v"));
}

}  // namespace detail

inline ExperimentConfig config_from_toml(const toml::table& root) {
  using detail::read;
  using detail::read_list;
  detail::check_keys(root);
  ExperimentConfig c;
  read(root, "", "name", c.name);
  read(root, "", "master_seed", c.master_seed);
  read(root, "", "output_dir", c.output_dir);

  std::string kind(to_string(c.model.kind));
  read(root, "model", "kind", kind);
  c.model.kind = parse_model_kind(kind);
  read(root, "model", "input_dim", c.model.input_dim);
  read(root, "model", "hidden_dim", c.model.hidden_dim);
  read(root, "model", "output_dim", c.model.output_dim);
  read(root, "model", "bias", c.model.bias);
  if (c.model.kind != ModelKind::kMlp1) c.model.hidden_dim = 0;

  read(root, "data", "source", c.data.source);
  read(root, "data", "csv_path", c.data.csv_path);
  read(root, "data", "samples_per_client", c.data.samples_per_client);
  read(root, "data", "lo", c.data.lo);
  read(root, "data", "hi", c.data.hi);
  read(root, "data", "label_noise", c.data.label_noise);

  read(root, "train", "clients", c.train.clients);
  read(root, "train", "rounds", c.train.rounds);
  read(root, "train", "local_epochs", c.train.local_epochs);
  read(root, "train", "batch_size", c.train.batch_size);
  read(root, "train", "learning_rate", c.train.learning_rate);
  std::string agg(to_string(c.train.aggregation));
  read(root, "train", "aggregation", agg);
  c.train.aggregation = parse_aggregation(agg);

  auto& a = c.attack;
  std::string metric(to_string(a.metric)), opt(to_string(a.optimizer)), init(to_string(a.init)),
      grad(to_string(a.gradient)), sched(to_string(a.schedule));
  read(root, "attack", "metric", metric);
  read(root, "attack", "optimizer", opt);
  read(root, "attack", "init", init);
  read(root, "attack", "gradient", grad);
  read(root, "attack", "schedule", sched);
  a.metric = parse_distance(metric);
  a.optimizer = parse_attack_optimizer(opt);
  a.init = parse_attack_init(init);
  a.gradient = parse_attack_gradient(grad);
  a.schedule = parse_step_schedule(sched);
  read(root, "attack", "step_size", a.step_size);
  read(root, "attack", "rounds", a.rounds);
  read(root, "attack", "init_center", a.init_center);
  read(root, "attack", "init_scale", a.init_scale);
  read(root, "attack", "reconstruct_labels", a.reconstruct_labels);
  read(root, "attack", "fd_step", a.fd_step);
  read(root, "attack", "divergence_factor", a.divergence_factor);

  std::string method(to_string(c.jacobian.method));
  read(root, "jacobian", "method", method);
  c.jacobian.method = parse_jacobian_method(method);
  read(root, "jacobian", "fd_step", c.jacobian.fd_step);
  read(root, "jacobian", "rank_tolerance", c.jacobian.rank_tolerance);
  read(root, "jacobian", "collision_magnitude", c.jacobian.collision_magnitude);

  read(root, "privacy", "diameter", c.privacy.diameter);
  read_list(root, "privacy", "poly", c.privacy.poly);
  read_list(root, "privacy", "distortions", c.privacy.distortions);
  read(root, "privacy", "trials", c.privacy.trials);
  read(root, "privacy", "lipschitz_pairs", c.privacy.lipschitz_pairs);

  read_list(root, "sweep", "batch_sizes", c.sweep.batch_sizes);
  read_list(root, "sweep", "local_epochs", c.sweep.local_epochs);
  read_list(root, "sweep", "samples_per_client", c.sweep.samples_per_client);
  read(root, "sweep", "write_traces", c.sweep.write_traces);

  c.train.seed = derive_seed(c.master_seed, "train");
  c.attack.seed = derive_seed(c.master_seed, "attack");
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const std::string& text,
                                     const std::vector<std::string>& overrides = {}) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: " << e.description() << " at line " << e.source().begin.line;
    throw Error(os.str());
  }
  for (const auto& o : overrides) detail::apply_override(root, o);
  return config_from_toml(root);
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One "section.key = value" line per semantic field in a fixed order.
/// output_dir is left out: where results go does not change them.
inline std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream os;
  auto line = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto dl = [&](const std::string& k, double v) { line(k, format_double(v)); };
  auto il = [&](const std::string& k, long long v) { line(k, std::to_string(v)); };
  auto list = [&](const std::string& k, const auto& xs) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += ", ";
      if constexpr (std::is_same_v<std::decay_t<decltype(xs[i])>, std::string>) {
        s += xs[i];
      } else if constexpr (std::is_integral_v<std::decay_t<decltype(xs[i])>>) {
        s += std::to_string(xs[i]);
      } else {
        s += format_double(xs[i]);
      }
    }
    line(k, s + "]");
  };
  line("name", c.name);
  line("master_seed", std::to_string(c.master_seed));
  line("model.kind", std::string(to_string(c.model.kind)));
  il("model.input_dim", c.model.input_dim);
  il("model.hidden_dim", c.model.hidden_dim);
  il("model.output_dim", c.model.output_dim);
  il("model.bias", c.model.bias);
  line("data.source", c.data.source);
  line("data.csv_path", c.data.csv_path);
  il("data.samples_per_client", c.data.samples_per_client);
  dl("data.lo", c.data.lo);
  dl("data.hi", c.data.hi);
  dl("data.label_noise", c.data.label_noise);
  il("train.clients", c.train.clients);
  il("train.rounds", c.train.rounds);
  il("train.local_epochs", c.train.local_epochs);
  il("train.batch_size", c.train.batch_size);
  dl("train.learning_rate", c.train.learning_rate);
  line("train.aggregation", std::string(to_string(c.train.aggregation)));
  line("attack.metric", std::string(to_string(c.attack.metric)));
  line("attack.optimizer", std::string(to_string(c.attack.optimizer)));
  dl("attack.step_size", c.attack.step_size);
  il("attack.rounds", c.attack.rounds);
  line("attack.init", std::string(to_string(c.attack.init)));
  dl("attack.init_center", c.attack.init_center);
  dl("attack.init_scale", c.attack.init_scale);
  il("attack.reconstruct_labels", c.attack.reconstruct_labels);
  line("attack.gradient", std::string(to_string(c.attack.gradient)));
  dl("attack.fd_step", c.attack.fd_step);
  line("attack.schedule", std::string(to_string(c.attack.schedule)));
  dl("attack.divergence_factor", c.attack.divergence_factor);
  line("jacobian.method", std::string(to_string(c.jacobian.method)));
  dl("jacobian.fd_step", c.jacobian.fd_step);
  dl("jacobian.rank_tolerance", c.jacobian.rank_tolerance);
  dl("jacobian.collision_magnitude", c.jacobian.collision_magnitude);
  dl("privacy.diameter", c.privacy.diameter);
  list("privacy.poly", c.privacy.poly);
  list("privacy.distortions", c.privacy.distortions);
  il("privacy.trials", c.privacy.trials);
  il("privacy.lipschitz_pairs", c.privacy.lipschitz_pairs);
  list("sweep.batch_sizes", c.sweep.batch_sizes);
  list("sweep.local_epochs", c.sweep.local_epochs);
  list("sweep.samples_per_client", c.sweep.samples_per_client);
  il("sweep.write_traces", c.sweep.write_traces);
  return os.str();
}

/// FNV-1a of the canonical text, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_text(c))));
  return buf;
}

}  // namespace fedleak
