// Copyright 2026 The ope-mix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OPEMIX_BENCH_HPP
#define OPEMIX_BENCH_HPP

#include <opemix/core.hpp>
#include <opemix/direct_method.hpp>
#include <opemix/estimators.hpp>
#include <opemix/io.hpp>
#include <opemix/mixture.hpp>
#include <opemix/recsim.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

/**
 * \file
 * \brief Experiment runner on the simulated recommender: a pool of trained policies takes turns as
 * the target while the next M policies supply logged data.
 */

namespace opemix {

/// Estimators the runner knows, in report order. "MC" averages the target's own logged returns.
inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names{"IS",   "WIS",   "SWIS",  "DR",  "WDR",  "SWDR",  "NMIS",  "NMWIS", "NMDR",
                                              "NMWDR", "MIS", "MWIS", "MDR", "MWDR", "abMDR", "abMWDR", "MC"};
  return names;
}

[[nodiscard]] inline bool uses_t_mix(std::string_view method) {
  return method == "MIS" || method == "MWIS" || method == "MDR" || method == "MWDR" || method == "abMDR" ||
         method == "abMWDR";
}

struct PoolConfig {
  std::size_t size = 10;
  std::uint64_t seed = 100;
  /// Initial parameter scales, cycled over the pool.
  std::vector<double> init_scales{1.0};
  /// Training episode budgets, cycled over the pool.
  std::vector<std::size_t> episodes{0, 3000, 10000};
  /// Consecutive policies per training run; later members resume from the previous checkpoint.
  std::size_t chain = 1;
  /// Policy temperatures, cycled over the pool.
  std::vector<double> temperatures{0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
  double lr = 0.1;
};

struct DmConfig {
  /// Trajectories in the separate model-fitting sample, drawn evenly from the pool.
  std::size_t train_n = 10000;
  std::size_t iters = 20;
  double ridge_lambda = 1.0;
  double logistic_lambda = 1.0;
};

struct ExperimentConfig {
  std::uint64_t world_seed = 1;
  RecsimConfig world;
  PoolConfig pool;
  DmConfig dm;
  /// Trajectories logged per policy.
  std::size_t n = 10000;
  /// On-policy episodes behind each true value.
  std::size_t truth_n = 100000;
  std::uint64_t data_seed = 200;
  std::uint64_t split_seed = 300;
  std::vector<std::size_t> m_values{1, 5};
  std::vector<std::size_t> t_values{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  /// Mixing horizon used outside T sweeps, per method; `t_mix_default` otherwise.
  std::map<std::string, std::size_t> t_mix;
  std::size_t t_mix_default = 4;
  double gamma = 0.9;
  std::optional<double> clip = 2000.0;
  std::vector<std::string> methods = known_methods();
  std::size_t rotations = 10;
  /// Leading share of rotations tagged as validation; the rest are test.
  double validation_fraction = 0.5;
  double eps = 1e-8;
  std::string cache_dir;
  std::string out = "report";
  std::string format = "csv";

  void check() const {
    world.check();
    if (pool.size < 2 || pool.chain == 0 || pool.init_scales.empty() || pool.episodes.empty() || pool.temperatures.empty() ||
        std::any_of(pool.temperatures.begin(), pool.temperatures.end(), [](double t) { return !(t > 0.0); }) ||
        pool.lr < 0.0) {
      throw ConfigError("pool needs at least 2 policies and non-empty schedules");
    }
    if (n < 4 || truth_n < 2 || rotations == 0 || rotations > pool.size) {
      throw ConfigError("n >= 4, truth_n >= 2 and 1 <= rotations <= pool size are required");
    }
    if (!(gamma > 0.0 && gamma <= 1.0) || eps < 0.0 || (clip && !(*clip > 0.0)) ||
        !(validation_fraction >= 0.0 && validation_fraction <= 1.0)) {
      throw ConfigError("gamma, clip, eps or validation fraction out of range");
    }
    for (std::size_t m : m_values) {
      if (m == 0 || m >= pool.size) {
        throw ConfigError("every M must satisfy 1 <= M < pool size");
      }
    }
    if (m_values.empty() || t_values.empty()) {
      throw ConfigError("M and T_mix lists must be non-empty");
    }
    for (const auto& name : methods) {
      if (std::find(known_methods().begin(), known_methods().end(), name) == known_methods().end()) {
        throw ConfigError("unknown method '" + name + "'");
      }
    }
    if (format != "csv" && format != "json") {
      throw ConfigError("format must be csv or json");
    }
  }

  [[nodiscard]] std::size_t t_mix_for(const std::string& method) const {
    auto it = t_mix.find(method);
    return it == t_mix.end() ? t_mix_default : it->second;
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key)) {
    into = j.at(key).get<T>();
  }
}

}  // namespace detail

[[nodiscard]] inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    detail::read_opt(j, "world_seed", c.world_seed);
    if (j.contains("world")) {
      const auto& w = j.at("world");
      detail::read_opt(w, "num_topics", c.world.num_topics);
      detail::read_opt(w, "num_docs", c.world.num_docs);
      detail::read_opt(w, "num_users", c.world.num_users);
      detail::read_opt(w, "max_len", c.world.max_len);
      detail::read_opt(w, "initial_interest_sd", c.world.initial_interest_sd);
    }
    if (j.contains("pool")) {
      const auto& p = j.at("pool");
      detail::read_opt(p, "size", c.pool.size);
      detail::read_opt(p, "seed", c.pool.seed);
      detail::read_opt(p, "init_scales", c.pool.init_scales);
      detail::read_opt(p, "episodes", c.pool.episodes);
      detail::read_opt(p, "chain", c.pool.chain);
      detail::read_opt(p, "temperatures", c.pool.temperatures);
      detail::read_opt(p, "lr", c.pool.lr);
    }
    if (j.contains("dm")) {
      const auto& d = j.at("dm");
      detail::read_opt(d, "train_n", c.dm.train_n);
      detail::read_opt(d, "iters", c.dm.iters);
      detail::read_opt(d, "ridge_lambda", c.dm.ridge_lambda);
      detail::read_opt(d, "logistic_lambda", c.dm.logistic_lambda);
    }
    detail::read_opt(j, "n", c.n);
    detail::read_opt(j, "truth_n", c.truth_n);
    detail::read_opt(j, "data_seed", c.data_seed);
    detail::read_opt(j, "split_seed", c.split_seed);
    detail::read_opt(j, "M", c.m_values);
    detail::read_opt(j, "T_mix", c.t_values);
    detail::read_opt(j, "t_mix", c.t_mix);
    detail::read_opt(j, "t_mix_default", c.t_mix_default);
    detail::read_opt(j, "gamma", c.gamma);
    if (j.contains("clip")) {
      c.clip = j.at("clip").is_null() ? std::nullopt : std::optional<double>{j.at("clip").get<double>()};
    }
    detail::read_opt(j, "methods", c.methods);
    detail::read_opt(j, "rotations", c.rotations);
    detail::read_opt(j, "validation_fraction", c.validation_fraction);
    detail::read_opt(j, "eps", c.eps);
    detail::read_opt(j, "cache_dir", c.cache_dir);
    detail::read_opt(j, "out", c.out);
    detail::read_opt(j, "format", c.format);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string{"bad config: "} + e.what());
  }
  c.check();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"world_seed", c.world_seed},
          {"world",
           {{"num_topics", c.world.num_topics},
            {"num_docs", c.world.num_docs},
            {"num_users", c.world.num_users},
            {"max_len", c.world.max_len},
            {"initial_interest_sd", c.world.initial_interest_sd}}},
          {"pool",
           {{"size", c.pool.size},
            {"seed", c.pool.seed},
            {"init_scales", c.pool.init_scales},
            {"episodes", c.pool.episodes},
            {"chain", c.pool.chain},
            {"temperatures", c.pool.temperatures},
            {"lr", c.pool.lr}}},
          {"dm",
           {{"train_n", c.dm.train_n},
            {"iters", c.dm.iters},
            {"ridge_lambda", c.dm.ridge_lambda},
            {"logistic_lambda", c.dm.logistic_lambda}}},
          {"n", c.n},
          {"truth_n", c.truth_n},
          {"data_seed", c.data_seed},
          {"split_seed", c.split_seed},
          {"M", c.m_values},
          {"T_mix", c.t_values},
          {"t_mix", c.t_mix},
          {"t_mix_default", c.t_mix_default},
          {"gamma", c.gamma},
          {"clip", c.clip ? nlohmann::json(*c.clip) : nlohmann::json(nullptr)},
          {"methods", c.methods},
          {"rotations", c.rotations},
          {"validation_fraction", c.validation_fraction},
          {"eps", c.eps},
          {"cache_dir", c.cache_dir},
          {"out", c.out},
          {"format", c.format}};
}

[[nodiscard]] inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in{path};
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string{"bad config: "} + e.what());
  }
  return config_from_json(j);
}

/// World, trained pool, logged data, true values and the fitted environment model.
struct Pipeline {
  std::shared_ptr<const TopicWorld> world;
  std::vector<LinearPolicy> pool;
  std::vector<BehaviorDataset> data;
  std::vector<ValueWithError> truth;
  RecsimModel model;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

inline std::vector<LinearPolicy> train_pool(const ExperimentConfig& c, const std::shared_ptr<const TopicWorld>& w) {
  std::vector<LinearPolicy> pool;
  for (std::size_t p = 0; p < c.pool.size; ++p) {
    const std::size_t run = p / c.pool.chain;
    LinearPolicy start;
    if (p % c.pool.chain == 0) {
      const double scale = c.pool.init_scales[run % c.pool.init_scales.size()];
      const double temperature = c.pool.temperatures[run % c.pool.temperatures.size()];
      start = LinearPolicy::random(w, c.pool.seed + run, scale, temperature);
    } else {
      start = pool.back();
    }
    ReinforceConfig rc;
    rc.episodes = c.pool.episodes[p % c.pool.episodes.size()];
    rc.lr = c.pool.lr;
    rc.gamma = c.gamma;
    pool.push_back(reinforce_train(std::move(start), rc, c.pool.seed + 7919 * (p + 1)));
  }
  return pool;
}

}  // namespace detail

/// Cache key of everything that determines the pool, data, truths and model.
[[nodiscard]] inline std::string pipeline_key(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  for (const char* k : {"split_seed", "M", "T_mix", "t_mix", "t_mix_default", "clip", "methods", "rotations",
                        "validation_fraction", "eps", "cache_dir", "out", "format"}) {
    j.erase(k);
  }
  return detail::hex(detail::fnv1a(j.dump()));
}

[[nodiscard]] inline TopicWorld make_world(const ExperimentConfig& c) { return generate_world(c.world_seed, c.world); }

/// Trains the pool. When `cache_dir` is set, policies are stored there keyed by the config hash.
[[nodiscard]] inline std::vector<LinearPolicy> make_pool(const ExperimentConfig& c,
                                                         const std::shared_ptr<const TopicWorld>& w) {
  std::filesystem::path file;
  if (!c.cache_dir.empty()) {
    file = std::filesystem::path{c.cache_dir} / ("pool-" + pipeline_key(c) + ".json");
    if (std::filesystem::exists(file)) {
      std::ifstream in{file};
      const auto j = nlohmann::json::parse(in);
      std::vector<LinearPolicy> pool;
      for (const auto& p : j) {
        pool.push_back(policy_from_json(p, w));
      }
      return pool;
    }
  }
  auto pool = detail::train_pool(c, w);
  if (!file.empty()) {
    std::filesystem::create_directories(file.parent_path());
    auto j = nlohmann::json::array();
    for (const auto& p : pool) {
      j.push_back(to_json(p));
    }
    std::ofstream{file} << j.dump();
  }
  return pool;
}

[[nodiscard]] inline std::string policy_name(std::size_t p) { return "p" + std::to_string(p); }

[[nodiscard]] inline Pipeline build_pipeline(const ExperimentConfig& c) {
  c.check();
  Pipeline out;
  out.world = std::make_shared<const TopicWorld>(make_world(c));
  out.pool = make_pool(c, out.world);

  std::filesystem::path data_file;
  if (!c.cache_dir.empty()) {
    data_file = std::filesystem::path{c.cache_dir} / ("data-" + pipeline_key(c) + ".jsonl");
  }
  if (!data_file.empty() && std::filesystem::exists(data_file)) {
    auto all = load_multidataset(data_file);
    out.data = std::move(all.datasets);
  } else {
    for (std::size_t p = 0; p < out.pool.size(); ++p) {
      out.data.push_back(collect(out.pool[p], c.n, c.data_seed + p, policy_name(p)));
    }
    if (!data_file.empty()) {
      save_multidataset(data_file, MultiDataset{out.data});
    }
  }
  for (std::size_t p = 0; p < out.pool.size(); ++p) {
    out.truth.push_back(on_policy_value(out.pool[p], c.truth_n, c.data_seed + 1000003 * (p + 1), c.gamma));
  }
  std::vector<Trajectory> train;
  train.reserve(c.dm.train_n);
  for (std::size_t j = 0; j < c.dm.train_n; ++j) {
    auto rng = detail::stream(c.data_seed + 77, j);
    train.push_back(rollout(out.pool[j % out.pool.size()], rng));
  }
  out.model = fit_recsim_model(*out.world, train, c.dm.ridge_lambda, c.dm.logistic_lambda);
  return out;
}

/// One estimate in one rotation.
struct TrialRecord {
  std::string method;
  double sweep_value = 0.0;
  std::size_t rotation = 0;
  double estimate = 0.0;
  double truth = 0.0;
  double sq_error = 0.0;
  /// Mean condition number of the per-policy matrices; NaN when nothing was inverted.
  double condition = std::numeric_limits<double>::quiet_NaN();
  bool validation = false;
};

struct ReportRow {
  std::string method;
  double sweep_value = 0.0;
  double mse = 0.0;
  double mse_validation = std::numeric_limits<double>::quiet_NaN();
  double mse_test = std::numeric_limits<double>::quiet_NaN();
  double mean_cond = std::numeric_limits<double>::quiet_NaN();
  std::size_t trials = 0;
};

struct MSEReport {
  /// "M" or "T".
  std::string sweep = "M";
  std::vector<ReportRow> rows;
  std::vector<TrialRecord> trials;
  /// Mixing horizon with the lowest validation MSE, per method (T sweeps only).
  std::map<std::string, double> best_t;
  std::uint64_t world_seed = 0;
  std::uint64_t split_seed = 0;

  [[nodiscard]] const ReportRow* find(std::string_view method, double sweep_value) const {
    for (const auto& r : rows) {
      if (r.method == method && r.sweep_value == sweep_value) {
        return &r;
      }
    }
    return nullptr;
  }
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return s / static_cast<double>(v.size());
}

inline double mean_condition(const MixtureWeights& w) { return mean_of(w.condition_numbers); }

// Report rows from trial records, sorted by method order then sweep value.
inline std::vector<ReportRow> aggregate(const std::vector<TrialRecord>& trials) {
  std::map<std::pair<std::size_t, double>, std::vector<const TrialRecord*>> groups;
  const auto& names = known_methods();
  for (const auto& t : trials) {
    const auto pos = static_cast<std::size_t>(std::find(names.begin(), names.end(), t.method) - names.begin());
    groups[{pos, t.sweep_value}].push_back(&t);
  }
  std::vector<ReportRow> rows;
  for (const auto& [key, group] : groups) {
    ReportRow r;
    r.method = names[key.first];
    r.sweep_value = key.second;
    std::vector<double> all, val, test, cond;
    for (const auto* t : group) {
      all.push_back(t->sq_error);
      (t->validation ? val : test).push_back(t->sq_error);
      if (std::isfinite(t->condition)) {
        cond.push_back(t->condition);
      }
    }
    r.mse = mean_of(all);
    r.mse_validation = mean_of(val);
    r.mse_test = mean_of(test);
    r.mean_cond = mean_of(cond);
    r.trials = group.size();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

/// Per-rotation state shared by every method: tables of the full and split behavior data.
struct RotationData {
  std::size_t target = 0;
  std::vector<std::size_t> behaviors;
  std::vector<SampleTable> full;
  SplitTables split;
  TabularQV qv;
};

[[nodiscard]] inline RotationData prepare_rotation(const ExperimentConfig& c, const Pipeline& pipe,
                                                   std::size_t rotation, std::size_t m) {
  RotationData r;
  r.target = rotation % pipe.pool.size();
  const LinearPolicy& target = pipe.pool[r.target];
  r.qv = recsim_qv(*pipe.world, pipe.model, target, c.gamma, c.dm.iters);
  MultiDataset ds;
  for (std::size_t k = 1; k <= m; ++k) {
    const std::size_t b = (r.target + k) % pipe.pool.size();
    r.behaviors.push_back(b);
    ds.datasets.push_back(pipe.data[b]);
  }
  DiscountConfig dc{c.gamma, c.world.max_len - 1};
  for (const auto& d : ds.datasets) {
    r.full.push_back(tabulate(d, target, dc, c.clip, r.qv, c.world.max_len));
  }
  r.split = split_tables(ds, target, dc, c.clip, c.split_seed + rotation, r.qv);
  return r;
}

/// Estimate of one method on a prepared rotation, with the mean condition number when applicable.
[[nodiscard]] inline std::pair<double, double> run_method(const std::string& method, const RotationData& r,
                                                          const Pipeline& pipe, double gamma, std::size_t t_mix,
                                                          double eps) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MixOptions opt;
  opt.eps = eps;
  if (method == "IS") return {estimate(r.full, Vanilla::kIS), nan};
  if (method == "WIS") return {estimate(r.full, Vanilla::kWIS), nan};
  if (method == "SWIS") return {estimate(r.full, Vanilla::kSWIS), nan};
  if (method == "DR") return {estimate(r.full, Vanilla::kDR), nan};
  if (method == "WDR") return {estimate(r.full, Vanilla::kWDR), nan};
  if (method == "SWDR") return {estimate(r.full, Vanilla::kSWDR), nan};
  if (method == "MC") {
    double s = 0.0;
    for (const auto& t : pipe.data[r.target].trajectories) {
      s += discounted_return(t, gamma);
    }
    return {s / static_cast<double>(pipe.data[r.target].n()), nan};
  }
  MixtureEstimate e;
  if (method == "NMIS") e = mix_naive(r.split, Family::kIS, opt);
  else if (method == "NMWIS") e = mix_naive(r.split, Family::kSWIS, opt);
  else if (method == "NMDR") e = mix_naive(r.split, Family::kDR, opt);
  else if (method == "NMWDR") e = mix_naive(r.split, Family::kSWDR, opt);
  else if (method == "MIS") e = mix_horizon(r.split, Family::kIS, t_mix, opt);
  else if (method == "MWIS") e = mix_horizon(r.split, Family::kSWIS, t_mix, opt);
  else if (method == "MDR") e = mix_horizon(r.split, Family::kDR, t_mix, opt);
  else if (method == "MWDR") e = mix_horizon(r.split, Family::kSWDR, t_mix, opt);
  else if (method == "abMDR") e = mix_alphabeta(r.split, Family::kDR, t_mix, opt);
  else if (method == "abMWDR") e = mix_alphabeta(r.split, Family::kSWDR, t_mix, opt);
  else throw ConfigError("unknown method '" + method + "'");
  return {e.value, detail::mean_condition(e.weights)};
}

namespace detail {

inline bool is_validation(const ExperimentConfig& c, std::size_t rotation) {
  return static_cast<double>(rotation) < c.validation_fraction * static_cast<double>(c.rotations);
}

inline TrialRecord record(const std::string& method, double sweep_value, std::size_t rotation, double truth,
                          std::pair<double, double> est, bool validation) {
  TrialRecord t;
  t.method = method;
  t.sweep_value = sweep_value;
  t.rotation = rotation;
  t.estimate = est.first;
  t.truth = truth;
  t.sq_error = (est.first - truth) * (est.first - truth);
  t.condition = est.second;
  t.validation = validation;
  return t;
}

}  // namespace detail

/// Rotations at a single M with each method's configured mixing horizon.
[[nodiscard]] inline MSEReport run_rotation(const ExperimentConfig& c, const Pipeline& pipe, std::size_t m) {
  MSEReport rep;
  rep.sweep = "M";
  rep.world_seed = c.world_seed;
  rep.split_seed = c.split_seed;
  for (std::size_t rot = 0; rot < c.rotations; ++rot) {
    const RotationData r = prepare_rotation(c, pipe, rot, m);
    const double truth = pipe.truth[r.target].mean;
    for (const auto& method : c.methods) {
      rep.trials.push_back(detail::record(method, static_cast<double>(m), rot, truth,
                                          run_method(method, r, pipe, c.gamma, c.t_mix_for(method), c.eps),
                                          detail::is_validation(c, rot)));
    }
  }
  rep.rows = detail::aggregate(rep.trials);
  return rep;
}

/// MSE of every method across the configured M values.
[[nodiscard]] inline MSEReport sweep_m(const ExperimentConfig& c, const Pipeline& pipe) {
  MSEReport rep;
  rep.sweep = "M";
  rep.world_seed = c.world_seed;
  rep.split_seed = c.split_seed;
  for (std::size_t m : c.m_values) {
    auto part = run_rotation(c, pipe, m);
    rep.trials.insert(rep.trials.end(), part.trials.begin(), part.trials.end());
  }
  rep.rows = detail::aggregate(rep.trials);
  return rep;
}

/// MSE of the horizon-dependent methods across T_mix values at M = the largest configured M.
[[nodiscard]] inline MSEReport sweep_t(const ExperimentConfig& c, const Pipeline& pipe) {
  MSEReport rep;
  rep.sweep = "T";
  rep.world_seed = c.world_seed;
  rep.split_seed = c.split_seed;
  const std::size_t m = *std::max_element(c.m_values.begin(), c.m_values.end());
  for (std::size_t rot = 0; rot < c.rotations; ++rot) {
    const RotationData r = prepare_rotation(c, pipe, rot, m);
    const double truth = pipe.truth[r.target].mean;
    for (const auto& method : c.methods) {
      if (!uses_t_mix(method)) {
        continue;
      }
      for (std::size_t t : c.t_values) {
        if (t >= c.world.max_len) {
          throw ConfigError("T_mix must be below max_len");
        }
        rep.trials.push_back(detail::record(method, static_cast<double>(t), rot, truth,
                                            run_method(method, r, pipe, c.gamma, t, c.eps),
                                            detail::is_validation(c, rot)));
      }
    }
  }
  rep.rows = detail::aggregate(rep.trials);
  for (const auto& row : rep.rows) {
    const double score = std::isfinite(row.mse_validation) ? row.mse_validation : row.mse;
    auto it = rep.best_t.find(row.method);
    if (it == rep.best_t.end()) {
      rep.best_t[row.method] = row.sweep_value;
    } else {
      const ReportRow* best = rep.find(row.method, it->second);
      const double best_score = std::isfinite(best->mse_validation) ? best->mse_validation : best->mse;
      if (score < best_score) {
        it->second = row.sweep_value;
      }
    }
  }
  return rep;
}

namespace detail {

inline nlohmann::json num_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double num_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const MSEReport& r) {
  auto rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"method", row.method},
                    {"sweep_value", row.sweep_value},
                    {"mse", row.mse},
                    {"mse_validation", detail::num_or_null(row.mse_validation)},
                    {"mse_test", detail::num_or_null(row.mse_test)},
                    {"mean_cond", detail::num_or_null(row.mean_cond)},
                    {"trials", row.trials}});
  }
  auto trials = nlohmann::json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"method", t.method},
                      {"sweep_value", t.sweep_value},
                      {"rotation", t.rotation},
                      {"estimate", t.estimate},
                      {"truth", t.truth},
                      {"sq_error", t.sq_error},
                      {"condition", detail::num_or_null(t.condition)},
                      {"validation", t.validation}});
  }
  return {{"sweep", r.sweep},         {"rows", rows},
          {"trials", trials},         {"best_t", r.best_t},
          {"world_seed", r.world_seed}, {"split_seed", r.split_seed}};
}

[[nodiscard]] inline MSEReport report_from_json(const nlohmann::json& j) {
  MSEReport r;
  r.sweep = j.at("sweep").get<std::string>();
  for (const auto& row : j.at("rows")) {
    ReportRow x;
    x.method = row.at("method").get<std::string>();
    x.sweep_value = row.at("sweep_value").get<double>();
    x.mse = row.at("mse").get<double>();
    x.mse_validation = detail::num_or_nan(row.at("mse_validation"));
    x.mse_test = detail::num_or_nan(row.at("mse_test"));
    x.mean_cond = detail::num_or_nan(row.at("mean_cond"));
    x.trials = row.at("trials").get<std::size_t>();
    r.rows.push_back(x);
  }
  for (const auto& t : j.at("trials")) {
    TrialRecord x;
    x.method = t.at("method").get<std::string>();
    x.sweep_value = t.at("sweep_value").get<double>();
    x.rotation = t.at("rotation").get<std::size_t>();
    x.estimate = t.at("estimate").get<double>();
    x.truth = t.at("truth").get<double>();
    x.sq_error = t.at("sq_error").get<double>();
    x.condition = detail::num_or_nan(t.at("condition"));
    x.validation = t.at("validation").get<bool>();
    r.trials.push_back(x);
  }
  r.best_t = j.at("best_t").get<std::map<std::string, double>>();
  r.world_seed = j.at("world_seed").get<std::uint64_t>();
  r.split_seed = j.at("split_seed").get<std::uint64_t>();
  return r;
}

/// CSV with header `method,sweep_value,mse,mean_cond,trials`; empty cells for missing values.
inline void write_csv(std::ostream& out, const MSEReport& r) {
  out << "method,sweep_value,mse,mean_cond,trials\n";
  out.precision(17);
  for (const auto& row : r.rows) {
    out << row.method << ',' << row.sweep_value << ',' << row.mse << ',';
    if (std::isfinite(row.mean_cond)) {
      out << row.mean_cond;
    }
    out << ',' << row.trials << '\n';
  }
}

/// Writes `path` (extension added from the format) and returns the file written.
inline std::filesystem::path emit_report(const MSEReport& r, const std::filesystem::path& path,
                                         std::string_view format) {
  std::filesystem::path file = path;
  if (format == "csv") {
    file.replace_extension(".csv");
  } else if (format == "json") {
    file.replace_extension(".json");
  } else {
    throw ConfigError("format must be csv or json");
  }
  if (file.has_parent_path()) {
    std::filesystem::create_directories(file.parent_path());
  }
  std::ofstream out{file};
  if (!out) {
    throw Error("cannot write " + file.string());
  }
  if (format == "csv") {
    write_csv(out, r);
  } else {
    out << to_json(r).dump(2) << '\n';
  }
  if (!out) {
    throw Error("cannot write " + file.string());
  }
  return file;
}

}  // namespace opemix

#endif  // OPEMIX_BENCH_HPP
