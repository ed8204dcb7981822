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

// ope-mix: world generation, pool training, data collection and MSE sweeps on the simulated recommender.

#include <opemix/bench.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
};

void add_common(CLI::App* sub, Common& c, bool with_format) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  sub->add_option("--seed", c.seed, "world seed, overrides the config");
  sub->add_option("--out", c.out, "output path");
  if (with_format) {
    sub->add_option("--format", c.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  }
}

opemix::ExperimentConfig resolve(const Common& c) {
  opemix::ExperimentConfig cfg = c.config.empty() ? opemix::ExperimentConfig{} : opemix::load_config(c.config);
  if (c.seed) {
    cfg.world_seed = *c.seed;
  }
  if (!c.out.empty()) {
    cfg.out = c.out;
  }
  if (!c.format.empty()) {
    cfg.format = c.format;
  }
  cfg.check();
  return cfg;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  const std::filesystem::path p{path};
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream out{p};
  if (!(out << j.dump(2) << '\n')) {
    throw opemix::Error("cannot write " + path);
  }
}

void report(const opemix::MSEReport& r, const opemix::ExperimentConfig& cfg) {
  const auto file = opemix::emit_report(r, cfg.out, cfg.format);
  std::cout << "wrote " << file.string() << '\n';
  for (const auto& [method, t] : r.best_t) {
    std::cout << "best T_mix " << method << ' ' << t << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture off-policy estimators on a simulated recommender"};
  app.require_subcommand(1);

  Common world_opts, pool_opts, collect_opts, eval_opts, sweep_t_opts, sweep_m_opts;
  auto* world_cmd = app.add_subcommand("generate-world", "write the topic world as JSON");
  add_common(world_cmd, world_opts, false);
  auto* pool_cmd = app.add_subcommand("train-pool", "train the policy pool and write it as JSON");
  add_common(pool_cmd, pool_opts, false);
  auto* collect_cmd = app.add_subcommand("collect", "log n trajectories per pool policy as JSONL");
  add_common(collect_cmd, collect_opts, false);
  auto* eval_cmd = app.add_subcommand("evaluate", "MSE of every method at the first configured M");
  add_common(eval_cmd, eval_opts, true);
  auto* sweep_t_cmd = app.add_subcommand("sweep-t", "MSE of the horizon-mixing methods across T_mix");
  add_common(sweep_t_cmd, sweep_t_opts, true);
  auto* sweep_m_cmd = app.add_subcommand("sweep-m", "MSE of every method across M");
  add_common(sweep_m_cmd, sweep_m_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (world_cmd->parsed()) {
      const auto cfg = resolve(world_opts);
      const std::string path = world_opts.out.empty() ? "world.json" : world_opts.out;
      write_json(path, opemix::to_json(opemix::make_world(cfg)));
      std::cout << "wrote " << path << '\n';
    } else if (pool_cmd->parsed()) {
      const auto cfg = resolve(pool_opts);
      const auto world = std::make_shared<const opemix::TopicWorld>(opemix::make_world(cfg));
      auto j = nlohmann::json::array();
      for (const auto& p : opemix::make_pool(cfg, world)) {
        j.push_back(opemix::to_json(p));
      }
      const std::string path = pool_opts.out.empty() ? "pool.json" : pool_opts.out;
      write_json(path, j);
      std::cout << "wrote " << path << '\n';
    } else if (collect_cmd->parsed()) {
      const auto cfg = resolve(collect_opts);
      const auto pipe = opemix::build_pipeline(cfg);
      const std::string path = collect_opts.out.empty() ? "data.jsonl" : collect_opts.out;
      opemix::save_multidataset(path, opemix::MultiDataset{pipe.data});
      for (std::size_t p = 0; p < pipe.truth.size(); ++p) {
        std::cout << opemix::policy_name(p) << " value " << pipe.truth[p].mean << " se " << pipe.truth[p].se << '\n';
      }
      std::cout << "wrote " << path << '\n';
    } else if (eval_cmd->parsed()) {
      const auto cfg = resolve(eval_opts);
      const auto pipe = opemix::build_pipeline(cfg);
      report(opemix::run_rotation(cfg, pipe, cfg.m_values.front()), cfg);
    } else if (sweep_t_cmd->parsed()) {
      const auto cfg = resolve(sweep_t_opts);
      const auto pipe = opemix::build_pipeline(cfg);
      report(opemix::sweep_t(cfg, pipe), cfg);
    } else if (sweep_m_cmd->parsed()) {
      const auto cfg = resolve(sweep_m_opts);
      const auto pipe = opemix::build_pipeline(cfg);
      report(opemix::sweep_m(cfg, pipe), cfg);
    }
  } catch (const opemix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const opemix::NotSpdError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
