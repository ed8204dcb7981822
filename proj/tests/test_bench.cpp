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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "opemix/bench.hpp"

namespace opemix {
namespace {

ExperimentConfig tiny() {
  return config_from_json(nlohmann::json::parse(R"({
    "world_seed": 3,
    "world": {"num_topics": 5, "num_docs": 12, "num_users": 2, "max_len": 5},
    "pool": {"size": 4, "seed": 7, "episodes": [0, 40], "temperatures": [1, 4]},
    "dm": {"train_n": 200},
    "n": 40, "truth_n": 300, "M": [1, 2], "T_mix": [1, 2, 3],
    "rotations": 4, "t_mix_default": 2})"));
}

class BenchTiny : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new ExperimentConfig(tiny());
    pipe_ = new Pipeline(build_pipeline(*config_));
  }
  static void TearDownTestSuite() {
    delete pipe_;
    delete config_;
  }
  static ExperimentConfig* config_;
  static Pipeline* pipe_;
};

ExperimentConfig* BenchTiny::config_ = nullptr;
Pipeline* BenchTiny::pipe_ = nullptr;

TEST_F(BenchTiny, PipelineShape) {
  EXPECT_EQ(pipe_->pool.size(), 4u);
  EXPECT_EQ(pipe_->data.size(), 4u);
  EXPECT_EQ(pipe_->truth.size(), 4u);
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_EQ(pipe_->data[p].n(), 40u);
    EXPECT_EQ(pipe_->data[p].policy_id, policy_name(p));
    EXPECT_GT(pipe_->truth[p].se, 0.0);
  }
}

TEST_F(BenchTiny, SweepOverMHasOneRowPerMethodAndM) {
  const auto rep = sweep_m(*config_, *pipe_);
  EXPECT_EQ(rep.rows.size(), known_methods().size() * 2);
  EXPECT_EQ(rep.trials.size(), known_methods().size() * 2 * 4);
  for (const auto& name : known_methods()) {
    for (double m : {1.0, 2.0}) {
      const auto* row = rep.find(name, m);
      ASSERT_NE(row, nullptr) << name << " " << m;
      EXPECT_EQ(row->trials, 4u);
      EXPECT_TRUE(std::isfinite(row->mse));
      EXPECT_EQ(std::isfinite(row->mean_cond), uses_t_mix(name)) << name;
    }
  }
  std::ostringstream csv;
  write_csv(csv, rep);
  std::istringstream lines{csv.str()};
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "method,sweep_value,mse,mean_cond,trials");
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    ++count;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
  }
  EXPECT_EQ(count, rep.rows.size());
}

TEST_F(BenchTiny, SingleBehaviorIdentities) {
  const auto rep = run_rotation(*config_, *pipe_, 1);
  for (std::size_t rot = 0; rot < 4; ++rot) {
    auto est = [&](const std::string& m) {
      for (const auto& t : rep.trials) {
        if (t.method == m && t.rotation == rot) {
          return t.estimate;
        }
      }
      return std::numeric_limits<double>::quiet_NaN();
    };
    EXPECT_NEAR(est("WIS"), est("SWIS"), 1e-12);
    EXPECT_NEAR(est("WDR"), est("SWDR"), 1e-12);
  }
}

TEST_F(BenchTiny, MonteCarloIsTargetAverage) {
  const auto r = prepare_rotation(*config_, *pipe_, 1, 2);
  EXPECT_EQ(r.target, 1u);
  EXPECT_EQ(r.behaviors, (std::vector<std::size_t>{2, 3}));
  double s = 0.0;
  for (const auto& t : pipe_->data[1].trajectories) {
    s += discounted_return(t, config_->gamma);
  }
  EXPECT_NEAR(run_method("MC", r, *pipe_, config_->gamma, 2, 1e-8).first, s / 40.0, 1e-12);
  EXPECT_THROW((void)run_method("nope", r, *pipe_, config_->gamma, 2, 1e-8), ConfigError);
}

TEST_F(BenchTiny, SweepOverT) {
  const auto rep = sweep_t(*config_, *pipe_);
  EXPECT_EQ(rep.sweep, "T");
  EXPECT_EQ(rep.rows.size(), 6u * 3u);
  EXPECT_EQ(rep.best_t.size(), 6u);
  for (const auto& [method, t] : rep.best_t) {
    EXPECT_TRUE(uses_t_mix(method));
    EXPECT_TRUE(t >= 1.0 && t <= 3.0);
  }
  auto bad = *config_;
  bad.t_values = {5};
  EXPECT_THROW((void)sweep_t(bad, *pipe_), ConfigError);
}

TEST_F(BenchTiny, Deterministic) {
  const auto a = run_rotation(*config_, *pipe_, 2);
  const auto again = build_pipeline(*config_);
  const auto b = run_rotation(*config_, again, 2);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].estimate, b.trials[i].estimate) << a.trials[i].method;
  }
}

TEST_F(BenchTiny, JsonRoundTripAndEmit) {
  auto rep = sweep_t(*config_, *pipe_);
  const auto back = report_from_json(to_json(rep));
  EXPECT_EQ(to_json(back), to_json(rep));
  const auto dir = std::filesystem::temp_directory_path() / "opemix_bench_test";
  std::filesystem::remove_all(dir);
  const auto json_file = emit_report(rep, dir / "out", "json");
  EXPECT_EQ(json_file.extension(), ".json");
  std::ifstream in{json_file};
  EXPECT_EQ(to_json(report_from_json(nlohmann::json::parse(in))), to_json(rep));
  const auto csv_file = emit_report(rep, dir / "out", "csv");
  EXPECT_TRUE(std::filesystem::exists(csv_file));
  EXPECT_THROW((void)emit_report(rep, dir / "out", "xml"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_F(BenchTiny, CacheReproducesPipeline) {
  const auto dir = std::filesystem::temp_directory_path() / "opemix_cache_test";
  std::filesystem::remove_all(dir);
  auto c = *config_;
  c.cache_dir = dir.string();
  const auto first = build_pipeline(c);
  const auto second = build_pipeline(c);
  ASSERT_EQ(first.pool.size(), second.pool.size());
  for (std::size_t p = 0; p < first.pool.size(); ++p) {
    EXPECT_EQ(first.pool[p].params(), pipe_->pool[p].params());
    EXPECT_EQ(second.pool[p].params(), pipe_->pool[p].params());
    EXPECT_EQ(second.data[p].trajectories, pipe_->data[p].trajectories);
  }
  std::filesystem::remove_all(dir);
}

TEST(BenchConfig, Defaults) {
  const auto c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.n, 10000u);
  EXPECT_EQ(c.pool.size, 10u);
  EXPECT_EQ(c.rotations, 10u);
  EXPECT_DOUBLE_EQ(*c.clip, 2000.0);
  EXPECT_EQ(c.dm.iters, 20u);
  EXPECT_EQ(c.methods, known_methods());
  EXPECT_EQ(config_from_json(to_json(c)).n, c.n);
  EXPECT_FALSE(config_from_json(nlohmann::json::parse(R"({"clip": null})")).clip.has_value());
}

TEST(BenchConfig, TMixLookup) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"t_mix": {"MIS": 7}, "t_mix_default": 3})"));
  EXPECT_EQ(c.t_mix_for("MIS"), 7u);
  EXPECT_EQ(c.t_mix_for("MDR"), 3u);
}

TEST(BenchConfig, Errors) {
  for (const char* bad : {R"({"M": [0]})", R"({"M": [10]})", R"({"methods": ["XIS"]})", R"({"gamma": 0})",
                          R"({"n": 2})", R"({"rotations": 11})", R"({"format": "xml"})", R"({"pool": {"size": 1}})",
                          R"({"n": "many"})", R"({"world": {"num_docs": 0}})", R"({"clip": -1})"}) {
    EXPECT_THROW((void)config_from_json(nlohmann::json::parse(bad)), ConfigError) << bad;
  }
  EXPECT_THROW((void)load_config("/nonexistent/config.json"), ConfigError);
}

}  // namespace
}  // namespace opemix
