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
#include <set>

#include "fixtures.hpp"
#include "opemix/core.hpp"

namespace opemix {
namespace {

using testing::LoggedTarget;
using testing::make_traj;

TEST(Ratios, CumulativeProduct) {
  const auto r = importance_ratios(make_traj({{0.5, 0.25, 0}, {0.6, 0.2, 0}}), LoggedTarget{});
  ASSERT_EQ(r.rho.size(), 2u);
  EXPECT_DOUBLE_EQ(r.step[0], 2.0);
  EXPECT_DOUBLE_EQ(r.step[1], 3.0);
  EXPECT_DOUBLE_EQ(r.rho[0], 2.0);
  EXPECT_DOUBLE_EQ(r.rho[1], 6.0);
  EXPECT_DOUBLE_EQ(r.prev(0), 1.0);
  EXPECT_DOUBLE_EQ(r.prev(1), 2.0);
}

TEST(Ratios, ClipRecursesOnClippedValue) {
  // steps 10, 10, 0.5 with clip 50: 10, 50, 25 (unclipped would give 50 at the end)
  const auto r = importance_ratios(make_traj({{1.0, 0.1, 0}, {1.0, 0.1, 0}, {0.5, 1.0, 0}}), LoggedTarget{}, 50.0);
  EXPECT_DOUBLE_EQ(r.rho[0], 10.0);
  EXPECT_DOUBLE_EQ(r.rho[1], 50.0);
  EXPECT_DOUBLE_EQ(r.rho[2], 25.0);
  EXPECT_DOUBLE_EQ(r.step[1], 10.0);
}

TEST(Ratios, ZeroProbabilityRejected) {
  EXPECT_THROW((void)importance_ratios(make_traj({{0.5, 0.0, 0}}), LoggedTarget{}), ValidationError);
  EXPECT_THROW((void)importance_ratios(make_traj({{0.0, 0.5, 0}}), LoggedTarget{}), ValidationError);
}

BehaviorDataset numbered(std::size_t n) {
  BehaviorDataset d{"b", {}};
  for (std::size_t i = 0; i < n; ++i) {
    d.trajectories.push_back(make_traj({{1.0, 1.0, static_cast<double>(i)}}));
  }
  return d;
}

TEST(HalfSplit, SizesAndPartition) {
  for (std::size_t n : {2u, 3u, 10u, 11u}) {
    const auto d = numbered(n);
    const auto [a, b] = half_split(d, 7);
    EXPECT_EQ(a.n(), (n + 1) / 2);
    EXPECT_EQ(b.n(), n / 2);
    std::multiset<double> seen;
    for (const auto* half : {&a, &b}) {
      for (const auto& t : half->trajectories) {
        seen.insert(t.steps[0].reward);
      }
    }
    ASSERT_EQ(seen.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(seen.count(static_cast<double>(i)), 1u);
    }
  }
}

TEST(HalfSplit, DeterministicAndOrderPreserving) {
  const auto d = numbered(20);
  const auto first = half_split(d, 42);
  const auto again = half_split(d, 42);
  EXPECT_EQ(first.first.trajectories, again.first.trajectories);
  EXPECT_EQ(first.second.trajectories, again.second.trajectories);
  const auto other = half_split(d, 43);
  EXPECT_NE(first.first.trajectories, other.first.trajectories);
  auto increasing = [](const BehaviorDataset& h) {
    return std::is_sorted(h.trajectories.begin(), h.trajectories.end(),
                          [](const Trajectory& x, const Trajectory& y) { return x.steps[0].reward < y.steps[0].reward; });
  };
  EXPECT_TRUE(increasing(first.first));
  EXPECT_TRUE(increasing(first.second));
}

TEST(HalfSplit, TooSmallThrows) { EXPECT_THROW((void)half_split(numbered(1), 1), ValidationError); }

TEST(Validate, ReportsRewardAndProbabilityViolations) {
  MultiDataset ds;
  ds.datasets.push_back({"a", {make_traj({{0.5, 0.5, 0.5}, {0.5, 0.5, 3.0}})}});
  ds.datasets.push_back({"b", {make_traj({{0.5, 1e-12, 0.0}})}});
  ValidationConfig cfg;
  cfg.reward_bound = 1.0;
  const auto v = validate(ds, cfg);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].kind, Violation::Kind::kReward);
  EXPECT_EQ(v[0].policy, 0u);
  EXPECT_EQ(v[0].step, 1u);
  EXPECT_DOUBLE_EQ(v[0].value, 3.0);
  EXPECT_EQ(v[1].kind, Violation::Kind::kBehaviorProb);
  EXPECT_EQ(v[1].policy, 1u);
}

TEST(Validate, RatioBoundUsesTarget) {
  MultiDataset ds;
  ds.datasets.push_back({"a", {make_traj({{1.0, 0.1, 0}, {1.0, 0.1, 0}})}});
  ValidationConfig cfg;
  cfg.ratio_bound = 50.0;
  const auto v = validate(ds, cfg, LoggedTarget{});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::kRatio);
  EXPECT_EQ(v[0].step, 1u);
  EXPECT_NEAR(v[0].value, 100.0, 1e-9);
}

TEST(Validate, BadConfigThrows) {
  MultiDataset ds;
  ValidationConfig cfg;
  cfg.reward_bound = -1.0;
  EXPECT_THROW((void)validate(ds, cfg), ConfigError);
}

TEST(Observation, Features) {
  Observation o;
  o.set("x", 1.5).set("v", std::vector<double>{1, 2});
  EXPECT_TRUE(o.contains("x"));
  EXPECT_FALSE(o.contains("y"));
  EXPECT_DOUBLE_EQ(o.scalar("x"), 1.5);
  EXPECT_EQ(o.vector("v").size(), 2u);
  EXPECT_THROW((void)o.scalar("v"), Error);
  EXPECT_THROW((void)o.scalar("missing"), Error);
}

TEST(MultiDataset, Shape) {
  MultiDataset ds;
  ds.datasets.push_back({"a", {make_traj({{1, 1, 0}}), make_traj({{1, 1, 0}, {1, 1, 0}, {1, 1, 0}})}});
  ds.datasets.push_back({"b", {make_traj({{1, 1, 0}, {1, 1, 0}})}});
  EXPECT_EQ(ds.num_policies(), 2u);
  EXPECT_EQ(ds.total_trajectories(), 3u);
  EXPECT_EQ(ds.horizon_max(), 2u);
}

}  // namespace
}  // namespace opemix
