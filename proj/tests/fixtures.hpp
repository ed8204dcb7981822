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

#ifndef OPEMIX_TESTS_FIXTURES_HPP
#define OPEMIX_TESTS_FIXTURES_HPP

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "opemix/core.hpp"

namespace opemix::testing {

// State-free target: action a has probability probs[a].
struct ActionPolicy {
  std::vector<double> probs;
  [[nodiscard]] double prob(const Observation& /*obs*/, std::size_t a) const { return probs.at(a); }
};

// Target reading its probability from the "pi" feature of the observation.
struct LoggedTarget {
  [[nodiscard]] double prob(const Observation& obs, std::size_t /*a*/) const { return obs.scalar("pi"); }
};

struct StepSpec {
  double target;
  double behavior;
  double reward;
};

inline Trajectory make_traj(const std::vector<StepSpec>& spec) {
  Trajectory t;
  for (const auto& s : spec) {
    Step st;
    st.obs.set("pi", s.target);
    st.action = 0;
    st.reward = s.reward;
    st.behavior_prob = s.behavior;
    t.steps.push_back(std::move(st));
  }
  return t;
}

// Random logged data with the target probability stored in the observation.
inline MultiDataset random_logged(std::size_t m, std::size_t n, std::size_t max_len, std::uint64_t seed) {
  std::mt19937_64 rng{seed};
  std::uniform_real_distribution<double> prob{0.1, 1.0};
  std::uniform_real_distribution<double> rew{-1.0, 1.0};
  std::uniform_int_distribution<std::size_t> len{1, max_len};
  MultiDataset ds;
  for (std::size_t i = 0; i < m; ++i) {
    BehaviorDataset d{"p" + std::to_string(i), {}};
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<StepSpec> spec;
      const std::size_t l = len(rng);
      for (std::size_t t = 0; t < l; ++t) {
        spec.push_back({prob(rng), prob(rng), rew(rng)});
      }
      Trajectory tr = make_traj(spec);
      for (auto& s : tr.steps) {
        s.obs.set("q", rew(rng)).set("v", rew(rng));
      }
      d.trajectories.push_back(std::move(tr));
    }
    ds.datasets.push_back(std::move(d));
  }
  return ds;
}

// Q̂ and V̂ read from the observation.
struct LoggedModel {
  [[nodiscard]] double q(const Observation& o, std::size_t /*a*/) const { return o.scalar("q"); }
  [[nodiscard]] double v(const Observation& o) const { return o.scalar("v"); }
};

}  // namespace opemix::testing

#endif  // OPEMIX_TESTS_FIXTURES_HPP
