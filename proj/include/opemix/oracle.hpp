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

#ifndef OPEMIX_ORACLE_HPP
#define OPEMIX_ORACLE_HPP

#include <opemix/core.hpp>
#include <opemix/direct_method.hpp>
#include <opemix/linalg.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Small finite-horizon tabular MDPs with exact values and exhaustive estimator distributions.
 *
 * Observations carry a single scalar feature "state". Every episode runs exactly `horizon` steps.
 */

namespace opemix {

/// Reward outcome with its probability.
struct RewardOutcome {
  double value = 0.0;
  double prob = 1.0;
};

struct TabularMDP {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  /// Indexed (s * num_actions + a) * num_states + s'.
  std::vector<double> transition;
  /// Indexed s * num_actions + a.
  std::vector<std::vector<RewardOutcome>> reward;
  std::vector<double> initial;
  double gamma = 1.0;
  /// Steps per episode.
  std::size_t horizon = 1;

  [[nodiscard]] double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[(s * num_actions + a) * num_states + next];
  }

  [[nodiscard]] double mean_reward(std::size_t s, std::size_t a) const {
    double m = 0.0;
    for (const auto& o : reward[s * num_actions + a]) {
      m += o.prob * o.value;
    }
    return m;
  }

  /// Throws unless every distribution sums to 1 within 1e-12.
  void check() const {
    auto sums_to_one = [](double s) { return std::abs(s - 1.0) <= 1e-12; };
    if (num_states == 0 || num_actions == 0 || horizon == 0 || !(gamma >= 0.0 && gamma <= 1.0) ||
        transition.size() != num_states * num_actions * num_states || reward.size() != num_states * num_actions ||
        initial.size() != num_states) {
      throw ValidationError("tabular MDP has inconsistent sizes or parameters");
    }
    double s0 = 0.0;
    for (double x : initial) {
      s0 += x;
    }
    if (!sums_to_one(s0)) {
      throw ValidationError("initial distribution does not sum to 1");
    }
    for (std::size_t sa = 0; sa < num_states * num_actions; ++sa) {
      double st = 0.0;
      for (std::size_t k = 0; k < num_states; ++k) {
        st += transition[sa * num_states + k];
      }
      double sr = 0.0;
      for (const auto& o : reward[sa]) {
        sr += o.prob;
      }
      if (!sums_to_one(st) || !sums_to_one(sr)) {
        throw ValidationError("transition or reward distribution does not sum to 1");
      }
    }
  }
};

/// Observation of a tabular state.
[[nodiscard]] inline Observation state_observation(std::size_t s) {
  return Observation{}.set("state", static_cast<double>(s));
}

[[nodiscard]] inline std::size_t state_of(const Observation& obs) {
  return static_cast<std::size_t>(std::lround(obs.scalar("state")));
}

/// Stationary stochastic policy given as a num_states x num_actions probability table.
struct TabularPolicy {
  Matrix probs;

  [[nodiscard]] double prob(const Observation& obs, std::size_t action) const {
    return probs(state_of(obs), action);
  }
};

/// Reads {"num_states", "num_actions", "P": [s][a][s'], "R": [s][a] (number or [[value, prob], ...]),
/// "P0", "gamma", "horizon"}.
[[nodiscard]] inline TabularMDP mdp_from_json(const nlohmann::json& j) {
  TabularMDP m;
  m.num_states = j.at("num_states").get<std::size_t>();
  m.num_actions = j.at("num_actions").get<std::size_t>();
  m.gamma = j.at("gamma").get<double>();
  m.horizon = j.at("horizon").get<std::size_t>();
  m.initial = j.at("P0").get<std::vector<double>>();
  const auto& p = j.at("P");
  const auto& r = j.at("R");
  for (std::size_t s = 0; s < m.num_states; ++s) {
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      const auto row = p.at(s).at(a).get<std::vector<double>>();
      if (row.size() != m.num_states) {
        throw ValidationError("transition row has the wrong length");
      }
      m.transition.insert(m.transition.end(), row.begin(), row.end());
      const auto& cell = r.at(s).at(a);
      if (cell.is_number()) {
        m.reward.push_back({{cell.get<double>(), 1.0}});
      } else {
        std::vector<RewardOutcome> outcomes;
        for (const auto& o : cell) {
          outcomes.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
        }
        m.reward.push_back(std::move(outcomes));
      }
    }
  }
  m.check();
  return m;
}

[[nodiscard]] inline TabularMDP load_mdp(const std::filesystem::path& path) {
  std::ifstream in{path};
  if (!in) {
    throw ParseError(0, "cannot open " + path.string());
  }
  try {
    return mdp_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
}

/// Random MDP with full-support transitions and two-point rewards in [0, 1].
[[nodiscard]] inline TabularMDP random_mdp(std::size_t num_states, std::size_t num_actions, std::size_t horizon,
                                           double gamma, std::uint64_t seed) {
  std::mt19937_64 rng{seed};
  std::uniform_real_distribution<double> u{0.05, 1.0};
  auto simplex = [&](std::size_t k) {
    std::vector<double> v(k);
    double s = 0.0;
    for (auto& x : v) {
      x = u(rng);
      s += x;
    }
    for (auto& x : v) {
      x /= s;
    }
    return v;
  };
  TabularMDP m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.gamma = gamma;
  m.horizon = horizon;
  m.initial = simplex(num_states);
  for (std::size_t sa = 0; sa < num_states * num_actions; ++sa) {
    const auto row = simplex(num_states);
    m.transition.insert(m.transition.end(), row.begin(), row.end());
    const double hi = u(rng);
    const double pr = u(rng);
    m.reward.push_back({{0.0, 1.0 - pr}, {hi, pr}});
  }
  return m;
}

/// Random full-support policy; every probability is at least `min_prob`.
[[nodiscard]] inline TabularPolicy random_policy(std::size_t num_states, std::size_t num_actions,
                                                 std::uint64_t seed, double min_prob = 0.05) {
  std::mt19937_64 rng{seed};
  std::uniform_real_distribution<double> u{0.0, 1.0};
  TabularPolicy pi{Matrix(num_states, num_actions)};
  for (std::size_t s = 0; s < num_states; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < num_actions; ++a) {
      pi.probs(s, a) = u(rng);
      total += pi.probs(s, a);
    }
    for (std::size_t a = 0; a < num_actions; ++a) {
      pi.probs(s, a) = min_prob + (1.0 - min_prob * static_cast<double>(num_actions)) * pi.probs(s, a) / total;
    }
  }
  return pi;
}

struct ExactValue {
  /// sum_t γ^t per_t.
  double value = 0.0;
  /// Expected (undiscounted) reward at each step t.
  Vector per_t;
};

/// Per-step expected rewards from the forward state distribution.
[[nodiscard]] inline ExactValue exact_value(const TabularMDP& m, const TabularPolicy& pi) {
  m.check();
  ExactValue out;
  Vector dist = m.initial;
  double discount = 1.0;
  for (std::size_t t = 0; t < m.horizon; ++t) {
    double vt = 0.0;
    Vector next(m.num_states, 0.0);
    for (std::size_t s = 0; s < m.num_states; ++s) {
      for (std::size_t a = 0; a < m.num_actions; ++a) {
        const double w = dist[s] * pi.probs(s, a);
        vt += w * m.mean_reward(s, a);
        for (std::size_t k = 0; k < m.num_states; ++k) {
          next[k] += w * m.p(s, a, k);
        }
      }
    }
    out.per_t.push_back(vt);
    out.value += discount * vt;
    discount *= m.gamma;
    dist = std::move(next);
  }
  return out;
}

/// Q-functions of backward dynamic programming: element t is Q at step t (horizon - t steps left).
[[nodiscard]] inline std::vector<Matrix> finite_horizon_q(const TabularMDP& m, const TabularPolicy& pi) {
  m.check();
  std::vector<Matrix> qs(m.horizon, Matrix(m.num_states, m.num_actions));
  Vector v_next(m.num_states, 0.0);
  for (std::size_t step = m.horizon; step-- > 0;) {
    Matrix& q = qs[step];
    Vector v(m.num_states, 0.0);
    for (std::size_t s = 0; s < m.num_states; ++s) {
      for (std::size_t a = 0; a < m.num_actions; ++a) {
        double cont = 0.0;
        for (std::size_t k = 0; k < m.num_states; ++k) {
          cont += m.p(s, a, k) * v_next[k];
        }
        q(s, a) = m.mean_reward(s, a) + m.gamma * cont;
        v[s] += pi.probs(s, a) * q(s, a);
      }
    }
    v_next = std::move(v);
  }
  return qs;
}

/// Value by backward dynamic programming.
[[nodiscard]] inline double backward_value(const TabularMDP& m, const TabularPolicy& pi) {
  const auto qs = finite_horizon_q(m, pi);
  double v = 0.0;
  for (std::size_t s = 0; s < m.num_states; ++s) {
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      v += m.initial[s] * pi.probs(s, a) * qs.front()(s, a);
    }
  }
  return v;
}

/// The true model as an enumerated model for value iteration.
[[nodiscard]] inline EnumeratedModel enumerated_model(const TabularMDP& m) {
  EnumeratedModel out;
  out.num_states = m.num_states;
  out.num_actions = m.num_actions;
  out.reward = Matrix(m.num_states, m.num_actions);
  out.successors.resize(m.num_states * m.num_actions);
  for (std::size_t s = 0; s < m.num_states; ++s) {
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      out.reward(s, a) = m.mean_reward(s, a);
      for (std::size_t k = 0; k < m.num_states; ++k) {
        if (m.p(s, a, k) > 0.0) {
          out.successors[s * m.num_actions + a].emplace_back(k, m.p(s, a, k));
        }
      }
    }
  }
  return out;
}

namespace detail {

template <class Rng>
std::size_t draw(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> u{0.0, 1.0};
  const double c = u(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (c < acc) {
      return k;
    }
  }
  for (std::size_t k = probs.size(); k-- > 0;) {
    if (probs[k] > 0.0) {
      return k;
    }
  }
  return 0;
}

}  // namespace detail

template <class Rng>
[[nodiscard]] Trajectory sample_trajectory(const TabularMDP& m, const TabularPolicy& behavior, Rng& rng) {
  Trajectory traj;
  std::size_t s = detail::draw(m.initial, rng);
  std::vector<double> row(m.num_states);
  std::vector<double> rp;
  for (std::size_t t = 0; t < m.horizon; ++t) {
    const auto pa = std::span<const double>{behavior.probs.data().data() + s * m.num_actions, m.num_actions};
    const std::size_t a = detail::draw(pa, rng);
    const auto& outcomes = m.reward[s * m.num_actions + a];
    rp.clear();
    for (const auto& o : outcomes) {
      rp.push_back(o.prob);
    }
    const double r = outcomes[detail::draw(rp, rng)].value;
    traj.steps.push_back({state_observation(s), a, r, pa[a]});
    for (std::size_t k = 0; k < m.num_states; ++k) {
      row[k] = m.p(s, a, k);
    }
    s = detail::draw(row, rng);
  }
  return traj;
}

[[nodiscard]] inline BehaviorDataset sample_dataset(const TabularMDP& m, const TabularPolicy& behavior, std::size_t n,
                                                    std::uint64_t seed, std::string policy_id = "b") {
  std::mt19937_64 rng{seed};
  BehaviorDataset ds{std::move(policy_id), {}};
  ds.trajectories.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    ds.trajectories.push_back(sample_trajectory(m, behavior, rng));
  }
  return ds;
}

/// Exact sampling law of a single-trajectory estimator under the behavior policy.
struct EstimatorDistribution {
  double mean = 0.0;
  /// Variance of one trajectory's contribution; divide by n for an n-sample average.
  double variance = 0.0;
  std::size_t trajectories = 0;
};

/// Enumerates every trajectory with positive probability (at most `max_trajectories`).
[[nodiscard]] inline EstimatorDistribution enumerate_estimator_distribution(
    const TabularMDP& m, const TabularPolicy& behavior, const std::function<double(const Trajectory&)>& estimator,
    std::size_t max_trajectories = 1000000) {
  m.check();
  double mass = 0.0;
  double first = 0.0;
  double second = 0.0;
  std::size_t count = 0;
  Trajectory traj;
  traj.steps.reserve(m.horizon);

  std::function<void(std::size_t, double)> visit = [&](std::size_t s, double prob) {
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      const double pa = behavior.probs(s, a);
      if (pa <= 0.0) {
        continue;
      }
      for (const auto& o : m.reward[s * m.num_actions + a]) {
        if (o.prob <= 0.0) {
          continue;
        }
        traj.steps.push_back({state_observation(s), a, o.value, pa});
        const double p = prob * pa * o.prob;
        if (traj.length() == m.horizon) {
          if (++count > max_trajectories) {
            throw ValidationError("trajectory space exceeds " + std::to_string(max_trajectories));
          }
          const double x = estimator(traj);
          mass += p;
          first += p * x;
          second += p * x * x;
        } else {
          for (std::size_t k = 0; k < m.num_states; ++k) {
            if (m.p(s, a, k) > 0.0) {
              visit(k, p * m.p(s, a, k));
            }
          }
        }
        traj.steps.pop_back();
      }
    }
  };
  for (std::size_t s = 0; s < m.num_states; ++s) {
    if (m.initial[s] > 0.0) {
      visit(s, m.initial[s]);
    }
  }
  EstimatorDistribution out;
  out.trajectories = count;
  out.mean = first / mass;
  out.variance = std::max(second / mass - out.mean * out.mean, 0.0);
  return out;
}

}  // namespace opemix

#endif  // OPEMIX_ORACLE_HPP
