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

#ifndef OPEMIX_CORE_HPP
#define OPEMIX_CORE_HPP

#include <opemix/errors.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

/**
 * \file
 * \brief Logged trajectory data model, importance ratios and the half-split protocol.
 */

namespace opemix {

/// A named observation feature: either a scalar or a dense vector.
using Feature = std::variant<double, std::vector<double>>;

/// Opaque observation record shared by the tabular and recommender environments.
class Observation {
 public:
  using Map = std::map<std::string, Feature, std::less<>>;

  Observation() = default;

  Observation& set(std::string key, double value) {
    features_.insert_or_assign(std::move(key), Feature{value});
    return *this;
  }

  Observation& set(std::string key, std::vector<double> value) {
    features_.insert_or_assign(std::move(key), Feature{std::move(value)});
    return *this;
  }

  [[nodiscard]] bool contains(std::string_view key) const { return features_.find(key) != features_.end(); }

  /// Scalar feature; a length-1 vector is accepted too.
  [[nodiscard]] double scalar(std::string_view key) const {
    const auto& f = at(key);
    if (const auto* d = std::get_if<double>(&f)) {
      return *d;
    }
    const auto& v = std::get<std::vector<double>>(f);
    if (v.size() != 1) {
      throw ValidationError("observation feature '" + std::string{key} + "' is not a scalar");
    }
    return v.front();
  }

  [[nodiscard]] std::span<const double> vector(std::string_view key) const {
    const auto& f = at(key);
    if (const auto* v = std::get_if<std::vector<double>>(&f)) {
      return {v->data(), v->size()};
    }
    return {&std::get<double>(f), 1};
  }

  [[nodiscard]] const Map& features() const noexcept { return features_; }

  friend bool operator==(const Observation&, const Observation&) = default;

 private:
  [[nodiscard]] const Feature& at(std::string_view key) const {
    auto it = features_.find(key);
    if (it == features_.end()) {
      throw ValidationError("observation has no feature '" + std::string{key} + "'");
    }
    return it->second;
  }

  Map features_;
};

/// One logged interaction.
struct Step {
  Observation obs;
  std::size_t action = 0;
  double reward = 0.0;
  /// Probability the logging policy assigned to `action`; must be in (0, 1].
  double behavior_prob = 1.0;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::vector<Step> steps;

  [[nodiscard]] std::size_t length() const noexcept { return steps.size(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Trajectories logged by a single behavior policy.
struct BehaviorDataset {
  std::string policy_id;
  std::vector<Trajectory> trajectories;

  [[nodiscard]] std::size_t n() const noexcept { return trajectories.size(); }

  /// Largest step index present (max length - 1); 0 for an empty dataset.
  [[nodiscard]] std::size_t horizon_max() const noexcept {
    std::size_t longest = 0;
    for (const auto& t : trajectories) {
      longest = std::max(longest, t.length());
    }
    return longest == 0 ? 0 : longest - 1;
  }

  friend bool operator==(const BehaviorDataset&, const BehaviorDataset&) = default;
};

/// Data from M behavior policies, in file order.
struct MultiDataset {
  std::vector<BehaviorDataset> datasets;

  [[nodiscard]] std::size_t num_policies() const noexcept { return datasets.size(); }

  [[nodiscard]] std::size_t total_trajectories() const noexcept {
    std::size_t total = 0;
    for (const auto& d : datasets) {
      total += d.n();
    }
    return total;
  }

  [[nodiscard]] std::size_t horizon_max() const noexcept {
    std::size_t h = 0;
    for (const auto& d : datasets) {
      h = std::max(h, d.horizon_max());
    }
    return h;
  }

  friend bool operator==(const MultiDataset&, const MultiDataset&) = default;
};

/// Anything that scores the probability of an action given an observation.
template <class P>
concept TargetPolicy = requires(const P& policy, const Observation& obs, std::size_t action) {
  { policy.prob(obs, action) } -> std::convertible_to<double>;
};

/// Q̂ / V̂ provider consumed by the doubly robust family.
template <class M>
concept ValueModel = requires(const M& model, const Observation& obs, std::size_t action) {
  { model.q(obs, action) } -> std::convertible_to<double>;
  { model.v(obs) } -> std::convertible_to<double>;
};

/// Q̂ = V̂ = 0 everywhere; turns DR into IS.
struct ZeroModel {
  [[nodiscard]] double q(const Observation& /*obs*/, std::size_t /*action*/) const noexcept { return 0.0; }
  [[nodiscard]] double v(const Observation& /*obs*/) const noexcept { return 0.0; }
};

/// Cumulative importance ratios of one trajectory under a target policy.
struct RatioVector {
  /// rho[t]: (clipped) cumulative ratio through step t.
  std::vector<double> rho;
  /// step[t]: per-step ratio target/behavior at t, never clipped.
  std::vector<double> step;

  /// Cumulative ratio before step t; 1 at t = 0.
  [[nodiscard]] double prev(std::size_t t) const noexcept { return t == 0 ? 1.0 : rho[t - 1]; }
};

/// Computes cumulative importance ratios.
/**
 * With a clip threshold the recursion runs on the clipped value,
 * rho[t] = min(rho[t-1] * step[t], clip), so later entries grow from the clipped value.
 */
template <TargetPolicy P>
[[nodiscard]] RatioVector importance_ratios(const Trajectory& traj, const P& target,
                                            std::optional<double> clip = std::nullopt) {
  RatioVector out;
  out.rho.reserve(traj.length());
  out.step.reserve(traj.length());
  double running = 1.0;
  for (std::size_t t = 0; t < traj.length(); ++t) {
    const Step& s = traj.steps[t];
    if (!(s.behavior_prob > 0.0)) {
      throw ValidationError("support assumption violated: behavior_prob <= 0 at step " + std::to_string(t));
    }
    const double p = static_cast<double>(target.prob(s.obs, s.action));
    if (!(p > 0.0)) {
      throw ValidationError("support violation: target probability is 0 for a logged action at step " +
                            std::to_string(t));
    }
    const double ratio = p / s.behavior_prob;
    running *= ratio;
    if (clip && running > *clip) {
      running = *clip;
    }
    out.step.push_back(ratio);
    out.rho.push_back(running);
  }
  return out;
}

/// Splits a dataset into a variance half (ceil(n/2)) and a value half (floor(n/2)).
/**
 * The split is a seeded shuffle; trajectories keep their original relative order within each half.
 */
[[nodiscard]] inline std::pair<BehaviorDataset, BehaviorDataset> half_split(const BehaviorDataset& ds,
                                                                            std::uint64_t seed) {
  if (ds.n() < 2) {
    throw ValidationError("cannot split a dataset with fewer than 2 trajectories");
  }
  std::vector<std::size_t> order(ds.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng{seed};
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick{0, i};
    std::swap(order[i], order[pick(rng)]);
  }
  const std::size_t first = (ds.n() + 1) / 2;
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());

  BehaviorDataset var_half{ds.policy_id, {}};
  BehaviorDataset value_half{ds.policy_id, {}};
  var_half.trajectories.reserve(first);
  value_half.trajectories.reserve(ds.n() - first);
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < first ? var_half : value_half).trajectories.push_back(ds.trajectories[order[k]]);
  }
  return {std::move(var_half), std::move(value_half)};
}

/// Bounds checked by `validate`.
struct ValidationConfig {
  /// Bound on |reward|; unlimited when empty.
  std::optional<double> reward_bound;
  /// Bound on cumulative importance ratios; unlimited when empty.
  std::optional<double> ratio_bound;
  double min_prob = 1e-9;
};

struct Violation {
  enum class Kind { kReward, kBehaviorProb, kRatio };

  Kind kind;
  std::size_t policy;
  std::size_t trajectory;
  std::size_t step;
  double value;
};

namespace detail {

inline void check_config(const ValidationConfig& cfg) {
  if (!(cfg.min_prob > 0.0) || (cfg.reward_bound && !(*cfg.reward_bound > 0.0)) ||
      (cfg.ratio_bound && !(*cfg.ratio_bound > 0.0))) {
    throw ConfigError("validation bounds must be positive");
  }
}

}  // namespace detail

/// Lists every step whose reward or behavior probability violates the configured bounds.
[[nodiscard]] inline std::vector<Violation> validate(const MultiDataset& ds, const ValidationConfig& cfg) {
  detail::check_config(cfg);
  std::vector<Violation> out;
  for (std::size_t i = 0; i < ds.datasets.size(); ++i) {
    const auto& trajs = ds.datasets[i].trajectories;
    for (std::size_t j = 0; j < trajs.size(); ++j) {
      for (std::size_t t = 0; t < trajs[j].length(); ++t) {
        const Step& s = trajs[j].steps[t];
        if (cfg.reward_bound && std::abs(s.reward) > *cfg.reward_bound) {
          out.push_back({Violation::Kind::kReward, i, j, t, s.reward});
        }
        if (!(s.behavior_prob >= cfg.min_prob)) {
          out.push_back({Violation::Kind::kBehaviorProb, i, j, t, s.behavior_prob});
        }
      }
    }
  }
  return out;
}

/// As `validate`, additionally flagging cumulative ratios above `cfg.ratio_bound` under `target`.
template <TargetPolicy P>
[[nodiscard]] std::vector<Violation> validate(const MultiDataset& ds, const ValidationConfig& cfg, const P& target) {
  auto out = validate(ds, cfg);
  if (!cfg.ratio_bound) {
    return out;
  }
  for (std::size_t i = 0; i < ds.datasets.size(); ++i) {
    const auto& trajs = ds.datasets[i].trajectories;
    for (std::size_t j = 0; j < trajs.size(); ++j) {
      double running = 1.0;
      for (std::size_t t = 0; t < trajs[j].length(); ++t) {
        const Step& s = trajs[j].steps[t];
        if (!(s.behavior_prob > 0.0)) {
          break;
        }
        running *= static_cast<double>(target.prob(s.obs, s.action)) / s.behavior_prob;
        if (running > *cfg.ratio_bound) {
          out.push_back({Violation::Kind::kRatio, i, j, t, running});
        }
      }
    }
  }
  return out;
}

}  // namespace opemix

#endif  // OPEMIX_CORE_HPP
