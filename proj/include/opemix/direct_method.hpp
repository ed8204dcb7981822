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

#ifndef OPEMIX_DIRECT_METHOD_HPP
#define OPEMIX_DIRECT_METHOD_HPP

#include <opemix/core.hpp>
#include <opemix/io.hpp>
#include <opemix/linalg.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Model-based value estimates: reward and transition regressions, value iteration over an
 * enumerated state space, and Q̂ / V̂ providers for the doubly robust family.
 */

namespace opemix {

/// Linear model y ≈ w·x + b fitted with an L2 penalty on w (intercept unpenalized).
struct RidgeModel {
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;

  [[nodiscard]] double predict(std::span<const double> x) const {
    if (x.size() != weights.size()) {
      throw Error("feature dimension mismatch");
    }
    return intercept + dot(weights, x);
  }

  friend bool operator==(const RidgeModel&, const RidgeModel&) = default;
};

inline nlohmann::json to_json(const RidgeModel& m) {
  return {{"weights", m.weights}, {"intercept", m.intercept}, {"lambda", m.lambda}};
}

inline RidgeModel ridge_from_json(const nlohmann::json& j) {
  return {j.at("weights").get<Vector>(), j.at("intercept").get<double>(), j.at("lambda").get<double>()};
}

namespace detail {

inline Vector column_means(const Matrix& x) {
  Vector mean(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      mean[c] += x(r, c);
    }
  }
  for (auto& m : mean) {
    m /= static_cast<double>(x.rows());
  }
  return mean;
}

}  // namespace detail

/// Ridge regression on centered features, solved through the normal equations.
[[nodiscard]] inline RidgeModel fit_ridge(const Matrix& features, std::span<const double> targets, double lambda) {
  if (features.rows() == 0 || features.rows() != targets.size()) {
    throw ValidationError("ridge needs one target per feature row");
  }
  if (lambda < 0.0) {
    throw ConfigError("ridge lambda must be non-negative");
  }
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  const Vector xbar = detail::column_means(features);
  double ybar = 0.0;
  for (double y : targets) {
    ybar += y;
  }
  ybar /= static_cast<double>(n);

  Matrix gram(d, d);
  Vector rhs(d, 0.0);
  Vector row(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      row[c] = features(r, c) - xbar[c];
    }
    const double yc = targets[r] - ybar;
    for (std::size_t a = 0; a < d; ++a) {
      rhs[a] += row[a] * yc;
      for (std::size_t b = a; b < d; ++b) {
        gram(a, b) += row[a] * row[b];
      }
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      gram(a, b) = gram(b, a);
    }
    gram(a, a) += lambda;
  }
  RidgeModel m;
  m.lambda = lambda;
  m.weights = d == 0 ? Vector{} : spd_solve(gram, rhs);
  m.intercept = ybar - (d == 0 ? 0.0 : dot(m.weights, xbar));
  return m;
}

/// P(y = 1 | x) = sigmoid(w·x + b).
struct LogisticModel {
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;

  [[nodiscard]] double predict(std::span<const double> x) const {
    if (x.size() != weights.size()) {
      throw Error("feature dimension mismatch");
    }
    return 1.0 / (1.0 + std::exp(-(intercept + dot(weights, x))));
  }
};

inline nlohmann::json to_json(const LogisticModel& m) {
  return {{"weights", m.weights}, {"intercept", m.intercept}, {"lambda", m.lambda}};
}

/// L2-penalized logistic regression by Newton (IRLS) iterations.
[[nodiscard]] inline LogisticModel fit_logistic(const Matrix& features, std::span<const double> labels,
                                                double lambda = 1.0, std::size_t max_iter = 50) {
  if (features.rows() == 0 || features.rows() != labels.size()) {
    throw ValidationError("logistic regression needs one label per feature row");
  }
  if (!(lambda > 0.0)) {
    throw ConfigError("logistic lambda must be positive");
  }
  const std::size_t n = features.rows();
  const std::size_t d = features.cols() + 1;
  Vector beta(d, 0.0);
  Vector x(d);
  for (std::size_t it = 0; it < max_iter; ++it) {
    Matrix hess(d, d);
    Vector grad(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      x[0] = 1.0;
      for (std::size_t c = 1; c < d; ++c) {
        x[c] = features(r, c - 1);
      }
      const double p = 1.0 / (1.0 + std::exp(-dot(beta, x)));
      const double wgt = std::max(p * (1.0 - p), 1e-12);
      for (std::size_t a = 0; a < d; ++a) {
        grad[a] += (labels[r] - p) * x[a];
        for (std::size_t b = a; b < d; ++b) {
          hess(a, b) += wgt * x[a] * x[b];
        }
      }
    }
    for (std::size_t a = 1; a < d; ++a) {
      grad[a] -= lambda * beta[a];
      hess(a, a) += lambda;
    }
    hess(0, 0) += 1e-9;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < a; ++b) {
        hess(a, b) = hess(b, a);
      }
    }
    const Vector step = spd_solve(hess, grad);
    double change = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      beta[a] += step[a];
      change = std::max(change, std::abs(step[a]));
    }
    if (change < 1e-10) {
      break;
    }
  }
  LogisticModel m;
  m.lambda = lambda;
  m.intercept = beta[0];
  m.weights.assign(beta.begin() + 1, beta.end());
  return m;
}

/// Finite state-action model: expected rewards and sparse successor distributions.
/**
 * Probability mass missing from a successor list is absorption with value 0.
 */
struct EnumeratedModel {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  /// num_states x num_actions.
  Matrix reward;
  /// Indexed s * num_actions + a.
  std::vector<std::vector<std::pair<std::size_t, double>>> successors;
};

/// Transition counts of a discrete MDP, normalized to conditional distributions.
struct EmpiricalTransition {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  /// Indexed (s * num_actions + a) * num_states + s'.
  std::vector<double> counts;

  /// P̂(s'|s,a); uniform over states when (s,a) was never observed.
  [[nodiscard]] double prob(std::size_t s, std::size_t a, std::size_t next) const {
    const std::size_t base = (s * num_actions + a) * num_states;
    double total = 0.0;
    for (std::size_t k = 0; k < num_states; ++k) {
      total += counts[base + k];
    }
    if (total == 0.0) {
      return 1.0 / static_cast<double>(num_states);
    }
    return counts[base + next] / total;
  }
};

using StateIndex = std::function<std::size_t(const Observation&)>;

/// Counts transitions and averages rewards of a discrete MDP observed through `state_of`.
/// Unvisited state-action pairs get reward 0.
[[nodiscard]] inline std::pair<EnumeratedModel, EmpiricalTransition> fit_tabular(const MultiDataset& ds,
                                                                                 const StateIndex& state_of,
                                                                                 std::size_t num_states,
                                                                                 std::size_t num_actions) {
  EmpiricalTransition tr{num_states, num_actions, std::vector<double>(num_states * num_actions * num_states, 0.0)};
  Matrix reward_sum(num_states, num_actions);
  Matrix visits(num_states, num_actions);
  for (const auto& d : ds.datasets) {
    for (const auto& traj : d.trajectories) {
      for (std::size_t t = 0; t < traj.length(); ++t) {
        const Step& st = traj.steps[t];
        const std::size_t s = state_of(st.obs);
        if (s >= num_states || st.action >= num_actions) {
          throw ValidationError("state or action index out of range");
        }
        reward_sum(s, st.action) += st.reward;
        visits(s, st.action) += 1.0;
        if (t + 1 < traj.length()) {
          tr.counts[(s * num_actions + st.action) * num_states + state_of(traj.steps[t + 1].obs)] += 1.0;
        }
      }
    }
  }
  EnumeratedModel model;
  model.num_states = num_states;
  model.num_actions = num_actions;
  model.reward = Matrix(num_states, num_actions);
  model.successors.resize(num_states * num_actions);
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      if (visits(s, a) > 0.0) {
        model.reward(s, a) = reward_sum(s, a) / visits(s, a);
      }
      for (std::size_t k = 0; k < num_states; ++k) {
        const double p = tr.prob(s, a, k);
        if (p > 0.0) {
          model.successors[s * num_actions + a].emplace_back(k, p);
        }
      }
    }
  }
  return {std::move(model), std::move(tr)};
}

/// Q̂ / V̂ tables over an enumerated state space, with the observation-to-state map.
struct TabularQV {
  Matrix q_table;
  Vector v_table;
  StateIndex state_of;
  std::size_t iterations = 0;
  /// V̂ after each sweep, starting from the all-zero V̂_0.
  std::vector<Vector> history;

  [[nodiscard]] double q(const Observation& obs, std::size_t action) const {
    return q_table(state_of(obs), action);
  }
  [[nodiscard]] double v(const Observation& obs) const { return v_table[state_of(obs)]; }
};

inline nlohmann::json to_json(const TabularQV& qv) {
  return {{"q", to_json(qv.q_table)}, {"v", qv.v_table}, {"iterations", qv.iterations}};
}

/// Runs `iters` sweeps of Q̂(s,a) = R̂(s,a) + γ Σ P̂(s'|s,a) V̂(s'), V̂(s) = Σ_a π(a|s) Q̂(s,a) from V̂ = 0.
/**
 * \param target_probs num_states x num_actions matrix of target action probabilities.
 */
[[nodiscard]] inline TabularQV value_iteration(const EnumeratedModel& model, const Matrix& target_probs,
                                               double gamma, std::size_t iters, StateIndex state_of) {
  if (target_probs.rows() != model.num_states || target_probs.cols() != model.num_actions ||
      model.reward.rows() != model.num_states || model.reward.cols() != model.num_actions ||
      model.successors.size() != model.num_states * model.num_actions) {
    throw Error("model and policy shapes disagree");
  }
  TabularQV out;
  out.q_table = Matrix(model.num_states, model.num_actions);
  out.v_table.assign(model.num_states, 0.0);
  out.state_of = std::move(state_of);
  out.iterations = iters;
  out.history.push_back(out.v_table);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t s = 0; s < model.num_states; ++s) {
      for (std::size_t a = 0; a < model.num_actions; ++a) {
        double cont = 0.0;
        for (const auto& [next, p] : model.successors[s * model.num_actions + a]) {
          cont += p * out.v_table[next];
        }
        out.q_table(s, a) = model.reward(s, a) + gamma * cont;
      }
    }
    for (std::size_t s = 0; s < model.num_states; ++s) {
      double v = 0.0;
      for (std::size_t a = 0; a < model.num_actions; ++a) {
        v += target_probs(s, a) * out.q_table(s, a);
      }
      out.v_table[s] = v;
    }
    out.history.push_back(out.v_table);
  }
  return out;
}

/// Mean of V̂ over sampled initial observations.
template <ValueModel M>
[[nodiscard]] double dm_value(const M& qv, std::span<const Observation> initial) {
  if (initial.empty()) {
    throw ValidationError("direct method needs at least one initial state");
  }
  double s = 0.0;
  for (const auto& obs : initial) {
    s += static_cast<double>(qv.v(obs));
  }
  return s / static_cast<double>(initial.size());
}

}  // namespace opemix

#endif  // OPEMIX_DIRECT_METHOD_HPP
