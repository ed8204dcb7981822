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

#ifndef OPEMIX_RECSIM_HPP
#define OPEMIX_RECSIM_HPP

#include <opemix/core.hpp>
#include <opemix/direct_method.hpp>
#include <opemix/io.hpp>
#include <opemix/linalg.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Simulated recommender: topic world, user dynamics, linear relevance policies and a
 * REINFORCE trainer.
 *
 * The agent observes the user id and the relevance vector of the last recommended document
 * (all ones before the first recommendation). Interest and satisfaction stay hidden.
 * Observation features: "user" (scalar id), "doc" (last document index, -1 at the start), "d".
 */

namespace opemix {

struct RecsimConfig {
  std::size_t num_topics = 20;
  std::size_t num_docs = 100;
  std::size_t num_users = 5;
  std::size_t max_len = 20;
  /// Standard deviation of the initial interest.
  double initial_interest_sd = 1.0;

  void check() const {
    if (num_topics == 0 || num_docs == 0 || num_users == 0 || max_len == 0 || !(initial_interest_sd >= 0.0)) {
      throw ConfigError("recommender sizes must be positive");
    }
  }
};

struct Document {
  /// 0/1 topic indicators with 1 to 3 bits set.
  Vector relevance;
  /// Hidden quality.
  double quality = 0.0;
};

struct TopicWorld {
  RecsimConfig config;
  Vector abundance;
  Vector quality;
  std::vector<Document> documents;
  /// One preference vector in [-1, 1]^K per user.
  std::vector<Vector> preferences;
  /// prefix[k] = sum of relevance vectors of documents 0..k.
  std::vector<Vector> prefix;

  [[nodiscard]] std::size_t num_topics() const noexcept { return config.num_topics; }
  [[nodiscard]] std::size_t num_docs() const noexcept { return documents.size(); }
  [[nodiscard]] std::size_t num_users() const noexcept { return preferences.size(); }

  void build_prefix() {
    prefix.clear();
    Vector acc(config.num_topics, 0.0);
    for (const auto& d : documents) {
      for (std::size_t k = 0; k < acc.size(); ++k) {
        acc[k] += d.relevance[k];
      }
      prefix.push_back(acc);
    }
  }
};

[[nodiscard]] inline TopicWorld generate_world(std::uint64_t seed, const RecsimConfig& cfg = {}) {
  cfg.check();
  std::mt19937_64 rng{seed};
  std::uniform_real_distribution<double> unit{0.0, 1.0};
  std::uniform_real_distribution<double> sym{-1.0, 1.0};
  TopicWorld w;
  w.config = cfg;
  const std::size_t k = cfg.num_topics;
  w.abundance.resize(k);
  double total = 0.0;
  for (auto& a : w.abundance) {
    a = unit(rng);
    total += a;
  }
  for (auto& a : w.abundance) {
    a /= total;
  }
  w.quality.resize(k);
  for (auto& q : w.quality) {
    q = unit(rng);
  }
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    Vector p(k);
    for (auto& x : p) {
      x = sym(rng);
    }
    w.preferences.push_back(std::move(p));
  }
  std::discrete_distribution<std::size_t> pick(w.abundance.begin(), w.abundance.end());
  for (std::size_t i = 0; i < cfg.num_docs; ++i) {
    Document d;
    d.relevance.assign(k, 0.0);
    for (int draw = 0; draw < 3; ++draw) {
      d.relevance[pick(rng)] = 1.0;
    }
    d.quality = (dot(w.quality, d.relevance) + unit(rng)) / 2.0;
    w.documents.push_back(std::move(d));
  }
  w.build_prefix();
  return w;
}

inline nlohmann::json to_json(const TopicWorld& w) {
  auto docs = nlohmann::json::array();
  for (const auto& d : w.documents) {
    docs.push_back({{"relevance", d.relevance}, {"quality", d.quality}});
  }
  return {{"config",
           {{"num_topics", w.config.num_topics},
            {"num_docs", w.config.num_docs},
            {"num_users", w.config.num_users},
            {"max_len", w.config.max_len},
            {"initial_interest_sd", w.config.initial_interest_sd}}},
          {"abundance", w.abundance},
          {"quality", w.quality},
          {"preferences", w.preferences},
          {"documents", std::move(docs)}};
}

[[nodiscard]] inline TopicWorld world_from_json(const nlohmann::json& j) {
  TopicWorld w;
  const auto& c = j.at("config");
  w.config.num_topics = c.at("num_topics").get<std::size_t>();
  w.config.num_docs = c.at("num_docs").get<std::size_t>();
  w.config.num_users = c.at("num_users").get<std::size_t>();
  w.config.max_len = c.at("max_len").get<std::size_t>();
  w.config.initial_interest_sd = c.at("initial_interest_sd").get<double>();
  w.abundance = j.at("abundance").get<Vector>();
  w.quality = j.at("quality").get<Vector>();
  w.preferences = j.at("preferences").get<std::vector<Vector>>();
  for (const auto& d : j.at("documents")) {
    w.documents.push_back({d.at("relevance").get<Vector>(), d.at("quality").get<double>()});
  }
  w.build_prefix();
  return w;
}

struct HiddenState {
  std::size_t user = 0;
  double interest = 0.0;
  double satisfaction = 0.5;
  Vector doc;
  /// Index of the last recommended document; -1 before the first.
  long last_doc = -1;
};

[[nodiscard]] inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

template <class Rng>
[[nodiscard]] HiddenState initial_state(const TopicWorld& w, Rng& rng) {
  std::uniform_int_distribution<std::size_t> user{0, w.num_users() - 1};
  std::normal_distribution<double> interest{0.0, w.config.initial_interest_sd};
  HiddenState s;
  s.user = user(rng);
  s.interest = interest(rng);
  s.satisfaction = sigmoid(0.5 * s.interest);
  s.doc.assign(w.num_topics(), 1.0);
  return s;
}

[[nodiscard]] inline Observation observe(const HiddenState& s) {
  return Observation{}
      .set("user", static_cast<double>(s.user))
      .set("doc", static_cast<double>(s.last_doc))
      .set("d", s.doc);
}

/// Liking of the user for a document, clamped at 0: sum_k r_k p_k (d_k + 0.5) / 2.
[[nodiscard]] inline double liking(const TopicWorld& w, std::size_t user, std::span<const double> doc_vector,
                                   std::size_t doc_index) {
  const auto& r = w.documents[doc_index].relevance;
  const auto& p = w.preferences[user];
  double l = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    l += r[k] * p[k] * (doc_vector[k] + 0.5) / 2.0;
  }
  return std::max(l, 0.0);
}

struct EnvStep {
  double reward = 0.0;
  /// Empty when the user leaves.
  std::optional<HiddenState> next;
};

template <class Rng>
[[nodiscard]] EnvStep env_step(const HiddenState& s, std::size_t doc_index, const TopicWorld& w, Rng& rng) {
  if (doc_index >= w.num_docs()) {
    throw ValidationError("document index out of range");
  }
  const double l = liking(w, s.user, s.doc, doc_index);
  std::uniform_real_distribution<double> unit{0.0, 1.0};
  if (!(unit(rng) < l / (1.0 + l))) {
    return {0.0, std::nullopt};
  }
  const Document& d = w.documents[doc_index];
  std::normal_distribution<double> engagement{d.quality, 0.1};
  std::normal_distribution<double> noise{0.0, 0.1};
  EnvStep out;
  out.reward = s.satisfaction * std::exp(engagement(rng));
  HiddenState n;
  n.user = s.user;
  n.interest = 0.9 * s.interest + dot(w.preferences[s.user], d.relevance) + noise(rng);
  n.satisfaction = sigmoid(0.5 * n.interest);
  n.doc = d.relevance;
  n.last_doc = static_cast<long>(doc_index);
  out.next = std::move(n);
  return out;
}

/// Scores y = softplus(W x / temperature) + floor over topics; π(a) ∝ yᵀ r_a.
/**
 * x = user one-hot ⊕ d ⊕ 1. W is num_topics x (num_users + num_topics + 1), row-major.
 */
class LinearPolicy {
 public:
  LinearPolicy() = default;
  LinearPolicy(std::shared_ptr<const TopicWorld> world, Matrix params, double temperature = 1.0,
               double floor = 1e-3)
      : world_{std::move(world)}, params_{std::move(params)}, temperature_{temperature}, floor_{floor} {
    if (!world_) {
      throw ConfigError("policy needs a world");
    }
    if (params_.rows() != world_->num_topics() || params_.cols() != feature_dim(*world_)) {
      throw ConfigError("policy parameter shape does not match the world");
    }
    if (!(temperature_ > 0.0) || !(floor_ > 0.0)) {
      throw ConfigError("temperature and score floor must be positive");
    }
  }

  /// Random N(0, scale^2) parameters.
  static LinearPolicy random(std::shared_ptr<const TopicWorld> world, std::uint64_t seed, double scale = 1.0,
                             double temperature = 1.0) {
    std::mt19937_64 rng{seed};
    std::normal_distribution<double> g{0.0, scale};
    Matrix w(world->num_topics(), feature_dim(*world));
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t c = 0; c < w.cols(); ++c) {
        w(r, c) = g(rng);
      }
    }
    return {std::move(world), std::move(w), temperature};
  }

  [[nodiscard]] static std::size_t feature_dim(const TopicWorld& w) { return w.num_users() + w.num_topics() + 1; }

  [[nodiscard]] const TopicWorld& world() const { return *world_; }
  [[nodiscard]] const std::shared_ptr<const TopicWorld>& world_ptr() const noexcept { return world_; }
  [[nodiscard]] const Matrix& params() const noexcept { return params_; }
  [[nodiscard]] Matrix& params() noexcept { return params_; }
  [[nodiscard]] double temperature() const noexcept { return temperature_; }
  [[nodiscard]] double floor() const noexcept { return floor_; }

  [[nodiscard]] Vector features(const Observation& obs) const {
    const auto& w = *world_;
    Vector x(feature_dim(w), 0.0);
    const auto user = static_cast<std::size_t>(std::lround(obs.scalar("user")));
    if (user >= w.num_users()) {
      throw ValidationError("user id out of range");
    }
    x[user] = 1.0;
    const auto d = obs.vector("d");
    if (d.size() != w.num_topics()) {
      throw ValidationError("document vector has the wrong size");
    }
    std::copy(d.begin(), d.end(), x.begin() + static_cast<std::ptrdiff_t>(w.num_users()));
    x.back() = 1.0;
    return x;
  }

  /// Pre-activation W x / temperature.
  [[nodiscard]] Vector logits(std::span<const double> x) const {
    Vector z = params_ * x;
    for (auto& v : z) {
      v /= temperature_;
    }
    return z;
  }

  [[nodiscard]] Vector scores(const Observation& obs) const { return scores_from_logits(logits(features(obs))); }

  [[nodiscard]] Vector scores_from_logits(std::span<const double> z) const {
    Vector y(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      y[k] = softplus(z[k]) + floor_;
    }
    return y;
  }

  [[nodiscard]] double prob(const Observation& obs, std::size_t action) const {
    const Vector y = scores(obs);
    return dot(y, world_->documents.at(action).relevance) / dot(y, world_->prefix.back());
  }

  [[nodiscard]] Vector probs(const Observation& obs) const {
    const Vector y = scores(obs);
    const double total = dot(y, world_->prefix.back());
    Vector p(world_->num_docs());
    for (std::size_t a = 0; a < p.size(); ++a) {
      p[a] = dot(y, world_->documents[a].relevance) / total;
    }
    return p;
  }

  /// d log π(a|obs) / dW, same shape as the parameters.
  [[nodiscard]] Matrix grad_log_prob(const Observation& obs, std::size_t action) const {
    const Vector x = features(obs);
    const Vector z = logits(x);
    const Vector y = scores_from_logits(z);
    const auto& r = world_->documents.at(action).relevance;
    const auto& total = world_->prefix.back();
    const double num = dot(y, r);
    const double den = dot(y, total);
    Matrix g(params_.rows(), params_.cols());
    for (std::size_t k = 0; k < params_.rows(); ++k) {
      const double dy = r[k] / num - total[k] / den;
      const double dz = dy * sigmoid(z[k]) / temperature_;
      for (std::size_t f = 0; f < params_.cols(); ++f) {
        g(k, f) = dz * x[f];
      }
    }
    return g;
  }

 private:
  static double softplus(double v) noexcept { return v > 30.0 ? v : std::log1p(std::exp(v)); }

  std::shared_ptr<const TopicWorld> world_;
  Matrix params_;
  double temperature_ = 1.0;
  double floor_ = 1e-3;
};

inline nlohmann::json to_json(const LinearPolicy& p) {
  return {{"params", to_json(p.params())}, {"temperature", p.temperature()}, {"floor", p.floor()}};
}

[[nodiscard]] inline LinearPolicy policy_from_json(const nlohmann::json& j, std::shared_ptr<const TopicWorld> world) {
  return {std::move(world), matrix_from_json(j.at("params")), j.at("temperature").get<double>(),
          j.at("floor").get<double>()};
}

/// Smallest k with yᵀ prefix[k] >= c · yᵀ prefix[D-1], by binary search; c in [0, 1).
[[nodiscard]] inline std::size_t sample_from_scores(const TopicWorld& w, std::span<const double> y, double c) {
  const double target = c * dot(y, w.prefix.back());
  std::size_t lo = 0;
  std::size_t hi = w.num_docs() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (dot(y, w.prefix[mid]) >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

/// Reference inverse-CDF sampler scanning documents in order.
[[nodiscard]] inline std::size_t sample_linear_scan(const TopicWorld& w, std::span<const double> y, double c) {
  const double target = c * dot(y, w.prefix.back());
  for (std::size_t k = 0; k < w.num_docs(); ++k) {
    if (dot(y, w.prefix[k]) >= target) {
      return k;
    }
  }
  return w.num_docs() - 1;
}

template <class Rng>
[[nodiscard]] std::size_t sample_action(const LinearPolicy& policy, const Observation& obs, Rng& rng) {
  std::uniform_real_distribution<double> unit{0.0, 1.0};
  const Vector y = policy.scores(obs);
  return sample_from_scores(policy.world(), y, unit(rng));
}

/// Rolls out one episode; stops when the user leaves or after max_len steps.
template <class Rng>
[[nodiscard]] Trajectory rollout(const LinearPolicy& policy, Rng& rng) {
  const TopicWorld& w = policy.world();
  Trajectory traj;
  HiddenState s = initial_state(w, rng);
  for (std::size_t t = 0; t < w.config.max_len; ++t) {
    Observation obs = observe(s);
    const std::size_t a = sample_action(policy, obs, rng);
    const double pa = policy.prob(obs, a);
    EnvStep step = env_step(s, a, w, rng);
    traj.steps.push_back({std::move(obs), a, step.reward, pa});
    if (!step.next) {
      break;
    }
    s = std::move(*step.next);
  }
  return traj;
}

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64{seq};
}

}  // namespace detail

/// n trajectories; trajectory j uses its own stream derived from (seed, j).
[[nodiscard]] inline BehaviorDataset collect(const LinearPolicy& policy, std::size_t n, std::uint64_t seed,
                                             std::string policy_id = "p") {
  BehaviorDataset ds{std::move(policy_id), {}};
  ds.trajectories.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto rng = detail::stream(seed, j);
    ds.trajectories.push_back(rollout(policy, rng));
  }
  return ds;
}

[[nodiscard]] inline double discounted_return(const Trajectory& traj, double gamma) {
  double g = 0.0;
  double discount = 1.0;
  for (const auto& s : traj.steps) {
    g += discount * s.reward;
    discount *= gamma;
  }
  return g;
}

struct ValueWithError {
  double mean = 0.0;
  double se = 0.0;
};

/// Mean discounted return of n fresh on-policy episodes, with its standard error.
[[nodiscard]] inline ValueWithError on_policy_value(const LinearPolicy& policy, std::size_t n, std::uint64_t seed,
                                                    double gamma) {
  if (n < 2) {
    throw ValidationError("on-policy value needs at least 2 episodes");
  }
  double s = 0.0;
  double s2 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    auto rng = detail::stream(seed, j);
    const double g = discounted_return(rollout(policy, rng), gamma);
    s += g;
    s2 += g * g;
  }
  const double nn = static_cast<double>(n);
  const double mean = s / nn;
  const double var = std::max(s2 / nn - mean * mean, 0.0) * nn / (nn - 1.0);
  return {mean, std::sqrt(var / nn)};
}

struct ReinforceConfig {
  std::size_t episodes = 2000;
  double lr = 0.05;
  double gamma = 0.9;
  double clip_norm = 10.0;
};

/// Score-function updates after every episode with discounted return-to-go and no baseline.
[[nodiscard]] inline LinearPolicy reinforce_train(LinearPolicy policy, const ReinforceConfig& cfg, std::uint64_t seed) {
  if (cfg.lr < 0.0) {
    throw ConfigError("learning rate must be non-negative");
  }
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    auto rng = detail::stream(seed, e);
    const Trajectory traj = rollout(policy, rng);
    Vector to_go(traj.length(), 0.0);
    double g = 0.0;
    for (std::size_t t = traj.length(); t-- > 0;) {
      g = traj.steps[t].reward + cfg.gamma * g;
      to_go[t] = g;
    }
    Matrix grad(policy.params().rows(), policy.params().cols());
    double discount = 1.0;
    for (std::size_t t = 0; t < traj.length(); ++t) {
      grad += policy.grad_log_prob(traj.steps[t].obs, traj.steps[t].action) * (discount * to_go[t]);
      discount *= cfg.gamma;
    }
    const double norm = frobenius_norm(grad);
    if (norm > cfg.clip_norm) {
      grad *= cfg.clip_norm / norm;
    }
    policy.params() += grad * cfg.lr;
  }
  return policy;
}

/// (user, last document) index: user * (D + 1) + (doc + 1).
[[nodiscard]] inline std::size_t recsim_state(const Observation& obs, std::size_t num_docs) {
  const auto user = static_cast<std::size_t>(std::lround(obs.scalar("user")));
  const auto doc = std::lround(obs.scalar("doc"));
  return user * (num_docs + 1) + static_cast<std::size_t>(doc + 1);
}

/// Fitted reward and take/leave models of the recommender.
struct RecsimModel {
  RidgeModel reward;
  LogisticModel take;
};

namespace detail {

// user one-hot ⊗ (r ∘ (d + 0.5) / 2): the liking-shaped block.
inline Vector liking_features(const TopicWorld& w, std::size_t user, std::span<const double> d, std::size_t action) {
  const std::size_t k = w.num_topics();
  Vector x(w.num_users() * k, 0.0);
  const auto& r = w.documents[action].relevance;
  for (std::size_t t = 0; t < k; ++t) {
    x[user * k + t] = r[t] * (d[t] + 0.5) / 2.0;
  }
  return x;
}

inline Vector reward_features(const TopicWorld& w, std::size_t user, std::span<const double> d, std::size_t action) {
  Vector x = liking_features(w, user, d, action);
  const auto& r = w.documents[action].relevance;
  x.insert(x.end(), r.begin(), r.end());
  return x;
}

inline Vector doc_vector(const TopicWorld& w, long last_doc) {
  return last_doc < 0 ? Vector(w.num_topics(), 1.0) : w.documents[static_cast<std::size_t>(last_doc)].relevance;
}

}  // namespace detail

/// Ridge regression of rewards and logistic regression of "took the document" (reward > 0).
[[nodiscard]] inline RecsimModel fit_recsim_model(const TopicWorld& w, std::span<const Trajectory> data,
                                                  double ridge_lambda = 1.0, double logistic_lambda = 1.0) {
  std::size_t rows = 0;
  for (const auto& t : data) {
    rows += t.length();
  }
  if (rows == 0) {
    throw ValidationError("no steps to fit the model on");
  }
  const std::size_t k = w.num_topics();
  Matrix xr(rows, w.num_users() * k + k);
  Matrix xt(rows, w.num_users() * k);
  Vector y(rows);
  Vector took(rows);
  std::size_t r = 0;
  for (const auto& traj : data) {
    for (const auto& s : traj.steps) {
      const auto user = static_cast<std::size_t>(std::lround(s.obs.scalar("user")));
      const auto d = s.obs.vector("d");
      const Vector fr = detail::reward_features(w, user, d, s.action);
      for (std::size_t c = 0; c < fr.size(); ++c) {
        xr(r, c) = fr[c];
      }
      for (std::size_t c = 0; c < xt.cols(); ++c) {
        xt(r, c) = fr[c];
      }
      y[r] = s.reward;
      took[r] = s.reward > 0.0 ? 1.0 : 0.0;
      ++r;
    }
  }
  return {fit_ridge(xr, y, ridge_lambda), fit_logistic(xt, took, logistic_lambda, 25)};
}

/// Value iteration of a target policy on the fitted model over (user, last document) states.
[[nodiscard]] inline TabularQV recsim_qv(const TopicWorld& w, const RecsimModel& model, const LinearPolicy& target,
                                        double gamma, std::size_t iters = 20) {
  const std::size_t docs = w.num_docs();
  const std::size_t states = w.num_users() * (docs + 1);
  EnumeratedModel em;
  em.num_states = states;
  em.num_actions = docs;
  em.reward = Matrix(states, docs);
  em.successors.resize(states * docs);
  Matrix pi(states, docs);
  for (std::size_t u = 0; u < w.num_users(); ++u) {
    for (long last = -1; last < static_cast<long>(docs); ++last) {
      const std::size_t s = u * (docs + 1) + static_cast<std::size_t>(last + 1);
      const Vector d = detail::doc_vector(w, last);
      const Observation obs = Observation{}
                                  .set("user", static_cast<double>(u))
                                  .set("doc", static_cast<double>(last))
                                  .set("d", d);
      const Vector p = target.probs(obs);
      for (std::size_t a = 0; a < docs; ++a) {
        pi(s, a) = p[a];
        const Vector fr = detail::reward_features(w, u, d, a);
        em.reward(s, a) = model.reward.predict(fr);
        const double take = model.take.predict(std::span<const double>{fr.data(), model.take.weights.size()});
        em.successors[s * docs + a].emplace_back(u * (docs + 1) + a + 1, take);
      }
    }
  }
  return value_iteration(em, pi, gamma, iters, [docs](const Observation& o) { return recsim_state(o, docs); });
}

}  // namespace opemix

#endif  // OPEMIX_RECSIM_HPP
