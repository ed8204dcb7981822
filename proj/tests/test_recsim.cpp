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

#include <cmath>
#include <memory>
#include <random>

#include "opemix/recsim.hpp"

namespace opemix {
namespace {

std::shared_ptr<const TopicWorld> small_world(std::uint64_t seed = 1) {
  RecsimConfig cfg;
  cfg.num_topics = 8;
  cfg.num_docs = 30;
  cfg.num_users = 3;
  cfg.max_len = 10;
  return std::make_shared<const TopicWorld>(generate_world(seed, cfg));
}

// A world with one user and hand-set documents.
TopicWorld hand_world(std::vector<Vector> docs, Vector pref) {
  TopicWorld w;
  w.config.num_topics = pref.size();
  w.config.num_docs = docs.size();
  w.config.num_users = 1;
  w.abundance.assign(pref.size(), 1.0 / static_cast<double>(pref.size()));
  w.quality.assign(pref.size(), 0.5);
  for (auto& d : docs) {
    w.documents.push_back({std::move(d), 0.5});
  }
  w.preferences.push_back(std::move(pref));
  w.build_prefix();
  return w;
}

TEST(World, AbundanceAndDocuments) {
  const auto w = generate_world(3);
  double s = 0.0;
  for (double a : w.abundance) {
    EXPECT_GE(a, 0.0);
    s += a;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  for (const auto& d : w.documents) {
    double bits = 0.0;
    for (double r : d.relevance) {
      EXPECT_TRUE(r == 0.0 || r == 1.0);
      bits += r;
    }
    EXPECT_GE(bits, 1.0);
    EXPECT_LE(bits, 3.0);
    const double base = dot(w.quality, d.relevance) / 2.0;
    EXPECT_GE(d.quality, base);
    EXPECT_LE(d.quality, base + 0.5);
  }
  for (const auto& p : w.preferences) {
    for (double x : p) {
      EXPECT_GE(x, -1.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(World, TopicFrequenciesFollowAbundance) {
  RecsimConfig cfg;
  cfg.num_docs = 33334;
  const auto w = generate_world(5, cfg);
  const std::size_t k = cfg.num_topics;
  // three draws with duplicates collapsed: P(topic set) = 1 - (1 - a)^3
  Vector want(k), got(k, 0.0);
  double want_total = 0.0, got_total = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    want[t] = 1.0 - std::pow(1.0 - w.abundance[t], 3.0);
    want_total += want[t];
  }
  for (const auto& d : w.documents) {
    for (std::size_t t = 0; t < k; ++t) {
      got[t] += d.relevance[t];
      got_total += d.relevance[t];
    }
  }
  double tv = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    tv += 0.5 * std::abs(got[t] / got_total - want[t] / want_total);
  }
  EXPECT_LT(tv, 0.01);
}

TEST(World, JsonRoundTripAndDeterminism) {
  const auto a = generate_world(9);
  const auto b = generate_world(9);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(to_json(world_from_json(to_json(a))), to_json(a));
  EXPECT_NE(to_json(generate_world(10)), to_json(a));
  RecsimConfig bad;
  bad.num_docs = 0;
  EXPECT_THROW((void)generate_world(1, bad), ConfigError);
}

TEST(Environment, LikingByHand) {
  Vector doc(8, 0.0);
  doc[2] = doc[7] = 1.0;
  Vector pref(8, 0.0);
  pref[2] = 0.4;
  pref[7] = 0.8;
  const auto w = hand_world({doc}, pref);
  const Vector ones(8, 1.0);
  const double l = liking(w, 0, ones, 0);
  EXPECT_NEAR(l, 0.9, 1e-12);
  EXPECT_NEAR(l / (1.0 + l), 0.4737, 1e-4);
  // empirical take rate
  std::mt19937_64 rng{1};
  HiddenState s;
  s.doc = ones;
  s.satisfaction = sigmoid(0.0);
  int took = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    took += env_step(s, 0, w, rng).next.has_value() ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(took) / n, 0.9 / 1.9, 4.0 * std::sqrt(0.25 / n));
}

TEST(Environment, NegativeLikingAlwaysLeaves) {
  Vector doc(4, 0.0);
  doc[1] = 1.0;
  Vector pref(4, -0.5);
  const auto w = hand_world({doc}, pref);
  EXPECT_EQ(liking(w, 0, Vector(4, 1.0), 0), 0.0);
  std::mt19937_64 rng{2};
  HiddenState s;
  s.doc.assign(4, 1.0);
  for (int i = 0; i < 100; ++i) {
    const auto out = env_step(s, 0, w, rng);
    EXPECT_FALSE(out.next.has_value());
    EXPECT_EQ(out.reward, 0.0);
  }
}

TEST(Environment, SatisfactionTracksInterest) {
  const auto w = small_world();
  std::mt19937_64 rng{3};
  HiddenState s = initial_state(*w, rng);
  EXPECT_DOUBLE_EQ(s.satisfaction, sigmoid(0.5 * s.interest));
  HiddenState zero = s;
  zero.interest = 0.0;
  zero.satisfaction = sigmoid(0.0);
  EXPECT_DOUBLE_EQ(zero.satisfaction, 0.5);
  int steps = 0;
  for (int i = 0; i < 2000 && steps < 200; ++i) {
    HiddenState cur = initial_state(*w, rng);
    for (std::size_t a = 0; a < w->num_docs(); ++a) {
      auto out = env_step(cur, a, *w, rng);
      if (!out.next) {
        break;
      }
      EXPECT_DOUBLE_EQ(out.next->satisfaction, sigmoid(0.5 * out.next->interest));
      EXPECT_GT(out.reward, 0.0);
      EXPECT_EQ(out.next->doc, w->documents[a].relevance);
      cur = *out.next;
      ++steps;
    }
  }
  EXPECT_GT(steps, 0);
  EXPECT_THROW((void)env_step(s, w->num_docs(), *w, rng), ValidationError);
}

TEST(Policy, ProbabilitiesFormADistribution) {
  const auto w = small_world();
  const auto pi = LinearPolicy::random(w, 4, 2.0, 0.5);
  std::mt19937_64 rng{5};
  for (int i = 0; i < 20; ++i) {
    const auto obs = observe(initial_state(*w, rng));
    const Vector p = pi.probs(obs);
    double s = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      EXPECT_GT(p[a], 0.0);
      EXPECT_NEAR(p[a], pi.prob(obs, a), 1e-15);
      s += p[a];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Policy, UniformScoresFollowBitCounts) {
  const auto w = small_world();
  const LinearPolicy pi(w, Matrix(w->num_topics(), LinearPolicy::feature_dim(*w)));
  std::mt19937_64 rng{6};
  const auto obs = observe(initial_state(*w, rng));
  double total_bits = 0.0;
  for (const auto& d : w->documents) {
    for (double r : d.relevance) {
      total_bits += r;
    }
  }
  for (std::size_t a = 0; a < w->num_docs(); ++a) {
    double bits = 0.0;
    for (double r : w->documents[a].relevance) {
      bits += r;
    }
    EXPECT_NEAR(pi.prob(obs, a), bits / total_bits, 1e-12);
  }
}

TEST(Policy, IdenticalDocumentsEqualProbability) {
  Vector doc(5, 0.0);
  doc[0] = doc[3] = 1.0;
  Vector other(5, 0.0);
  other[1] = 1.0;
  auto w = std::make_shared<const TopicWorld>(hand_world({doc, other, doc}, Vector(5, 0.1)));
  const auto pi = LinearPolicy::random(w, 7);
  HiddenState s;
  s.doc.assign(5, 1.0);
  const auto obs = observe(s);
  EXPECT_DOUBLE_EQ(pi.prob(obs, 0), pi.prob(obs, 2));
}

TEST(Policy, BadShapeRejected) {
  const auto w = small_world();
  EXPECT_THROW(LinearPolicy(w, Matrix(2, 2)), ConfigError);
  EXPECT_THROW(LinearPolicy(w, Matrix(w->num_topics(), LinearPolicy::feature_dim(*w)), 0.0), ConfigError);
}

TEST(Sampler, SingleDocumentAlwaysZero) {
  Vector doc(3, 0.0);
  doc[1] = 1.0;
  const auto w = hand_world({doc}, Vector(3, 0.2));
  const Vector y{0.3, 0.5, 0.9};
  for (double c : {0.0, 0.25, 0.999999}) {
    EXPECT_EQ(sample_from_scores(w, y, c), 0u);
  }
}

TEST(Sampler, BinarySearchMatchesLinearScan) {
  const auto w = small_world(11);
  std::mt19937_64 rng{12};
  std::uniform_real_distribution<double> u;
  Vector y(w->num_topics());
  for (int i = 0; i < 10000; ++i) {
    if (i % 100 == 0) {
      for (auto& v : y) {
        v = 1e-3 + u(rng);
      }
    }
    const double c = u(rng);
    ASSERT_EQ(sample_from_scores(*w, y, c), sample_linear_scan(*w, y, c)) << i;
  }
}

TEST(Sampler, ChiSquaredGoodnessOfFit) {
  RecsimConfig cfg;
  cfg.num_docs = 50;
  auto w = std::make_shared<const TopicWorld>(generate_world(13, cfg));
  const auto pi = LinearPolicy::random(w, 14);
  std::mt19937_64 rng{15};
  const auto obs = observe(initial_state(*w, rng));
  const Vector p = pi.probs(obs);
  std::vector<double> counts(50, 0.0);
  const std::size_t n = 1000000;
  for (std::size_t i = 0; i < n; ++i) {
    counts[sample_action(pi, obs, rng)] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t a = 0; a < 50; ++a) {
    const double e = p[a] * static_cast<double>(n);
    chi2 += (counts[a] - e) * (counts[a] - e) / e;
  }
  // 0.999 quantile with 49 degrees of freedom
  EXPECT_LT(chi2, 85.35);
}

TEST(Policy, GradientMatchesFiniteDifferences) {
  const auto w = small_world(16);
  auto pi = LinearPolicy::random(w, 17, 0.5, 2.0);
  std::mt19937_64 rng{18};
  std::uniform_int_distribution<std::size_t> act{0, w->num_docs() - 1};
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    HiddenState s = initial_state(*w, rng);
    if (trial % 2 == 1) {
      const std::size_t last = act(rng);
      s.doc = w->documents[last].relevance;
      s.last_doc = static_cast<long>(last);
    }
    const auto obs = observe(s);
    const std::size_t a = act(rng);
    const Matrix g = pi.grad_log_prob(obs, a);
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        const double keep = pi.params()(r, c);
        pi.params()(r, c) = keep + h;
        const double up = std::log(pi.prob(obs, a));
        pi.params()(r, c) = keep - h;
        const double down = std::log(pi.prob(obs, a));
        pi.params()(r, c) = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g(r, c)));
        scale = std::max(scale, std::abs(fd));
      }
    }
    EXPECT_LE(worst, 1e-5 * std::max(scale, 1.0)) << trial;
  }
}

TEST(Reinforce, ZeroLearningRateKeepsParameters) {
  const auto w = small_world();
  const auto pi = LinearPolicy::random(w, 19);
  ReinforceConfig cfg;
  cfg.episodes = 50;
  cfg.lr = 0.0;
  EXPECT_EQ(reinforce_train(pi, cfg, 20).params(), pi.params());
  cfg.lr = -1.0;
  EXPECT_THROW((void)reinforce_train(pi, cfg, 20), ConfigError);
}

TEST(Reinforce, TrainingImprovesReturn) {
  const auto w = std::make_shared<const TopicWorld>(generate_world(21));
  const auto pi = LinearPolicy::random(w, 22);
  ReinforceConfig cfg;
  cfg.episodes = 3000;
  cfg.lr = 0.1;
  const auto trained = reinforce_train(pi, cfg, 23);
  const auto before = on_policy_value(pi, 5000, 24, 0.9);
  const auto after = on_policy_value(trained, 5000, 24, 0.9);
  EXPECT_GT(after.mean - before.mean, 3.0 * std::hypot(before.se, after.se));
}

TEST(Rollouts, DeterministicAndPositive) {
  const auto w = small_world();
  const auto pi = LinearPolicy::random(w, 25);
  const auto a = collect(pi, 200, 26, "x");
  const auto b = collect(pi, 200, 26, "x");
  EXPECT_EQ(a.trajectories, b.trajectories);
  EXPECT_EQ(a.policy_id, "x");
  const auto other = LinearPolicy::random(w, 27, 3.0, 0.5);
  for (const auto& t : a.trajectories) {
    EXPECT_GE(t.length(), 1u);
    EXPECT_LE(t.length(), w->config.max_len);
    for (const auto& s : t.steps) {
      EXPECT_GT(s.behavior_prob, 0.0);
      EXPECT_GT(other.prob(s.obs, s.action), 0.0);
    }
  }
  EXPECT_TRUE(collect(pi, 0, 1).trajectories.empty());
}

TEST(Rollouts, ShortEpisodesDominate) {
  const auto w = std::make_shared<const TopicWorld>(generate_world(28));
  const auto pi = LinearPolicy::random(w, 29);
  const auto ds = collect(pi, 5000, 30);
  std::vector<double> hist(w->config.max_len + 1, 0.0);
  for (const auto& t : ds.trajectories) {
    hist[t.length()] += 1.0;
  }
  double short_mass = 0.0;
  for (std::size_t l = 1; l <= w->config.max_len / 2; ++l) {
    short_mass += hist[l];
  }
  EXPECT_GT(short_mass / 5000.0, 0.5);
  // decreasing over the lengths that carry most of the mass
  for (std::size_t l = 1; l < 4; ++l) {
    EXPECT_GE(hist[l], hist[l + 1]) << l;
  }
}

TEST(Rollouts, DiscountedReturn) {
  Trajectory t;
  for (double r : {1.0, 2.0, 4.0}) {
    t.steps.push_back({Observation{}, 0, r, 1.0});
  }
  EXPECT_DOUBLE_EQ(discounted_return(t, 0.5), 3.0);
}

TEST(DmModel, FittedValueIsConsistent) {
  const auto w = small_world(31);
  const auto behavior = LinearPolicy::random(w, 32);
  const auto target = LinearPolicy::random(w, 33);
  const auto data = collect(behavior, 2000, 34);
  const auto model = fit_recsim_model(*w, data.trajectories);
  const auto qv = recsim_qv(*w, model, target, 0.9, 20);
  std::mt19937_64 rng{35};
  for (int i = 0; i < 10; ++i) {
    const auto obs = observe(initial_state(*w, rng));
    const Vector p = target.probs(obs);
    double v = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      v += p[a] * qv.q(obs, a);
    }
    EXPECT_NEAR(qv.v(obs), v, 1e-8);
  }
  // the fitted model should predict on-policy value to within a loose margin
  std::vector<Observation> init;
  for (int i = 0; i < 2000; ++i) {
    init.push_back(observe(initial_state(*w, rng)));
  }
  const double dm = dm_value(qv, init);
  const auto truth = on_policy_value(target, 20000, 36, 0.9);
  EXPECT_NEAR(dm, truth.mean, 0.25 * std::abs(truth.mean) + 0.05);
}

}  // namespace
}  // namespace opemix
