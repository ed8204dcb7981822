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

#ifndef OPEMIX_MIXTURE_HPP
#define OPEMIX_MIXTURE_HPP

#include <opemix/core.hpp>
#include <opemix/estimators.hpp>
#include <opemix/io.hpp>
#include <opemix/linalg.hpp>
#include <opemix/variance.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

/**
 * \file
 * \brief Variance-minimizing mixtures of per-policy estimators.
 *
 * Three weightings: one weight per policy (inverse variance), one weight per policy and horizon
 * (covariance across horizons), and per-horizon weights plus control-variate coefficients from the
 * precision matrix of the joint [value, control] covariance. Weights come from one half of each
 * policy's data and values from the other half.
 */

namespace opemix {

enum class MixMethod { kNaive, kHorizon, kAlphaBeta };

[[nodiscard]] inline std::string_view to_string(MixMethod m) noexcept {
  switch (m) {
    case MixMethod::kNaive:
      return "naive";
    case MixMethod::kHorizon:
      return "horizon";
    case MixMethod::kAlphaBeta:
      return "alphabeta";
  }
  return "?";
}

struct MixtureWeights {
  MixMethod method = MixMethod::kNaive;
  /// M x (t_mix+1); a single column for the naive mixture.
  Matrix alpha;
  /// Control-variate coefficients, same shape as alpha.
  std::optional<Matrix> beta;
  std::size_t t_mix = 0;
  /// Variance predicted for the mixture (naive only): 1 / sum_i 1/V_i.
  double predicted_variance = std::numeric_limits<double>::quiet_NaN();
  /// Condition number of each per-policy matrix that was inverted (after regularization).
  std::vector<double> condition_numbers;
  /// Condition number of the summed precision matrix.
  double aggregate_condition = std::numeric_limits<double>::quiet_NaN();

  [[nodiscard]] std::size_t num_policies() const noexcept { return alpha.rows(); }

  [[nodiscard]] bool has_negative() const noexcept {
    for (double a : alpha.data()) {
      if (a < 0.0) {
        return true;
      }
    }
    return false;
  }
};

struct MixtureEstimate {
  double value = 0.0;
  MixtureWeights weights;
  /// Unmixed contribution of horizons beyond t_mix.
  double residual_value = 0.0;
  std::uint64_t split_seed = 0;
};

inline nlohmann::json to_json(const MixtureWeights& w) {
  nlohmann::json j{{"method", to_string(w.method)},
                   {"alpha", to_json(w.alpha)},
                   {"t_mix", w.t_mix},
                   {"condition_numbers", w.condition_numbers},
                   {"negative_weights", w.has_negative()}};
  j["beta"] = w.beta ? to_json(*w.beta) : nlohmann::json(nullptr);
  j["predicted_variance"] = std::isfinite(w.predicted_variance) ? nlohmann::json(w.predicted_variance) : nlohmann::json(nullptr);
  j["aggregate_condition"] =
      std::isfinite(w.aggregate_condition) ? nlohmann::json(w.aggregate_condition) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const MixtureEstimate& e) {
  return {{"value", e.value},
          {"weights", to_json(e.weights)},
          {"residual_value", e.residual_value},
          {"split_seed", e.split_seed}};
}

/// Inverse-variance weights over independent unbiased estimators.
[[nodiscard]] inline MixtureWeights naive_weights(std::span<const double> variances) {
  if (variances.empty()) {
    throw ValidationError("no estimators to mix");
  }
  double total = 0.0;
  for (double v : variances) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("variances must be positive and finite");
    }
    total += 1.0 / v;
  }
  MixtureWeights w;
  w.method = MixMethod::kNaive;
  w.alpha = Matrix(variances.size(), 1);
  for (std::size_t i = 0; i < variances.size(); ++i) {
    w.alpha(i, 0) = (1.0 / variances[i]) / total;
  }
  w.predicted_variance = 1.0 / total;
  return w;
}

namespace detail {

inline void check_shared_index(std::span<const CovarianceEstimate> covs) {
  if (covs.empty()) {
    throw ValidationError("no estimators to mix");
  }
  for (const auto& c : covs) {
    if (c.full_dim != covs.front().full_dim || c.index != covs.front().index) {
      throw Error("covariance estimates disagree on their coordinates");
    }
    if (c.sigma.rows() != c.index.size() || !c.sigma.square()) {
      throw Error("covariance matrix does not match its index map");
    }
  }
}

inline Matrix prepared(const Matrix& sigma, double eps) { return regularize(symmetrize(sigma), eps); }

}  // namespace detail

/// Per-horizon weights alpha_i = S_i^{-1} (sum_k S_k^{-1})^{-1} e.
/**
 * Coordinates missing from the shared index map get weight 1/M.
 */
[[nodiscard]] inline MixtureWeights horizon_weights(std::span<const CovarianceEstimate> covs, double eps = 1e-8) {
  detail::check_shared_index(covs);
  const std::size_t m = covs.size();
  const std::size_t full = covs.front().full_dim;
  const auto& index = covs.front().index;
  const std::size_t k = index.size();

  MixtureWeights w;
  w.method = MixMethod::kHorizon;
  w.t_mix = full - 1;
  w.alpha = Matrix(m, full, 1.0 / static_cast<double>(m));
  if (k == 0) {
    return w;
  }
  std::vector<Matrix> inverses;
  Matrix sum(k, k);
  for (const auto& c : covs) {
    const Matrix a = detail::prepared(c.sigma, eps);
    w.condition_numbers.push_back(condition_number(a));
    inverses.push_back(spd_inverse(a));
    sum += inverses.back();
  }
  const Matrix agg = symmetrize(sum);
  w.aggregate_condition = condition_number(agg);
  const Vector x = spd_solve(agg, Vector(k, 1.0));
  for (std::size_t i = 0; i < m; ++i) {
    const Vector a = inverses[i] * std::span<const double>{x};
    for (std::size_t p = 0; p < k; ++p) {
      w.alpha(i, index[p]) = a[p];
    }
  }
  return w;
}

/// Keeps the value-block part of a joint [value, control] covariance estimate.
[[nodiscard]] inline CovarianceEstimate value_block(const CovarianceEstimate& joint) {
  const std::size_t k = joint.full_dim / 2;
  CovarianceEstimate out;
  out.n = joint.n;
  out.scaled = joint.scaled;
  out.full_dim = k;
  out.constant.assign(joint.constant.begin(), joint.constant.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> pos;
  for (std::size_t p = 0; p < joint.index.size(); ++p) {
    if (joint.index[p] < k) {
      out.index.push_back(joint.index[p]);
      pos.push_back(p);
    }
  }
  out.sigma = Matrix(pos.size(), pos.size());
  for (std::size_t a = 0; a < pos.size(); ++a) {
    for (std::size_t b = 0; b < pos.size(); ++b) {
      out.sigma(a, b) = joint.sigma(pos[a], pos[b]);
    }
  }
  return out;
}

/// Weights from the precision blocks of each joint matrix:
/// alpha_i = H_i11 (sum_k H_k11)^{-1} e, beta_i = H_i21 (sum_k H_k11)^{-1} e.
/**
 * Dropped value coordinates get alpha = 1/M, dropped control coordinates get beta = 0.
 */
[[nodiscard]] inline MixtureWeights alphabeta_weights(std::span<const CovarianceEstimate> joints, double eps = 1e-8) {
  detail::check_shared_index(joints);
  const std::size_t m = joints.size();
  const std::size_t full = joints.front().full_dim;
  if (full % 2 != 0) {
    throw Error("joint covariance must have an even number of coordinates");
  }
  const std::size_t k = full / 2;
  const auto& index = joints.front().index;
  std::vector<std::size_t> vpos;
  std::vector<std::size_t> cpos;
  for (std::size_t p = 0; p < index.size(); ++p) {
    (index[p] < k ? vpos : cpos).push_back(p);
  }

  MixtureWeights w;
  w.method = MixMethod::kAlphaBeta;
  w.t_mix = k - 1;
  w.alpha = Matrix(m, k, 1.0 / static_cast<double>(m));
  w.beta = Matrix(m, k, 0.0);
  if (vpos.empty()) {
    return w;
  }
  std::vector<Matrix> h11s;
  std::vector<Matrix> h21s;
  Matrix sum(vpos.size(), vpos.size());
  for (const auto& j : joints) {
    const Matrix a = detail::prepared(j.sigma, eps);
    w.condition_numbers.push_back(condition_number(a));
    const Matrix h = spd_inverse(a);
    Matrix h11(vpos.size(), vpos.size());
    Matrix h21(cpos.size(), vpos.size());
    for (std::size_t c = 0; c < vpos.size(); ++c) {
      for (std::size_t r = 0; r < vpos.size(); ++r) {
        h11(r, c) = h(vpos[r], vpos[c]);
      }
      for (std::size_t r = 0; r < cpos.size(); ++r) {
        h21(r, c) = h(cpos[r], vpos[c]);
      }
    }
    sum += h11;
    h11s.push_back(std::move(h11));
    h21s.push_back(std::move(h21));
  }
  const Matrix agg = symmetrize(sum);
  w.aggregate_condition = condition_number(agg);
  const Vector x = spd_solve(agg, Vector(vpos.size(), 1.0));
  for (std::size_t i = 0; i < m; ++i) {
    const Vector a = h11s[i] * std::span<const double>{x};
    for (std::size_t p = 0; p < vpos.size(); ++p) {
      w.alpha(i, index[vpos[p]]) = a[p];
    }
    if (!cpos.empty()) {
      const Vector b = h21s[i] * std::span<const double>{x};
      for (std::size_t p = 0; p < cpos.size(); ++p) {
        (*w.beta)(i, index[cpos[p]] - k) = b[p];
      }
    }
  }
  return w;
}

/// Per-policy sample tables of the two halves of every behavior dataset.
struct SplitTables {
  std::vector<SampleTable> variance_half;
  std::vector<SampleTable> value_half;
  std::uint64_t seed = 0;
};

/// Splits every policy's data with the shared seed and tabulates both halves on a common width.
template <TargetPolicy P, ValueModel M = ZeroModel>
[[nodiscard]] SplitTables split_tables(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                       std::optional<double> clip, std::uint64_t seed, const M& model = {}) {
  if (ds.datasets.empty()) {
    throw ValidationError("no behavior datasets");
  }
  const std::size_t width = dc.horizon ? *dc.horizon + 1 : ds.horizon_max() + 1;
  SplitTables out;
  out.seed = seed;
  for (const auto& d : ds.datasets) {
    if (d.n() < 4) {
      throw ValidationError("policy '" + d.policy_id + "' needs at least 4 trajectories to split");
    }
    auto [var_half, value_half] = half_split(d, seed);
    out.variance_half.push_back(tabulate(var_half, target, dc, clip, model, width));
    out.value_half.push_back(tabulate(value_half, target, dc, clip, model, width));
  }
  return out;
}

struct MixOptions {
  double eps = 1e-8;
  /// Fix beta at 0 in the alpha-beta mixture (alpha then mixes the reward parts only).
  bool force_zero_beta = false;
};

namespace detail {

inline void check_tables(const SplitTables& s) {
  if (s.variance_half.empty() || s.variance_half.size() != s.value_half.size()) {
    throw ValidationError("split tables are empty or unbalanced");
  }
}

inline std::vector<ComponentEstimate> components_of(const std::vector<SampleTable>& tables, Family f, DataRole role) {
  std::vector<ComponentEstimate> out;
  out.reserve(tables.size());
  for (const auto& tb : tables) {
    out.push_back(components(tb, f, role));
  }
  return out;
}

inline double total_n(const std::vector<ComponentEstimate>& cs) {
  double n = 0.0;
  for (const auto& c : cs) {
    n += static_cast<double>(c.n);
  }
  return n;
}

// Coordinates constant for every policy.
inline std::vector<bool> common_constant(const std::vector<std::vector<bool>>& flags) {
  std::vector<bool> out(flags.front().size(), true);
  for (const auto& f : flags) {
    for (std::size_t d = 0; d < out.size(); ++d) {
      out[d] = out[d] && f[d];
    }
  }
  return out;
}

inline double residual(const std::vector<ComponentEstimate>& values, std::size_t t_mix) {
  const double big_n = total_n(values);
  double r = 0.0;
  for (const auto& c : values) {
    double tail = 0.0;
    for (std::size_t t = t_mix + 1; t < c.per_t.size(); ++t) {
      tail += c.per_t[t];
    }
    r += static_cast<double>(c.n) / big_n * tail;
  }
  return r;
}

}  // namespace detail

/// One inverse-variance weight per policy.
[[nodiscard]] inline MixtureEstimate mix_naive(const SplitTables& s, Family family, const MixOptions& opt = {}) {
  detail::check_tables(s);
  const auto var = detail::components_of(s.variance_half, family, DataRole::kVarianceHalf);
  const auto val = detail::components_of(s.value_half, family, DataRole::kValueHalf);
  std::vector<double> v;
  double mean = 0.0;
  for (std::size_t i = 0; i < var.size(); ++i) {
    v.push_back(total_variance(var[i]) * static_cast<double>(var[i].n) / static_cast<double>(val[i].n));
    mean += v.back() / static_cast<double>(var.size());
  }
  MixtureEstimate out;
  out.split_seed = s.seed;
  if (!(mean > 0.0)) {
    out.weights.method = MixMethod::kNaive;
    out.weights.alpha = Matrix(var.size(), 1, 1.0 / static_cast<double>(var.size()));
  } else {
    for (auto& x : v) {
      x += opt.eps * mean;
    }
    out.weights = naive_weights(v);
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    out.value += out.weights.alpha(i, 0) * val[i].value;
  }
  return out;
}

/// Per-policy, per-horizon weights for horizons 0..t_mix; later horizons added with weights n_i/N.
[[nodiscard]] inline MixtureEstimate mix_horizon(const SplitTables& s, Family family, std::size_t t_mix,
                                                 const MixOptions& opt = {}) {
  detail::check_tables(s);
  const auto var = detail::components_of(s.variance_half, family, DataRole::kVarianceHalf);
  const auto val = detail::components_of(s.value_half, family, DataRole::kValueHalf);
  if (t_mix >= val.front().per_t.size()) {
    throw Error("mixing horizon exceeds the data horizon");
  }
  std::vector<std::vector<bool>> flags;
  for (const auto& c : var) {
    flags.emplace_back(c.constant.begin(), c.constant.begin() + static_cast<std::ptrdiff_t>(t_mix + 1));
  }
  const auto drop = detail::common_constant(flags);

  MixtureEstimate out;
  out.split_seed = s.seed;
  if (std::find(drop.begin(), drop.end(), false) == drop.end()) {
    out.weights.method = MixMethod::kHorizon;
    out.weights.t_mix = t_mix;
    out.weights.alpha = Matrix(var.size(), t_mix + 1, 1.0 / static_cast<double>(var.size()));
  } else {
    std::vector<CovarianceEstimate> covs;
    for (std::size_t i = 0; i < var.size(); ++i) {
      covs.push_back(assemble_cov(var[i], t_mix, false, {.drop = drop}).rescaled(val[i].n));
    }
    out.weights = horizon_weights(covs, opt.eps);
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    for (std::size_t t = 0; t <= t_mix; ++t) {
      out.value += out.weights.alpha(i, t) * val[i].per_t[t];
    }
  }
  out.residual_value = detail::residual(val, t_mix);
  out.value += out.residual_value;
  return out;
}

/// Per-horizon weights on the reward parts plus free coefficients on the control variates.
[[nodiscard]] inline MixtureEstimate mix_alphabeta(const SplitTables& s, Family family, std::size_t t_mix,
                                                   const MixOptions& opt = {}) {
  if (!has_controls(family)) {
    throw Error("alpha-beta mixture needs a doubly robust family");
  }
  detail::check_tables(s);
  const auto var = detail::components_of(s.variance_half, family, DataRole::kVarianceHalf);
  const auto val = detail::components_of(s.value_half, family, DataRole::kValueHalf);
  if (t_mix >= val.front().per_t.size()) {
    throw Error("mixing horizon exceeds the data horizon");
  }
  const std::size_t k = t_mix + 1;
  std::vector<std::vector<bool>> flags;
  for (const auto& c : var) {
    std::vector<bool> f(2 * k);
    for (std::size_t t = 0; t < k; ++t) {
      f[t] = c.is_constant[t];
      f[k + t] = c.control_constant[t];
    }
    flags.push_back(std::move(f));
  }
  const auto drop = detail::common_constant(flags);

  MixtureEstimate out;
  out.split_seed = s.seed;
  const bool value_all_dropped =
      std::find(drop.begin(), drop.begin() + static_cast<std::ptrdiff_t>(k), false) == drop.begin() + k;
  if (value_all_dropped) {
    out.weights.method = MixMethod::kAlphaBeta;
    out.weights.t_mix = t_mix;
    out.weights.alpha = Matrix(var.size(), k, 1.0 / static_cast<double>(var.size()));
    out.weights.beta = Matrix(var.size(), k, 0.0);
  } else {
    std::vector<CovarianceEstimate> joints;
    for (std::size_t i = 0; i < var.size(); ++i) {
      joints.push_back(assemble_cov(var[i], t_mix, true, {.drop = drop}).rescaled(val[i].n));
    }
    if (opt.force_zero_beta) {
      std::vector<CovarianceEstimate> blocks;
      for (const auto& j : joints) {
        blocks.push_back(value_block(j));
      }
      out.weights = horizon_weights(blocks, opt.eps);
      out.weights.method = MixMethod::kAlphaBeta;
      out.weights.beta = Matrix(var.size(), k, 0.0);
    } else {
      out.weights = alphabeta_weights(joints, opt.eps);
    }
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      out.value += out.weights.alpha(i, t) * val[i].is_per_t[t] + (*out.weights.beta)(i, t) * val[i].control_per_t[t];
    }
  }
  out.residual_value = detail::residual(val, t_mix);
  out.value += out.residual_value;
  return out;
}

}  // namespace opemix

#endif  // OPEMIX_MIXTURE_HPP
