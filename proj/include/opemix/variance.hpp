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

#ifndef OPEMIX_VARIANCE_HPP
#define OPEMIX_VARIANCE_HPP

#include <opemix/estimators.hpp>
#include <opemix/io.hpp>
#include <opemix/linalg.hpp>

#include <nlohmann/json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

/**
 * \file
 * \brief Variance and covariance estimates of per-policy estimator components.
 *
 * All returned quantities estimate Var[V̂] of the component itself (already divided by n), using
 * population moments. Plain averages use direct sample moments; self-normalized ratios use the
 * first-order Delta Method.
 */

namespace opemix {

/// Var of the mean of `totals`: population variance divided by n.
[[nodiscard]] inline double sample_var(std::span<const double> totals) {
  if (totals.size() < 2) {
    throw ValidationError("variance needs at least 2 samples");
  }
  const double n = static_cast<double>(totals.size());
  double s = 0.0;
  double s2 = 0.0;
  for (double x : totals) {
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  return std::max(s2 / n - mean * mean, 0.0) / n;
}

/// Cov of the column means t1 and t2 of a per-sample matrix (rows are trajectories).
[[nodiscard]] inline double sample_cov(const Matrix& per_sample, std::size_t t1, std::size_t t2) {
  if (per_sample.rows() < 2) {
    throw ValidationError("covariance needs at least 2 samples");
  }
  if (t1 >= per_sample.cols() || t2 >= per_sample.cols()) {
    throw Error("horizon index out of range");
  }
  const double n = static_cast<double>(per_sample.rows());
  double a = 0.0;
  double b = 0.0;
  double ab = 0.0;
  for (std::size_t j = 0; j < per_sample.rows(); ++j) {
    a += per_sample(j, t1);
    b += per_sample(j, t2);
    ab += per_sample(j, t1) * per_sample(j, t2);
  }
  return (ab / n - (a / n) * (b / n)) / n;
}

/// (1/n) gᵀ Σ g.
[[nodiscard]] inline double delta_method_variance(std::span<const double> gradient, const Matrix& sigma,
                                                  std::size_t n) {
  if (!sigma.square() || sigma.rows() != gradient.size()) {
    throw Error("gradient and covariance dimensions differ");
  }
  if (n == 0) {
    throw Error("sample count must be positive");
  }
  return dot(gradient, sigma * gradient) / static_cast<double>(n);
}

/// Self-normalized plug-in means used by the closed-form split-weighted variance formulas.
/**
 * With u_t the per-policy normalized weights:
 * theta_t = sum_j u_t γ^t r (IS-family weights), nu_t = sum_j u_t γ^t (r - Q̂),
 * omega_t = sum_j u_{t-1} γ^t V̂, phi_t = sum_j u_{t-1} γ^t V̂, psi_t = sum_j u_t γ^t Q̂,
 * the last four with DR-family weights.
 */
struct DeltaPlugins {
  Vector theta;
  Vector theta_dr;
  Vector nu;
  Vector omega;
  Vector phi;
  Vector psi;
};

namespace detail {

inline Matrix normalized_weights(const Matrix& rho) {
  Matrix u(rho.rows(), rho.cols());
  for (std::size_t t = 0; t < rho.cols(); ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < rho.rows(); ++j) {
      s += rho(j, t);
    }
    if (!(s != 0.0) || !std::isfinite(s)) {
      throw DegenerateError("importance weights sum to zero at t=" + std::to_string(t));
    }
    for (std::size_t j = 0; j < rho.rows(); ++j) {
      u(j, t) = rho(j, t) / s;
    }
  }
  return u;
}

struct Weights {
  Matrix u_is;    // from rho
  Matrix u_dr;    // from rho_dr
  Matrix u_prev;  // from rho_prev
};

inline Weights weights_of(const SampleTable& tb) {
  return {normalized_weights(*tb.rho), normalized_weights(*tb.rho_dr), normalized_weights(*tb.rho_prev)};
}

inline Vector weighted_mean(const Matrix& u, const Matrix& x) {
  Vector out(u.cols(), 0.0);
  for (std::size_t j = 0; j < u.rows(); ++j) {
    for (std::size_t t = 0; t < u.cols(); ++t) {
      out[t] += u(j, t) * x(j, t);
    }
  }
  return out;
}

// Per-sample residual columns of the closed forms.
inline Matrix swis_residual(const Matrix& u, const Matrix& reward, const Vector& theta) {
  Matrix e(u.rows(), u.cols());
  for (std::size_t j = 0; j < u.rows(); ++j) {
    for (std::size_t t = 0; t < u.cols(); ++t) {
      e(j, t) = u(j, t) * (reward(j, t) - theta[t]);
    }
  }
  return e;
}

inline Matrix swdr_residual(const SampleTable& tb, const Weights& w, const DeltaPlugins& p) {
  Matrix e(tb.n, tb.width);
  for (std::size_t j = 0; j < tb.n; ++j) {
    for (std::size_t t = 0; t < tb.width; ++t) {
      e(j, t) = w.u_dr(j, t) * ((*tb.reward)(j, t) - (*tb.q)(j, t) - p.nu[t]) +
                w.u_prev(j, t) * ((*tb.v)(j, t) - p.omega[t]);
    }
  }
  return e;
}

inline Matrix control_residual(const SampleTable& tb, const Weights& w, const DeltaPlugins& p) {
  Matrix e(tb.n, tb.width);
  for (std::size_t j = 0; j < tb.n; ++j) {
    for (std::size_t t = 0; t < tb.width; ++t) {
      e(j, t) = w.u_prev(j, t) * ((*tb.v)(j, t) - p.phi[t]) - w.u_dr(j, t) * ((*tb.q)(j, t) - p.psi[t]);
    }
  }
  return e;
}

inline double column_product(const Matrix& a, std::size_t t1, const Matrix& b, std::size_t t2) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.rows(); ++j) {
    s += a(j, t1) * b(j, t2);
  }
  return s;
}

inline double row_total_square(const Matrix& e) {
  double s = 0.0;
  for (std::size_t j = 0; j < e.rows(); ++j) {
    double row = 0.0;
    for (std::size_t t = 0; t < e.cols(); ++t) {
      row += e(j, t);
    }
    s += row * row;
  }
  return s;
}

}  // namespace detail

[[nodiscard]] inline DeltaPlugins delta_plugins(const SampleTable& tb) {
  const auto w = detail::weights_of(tb);
  DeltaPlugins p;
  p.theta = detail::weighted_mean(w.u_is, *tb.reward);
  p.theta_dr = detail::weighted_mean(w.u_dr, *tb.reward);
  p.nu = detail::weighted_mean(w.u_dr, *tb.reward - *tb.q);
  p.omega = detail::weighted_mean(w.u_prev, *tb.v);
  p.phi = p.omega;
  p.psi = detail::weighted_mean(w.u_dr, *tb.q);
  return p;
}

/// Var of the split-weighted IS value: sum_j (sum_t u_t (γ^t r - theta_t))^2.
[[nodiscard]] inline double delta_var_swis(const SampleTable& tb, const DeltaPlugins& p) {
  const auto w = detail::weights_of(tb);
  return detail::row_total_square(detail::swis_residual(w.u_is, *tb.reward, p.theta));
}

[[nodiscard]] inline double delta_cov_swis(const SampleTable& tb, std::size_t t1, std::size_t t2,
                                           const DeltaPlugins& p) {
  const auto w = detail::weights_of(tb);
  const Matrix e = detail::swis_residual(w.u_is, *tb.reward, p.theta);
  return detail::column_product(e, t1, e, t2);
}

[[nodiscard]] inline double delta_var_swdr(const SampleTable& tb, const DeltaPlugins& p) {
  const auto w = detail::weights_of(tb);
  return detail::row_total_square(detail::swdr_residual(tb, w, p));
}

[[nodiscard]] inline double delta_cov_swdr(const SampleTable& tb, std::size_t t1, std::size_t t2,
                                           const DeltaPlugins& p) {
  const auto w = detail::weights_of(tb);
  const Matrix e = detail::swdr_residual(tb, w, p);
  return detail::column_product(e, t1, e, t2);
}

/// Cov between the reward part of split-weighted DR at t1 and its control variate at t2.
/// The reward part is normalized with the DR-family weights it is computed with.
[[nodiscard]] inline double delta_cov_swis_w(const SampleTable& tb, std::size_t t1, std::size_t t2,
                                             const DeltaPlugins& p) {
  const auto w = detail::weights_of(tb);
  const Matrix a = detail::swis_residual(w.u_dr, *tb.reward, p.theta_dr);
  const Matrix b = detail::control_residual(tb, w, p);
  return detail::column_product(a, t1, b, t2);
}

[[nodiscard]] inline double delta_cov_w_w(const SampleTable& tb, std::size_t t1, std::size_t t2,
                                          const DeltaPlugins& p) {
  const auto w = detail::weights_of(tb);
  const Matrix b = detail::control_residual(tb, w, p);
  return detail::column_product(b, t1, b, t2);
}

/// Var of a component's whole value (sum over every horizon), through its influence.
[[nodiscard]] inline double total_variance(const ComponentEstimate& c) {
  if (c.n < 2) {
    throw ValidationError("variance needs at least 2 samples");
  }
  return detail::row_total_square(c.value_series.influence());
}

/// Covariance of per-horizon components, restricted to the kept coordinates.
struct CovarianceEstimate {
  Matrix sigma;
  /// Trajectories behind the estimate.
  std::size_t n = 0;
  /// Entries estimate Var[V̂] (divided by n) rather than n·Var.
  bool scaled = true;
  /// Coordinates before dropping: T_mix+1, or 2(T_mix+1) with control variates.
  std::size_t full_dim = 0;
  /// kept position -> original coordinate.
  std::vector<std::size_t> index;
  /// Per original coordinate: no spread across trajectories.
  std::vector<bool> constant;

  /// Same estimate for a sample of `n_target` trajectories (Var scales as 1/n).
  [[nodiscard]] CovarianceEstimate rescaled(std::size_t n_target) const {
    CovarianceEstimate out = *this;
    out.sigma *= static_cast<double>(n) / static_cast<double>(n_target);
    out.n = n_target;
    return out;
  }
};

inline nlohmann::json to_json(const CovarianceEstimate& c) {
  return {{"matrix", to_json(c.sigma)}, {"n", c.n},           {"scaled", c.scaled},
          {"full_dim", c.full_dim},     {"index", c.index},   {"constant", c.constant}};
}

inline CovarianceEstimate covariance_from_json(const nlohmann::json& j) {
  CovarianceEstimate c;
  c.sigma = matrix_from_json(j.at("matrix"));
  c.n = j.at("n").get<std::size_t>();
  c.scaled = j.at("scaled").get<bool>();
  c.full_dim = j.at("full_dim").get<std::size_t>();
  c.index = j.at("index").get<std::vector<std::size_t>>();
  c.constant = j.at("constant").get<std::vector<bool>>();
  return c;
}

struct CovOptions {
  /// Permit covariance estimates on the value half (ablations only).
  bool allow_reuse = false;
  /// Coordinates to drop; the component's own constant flags when empty.
  std::optional<std::vector<bool>> drop;
};

/// Covariance of [V̂_0..V̂_T] or, with controls, of [V̂_0..V̂_T, Ŵ_0..Ŵ_T] where V̂ is the reward part.
[[nodiscard]] inline CovarianceEstimate assemble_cov(const ComponentEstimate& c, std::size_t t_mix,
                                                     bool with_controls, const CovOptions& opt = {}) {
  if (c.role == DataRole::kValueHalf && !opt.allow_reuse) {
    throw Error("covariances must come from the variance half of the split");
  }
  if (with_controls && !has_controls(c.family)) {
    throw Error("control variates need a doubly robust family");
  }
  if (c.n < 2) {
    throw ValidationError("covariance needs at least 2 samples");
  }
  if (t_mix >= c.per_t.size()) {
    throw Error("mixing horizon exceeds the data horizon");
  }
  const std::size_t k = t_mix + 1;
  Matrix first = with_controls ? c.is_series.influence() : c.value_series.influence();
  Matrix second;
  CovarianceEstimate out;
  out.n = c.n;
  out.full_dim = with_controls ? 2 * k : k;
  out.constant.assign(out.full_dim, false);
  const auto& flags_a = with_controls ? c.is_constant : c.constant;
  for (std::size_t t = 0; t < k; ++t) {
    out.constant[t] = flags_a[t];
    if (with_controls) {
      out.constant[k + t] = c.control_constant[t];
    }
  }
  if (with_controls) {
    second = c.control_series.influence();
  }
  const std::vector<bool>& drop = opt.drop ? *opt.drop : out.constant;
  if (drop.size() != out.full_dim) {
    throw Error("drop mask has the wrong size");
  }
  for (std::size_t d = 0; d < out.full_dim; ++d) {
    if (!drop[d]) {
      out.index.push_back(d);
    }
  }
  if (out.index.empty()) {
    throw DegenerateError("every mixing coordinate is constant");
  }
  auto column = [&](std::size_t d, std::size_t j) { return d < k ? first(j, d) : second(j, d - k); };
  const std::size_t m = out.index.size();
  out.sigma = Matrix(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a; b < m; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < c.n; ++j) {
        s += column(out.index[a], j) * column(out.index[b], j);
      }
      out.sigma(a, b) = s;
      out.sigma(b, a) = s;
    }
  }
  return out;
}

}  // namespace opemix

#endif  // OPEMIX_VARIANCE_HPP
