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

#ifndef OPEMIX_ESTIMATORS_HPP
#define OPEMIX_ESTIMATORS_HPP

#include <opemix/core.hpp>
#include <opemix/linalg.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

/**
 * \file
 * \brief Vanilla multi-policy estimators (IS, WIS, SWIS, DR, WDR, SWDR) and their per-policy,
 * per-horizon components.
 *
 * Every per-horizon component is a sum of ratio terms `coef * sum_j num[j,t] / sum_j den[j,t]`,
 * where a missing denominator means a plain average over the n trajectories. The same
 * representation feeds the Delta-Method variance estimators.
 *
 * A trajectory of length L is treated as entering an absorbing zero-reward state: for t >= L
 * its reward, Q̂ and V̂ terms are zero and its ratios stay frozen at rho[L-1].
 */

namespace opemix {

struct DiscountConfig {
  double gamma = 0.9;
  /// Largest step index used; the data's own maximum when empty. Steps beyond it are ignored.
  std::optional<std::size_t> horizon;

  void check() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw ConfigError("discount factor must lie in (0, 1]");
    }
  }
};

/// Per-sample columns of one behavior dataset (n rows, one column per horizon index).
struct SampleTable {
  std::size_t n = 0;
  std::size_t width = 0;
  /// Cumulative (clipped) ratio at t, used by the IS family.
  std::shared_ptr<const Matrix> rho;
  /// Ratio multiplying (r - Q̂) in the DR family: clipped rho[t-1] times the unclipped step ratio.
  std::shared_ptr<const Matrix> rho_dr;
  /// Clipped rho[t-1], with rho[-1] = 1.
  std::shared_ptr<const Matrix> rho_prev;
  /// gamma^t r_t.
  std::shared_ptr<const Matrix> reward;
  /// gamma^t Q̂(s_t, a_t).
  std::shared_ptr<const Matrix> q;
  /// gamma^t V̂(s_t).
  std::shared_ptr<const Matrix> v;
  std::vector<std::size_t> lengths;
};

/// One clipped doubly robust summand:
/// gamma^t (rho_prev * step_ratio * (r - q) + rho_prev * v).
[[nodiscard]] inline double dr_clipped_term(double gamma_t, double rho_prev, double step_ratio, double reward,
                                            double q, double v) noexcept {
  return gamma_t * (rho_prev * step_ratio * (reward - q) + rho_prev * v);
}

/// Builds the per-sample table of one behavior dataset under a target policy and value model.
/**
 * \param width number of horizon columns; 0 picks `dc.horizon + 1` or the dataset's own maximum.
 */
template <TargetPolicy P, ValueModel M = ZeroModel>
[[nodiscard]] SampleTable tabulate(const BehaviorDataset& ds, const P& target, const DiscountConfig& dc,
                                   std::optional<double> clip, const M& model = {}, std::size_t width = 0) {
  dc.check();
  if (ds.n() == 0) {
    throw ValidationError("dataset '" + ds.policy_id + "' is empty");
  }
  if (width == 0) {
    width = dc.horizon ? *dc.horizon + 1 : ds.horizon_max() + 1;
  }
  const std::size_t n = ds.n();
  auto rho = std::make_shared<Matrix>(n, width);
  auto rho_dr = std::make_shared<Matrix>(n, width);
  auto rho_prev = std::make_shared<Matrix>(n, width);
  auto reward = std::make_shared<Matrix>(n, width);
  auto q = std::make_shared<Matrix>(n, width);
  auto v = std::make_shared<Matrix>(n, width);
  SampleTable out;
  out.n = n;
  out.width = width;
  out.lengths.reserve(n);

  for (std::size_t j = 0; j < n; ++j) {
    const Trajectory& traj = ds.trajectories[j];
    if (traj.length() == 0) {
      throw ValidationError("trajectory without steps in dataset '" + ds.policy_id + "'");
    }
    const RatioVector ratios = importance_ratios(traj, target, clip);
    const std::size_t used = std::min(traj.length(), width);
    double discount = 1.0;
    for (std::size_t t = 0; t < width; ++t) {
      if (t < used) {
        const Step& s = traj.steps[t];
        (*rho)(j, t) = ratios.rho[t];
        (*rho_prev)(j, t) = ratios.prev(t);
        (*rho_dr)(j, t) = ratios.prev(t) * ratios.step[t];
        (*reward)(j, t) = discount * s.reward;
        (*q)(j, t) = discount * static_cast<double>(model.q(s.obs, s.action));
        (*v)(j, t) = discount * static_cast<double>(model.v(s.obs));
      } else {
        const double frozen = ratios.rho[used - 1];
        (*rho)(j, t) = frozen;
        (*rho_prev)(j, t) = frozen;
        (*rho_dr)(j, t) = frozen;
      }
      discount *= dc.gamma;
    }
    out.lengths.push_back(used);
  }
  out.rho = std::move(rho);
  out.rho_dr = std::move(rho_dr);
  out.rho_prev = std::move(rho_prev);
  out.reward = std::move(reward);
  out.q = std::move(q);
  out.v = std::move(v);
  return out;
}

/// `coef * sum_j num[j,t] / sum_j den[j,t]`; a null `den` averages over n.
struct RatioTerm {
  Matrix num;
  std::shared_ptr<const Matrix> den;
  double coef = 1.0;
};

/// A per-horizon series of sub-estimators expressed as ratio terms.
class ComponentSeries {
 public:
  ComponentSeries() = default;
  explicit ComponentSeries(std::vector<RatioTerm> terms) : terms_{std::move(terms)} {
    if (terms_.empty()) {
      throw Error("component series needs at least one term");
    }
    for (const auto& t : terms_) {
      if (t.num.rows() != terms_.front().num.rows() || t.num.cols() != terms_.front().num.cols() ||
          (t.den && (t.den->rows() != t.num.rows() || t.den->cols() != t.num.cols()))) {
        throw Error("component series terms disagree on shape");
      }
    }
  }

  [[nodiscard]] const std::vector<RatioTerm>& terms() const noexcept { return terms_; }
  [[nodiscard]] bool empty() const noexcept { return terms_.empty(); }
  [[nodiscard]] std::size_t n() const noexcept { return terms_.empty() ? 0 : terms_.front().num.rows(); }
  [[nodiscard]] std::size_t width() const noexcept { return terms_.empty() ? 0 : terms_.front().num.cols(); }

  /// Value of every per-horizon sub-estimator.
  [[nodiscard]] Vector per_t() const {
    Vector out(width(), 0.0);
    for (const auto& term : terms_) {
      const Vector num = column_sums(term.num);
      const Vector den = denominators(term);
      for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] += term.coef * num[t] / den[t];
      }
    }
    return out;
  }

  /// First-order influence of trajectory j on the sub-estimator at t:
  /// sum over terms of coef * (num[j,t] - theta_t * den[j,t]) / sum_k den[k,t].
  /// The (co)variance estimate of two sub-estimators is the inner product of their columns.
  [[nodiscard]] Matrix influence() const {
    Matrix out(n(), width());
    for (const auto& term : terms_) {
      const Vector num = column_sums(term.num);
      const Vector den = denominators(term);
      for (std::size_t j = 0; j < n(); ++j) {
        for (std::size_t t = 0; t < width(); ++t) {
          const double theta = num[t] / den[t];
          const double dj = term.den ? (*term.den)(j, t) : 1.0;
          out(j, t) += term.coef * (term.num(j, t) - theta * dj) / den[t];
        }
      }
    }
    return out;
  }

  /// Flags horizons whose sub-estimator does not vary across trajectories.
  [[nodiscard]] std::vector<bool> constant_coordinates(const Matrix& influence, double rel_tol = 1e-9) const {
    Vector scale(width(), 0.0);
    for (const auto& term : terms_) {
      const Vector num = column_sums(term.num);
      const Vector den = denominators(term);
      for (std::size_t t = 0; t < width(); ++t) {
        const double theta = num[t] / den[t];
        double m = 0.0;
        for (std::size_t j = 0; j < n(); ++j) {
          const double dj = term.den ? (*term.den)(j, t) : 1.0;
          m = std::max({m, std::abs(term.num(j, t)), std::abs(theta * dj)});
        }
        scale[t] += std::abs(term.coef) * m / std::abs(den[t]);
      }
    }
    std::vector<bool> out(width(), true);
    for (std::size_t t = 0; t < width(); ++t) {
      for (std::size_t j = 0; j < n(); ++j) {
        if (std::abs(influence(j, t)) > rel_tol * scale[t]) {
          out[t] = false;
          break;
        }
      }
    }
    return out;
  }

 private:
  static Vector column_sums(const Matrix& m) {
    Vector s(m.cols(), 0.0);
    for (std::size_t j = 0; j < m.rows(); ++j) {
      for (std::size_t t = 0; t < m.cols(); ++t) {
        s[t] += m(j, t);
      }
    }
    return s;
  }

  static Vector denominators(const RatioTerm& term) {
    if (!term.den) {
      return Vector(term.num.cols(), static_cast<double>(term.num.rows()));
    }
    Vector d = column_sums(*term.den);
    for (std::size_t t = 0; t < d.size(); ++t) {
      if (!(d[t] != 0.0) || !std::isfinite(d[t])) {
        throw DegenerateError("importance weights sum to zero at t=" + std::to_string(t));
      }
    }
    return d;
  }

  std::vector<RatioTerm> terms_;
};

/// Per-policy estimator families that can be split into components.
enum class Family { kIS, kDR, kSWIS, kSWDR };

[[nodiscard]] constexpr bool has_controls(Family f) noexcept { return f == Family::kDR || f == Family::kSWDR; }
[[nodiscard]] constexpr bool self_normalized(Family f) noexcept { return f == Family::kSWIS || f == Family::kSWDR; }

[[nodiscard]] inline std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::kIS:
      return "IS";
    case Family::kDR:
      return "DR";
    case Family::kSWIS:
      return "SWIS";
    case Family::kSWDR:
      return "SWDR";
  }
  return "?";
}

/// Which half of a split dataset produced a component estimate.
enum class DataRole { kUnspecified, kVarianceHalf, kValueHalf };

/// Components V̂_{i,t}, the reward part, and the control variates Ŵ_{i,t} of one behavior policy.
struct ComponentEstimate {
  Family family = Family::kIS;
  std::size_t n = 0;
  DataRole role = DataRole::kUnspecified;
  /// Sum over t of per_t.
  double value = 0.0;
  /// V̂_{i,t}.
  Vector per_t;
  /// Reward part (the IS / SWIS piece); equals per_t outside the DR family.
  Vector is_per_t;
  /// Ŵ_{i,t}; zeros outside the DR family.
  Vector control_per_t;
  std::vector<bool> constant;
  std::vector<bool> is_constant;
  std::vector<bool> control_constant;
  /// Per-sample terms of the three series, as consumed by the variance estimators.
  ComponentSeries value_series;
  ComponentSeries is_series;
  ComponentSeries control_series;
};

namespace detail {

inline Matrix combine(const Matrix& a, double ca, const Matrix& b, double cb) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t j = 0; j < a.rows(); ++j) {
    for (std::size_t t = 0; t < a.cols(); ++t) {
      out(j, t) = ca * a(j, t) + cb * b(j, t);
    }
  }
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t j = 0; j < a.rows(); ++j) {
    for (std::size_t t = 0; t < a.cols(); ++t) {
      out(j, t) = a(j, t) * b(j, t);
    }
  }
  return out;
}

}  // namespace detail

/// Splits one policy's table into per-horizon components for the given family.
[[nodiscard]] inline ComponentEstimate components(const SampleTable& table, Family family,
                                                  DataRole role = DataRole::kUnspecified) {
  using detail::combine;
  using detail::hadamard;
  ComponentEstimate out;
  out.family = family;
  out.n = table.n;
  out.role = role;
  const bool normalized = self_normalized(family);

  if (!has_controls(family)) {
    auto den = normalized ? table.rho : nullptr;
    out.value_series = ComponentSeries{{RatioTerm{hadamard(*table.rho, *table.reward), den, 1.0}}};
    out.is_series = out.value_series;
  } else {
    const Matrix weighted_v = hadamard(*table.rho_prev, *table.v);
    const Matrix weighted_r = hadamard(*table.rho_dr, *table.reward);
    const Matrix weighted_q = hadamard(*table.rho_dr, *table.q);
    if (normalized) {
      out.value_series = ComponentSeries{{RatioTerm{combine(weighted_r, 1.0, weighted_q, -1.0), table.rho_dr, 1.0},
                                          RatioTerm{weighted_v, table.rho_prev, 1.0}}};
      out.is_series = ComponentSeries{{RatioTerm{weighted_r, table.rho_dr, 1.0}}};
      out.control_series = ComponentSeries{
          {RatioTerm{weighted_v, table.rho_prev, 1.0}, RatioTerm{weighted_q, table.rho_dr, -1.0}}};
    } else {
      Matrix summand = combine(weighted_r, 1.0, weighted_q, -1.0);
      summand += weighted_v;
      out.value_series = ComponentSeries{{RatioTerm{std::move(summand), nullptr, 1.0}}};
      out.is_series = ComponentSeries{{RatioTerm{weighted_r, nullptr, 1.0}}};
      out.control_series = ComponentSeries{{RatioTerm{combine(weighted_v, 1.0, weighted_q, -1.0), nullptr, 1.0}}};
    }
  }

  out.per_t = out.value_series.per_t();
  out.is_per_t = out.is_series.per_t();
  out.control_per_t = out.control_series.empty() ? Vector(table.width, 0.0) : out.control_series.per_t();
  for (double x : out.per_t) {
    out.value += x;
  }
  out.constant = out.value_series.constant_coordinates(out.value_series.influence());
  out.is_constant = out.is_series.constant_coordinates(out.is_series.influence());
  out.control_constant = out.control_series.empty()
                             ? std::vector<bool>(table.width, true)
                             : out.control_series.constant_coordinates(out.control_series.influence());
  return out;
}

template <TargetPolicy P>
[[nodiscard]] ComponentEstimate components_is(const BehaviorDataset& ds, const P& target, const DiscountConfig& dc,
                                              std::optional<double> clip) {
  return components(tabulate(ds, target, dc, clip), Family::kIS);
}

template <TargetPolicy P>
[[nodiscard]] ComponentEstimate components_swis(const BehaviorDataset& ds, const P& target,
                                                const DiscountConfig& dc, std::optional<double> clip) {
  return components(tabulate(ds, target, dc, clip), Family::kSWIS);
}

template <TargetPolicy P, ValueModel M>
[[nodiscard]] ComponentEstimate components_dr(const BehaviorDataset& ds, const P& target, const DiscountConfig& dc,
                                              std::optional<double> clip, const M& model) {
  return components(tabulate(ds, target, dc, clip, model), Family::kDR);
}

template <TargetPolicy P, ValueModel M>
[[nodiscard]] ComponentEstimate components_swdr(const BehaviorDataset& ds, const P& target,
                                                const DiscountConfig& dc, std::optional<double> clip,
                                                const M& model) {
  return components(tabulate(ds, target, dc, clip, model), Family::kSWDR);
}

/// The six vanilla estimators over all behavior policies.
enum class Vanilla { kIS, kWIS, kSWIS, kDR, kWDR, kSWDR };

/// Vanilla estimate from per-policy tables sharing one width.
[[nodiscard]] inline double estimate(std::span<const SampleTable> tables, Vanilla method) {
  if (tables.empty()) {
    throw ValidationError("no behavior datasets");
  }
  const std::size_t width = tables.front().width;
  std::size_t total = 0;
  for (const auto& tb : tables) {
    if (tb.width != width) {
      throw Error("sample tables disagree on width");
    }
    total += tb.n;
  }
  const double big_n = static_cast<double>(total);

  switch (method) {
    case Vanilla::kIS:
    case Vanilla::kDR: {
      double sum = 0.0;
      for (const auto& tb : tables) {
        for (std::size_t j = 0; j < tb.n; ++j) {
          for (std::size_t t = 0; t < width; ++t) {
            if (method == Vanilla::kIS) {
              sum += (*tb.rho)(j, t) * (*tb.reward)(j, t);
            } else {
              sum += (*tb.rho_prev)(j, t) * (*tb.v)(j, t) + (*tb.rho_dr)(j, t) * ((*tb.reward)(j, t) - (*tb.q)(j, t));
            }
          }
        }
      }
      return sum / big_n;
    }
    case Vanilla::kWIS:
    case Vanilla::kWDR: {
      Vector num_r(width, 0.0), den_r(width, 0.0), num_v(width, 0.0), den_v(width, 0.0);
      for (const auto& tb : tables) {
        for (std::size_t j = 0; j < tb.n; ++j) {
          for (std::size_t t = 0; t < width; ++t) {
            if (method == Vanilla::kWIS) {
              num_r[t] += (*tb.rho)(j, t) * (*tb.reward)(j, t);
              den_r[t] += (*tb.rho)(j, t);
            } else {
              num_r[t] += (*tb.rho_dr)(j, t) * ((*tb.reward)(j, t) - (*tb.q)(j, t));
              den_r[t] += (*tb.rho_dr)(j, t);
              num_v[t] += (*tb.rho_prev)(j, t) * (*tb.v)(j, t);
              den_v[t] += (*tb.rho_prev)(j, t);
            }
          }
        }
      }
      double value = 0.0;
      for (std::size_t t = 0; t < width; ++t) {
        if (!(den_r[t] != 0.0) || (method == Vanilla::kWDR && !(den_v[t] != 0.0))) {
          throw DegenerateError("importance weights sum to zero at t=" + std::to_string(t));
        }
        value += num_r[t] / den_r[t];
        if (method == Vanilla::kWDR) {
          value += num_v[t] / den_v[t];
        }
      }
      return value;
    }
    case Vanilla::kSWIS:
    case Vanilla::kSWDR: {
      const Family f = method == Vanilla::kSWIS ? Family::kSWIS : Family::kSWDR;
      double value = 0.0;
      for (const auto& tb : tables) {
        value += static_cast<double>(tb.n) / big_n * components(tb, f).value;
      }
      return value;
    }
  }
  return 0.0;
}

namespace detail {

template <TargetPolicy P, ValueModel M>
std::vector<SampleTable> tabulate_all(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                      std::optional<double> clip, const M& model) {
  if (ds.datasets.empty() || ds.total_trajectories() == 0) {
    throw ValidationError("no trajectories");
  }
  const std::size_t width = dc.horizon ? *dc.horizon + 1 : ds.horizon_max() + 1;
  std::vector<SampleTable> tables;
  tables.reserve(ds.datasets.size());
  for (const auto& d : ds.datasets) {
    tables.push_back(tabulate(d, target, dc, clip, model, width));
  }
  return tables;
}

}  // namespace detail

template <TargetPolicy P>
[[nodiscard]] double estimate_is(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                 std::optional<double> clip) {
  return estimate(detail::tabulate_all(ds, target, dc, clip, ZeroModel{}), Vanilla::kIS);
}

template <TargetPolicy P>
[[nodiscard]] double estimate_wis(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                  std::optional<double> clip) {
  return estimate(detail::tabulate_all(ds, target, dc, clip, ZeroModel{}), Vanilla::kWIS);
}

template <TargetPolicy P>
[[nodiscard]] double estimate_swis(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                   std::optional<double> clip) {
  return estimate(detail::tabulate_all(ds, target, dc, clip, ZeroModel{}), Vanilla::kSWIS);
}

template <TargetPolicy P, ValueModel M>
[[nodiscard]] double estimate_dr(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                 std::optional<double> clip, const M& model) {
  return estimate(detail::tabulate_all(ds, target, dc, clip, model), Vanilla::kDR);
}

template <TargetPolicy P, ValueModel M>
[[nodiscard]] double estimate_wdr(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                  std::optional<double> clip, const M& model) {
  return estimate(detail::tabulate_all(ds, target, dc, clip, model), Vanilla::kWDR);
}

template <TargetPolicy P, ValueModel M>
[[nodiscard]] double estimate_swdr(const MultiDataset& ds, const P& target, const DiscountConfig& dc,
                                   std::optional<double> clip, const M& model) {
  return estimate(detail::tabulate_all(ds, target, dc, clip, model), Vanilla::kSWDR);
}

}  // namespace opemix

#endif  // OPEMIX_ESTIMATORS_HPP
