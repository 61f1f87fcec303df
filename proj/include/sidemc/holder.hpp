#pragma once
//
// Weighted Hoelder norm estimation on finite audit grids.
//
// For a scalar field f, weight exponent theta and order beta, the estimate is
//
//   | r1^-theta f |_beta  ~=  sum_{|gamma| <= p} sup_grid | D^gamma g |
//                           + sum_{|gamma| = p} [ D^gamma g ]_mu
//
// with g = r1^-theta f, p the integer part of beta taken so the fractional
// part mu lies in (0, 1], derivatives by central finite differences, and the
// seminorm by paired-point difference quotients at 10 dyadic separations per
// grid point. The estimate is a supremum over a finite set: exact
// homogeneity in f, monotone nondecreasing under grid refinement.
//

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sidemc/common.hpp"
#include "sidemc/problem.hpp"

namespace sidemc {

struct HolderNormReport {
  double theta = 0.0;
  double beta = 0.0;
  double value = 0.0;
  double sup_part = 0.0;       ///< sum of grid sup-norms of D^gamma g, |gamma| <= p
  double seminorm_part = 0.0;  ///< sum of Hoelder seminorms at order p
  int derivative_order = 0;    ///< p
  double fractional_order = 0.0;  ///< mu in (0, 1]
  std::size_t grid_points = 0;
};

namespace detail {

/// Split beta = p + mu with integer p >= 0 and mu in (0, 1].
inline void split_order(double beta, int& p, double& mu) {
  if (!(beta > 0.0)) {
    throw ConfigurationError("weighted_holder_norm: beta must be > 0");
  }
  p = static_cast<int>(std::floor(beta));
  mu = beta - p;
  if (mu == 0.0) {  // integer beta: fractional part is 1
    --p;
    mu = 1.0;
  }
}

}  // namespace detail

/// Finite-difference step for the Hoelder-norm derivative estimates.
inline constexpr double kHolderFdStep = 1e-4;
/// Number of dyadic separations per point in the seminorm estimate.
inline constexpr int kHolderSeparations = 10;
/// Largest paired-point separation.
inline constexpr double kHolderBaseSeparation = 0.5;

/// Estimate the weighted Hoelder norm of a scalar field on an audit grid.
/// `field` must be evaluable at the grid points and at points displaced by
/// up to kHolderBaseSeparation + O(kHolderFdStep) along coordinate axes.
/// Supports derivative orders p <= 2 (covers every beta <= 3).
inline HolderNormReport weighted_holder_norm(
    const std::function<double(const Vec&)>& field, double theta, double beta,
    const std::vector<Vec>& audit_grid) {
  if (audit_grid.empty()) {
    throw ConfigurationError("weighted_holder_norm: empty audit grid");
  }
  HolderNormReport rep;
  rep.theta = theta;
  rep.beta = beta;
  rep.grid_points = audit_grid.size();
  detail::split_order(beta, rep.derivative_order, rep.fractional_order);
  if (rep.derivative_order > 2) {
    throw ConfigurationError(
        "weighted_holder_norm: derivative order above 2 not supported");
  }
  const int d = static_cast<int>(audit_grid.front().size());

  const auto g = [&](const Vec& x) {
    const double v = field(x);
    if (!std::isfinite(v)) {
      throw EvaluationError("weighted_holder_norm: non-finite field value");
    }
    return std::pow(weight_r1(x), -theta) * v;
  };

  // D^gamma g by central differences; gamma encoded as (order, i, j).
  const double dstep = kHolderFdStep;
  const auto deriv = [&](const Vec& x, int order, int i, int j) -> double {
    if (order == 0) return g(x);
    Vec y = x;
    if (order == 1) {
      y[i] = x[i] + dstep;
      const double fp = g(y);
      y[i] = x[i] - dstep;
      const double fm = g(y);
      return (fp - fm) / (2.0 * dstep);
    }
    if (i == j) {
      const double f0 = g(x);
      y[i] = x[i] + dstep;
      const double fp = g(y);
      y[i] = x[i] - dstep;
      const double fm = g(y);
      return (fp - 2.0 * f0 + fm) / (dstep * dstep);
    }
    double acc = 0.0;
    for (int si = -1; si <= 1; si += 2) {
      for (int sj = -1; sj <= 1; sj += 2) {
        y = x;
        y[i] += si * dstep;
        y[j] += sj * dstep;
        acc += si * sj * g(y);
      }
    }
    return acc / (4.0 * dstep * dstep);
  };

  // Enumerate multi-indices per order as (i, j) pairs.
  struct Gamma {
    int order, i, j;
  };
  std::vector<std::vector<Gamma>> by_order(
      static_cast<std::size_t>(rep.derivative_order) + 1);
  by_order[0].push_back({0, 0, 0});
  if (rep.derivative_order >= 1) {
    for (int i = 0; i < d; ++i) by_order[1].push_back({1, i, i});
  }
  if (rep.derivative_order >= 2) {
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) by_order[2].push_back({2, i, j});
    }
  }

  // Sup part: sum over orders of the grid supremum (max across the
  // multi-indices of that order, matching a vector-max norm convention).
  for (int order = 0; order <= rep.derivative_order; ++order) {
    double sup = 0.0;
    for (const Vec& x : audit_grid) {
      for (const Gamma& gamma : by_order[static_cast<std::size_t>(order)]) {
        sup = std::max(sup,
                       std::abs(deriv(x, gamma.order, gamma.i, gamma.j)));
      }
    }
    rep.sup_part += sup;
  }

  // Seminorm part at the top order: paired-point quotients along coordinate
  // axes at dyadic separations.
  double semi = 0.0;
  const double mu = rep.fractional_order;
  for (const Vec& x : audit_grid) {
    for (const Gamma& gamma :
         by_order[static_cast<std::size_t>(rep.derivative_order)]) {
      const double base = deriv(x, gamma.order, gamma.i, gamma.j);
      for (int axis = 0; axis < d; ++axis) {
        double sep = kHolderBaseSeparation;
        for (int s = 0; s < kHolderSeparations; ++s, sep *= 0.5) {
          Vec y = x;
          y[axis] += sep;
          const double other = deriv(y, gamma.order, gamma.i, gamma.j);
          semi = std::max(semi,
                          std::abs(other - base) / std::pow(sep, mu));
        }
      }
    }
  }
  rep.seminorm_part = semi;
  rep.value = rep.sup_part + rep.seminorm_part;
  return rep;
}

}  // namespace sidemc
