#pragma once
//
// Algebra of the per-jump maps Htilde(x) = x + H(t,x,z): inversion by
// Banach fixed-point iteration in the contraction regime |grad H| <= eta < 1,
// the conjugate map F(t,x,z) = -H(t, Htilde^-1(t,x,z), z) (the jump of the
// inverse flow), and a numerical report of the diffeomorphism estimates.
//

#include <cmath>
#include <string>
#include <vector>

#include "sidemc/common.hpp"
#include "sidemc/fields.hpp"

namespace sidemc {

/// Default inversion tolerance (dimensionless position units).
inline constexpr double kJumpInversionTol = 1e-10;
inline constexpr int kJumpInversionMaxIter = 200;

/// A jump map with its declared contraction bound.
struct JumpMapHandle {
  VectorJumpField H;
  double eta = 0.5;  ///< declared bound |grad_x H| <= eta on the small-jump set
};

/// Convergence diagnostics of one inversion.
struct InversionStats {
  int iterations = 0;
  double last_step = 0.0;
  double residual = 0.0;
  /// Max over iterations of |step_{m+1}| / |step_m| (the observed
  /// contraction rate; <= eta in exact arithmetic).
  double observed_rate = 0.0;
};

/// Solve y + H(t,y,z) = x for y.
///
/// Fixed-point iteration y_{m+1} = x - H(t, y_m, z) starting from y_0 = x,
/// stopped by the a-priori contraction rule |y_{m+1} - y_m| <= tol*(1-eta)/eta
/// (which guarantees |y - y*| <= tol). Newton is used as a fallback when the
/// declared eta >= 0.9, where plain iteration contracts too slowly.
inline Vec invert_jump_map(const JumpMapHandle& handle, double t, const Vec& x,
                           double z, double tol = kJumpInversionTol,
                           InversionStats* stats = nullptr) {
  if (handle.H.is_zero) {
    if (stats != nullptr) *stats = {};
    return x;
  }
  const double eta = handle.eta;
  // tol*(1-eta)/eta, guarded for eta -> 0 where one step is already exact.
  const double step_tol = (eta > 1e-12) ? tol * (1.0 - std::min(eta, 1.0 - 1e-12)) / eta
                                        : tol;
  Vec y = x, y_next(x.size()), hv(handle.H.dim);
  double prev_step = -1.0;
  InversionStats st;
  const bool use_newton = (eta >= 0.9);
  Mat jac, lin;
  for (int m = 0; m < kJumpInversionMaxIter; ++m) {
    handle.H.eval(t, y, z, hv);
    if (use_newton) {
      handle.H.jacobian(t, y, z, jac);
      lin = Mat::Identity(x.size(), x.size()) + jac;
      y_next = y - lin.partialPivLu().solve(y + hv - x);
    } else {
      y_next = x - hv;
    }
    const double step = (y_next - y).lpNorm<Eigen::Infinity>();
    ++st.iterations;
    if (prev_step > 0.0) {
      st.observed_rate = std::max(st.observed_rate, step / prev_step);
    }
    prev_step = step;
    y = y_next;
    st.last_step = step;
    if (step <= step_tol) {
      handle.H.eval(t, y, z, hv);
      st.residual = (y + hv - x).lpNorm<Eigen::Infinity>();
      if (stats != nullptr) *stats = st;
      if (st.residual > 10.0 * tol) {
        throw NumericalError(
            "invert_jump_map: converged step but residual " +
            std::to_string(st.residual) + " above contract at z=" +
            std::to_string(z));
      }
      return y;
    }
  }
  throw NumericalError(
      "invert_jump_map: no convergence in " +
      std::to_string(kJumpInversionMaxIter) + " iterations (eta misdeclared?); "
      "last step " + std::to_string(prev_step) + " at z=" + std::to_string(z));
}

/// F(t,x,z) = -H(t, Htilde^-1(t,x,z), z); satisfies x + F = Htilde^-1(x).
inline Vec conjugate_map_F(const JumpMapHandle& handle, double t, const Vec& x,
                           double z, double tol = kJumpInversionTol) {
  if (handle.H.is_zero) return Vec::Zero(x.size());
  const Vec y = invert_jump_map(handle, t, x, z, tol);
  return -handle.H.eval(t, y, z);
}

/// Spatial Jacobian of F at x: grad F(x) = -grad H(y) (I + grad H(y))^-1
/// evaluated at y = Htilde^-1(x) (chain rule through the inverse map).
inline Mat conjugate_map_jacobian(const JumpMapHandle& handle, double t,
                                  const Vec& x, double z,
                                  double tol = kJumpInversionTol) {
  const int d = static_cast<int>(x.size());
  if (handle.H.is_zero || handle.H.constant_in_x) return Mat::Zero(d, d);
  const Vec y = invert_jump_map(handle, t, x, z, tol);
  Mat gh;
  handle.H.jacobian(t, y, z, gh);
  return -gh * (Mat::Identity(d, d) + gh).inverse();
}

/// Empirical maxima of the diffeomorphism estimates over a grid of states
/// and marks, compared against the explicit bounds available in the
/// contraction regime: |grad F| <= N_kappa * L2 with N_kappa = 1/(1-eta)
/// and L2 = sup |grad H|, and |(I + grad F)^-1| <= 1 + L2.
struct DiffeoReport {
  double L2 = 0.0;                ///< empirical sup |grad H|
  double max_grad_F = 0.0;        ///< empirical sup |grad F|
  double grad_F_bound = 0.0;      ///< N_kappa * L2
  double max_inv_grad_F = 0.0;    ///< empirical sup |(I + grad F)^-1|
  double inv_grad_F_bound = 0.0;  ///< 1 + L2
  double max_round_trip = 0.0;    ///< sup |Htilde(Htilde^-1(x)) - x|
  double max_conjugacy = 0.0;     ///< sup |x + F + H(x + F) - x|
  double max_observed_rate = 0.0; ///< worst fixed-point contraction rate
  bool grad_F_within_bound = false;
  bool inv_grad_F_within_bound = false;
  bool round_trip_ok = false;  ///< <= 10 * tol
};

inline DiffeoReport diffeo_report(const JumpMapHandle& handle, double t,
                                  const std::vector<Vec>& grid,
                                  const std::vector<double>& marks,
                                  double tol = kJumpInversionTol) {
  DiffeoReport rep;
  const int d = grid.empty() ? 0 : static_cast<int>(grid.front().size());
  Mat gh;
  for (const Vec& x : grid) {
    for (const double z : marks) {
      handle.H.jacobian(t, x, z, gh);
      rep.L2 = std::max(rep.L2, gh.lpNorm<Eigen::Infinity>());

      InversionStats st;
      const Vec y = invert_jump_map(handle, t, x, z, tol, &st);
      rep.max_observed_rate = std::max(rep.max_observed_rate, st.observed_rate);
      const Vec round = y + handle.H.eval(t, y, z);
      rep.max_round_trip = std::max(
          rep.max_round_trip, (round - x).lpNorm<Eigen::Infinity>());

      const Vec F = -handle.H.eval(t, y, z);
      const Vec conj = x + F + handle.H.eval(t, x + F, z);
      rep.max_conjugacy = std::max(
          rep.max_conjugacy, (conj - x).lpNorm<Eigen::Infinity>());

      const Mat gF = conjugate_map_jacobian(handle, t, x, z, tol);
      rep.max_grad_F = std::max(rep.max_grad_F, gF.lpNorm<Eigen::Infinity>());
      const Mat invF = (Mat::Identity(d, d) + gF).inverse();
      rep.max_inv_grad_F =
          std::max(rep.max_inv_grad_F, invF.lpNorm<Eigen::Infinity>());
    }
  }
  const double n_kappa =
      handle.eta < 1.0 ? 1.0 / (1.0 - handle.eta) : 0.0;
  rep.grad_F_bound = n_kappa * rep.L2;
  rep.inv_grad_F_bound = 1.0 + rep.L2;
  // Small slack absorbs the finite-difference error in grad H.
  rep.grad_F_within_bound = rep.max_grad_F <= rep.grad_F_bound + 1e-6;
  rep.inv_grad_F_within_bound =
      rep.max_inv_grad_F <= rep.inv_grad_F_bound + 1e-6;
  rep.round_trip_ok = rep.max_round_trip <= 10.0 * tol;
  return rep;
}

}  // namespace sidemc
