#pragma once
//
// Validation harness: oracle problems with closed-form solutions (each one
// self-audited against the expected-value generator by finite differences),
// error reports of the Monte Carlo estimator against those closed forms,
// convergence studies over step counts and sample counts, and an exact
// check of the jump-moment inequalities used by the scheme's analysis.
//

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sidemc/common.hpp"
#include "sidemc/flow.hpp"
#include "sidemc/problem.hpp"
#include "sidemc/rng.hpp"
#include "sidemc/solver.hpp"

namespace sidemc {

/// A problem with a known closed-form expected solution and the tolerance
/// policy used to judge the estimator against it.
struct OracleProblem {
  std::string name;
  ProblemSpec spec;
  /// Closed form of the expected solution, (t, x) -> R^{d2}.
  std::function<Vec(double, const Vec&)> closed_form;
  std::vector<Vec> grid;  ///< evaluation points
  /// Pass when sup error <= max(deterministic_tol, stderr_mult * stderr).
  double deterministic_tol = 0.0;
  double stderr_mult = 0.0;
  /// Max generator-identity residual found at construction.
  double self_audit_residual = 0.0;
};

namespace detail {

/// Apply the expected-value generator of the system to a spatial field
/// u(.) = closed_form(t, .) at one point by finite differences:
///   G u = sum_k L^k u + 1_{[1,2]}(alpha) b.grad u + c u + f
///         + int_{E1 u V1} ((I+rho1) u(x+H1) - u + h) pi,
/// where L^k carries the second-order diffusion block, the sigma-upsilon
/// cross term, the (optionally drift-compensated) D-jump integrals, and for
/// the latent family the raw E-jump integral.
inline Vec generator_apply(const ProblemSpec& spec, double t, const Vec& x,
                           const std::function<Vec(double, const Vec&)>& u) {
  const CoefficientSet& cs = spec.coefficients;
  const int d1 = cs.d1, d2 = cs.d2;
  const double hstep = 1e-4;

  const auto u_at = [&](const Vec& y) { return u(t, y); };
  const Vec u0 = u_at(x);

  // Central-difference gradient (d2 x d1) and per-axis second differences.
  Mat grad(d2, d1);
  std::vector<std::vector<Vec>> plus(static_cast<std::size_t>(d1)),
      minus(static_cast<std::size_t>(d1));
  for (int i = 0; i < d1; ++i) {
    Vec xp = x, xm = x;
    xp[i] += hstep;
    xm[i] -= hstep;
    const Vec up = u_at(xp), um = u_at(xm);
    grad.col(i) = (up - um) / (2.0 * hstep);
    plus[static_cast<std::size_t>(i)] = {up};
    minus[static_cast<std::size_t>(i)] = {um};
  }
  // Hessian application sum_ij a_ij d_ij u for a = sum_rho sigma sigma^T.
  const auto second_diff = [&](int i, int j) -> Vec {
    if (i == j) {
      return (plus[static_cast<std::size_t>(i)][0] - 2.0 * u0 +
              minus[static_cast<std::size_t>(i)][0]) /
             (hstep * hstep);
    }
    Vec xpp = x, xpm = x, xmp = x, xmm = x;
    xpp[i] += hstep;
    xpp[j] += hstep;
    xpm[i] += hstep;
    xpm[j] -= hstep;
    xmp[i] -= hstep;
    xmp[j] += hstep;
    xmm[i] -= hstep;
    xmm[j] -= hstep;
    return (u_at(xpp) - u_at(xpm) - u_at(xmp) + u_at(xmm)) /
           (4.0 * hstep * hstep);
  };

  Vec out = Vec::Zero(d2);

  // Zero-order coupling and free drift.
  out += cs.c.eval(t, x) * u0 + cs.f.eval(t, x);
  // First-order drift when active.
  if (cs.drift_active()) {
    const Vec bv = cs.b.eval(t, x);
    for (int i = 0; i < d1; ++i) out += bv[i] * grad.col(i);
  }

  for (int k = 0; k < 2; ++k) {
    if (cs.diffusion_active()) {
      const Mat sig = cs.sigma[k].eval(t, x);
      for (int r = 0; r < cs.channels; ++r) {
        for (int i = 0; i < d1; ++i) {
          for (int j = 0; j < d1; ++j) {
            out += 0.5 * sig(i, r) * sig(j, r) * second_diff(i, j);
          }
          if (!cs.upsilon[k].empty()) {
            const Mat ups = cs.upsilon[k][static_cast<std::size_t>(r)].eval(t, x);
            out += sig(i, r) * (ups * grad.col(i));
          }
        }
      }
    }
    // Compensated D-jump integrals.
    for (const auto& [z, w] :
         FlowEngine::quadrature_nodes(spec.measures[k], SetTag::D)) {
      const Vec hj = cs.H[k].eval(t, x, z);
      const Vec ushift = u_at(x + hj);
      const Mat rho = cs.rho[k].eval(t, x, z);
      Vec term = ushift - u0 + rho * (ushift - u0);
      if (cs.flow_jump_compensated()) {
        for (int i = 0; i < d1; ++i) term -= hj[i] * grad.col(i);
      }
      out += w * term;
    }
    // Latent raw E-jumps are averaged into the generator.
    if (k == 1) {
      for (const auto& [z, w] :
           FlowEngine::quadrature_nodes(spec.measures[1], SetTag::E)) {
        const Vec hj = cs.H[1].eval(t, x, z);
        const Mat rho = cs.rho[1].eval(t, x, z);
        const Vec ushift = u_at(x + hj);
        out += w * (ushift + rho * ushift - u0);
      }
    }
  }

  // Observed raw jumps on E1 and V1 contribute their compensator in
  // expectation, free term included.
  for (const SetTag tag : {SetTag::E, SetTag::V}) {
    for (const auto& [z, w] :
         FlowEngine::quadrature_nodes(spec.measures[0], tag)) {
      const Vec hj = cs.H[0].eval(t, x, z);
      const Mat rho = cs.rho[0].eval(t, x, z);
      const Vec ushift = u_at(x + hj);
      out += w * (ushift + rho * ushift - u0 + cs.h.eval(t, x, z));
    }
  }
  return out;
}

}  // namespace detail

/// Max residual of the generator identity d/dt u = G u at t = 0 over the
/// grid, by a one-sided second-order time difference.
inline double oracle_self_audit(
    const ProblemSpec& spec,
    const std::function<Vec(double, const Vec&)>& closed_form,
    const std::vector<Vec>& grid) {
  const double dt = 1e-5;
  double worst = 0.0;
  for (const Vec& x : grid) {
    const Vec du = (-3.0 * closed_form(0.0, x) + 4.0 * closed_form(dt, x) -
                    closed_form(2.0 * dt, x)) /
                   (2.0 * dt);
    const Vec gu = detail::generator_apply(spec, 0.0, x, closed_form);
    worst = std::max(worst, (du - gu).lpNorm<Eigen::Infinity>());
    if (!std::isfinite(worst)) {
      throw NumericalError("oracle_self_audit: non-finite residual");
    }
  }
  return worst;
}

/// Build an oracle, refusing any closed form that fails the generator
/// self-audit.
inline OracleProblem make_oracle(
    std::string name, ProblemSpec spec,
    std::function<Vec(double, const Vec&)> closed_form, std::vector<Vec> grid,
    double deterministic_tol, double stderr_mult,
    double audit_tol = 1e-4) {
  if (grid.empty()) {
    throw ConfigurationError("make_oracle: empty evaluation grid");
  }
  OracleProblem o;
  o.name = std::move(name);
  o.spec = std::move(spec);
  o.closed_form = std::move(closed_form);
  o.grid = std::move(grid);
  o.deterministic_tol = deterministic_tol;
  o.stderr_mult = stderr_mult;
  o.self_audit_residual = oracle_self_audit(o.spec, o.closed_form, o.grid);
  if (o.self_audit_residual > audit_tol) {
    throw NumericalError("make_oracle: closed form fails the generator "
                         "identity, residual " +
                         std::to_string(o.self_audit_residual));
  }
  return o;
}

/// Outcome of judging the estimator against one oracle.
struct OracleReport {
  std::string name;
  double sup_error = 0.0;
  double max_stderr = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  SolutionField field;
};

namespace detail {

inline OracleReport judge(const OracleProblem& oracle, SolutionField field) {
  OracleReport rep;
  rep.name = oracle.name;
  rep.field = std::move(field);
  for (std::size_t i = 0; i < rep.field.grid.size(); ++i) {
    const Vec truth = oracle.closed_form(rep.field.t, rep.field.grid[i]);
    rep.sup_error = std::max(
        rep.sup_error,
        (rep.field.estimate[i] - truth).lpNorm<Eigen::Infinity>());
    rep.max_stderr = std::max(
        rep.max_stderr, rep.field.std_error[i].lpNorm<Eigen::Infinity>());
  }
  rep.tolerance = std::max(oracle.deterministic_tol,
                           oracle.stderr_mult * rep.max_stderr);
  rep.pass = rep.sup_error <= rep.tolerance;
  return rep;
}

}  // namespace detail

/// Run the estimator on one observed realization and compare against the
/// closed form on the oracle grid.
inline OracleReport run_oracle(const OracleProblem& oracle,
                               std::uint64_t observed_seed,
                               std::size_t m_inner,
                               const SchemeParams& params = {}) {
  return detail::judge(
      oracle, estimate_solution(oracle.spec, oracle.spec.T, oracle.grid,
                                observed_seed, m_inner, params));
}

/// Average the estimator over independent observed realizations (one latent
/// replica each); the standard error is taken across observed realizations.
/// This is the estimator of the full expectation, for oracles whose closed
/// form averages over the observed noise as well.
inline OracleReport run_oracle_observed_sweep(const OracleProblem& oracle,
                                              std::size_t n_outer,
                                              std::uint64_t base_seed,
                                              const SchemeParams& params = {}) {
  if (n_outer < 2) {
    throw ConfigurationError("run_oracle_observed_sweep: need n_outer >= 2");
  }
  const std::size_t n_grid = oracle.grid.size();
  const int d2 = oracle.spec.coefficients.d2;
  std::vector<Vec> sum(n_grid, Vec::Zero(d2)), sumsq(n_grid, Vec::Zero(d2));
  for (std::size_t j = 0; j < n_outer; ++j) {
    const std::uint64_t seed =
        rng::hash_key({base_seed, 0x0b5e7ed5eedULL, j});
    const SolutionField f = estimate_solution(oracle.spec, oracle.spec.T,
                                              oracle.grid, seed, 1, params);
    for (std::size_t i = 0; i < n_grid; ++i) {
      sum[i] += f.estimate[i];
      sumsq[i] += f.estimate[i].cwiseProduct(f.estimate[i]);
    }
  }
  SolutionField field;
  field.t = oracle.spec.T;
  field.grid = oracle.grid;
  field.inner_samples = n_outer;
  field.observed_noise_seed = base_seed;
  const double n = static_cast<double>(n_outer);
  for (std::size_t i = 0; i < n_grid; ++i) {
    const Vec mean = sum[i] / n;
    const Vec var =
        ((sumsq[i] - n * mean.cwiseProduct(mean)) / (n - 1.0)).cwiseMax(0.0);
    field.estimate.push_back(mean);
    field.std_error.push_back((var / n).cwiseSqrt());
  }
  return detail::judge(oracle, std::move(field));
}

/// One row of a convergence table.
struct ConvergenceRow {
  int n_steps = 0;
  std::size_t m_inner = 0;
  double sup_error = 0.0;
  double max_stderr = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  /// Observed order in the time step: -slope of log error vs log dt over
  /// the step sweep (at the largest sample count).
  double dt_order = 0.0;
  /// Slope of log stderr vs log M over the sample sweep (at the finest
  /// step count); near -1/2 for genuinely statistical errors, 0 when the
  /// problem is deterministic.
  double stderr_m_slope = 0.0;
  /// Slope of log error vs log M over the sample sweep.
  double error_m_slope = 0.0;
};

namespace detail {

inline double ls_slope(const std::vector<std::pair<double, double>>& pts) {
  const double n = static_cast<double>(pts.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  return denom == 0.0 ? 0.0 : (n * sxy - sx * sy) / denom;
}

}  // namespace detail

/// Sweep step counts (at the largest sample count) and sample counts (at
/// the finest step count) and fit observed orders.
inline ConvergenceTable convergence_study(const OracleProblem& oracle,
                                          const std::vector<int>& steps_list,
                                          const std::vector<std::size_t>& m_list,
                                          std::uint64_t observed_seed,
                                          SchemeParams params = {}) {
  if (steps_list.size() < 3 || m_list.size() < 3) {
    throw ConfigurationError(
        "convergence_study: need at least 3 step counts and 3 sample counts");
  }
  const auto floor_log = [](double v) {
    return std::log(std::max(v, 1e-16));
  };
  ConvergenceTable table;
  std::vector<std::pair<double, double>> dt_pts, se_pts, err_pts;
  for (const int n_steps : steps_list) {
    params.n_steps = n_steps;
    const OracleReport rep =
        run_oracle(oracle, observed_seed, m_list.back(), params);
    table.rows.push_back(
        {n_steps, m_list.back(), rep.sup_error, rep.max_stderr});
    dt_pts.emplace_back(std::log(oracle.spec.T / n_steps),
                        floor_log(rep.sup_error));
  }
  params.n_steps = steps_list.back();
  for (const std::size_t m : m_list) {
    const OracleReport rep = run_oracle(oracle, observed_seed, m, params);
    table.rows.push_back({steps_list.back(), m, rep.sup_error, rep.max_stderr});
    const double lm = std::log(static_cast<double>(m));
    se_pts.emplace_back(lm, floor_log(rep.max_stderr));
    err_pts.emplace_back(lm, floor_log(rep.sup_error));
    if (rep.max_stderr == 0.0) se_pts.back().second = 0.0;  // deterministic
  }
  table.dt_order = detail::ls_slope(dt_pts);
  table.stderr_m_slope = detail::ls_slope(se_pts);
  table.error_m_slope = detail::ls_slope(err_pts);
  return table;
}

// ---------------------------------------------------------------------------
// Jump-moment inequality check
// ---------------------------------------------------------------------------

/// Exact raw moment E N^p of a Poisson variable with mean m via Stirling
/// numbers of the second kind (Touchard's formula).
inline double poisson_raw_moment(int p, double m) {
  if (p < 0) throw ConfigurationError("poisson_raw_moment: need p >= 0");
  if (p == 0) return 1.0;
  // S(n, k) by the triangular recurrence.
  std::vector<std::vector<double>> S(static_cast<std::size_t>(p) + 1);
  S[0] = {1.0};
  for (int n = 1; n <= p; ++n) {
    S[static_cast<std::size_t>(n)].assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (int k = 1; k <= n; ++k) {
      const auto& prev = S[static_cast<std::size_t>(n - 1)];
      const double lower = (k <= n - 1) ? prev[static_cast<std::size_t>(k)] : 0.0;
      S[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] =
          k * lower + prev[static_cast<std::size_t>(k - 1)];
    }
  }
  double acc = 0.0, mk = 1.0;
  for (int k = 1; k <= p; ++k) {
    mk *= m;
    acc += S[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)] * mk;
  }
  return acc;
}

/// Both explicit moment inequalities for the running jump total A_t of a
/// unit-size jump on a single atom: A_T is Poisson with mean m = lambda*T,
/// the running compensator total is L_T = m, and the p-th moments are exact
/// Poisson moments. The free constants are fixed at the midpoint-feasible
/// values eps1 = 1/(2p), eps2 = 1/(p 2^{p-1}).
struct BurkholderReport {
  int p = 2;
  double mean = 0.0;          ///< m = lambda * T
  double moment_p = 0.0;      ///< exact E A_T^p
  double eps1 = 0.0;
  double eps2 = 0.0;
  double lower_lhs = 0.0;     ///< (C1 m^p) v m
  double upper_rhs = 0.0;     ///< C2 [m + C3 m^p]
  bool lower_ok = false;
  bool upper_ok = false;
  double mc_moment = 0.0;     ///< Monte Carlo cross-check of E A_T^p
  double mc_stderr = 0.0;
  bool mc_ok = false;         ///< |mc - exact| <= 5 stderr (skipped if n_mc=0)
};

inline BurkholderReport burkholder_check(int p, double lambda, double T,
                                         std::size_t n_mc = 0,
                                         std::uint64_t seed = 1) {
  if (p <= 1) throw ConfigurationError("burkholder_check: need p > 1");
  if (lambda < 0.0 || T < 0.0) {
    throw ConfigurationError("burkholder_check: need lambda, T >= 0");
  }
  BurkholderReport rep;
  rep.p = p;
  const double m = lambda * T;
  rep.mean = m;
  rep.moment_p = poisson_raw_moment(p, m);
  const double pd = static_cast<double>(p);
  rep.eps1 = 1.0 / (2.0 * pd);
  rep.eps2 = 1.0 / (pd * std::pow(2.0, pd - 1.0));

  const double c1 = std::pow(rep.eps1, pd - 1.0) * std::pow(pd, pd) *
                    (1.0 - pd * rep.eps1) /
                    (pd * std::pow(pd - 1.0, pd - 1.0));
  rep.lower_lhs = std::max(c1 * std::pow(m, pd), m);
  rep.lower_ok = rep.lower_lhs <= rep.moment_p + 1e-12;

  const double pre = pd * std::pow(2.0, pd - 2.0);
  const double c2 = pre / (1.0 - pre * rep.eps2);
  const double c3 = std::pow(pd - 1.0, pd - 1.0) /
                    (std::pow(rep.eps2, pd - 1.0) * std::pow(pd, pd));
  rep.upper_rhs = c2 * (m + c3 * std::pow(m, pd));
  rep.upper_ok = rep.moment_p <= rep.upper_rhs + 1e-12;

  if (n_mc >= 2) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
      const double a = static_cast<double>(
          rng::poisson(m, {seed, 0xb0c4a1dULL, i}));
      const double v = std::pow(a, pd);
      s += v;
      ss += v * v;
    }
    const double n = static_cast<double>(n_mc);
    rep.mc_moment = s / n;
    const double var = std::max((ss - n * rep.mc_moment * rep.mc_moment) /
                                (n - 1.0), 0.0);
    rep.mc_stderr = std::sqrt(var / n);
    rep.mc_ok = std::abs(rep.mc_moment - rep.moment_p) <= 5.0 * rep.mc_stderr;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Stock oracles
// ---------------------------------------------------------------------------

namespace oracles {

inline std::vector<Vec> line_grid(double lo, double hi, int n) {
  std::vector<Vec> g;
  for (int i = 0; i < n; ++i) {
    g.push_back(Vec::Constant(1, lo + (hi - lo) * i / (n - 1)));
  }
  return g;
}

/// Deterministic transport: alpha = 1, b = 1, phi = sin; u(t,x) = sin(x+t).
inline OracleProblem transport(double T = 1.0) {
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, T);
  spec.coefficients.b = VectorField::constant(Vec::Constant(1, 1.0), "b");
  spec.phi = VectorField::of(
      1, [](double, const Vec& x, Vec& out) { out[0] = std::sin(x[0]); },
      false, "phi");
  return make_oracle(
      "transport", std::move(spec),
      [](double t, const Vec& x) {
        return Vec::Constant(1, std::sin(x[0] + t));
      },
      line_grid(-3.0, 3.0, 101), 1e-3, 0.0);
}

/// Latent heat: alpha = 2, latent sigma = 1, phi = exp(-x^2/2);
/// u(t,x) = (1+t)^{-1/2} exp(-x^2 / (2(1+t))).
inline OracleProblem latent_heat(double T = 1.0) {
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 2.0, T);
  spec.coefficients.sigma[1] =
      MatrixField::constant(Mat::Constant(1, 1, 1.0), "sigma2");
  spec.phi = VectorField::of(
      1,
      [](double, const Vec& x, Vec& out) {
        out[0] = std::exp(-0.5 * x[0] * x[0]);
      },
      false, "phi");
  return make_oracle(
      "latent-heat", std::move(spec),
      [](double t, const Vec& x) {
        return Vec::Constant(
            1, std::exp(-0.5 * x[0] * x[0] / (1.0 + t)) /
                   std::sqrt(1.0 + t));
      },
      line_grid(-2.0, 2.0, 21), 5e-3, 4.0);
}

/// Observed compound Poisson: alpha = 1/2, one raw atom with rate lambda
/// and constant shift c, phi = sin; the expectation over observed noise is
/// the Poisson series sum_k P(N_t = k) phi(x + k c).
inline OracleProblem compound_poisson(double lambda = 2.0, double c = 0.3,
                                      double T = 1.0) {
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 0.5, T);
  spec.measures[0].atoms.push_back({1.0, lambda, SetTag::E});
  spec.coefficients.H[0] = VectorJumpField::of(
      1, [c](double, const Vec&, double z, Vec& out) { out[0] = c * z; },
      true, "H1");
  spec.coefficients.growth.K[0] = [c](double z) {
    return std::abs(c * z);
  };
  spec.phi = VectorField::of(
      1, [](double, const Vec& x, Vec& out) { out[0] = std::sin(x[0]); },
      false, "phi");
  const auto series = [lambda, c](double t, const Vec& x) {
    const double m = lambda * t;
    double acc = 0.0, weight = std::exp(-m), tail = 1.0;
    for (int k = 0; tail >= 1e-12; ++k) {
      acc += weight * std::sin(x[0] + k * c);
      tail -= weight;
      weight *= m / (k + 1);
    }
    return Vec::Constant(1, acc);
  };
  return make_oracle("compound-poisson", std::move(spec), series,
                     line_grid(-2.0, 2.0, 9), 0.0, 4.0);
}

}  // namespace oracles

}  // namespace sidemc
