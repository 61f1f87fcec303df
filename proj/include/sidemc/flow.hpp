#pragma once
//
// Simulation of the characteristic flow X_t(x), its Jacobian, and numerical
// flow inversion.
//
// Between jump events the state follows explicit Euler-Maruyama for
//
//   dX = [ -1_{[1,2]}(alpha) b(t,X)
//          + 1_{(1,2]}(alpha) sum_k int_{D^k} H^k(Htilde^-1(X,z),z) pi^k(dz) ] dt
//        + 1_{{2}}(alpha) sum_k sigma^k(t,X) dW^k,
//
// and at each sampled event (s,z,tag in {D,E}) the state jumps by the
// conjugate map F^k(X_{s-},z) = -H^k(Htilde^{k,-1}(X_{s-},z),z). Event times
// are nodes of the augmented grid, so jumps apply at their exact sampled
// times (no event-time discretization bias).
//
// The Jacobian solves the formally linearized scheme with grad X(0) = I;
// at events it multiplies by (I + grad F).
//
// Flow inversion is warm-started Newton on X_t(y) = x, with X and grad X
// evaluated by re-simulating from the candidate under the SAME noise.
// When the dynamics are state-independent (declared constant-in-x fields),
// X_t(x) = x + s(t) exactly and both simulation and inversion collapse to
// one shift trajectory; this fast path is algebraic, not approximate.
//

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "sidemc/common.hpp"
#include "sidemc/jump_maps.hpp"
#include "sidemc/noise.hpp"
#include "sidemc/problem.hpp"

namespace sidemc {

/// Growth guard: a single continuous Euler step larger than this (relative
/// to 1 + |x|) aborts the simulation as a stability failure.
inline constexpr double kFlowStepGuard = 10.0;

/// Precomputed per-problem context: quadrature nodes of the D-set
/// compensators and the jump-map handles of both families.
class FlowEngine {
 public:
  explicit FlowEngine(const ProblemSpec& spec) : spec_(&spec) {
    const CoefficientSet& cs = spec.coefficients;
    for (int k = 0; k < 2; ++k) {
      handles_[k] = JumpMapHandle{cs.H[k], cs.eta[k]};
      d_nodes_[k] = quadrature_nodes(spec.measures[k], SetTag::D);
      has_jumps_[k] = !spec.measures[k].empty() && !cs.H[k].is_zero;
    }
    translation_invariant_ =
        cs.b.constant_in_x && cs.sigma[0].constant_in_x &&
        cs.sigma[1].constant_in_x &&
        (!has_jumps_[0] || cs.H[0].constant_in_x) &&
        (!has_jumps_[1] || cs.H[1].constant_in_x);
  }

  /// Fixed quadrature node set (z, weight) for a measure restricted to one
  /// tag: all atoms, or composite-Simpson nodes in density mode.
  static std::vector<std::pair<double, double>> quadrature_nodes(
      const JumpMeasureSpec& m, SetTag tag) {
    std::vector<std::pair<double, double>> nodes;
    if (m.mode == JumpMeasureSpec::Mode::finite_atoms) {
      for (const JumpAtom& a : m.atoms) {
        if (a.tag == tag && a.rate > 0.0) nodes.emplace_back(a.z, a.rate);
      }
      return nodes;
    }
    for (const DensitySegment& seg : m.segments) {
      if (seg.tag != tag) continue;
      double lo = 0.0, hi = 0.0;
      if (!detail::restricted_range(seg, m.small_jump_cutoff, lo, hi)) continue;
      int panels = m.quadrature_panels;
      if (panels % 2 != 0) ++panels;
      const double hstep = (hi - lo) / panels;
      for (int i = 0; i <= panels; ++i) {
        const double z = lo + i * hstep;
        double w = (i == 0 || i == panels) ? 1.0 : (i % 2 != 0 ? 4.0 : 2.0);
        w *= hstep / 3.0;
        nodes.emplace_back(z, w * seg.rate(z));
      }
    }
    return nodes;
  }

  const ProblemSpec& spec() const { return *spec_; }
  const JumpMapHandle& handle(int k) const { return handles_[k]; }
  const std::vector<std::pair<double, double>>& d_nodes(int k) const {
    return d_nodes_[k];
  }
  bool translation_invariant() const { return translation_invariant_; }

  /// Simulate one trajectory from y0 over the augmented grid. Appends the
  /// state at every node (including node 0) to `traj`; if `jac` is non-null
  /// the Jacobian trajectory is evolved alongside. If `traj_pre` is
  /// non-null it receives the left limit at every node (differs from the
  /// stored state only at event nodes, where the stored state is post-jump);
  /// the transform needs these to evaluate its jump coefficients at X_{s-}.
  void simulate(const PathNoise& path, const Vec& y0, std::vector<Vec>* traj,
                std::vector<Mat>* jac, std::vector<Vec>* traj_pre = nullptr,
                double inversion_tol = kJumpInversionTol) const {
    const CoefficientSet& cs = spec_->coefficients;
    const int d1 = cs.d1;
    Vec x = y0;
    Mat J = Mat::Identity(d1, d1);
    if (traj != nullptr) {
      traj->clear();
      traj->push_back(x);
    }
    if (traj_pre != nullptr) {
      traj_pre->clear();
      traj_pre->push_back(x);
    }
    if (jac != nullptr) {
      jac->clear();
      jac->push_back(J);
    }

    const bool drift_on = cs.drift_active() && !cs.b.is_zero;
    const bool diff_on[2] = {
        cs.diffusion_active() && !cs.sigma[0].is_zero,
        cs.diffusion_active() && !cs.sigma[1].is_zero};
    const bool comp_on[2] = {
        cs.flow_jump_compensated() && has_jumps_[0] && !d_nodes_[0].empty(),
        cs.flow_jump_compensated() && has_jumps_[1] && !d_nodes_[1].empty()};

    Vec bval(d1), hv(d1), dx(d1);
    Mat sval, dsig, gh, gF;
    std::size_t evt_i = 0;
    const std::size_t n = path.n_increment_steps();
    for (std::size_t i = 0; i < n; ++i) {
      const double t = path.nodes[i];
      const double dt = path.nodes[i + 1] - t;
      dx.setZero();
      if (drift_on) {
        cs.b.eval(t, x, bval);
        dx.noalias() -= bval * dt;
      }
      for (int k = 0; k < 2; ++k) {
        if (comp_on[k]) {
          for (const auto& [z, w] : d_nodes_[k]) {
            const Vec y = invert_jump_map(handles_[k], t, x, z, inversion_tol);
            cs.H[k].eval(t, y, z, hv);
            dx.noalias() += (w * dt) * hv;
          }
        }
        if (diff_on[k]) {
          cs.sigma[k].eval(t, x, sval);
          const Family fam = (k == 0) ? Family::observed : Family::latent;
          for (int c = 0; c < path.channels; ++c) {
            dx.noalias() += sval.col(c) * path.increment(fam, i, c);
          }
        }
      }
      const double guard = kFlowStepGuard * (1.0 + x.lpNorm<Eigen::Infinity>());
      if (!(dx.lpNorm<Eigen::Infinity>() <= guard)) {
        throw NumericalError(
            "simulate_flow: step increment exceeds the stability guard at t=" +
            std::to_string(t) + "; use a smaller time step");
      }

      if (jac != nullptr) {
        // Linearized continuous step:
        //   J_{i+1} = (I + A_drift dt + A_diff) J_i,
        // A_drift = grad of the drift (including compensator) at x,
        // A_diff  = sum_{k,c} grad sigma^{k;.,c} dW^{k;c}.
        Mat A = Mat::Zero(d1, d1);
        if (drift_on && !cs.b.constant_in_x) {
          cs.b.jacobian(t, x, dsig);
          A -= dsig;
        }
        for (int k = 0; k < 2; ++k) {
          if (comp_on[k] && !cs.H[k].constant_in_x) {
            for (const auto& [z, w] : d_nodes_[k]) {
              // grad_x H(Htilde^-1(x,z),z) = grad H (I + grad H)^-1 = -grad F
              gF = conjugate_map_jacobian(handles_[k], t, x, z, inversion_tol);
              A -= w * gF;
            }
          }
        }
        A *= dt;
        for (int k = 0; k < 2; ++k) {
          if (diff_on[k] && !cs.sigma[k].constant_in_x) {
            const Family fam = (k == 0) ? Family::observed : Family::latent;
            for (int j = 0; j < d1; ++j) {
              cs.sigma[k].derivative_x(t, x, j, dsig);
              // dsig = d(sigma)/dx_j; column c pairs with increment dW_c.
              for (int c = 0; c < path.channels; ++c) {
                A.col(j) += dsig.col(c) * path.increment(fam, i, c);
              }
            }
          }
        }
        J = (Mat::Identity(d1, d1) + A) * J;
      }

      x += dx;
      if (traj_pre != nullptr) traj_pre->push_back(x);

      // events attached to node i+1: complete the continuous step first,
      // then apply jumps in order.
      while (evt_i < path.events.size() && path.events[evt_i].node == i + 1) {
        const PathEvent& e = path.events[evt_i];
        const int k = kidx(e.family);
        if (has_jumps_[k]) {
          const double s = path.nodes[i + 1];
          const Vec y = invert_jump_map(handles_[k], s, x, e.z, inversion_tol);
          cs.H[k].eval(s, y, e.z, hv);
          if (jac != nullptr) {
            cs.H[k].jacobian(s, y, e.z, gh);
            const Mat gradF =
                -gh * (Mat::Identity(d1, d1) + gh).inverse();
            J = (Mat::Identity(d1, d1) + gradF) * J;
          }
          x -= hv;
        }
        ++evt_i;
      }

      if (traj != nullptr) traj->push_back(x);
      if (jac != nullptr) jac->push_back(J);
    }
  }

 private:
  const ProblemSpec* spec_;
  JumpMapHandle handles_[2];
  std::vector<std::pair<double, double>> d_nodes_[2];
  bool has_jumps_[2] = {false, false};
  bool translation_invariant_ = false;
};

/// Trajectories X_t(x) (and optionally Jacobians) for a set of initial
/// points under one noise realization. Holds the engine and path noise so
/// invert_flow can re-simulate under the same noise.
struct FlowResult {
  std::vector<Vec> initial_points;
  /// trajectory[p][i]: state of point p at augmented-grid node i.
  std::vector<std::vector<Vec>> trajectory;
  /// jacobian[p][i]: grad X at node i (empty when not requested).
  std::vector<std::vector<Mat>> jacobian;
  std::shared_ptr<const PathNoise> path;
  std::shared_ptr<const FlowEngine> engine;
  std::uint64_t noise_ref = 0;  ///< observed seed of the realization used
  /// Set when an invert_flow query fell outside the seeded hull.
  mutable bool hull_warning = false;

  /// Index of the augmented-grid node at time t (must be a node).
  std::size_t node_at(double t) const {
    const auto it = std::lower_bound(path->nodes.begin(), path->nodes.end(),
                                     t - 1e-12);
    if (it == path->nodes.end() || std::abs(*it - t) > 1e-9) {
      throw ConfigurationError(
          "FlowResult: time " + std::to_string(t) +
          " is not a node of the simulation grid");
    }
    return static_cast<std::size_t>(it - path->nodes.begin());
  }
};

/// Default seed-mesh construction: `n` points spanning `span` times the
/// query hull per axis (diagonal mesh for d1 > 1).
inline std::vector<Vec> seed_mesh(const std::vector<Vec>& queries,
                                  int n = 129, double span = 1.5) {
  if (queries.empty()) {
    throw ConfigurationError("seed_mesh: no query points");
  }
  const int d = static_cast<int>(queries.front().size());
  Vec lo = queries.front(), hi = queries.front();
  for (const Vec& q : queries) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec mid = 0.5 * (lo + hi);
  const Vec half = 0.5 * span * (hi - lo) + Vec::Constant(d, 0.5);
  std::vector<Vec> mesh;
  mesh.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double r = (n == 1) ? 0.0 : -1.0 + 2.0 * i / (n - 1);
    mesh.push_back(mid + r * half);
  }
  return mesh;
}

/// Simulate the flow from every initial point over [0, T] under the given
/// noise realization.
inline FlowResult simulate_flow(const ProblemSpec& spec,
                                const NoiseRealization& noise,
                                const std::vector<Vec>& points,
                                bool with_jacobian) {
  spec.validate();
  FlowResult result;
  result.engine = std::make_shared<FlowEngine>(spec);
  result.path = std::make_shared<PathNoise>(
      build_path_noise(noise, 0.0, noise.base_grid.T));
  result.noise_ref = noise.seed_observed;
  result.initial_points = points;
  result.trajectory.resize(points.size());
  if (with_jacobian) result.jacobian.resize(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    result.engine->simulate(*result.path, points[p], &result.trajectory[p],
                            with_jacobian ? &result.jacobian[p] : nullptr);
  }
  return result;
}

/// Jacobian trajectories only (variational equation with grad X(0) = I).
inline std::vector<std::vector<Mat>> simulate_jacobian(
    const ProblemSpec& spec, const NoiseRealization& noise,
    const std::vector<Vec>& points) {
  return simulate_flow(spec, noise, points, true).jacobian;
}

/// Numerically invert the flow: find y with X_t(y) = query_x, initialized
/// at the nearest stored seed and refined by Newton with exact
/// re-simulation under the same noise.
inline Vec invert_flow(const FlowResult& flow, double t, const Vec& query_x,
                       double tol = 1e-10) {
  if (flow.trajectory.empty()) {
    throw ConfigurationError("invert_flow: flow has no seeded trajectories");
  }
  const std::size_t node = flow.node_at(t);

  // Nearest seed by terminal state, and the seeded hull for the warning.
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  Vec hull_lo = flow.trajectory[0][node], hull_hi = flow.trajectory[0][node];
  for (std::size_t p = 0; p < flow.trajectory.size(); ++p) {
    const Vec& xt = flow.trajectory[p][node];
    const double dist = (xt - query_x).lpNorm<Eigen::Infinity>();
    if (dist < best_dist) {
      best_dist = dist;
      best = p;
    }
    hull_lo = hull_lo.cwiseMin(xt);
    hull_hi = hull_hi.cwiseMax(xt);
  }
  if ((query_x.array() < hull_lo.array() - 1e-12).any() ||
      (query_x.array() > hull_hi.array() + 1e-12).any()) {
    flow.hull_warning = true;
  }

  Vec y = flow.initial_points[best];
  std::vector<Vec> traj;
  std::vector<Mat> jac;
  double best_residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 50; ++it) {
    flow.engine->simulate(*flow.path, y, &traj, &jac);
    const Vec r = traj[node] - query_x;
    const double res = r.lpNorm<Eigen::Infinity>();
    best_residual = std::min(best_residual, res);
    if (res <= tol) return y;
    y -= jac[node].partialPivLu().solve(r);
  }
  throw NumericalError(
      "invert_flow: Newton did not reach tolerance; best residual " +
      std::to_string(best_residual));
}

}  // namespace sidemc
