#pragma once
//
// The linear transform carried along one characteristic:
//
//   dPhi = (c(X)Phi + f(X)) dt
//        + sum_k upsilon^k(X) Phi dW^k + g(X) dW^1
//        + int rho^k(Htilde^-1(X_-,z),z) Phi_- [1_D q + 1_E p]
//        + int h(Htilde^-1(X_-,z),z) [1_D q^1 + 1_E p^1],      Phi_0 = phi(x).
//
// Psi solves the same equation with f = g = h = 0 and Psi_0 = I (the
// fundamental solution); Gamma with Phi_0 = 0 (the inhomogeneous part).
// Linearity makes Phi = Psi phi(x) + Gamma hold pathwise, exactly in exact
// arithmetic; decomposition_check measures the floating-point defect.
//
// Compensated D-integrals follow the flow module's convention: raw jump at
// each sampled event plus a compensator drift evaluated by quadrature.
// For d2 = 1 with g = h = 0 and rho > -1 the fundamental solution has an
// explicit exponential (Doleans-Dade) form, exposed as
// scalar_psi_closed_form.
//

#include <cmath>
#include <string>
#include <vector>

#include "sidemc/common.hpp"
#include "sidemc/flow.hpp"

namespace sidemc {

/// The transform triple at one grid node.
struct TransformState {
  Vec phi;
  Mat psi;
  Vec gamma;
};

/// Per-problem context for transform simulation.
class TransformEngine {
 public:
  explicit TransformEngine(const ProblemSpec& spec) : spec_(&spec) {
    const CoefficientSet& cs = spec.coefficients;
    for (int k = 0; k < 2; ++k) {
      handles_[k] = JumpMapHandle{cs.H[k], cs.eta[k]};
      d_nodes_[k] = FlowEngine::quadrature_nodes(spec.measures[k], SetTag::D);
      rho_on_[k] = !cs.rho[k].is_zero;
    }
    h_on_ = !cs.h.is_zero;
    upsilon_on_[0] = !cs.upsilon_zero(0);
    upsilon_on_[1] = !cs.upsilon_zero(1);
    trivial_ = cs.c.is_zero && cs.f.is_zero && cs.g.is_zero && !h_on_ &&
               !rho_on_[0] && !rho_on_[1] && !upsilon_on_[0] && !upsilon_on_[1];
  }

  /// True if the transform right-hand side vanishes identically, so
  /// Phi == phi(x), Psi == I, Gamma == 0 exactly.
  bool trivial() const { return trivial_; }

  /// Evolve (Phi, Psi, Gamma) along one flow trajectory. `traj` holds the
  /// post-jump states at the augmented-grid nodes, `traj_pre` the left
  /// limits (as produced by FlowEngine::simulate). Output has one state per
  /// node. phi0 = phi(x) for the starting point of the trajectory.
  void simulate(const PathNoise& path, const std::vector<Vec>& traj,
                const std::vector<Vec>& traj_pre, const Vec& phi0,
                std::vector<TransformState>* out,
                double inversion_tol = kJumpInversionTol) const {
    const CoefficientSet& cs = spec_->coefficients;
    const int d2 = cs.d2;
    Vec phi = phi0;
    Mat psi = Mat::Identity(d2, d2);
    Vec gamma = Vec::Zero(d2);
    out->clear();
    out->push_back({phi, psi, gamma});
    if (trivial_) {
      for (std::size_t i = 1; i < path.nodes.size(); ++i) {
        out->push_back({phi, psi, gamma});
      }
      return;
    }

    Mat uval(d2, d2), gval, rval(d2, d2), M(d2, d2);
    Vec fval(d2), hval(d2), v(d2);
    Vec y;
    std::size_t evt_i = 0;
    const std::size_t n = path.n_increment_steps();
    for (std::size_t i = 0; i < n; ++i) {
      const double t = path.nodes[i];
      const double dt = path.nodes[i + 1] - t;
      const Vec& x = traj[i];

      // drift matrix M = c(X) - sum_k int_D rho^k(Htilde^-1(X,z),z) pi^k
      // and drift vector v = f(X) - int_{D^1} h(Htilde^-1(X,z),z) pi^1.
      if (cs.c.is_zero) M.setZero(); else cs.c.eval(t, x, M);
      if (cs.f.is_zero) v.setZero(); else cs.f.eval(t, x, v);
      for (int k = 0; k < 2; ++k) {
        if (!rho_on_[k] && !(k == 0 && h_on_)) continue;
        for (const auto& [z, w] : d_nodes_[k]) {
          y = invert_jump_map(handles_[k], t, x, z, inversion_tol);
          if (rho_on_[k]) {
            cs.rho[k].eval(t, y, z, rval);
            M.noalias() -= w * rval;
          }
          if (k == 0 && h_on_) {
            cs.h.eval(t, y, z, hval);
            v.noalias() -= w * hval;
          }
        }
      }

      // Euler increments; the same linear update applies to all three
      // components (Psi and Gamma with their own free-term conventions).
      Mat L = M * dt;  // accumulated linear multiplier of the step
      Vec a = v * dt;  // accumulated affine part (Phi, Gamma only)
      for (int k = 0; k < 2; ++k) {
        if (upsilon_on_[k]) {
          const Family fam = (k == 0) ? Family::observed : Family::latent;
          for (int c = 0; c < path.channels; ++c) {
            const MatrixField& u = cs.upsilon[k][static_cast<std::size_t>(c)];
            if (u.is_zero) continue;
            u.eval(t, x, uval);
            L.noalias() += uval * path.increment(fam, i, c);
          }
        }
      }
      if (!cs.g.is_zero) {
        cs.g.eval(t, x, gval);
        for (int c = 0; c < path.channels; ++c) {
          a.noalias() += gval.col(c) * path.increment(Family::observed, i, c);
        }
      }

      phi += L * phi + a;
      gamma += L * gamma + a;
      psi += L * psi;

      // jumps at node i+1, evaluated at the flow's left limit
      Vec x_pre = traj_pre[i + 1];
      const double s = path.nodes[i + 1];
      while (evt_i < path.events.size() && path.events[evt_i].node == i + 1) {
        const PathEvent& e = path.events[evt_i];
        const int k = kidx(e.family);
        if (rho_on_[k] || (k == 0 && h_on_)) {
          y = invert_jump_map(handles_[k], s, x_pre, e.z, inversion_tol);
          if (rho_on_[k]) {
            cs.rho[k].eval(s, y, e.z, rval);
            phi += rval * phi;
            gamma += rval * gamma;
            psi += rval * psi;
          }
          if (k == 0 && h_on_) {
            cs.h.eval(s, y, e.z, hval);
            phi += hval;
            gamma += hval;
          }
        }
        // advance the left limit through this jump in case several events
        // share the node
        if (!cs.H[k].is_zero) {
          y = invert_jump_map(handles_[k], s, x_pre, e.z, inversion_tol);
          x_pre -= cs.H[k].eval(s, y, e.z);
        }
        ++evt_i;
      }

      if (!phi.allFinite() || !psi.allFinite() || !gamma.allFinite()) {
        throw NumericalError(
            "simulate_transform: non-finite state at node " +
            std::to_string(i + 1));
      }
      out->push_back({phi, psi, gamma});
    }
  }

 private:
  const ProblemSpec* spec_;
  JumpMapHandle handles_[2];
  std::vector<std::pair<double, double>> d_nodes_[2];
  bool rho_on_[2] = {false, false};
  bool upsilon_on_[2] = {false, false};
  bool h_on_ = false;
  bool trivial_ = true;
};

/// Convenience wrapper: simulate the flow from x and carry the transform
/// along it.
inline std::vector<TransformState> simulate_transform(
    const ProblemSpec& spec, const NoiseRealization& noise, const Vec& x) {
  spec.validate();
  const FlowEngine flow_engine(spec);
  const TransformEngine transform_engine(spec);
  const PathNoise path = build_path_noise(noise, 0.0, noise.base_grid.T);
  std::vector<Vec> traj, traj_pre;
  flow_engine.simulate(path, x, &traj, nullptr, &traj_pre);
  std::vector<TransformState> states;
  transform_engine.simulate(path, traj, traj_pre, spec.phi.eval(0.0, x),
                            &states);
  return states;
}

/// Explicit exponential form of the scalar fundamental solution (d2 = 1,
/// g = h = 0, rho > -1): the product of
///   exp( int (c - 1/2 sum |upsilon|^2) ds + sum int upsilon dW ),
///   exp( sum_k int int_{D^k} (ln(1+rho o Htilde^-1) - rho o Htilde^-1) pi ds ),
///   exp( sum_k [ sum_{events in D u E} ln(1+rho o Htilde^-1)
///                - int int_{D^k} ln(1+rho o Htilde^-1) pi ds ] ),
/// accumulated along the supplied flow trajectory with the same left-point
/// rule and event handling as the Euler scheme. Returns Psi at every node.
inline std::vector<double> scalar_psi_closed_form(
    const ProblemSpec& spec, const PathNoise& path,
    const std::vector<Vec>& traj, const std::vector<Vec>& traj_pre,
    double inversion_tol = kJumpInversionTol) {
  const CoefficientSet& cs = spec.coefficients;
  if (cs.d2 != 1) {
    throw ConfigurationError("scalar_psi_closed_form: requires d2 = 1");
  }
  if (!cs.g.is_zero || !cs.h.is_zero) {
    throw ConfigurationError("scalar_psi_closed_form: requires g = h = 0");
  }
  JumpMapHandle handles[2] = {JumpMapHandle{cs.H[0], cs.eta[0]},
                              JumpMapHandle{cs.H[1], cs.eta[1]}};
  std::vector<std::pair<double, double>> d_nodes[2] = {
      FlowEngine::quadrature_nodes(spec.measures[0], SetTag::D),
      FlowEngine::quadrature_nodes(spec.measures[1], SetTag::D)};

  std::vector<double> psi;
  psi.reserve(path.nodes.size());
  double expo = 0.0;
  psi.push_back(1.0);
  Mat rval(1, 1), uval(1, 1), cval(1, 1);
  Vec y;
  std::size_t evt_i = 0;
  const std::size_t n = path.n_increment_steps();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = path.nodes[i];
    const double dt = path.nodes[i + 1] - t;
    const Vec& x = traj[i];

    double drift = 0.0;
    if (!cs.c.is_zero) {
      cs.c.eval(t, x, cval);
      drift += cval(0, 0);
    }
    for (int k = 0; k < 2; ++k) {
      const Family fam = (k == 0) ? Family::observed : Family::latent;
      for (int ch = 0; ch < path.channels; ++ch) {
        const MatrixField& u = cs.upsilon[k][static_cast<std::size_t>(ch)];
        if (u.is_zero) continue;
        u.eval(t, x, uval);
        drift -= 0.5 * uval(0, 0) * uval(0, 0);
        expo += uval(0, 0) * path.increment(fam, i, ch);
      }
      if (!cs.rho[k].is_zero) {
        for (const auto& [z, w] : d_nodes[k]) {
          y = invert_jump_map(handles[k], t, x, z, inversion_tol);
          cs.rho[k].eval(t, y, z, rval);
          const double r = rval(0, 0);
          if (r <= -1.0) {
            throw NumericalError(
                "scalar_psi_closed_form: rho <= -1 in the D-compensator");
          }
          // (ln(1+r) - r) from the compensator factor, minus ln(1+r) from
          // the q-compensation of the jump factor: net drift -r.
          drift += w * ((std::log1p(r) - r) - std::log1p(r));
        }
      }
    }
    expo += drift * dt;

    Vec x_pre = traj_pre[i + 1];
    const double s = path.nodes[i + 1];
    while (evt_i < path.events.size() && path.events[evt_i].node == i + 1) {
      const PathEvent& e = path.events[evt_i];
      const int k = kidx(e.family);
      if (!cs.rho[k].is_zero && (e.tag == SetTag::D || e.tag == SetTag::E)) {
        y = invert_jump_map(handles[k], s, x_pre, e.z, inversion_tol);
        cs.rho[k].eval(s, y, e.z, rval);
        const double r = rval(0, 0);
        if (r <= -1.0) {
          throw NumericalError(
              "scalar_psi_closed_form: rho = -1 at event t=" +
              std::to_string(s));
        }
        expo += std::log1p(r);
      }
      if (!cs.H[k].is_zero) {
        y = invert_jump_map(handles[k], s, x_pre, e.z, inversion_tol);
        x_pre -= cs.H[k].eval(s, y, e.z);
      }
      ++evt_i;
    }
    psi.push_back(std::exp(expo));
  }
  return psi;
}

/// Maximal nodewise defect of the pathwise identity Phi = Psi phi + Gamma.
inline double decomposition_check(const std::vector<TransformState>& states,
                                  const Vec& phi0) {
  double defect = 0.0;
  for (const TransformState& s : states) {
    defect = std::max(
        defect, (s.phi - (s.psi * phi0 + s.gamma)).lpNorm<Eigen::Infinity>());
  }
  return defect;
}

}  // namespace sidemc
