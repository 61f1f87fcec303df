#pragma once
//
// Problem specification: every coefficient field of one SIDE system, the
// jump measures of both noise families, the initial condition, and the
// numerical audit of the standing assumptions (boundedness, contraction of
// the jump maps, integrability of the jump envelopes).
//

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sidemc/common.hpp"
#include "sidemc/fields.hpp"
#include "sidemc/noise.hpp"

namespace sidemc {

/// Weight function r1(x) = sqrt(1 + |x|^2).
inline double weight_r1(const Vec& x) { return std::sqrt(1.0 + x.squaredNorm()); }

/// Array index for family k in {observed=1, latent=2}.
inline int kidx(Family f) { return family_index(f) - 1; }

/// Growth metadata: envelopes dominating the jump coefficients in the mark
/// variable, and the large-jump exponents on the V-set. These are declared
/// by the problem author and *audited* (grid maxima), never assumed.
struct GrowthMetadata {
  /// K^k(z): envelope for |H^k(t,x,z)| (position-jump size).
  std::function<double(double)> K[2];
  /// Kbar^k(z): envelope for |rho^k| and |r1^{-theta} h|.
  std::function<double(double)> Kbar[2];
  /// l^k(z): envelope for the zero-order jump coefficients on E.
  std::function<double(double)> l[2];
  /// Large-jump exponents on V (observed family only).
  double xi = 0.0;
  double zeta = 0.0;

  GrowthMetadata() {
    for (int k = 0; k < 2; ++k) {
      K[k] = [](double) { return 0.0; };
      Kbar[k] = [](double) { return 0.0; };
      l[k] = [](double) { return 0.0; };
    }
  }
};

/// All coefficient fields of one SIDE system. Index [k]: 0 = observed
/// family (k=1), 1 = latent family (k=2).
struct CoefficientSet {
  int d1 = 1;          ///< state-space dimension
  int d2 = 1;          ///< system (solution) dimension
  int channels = 1;    ///< Wiener channel truncation rho_max
  double alpha = 2.0;  ///< small-jump integrability order in (0, 2]

  VectorField b;                         ///< drift, (t,x) -> R^{d1}
  MatrixField sigma[2];                  ///< diffusion, (t,x) -> d1 x channels
  std::vector<MatrixField> upsilon[2];   ///< per channel, (t,x) -> d2 x d2
  MatrixField c;                         ///< zero-order coupling, d2 x d2
  VectorField f;                         ///< free drift term, R^{d2}
  MatrixField g;                         ///< free Wiener term, d2 x channels
  VectorJumpField H[2];                  ///< position jump, (t,x,z) -> R^{d1}
  MatrixJumpField rho[2];                ///< zero-order jump, d2 x d2
  VectorJumpField h;                     ///< free jump term, R^{d2}

  double theta = 0.0;   ///< weight exponent for f, g, h
  double eta[2] = {0.5, 0.5};  ///< declared contraction bounds |grad H^k| <= eta^k
  double N0 = 10.0;     ///< declared uniform bound for the audited constants
  GrowthMetadata growth;

  /// All-zero coefficient set of the given shape.
  static CoefficientSet zero(int d1, int d2, int channels, double alpha) {
    if (d1 < 1 || d2 < 1 || channels < 1 || !(alpha > 0.0) || alpha > 2.0) {
      throw ConfigurationError(
          "CoefficientSet: need d1,d2,channels >= 1 and alpha in (0,2]");
    }
    CoefficientSet s;
    s.d1 = d1;
    s.d2 = d2;
    s.channels = channels;
    s.alpha = alpha;
    s.b = VectorField::zero(d1, "b");
    s.c = MatrixField::zero(d2, d2, "c");
    s.f = VectorField::zero(d2, "f");
    s.g = MatrixField::zero(d2, channels, "g");
    s.h = VectorJumpField::zero(d2, "h");
    for (int k = 0; k < 2; ++k) {
      const std::string sk = std::to_string(k + 1);
      s.sigma[k] = MatrixField::zero(d1, channels, "sigma" + sk);
      s.H[k] = VectorJumpField::zero(d1, "H" + sk);
      s.rho[k] = MatrixJumpField::zero(d2, d2, "rho" + sk);
      s.upsilon[k].assign(static_cast<std::size_t>(channels),
                          MatrixField::zero(d2, d2, "upsilon" + sk));
    }
    return s;
  }

  /// True if every upsilon channel of family k vanishes identically.
  bool upsilon_zero(int k) const {
    for (const MatrixField& u : upsilon[k]) {
      if (!u.is_zero) return false;
    }
    return true;
  }

  /// Indicator 1_{[1,2]}(alpha): the raw drift b participates.
  bool drift_active() const { return alpha >= 1.0; }
  /// Indicator 1_{{2}}(alpha): the diffusion participates.
  bool diffusion_active() const { return alpha == 2.0; }
  /// Indicator 1_{(1,2]}(alpha): D-jumps of the flow are compensated.
  bool flow_jump_compensated() const { return alpha > 1.0; }
};

/// Full problem: coefficients, jump measures per family, horizon, initial
/// condition phi with its weight theta' and smoothness tag beta'.
struct ProblemSpec {
  CoefficientSet coefficients;
  JumpMeasureSpec measures[2];
  double T = 1.0;
  VectorField phi;            ///< x -> R^{d2} (the t argument is ignored)
  double theta_prime = 0.0;   ///< weight exponent of phi
  double beta_prime = 1.2;    ///< smoothness tag of phi; must exceed alpha

  static ProblemSpec zero(int d1, int d2, int channels, double alpha, double T) {
    ProblemSpec spec;
    spec.coefficients = CoefficientSet::zero(d1, d2, channels, alpha);
    spec.T = T;
    spec.phi = VectorField::zero(d2, "phi");
    return spec;
  }

  void validate() const {
    if (!(T > 0.0)) throw ConfigurationError("ProblemSpec: horizon T must be > 0");
    if (phi.dim != coefficients.d2) {
      throw ConfigurationError("ProblemSpec: phi dimension must equal d2");
    }
  }
};

/// Coherent evaluation of every (t,x) coefficient field at one point.
struct CoefficientValues {
  Vec b;
  Mat sigma[2];
  std::vector<Mat> upsilon[2];
  Mat c;
  Vec f;
  Mat g;
};

inline CoefficientValues evaluate_coefficients(const ProblemSpec& spec,
                                               double t, const Vec& x) {
  if (t < 0.0 || t > spec.T + 1e-12) {
    throw ConfigurationError("evaluate_coefficients: t outside [0, T]");
  }
  const CoefficientSet& cs = spec.coefficients;
  CoefficientValues v;
  v.b = cs.b.eval(t, x);
  v.c = cs.c.eval(t, x);
  v.f = cs.f.eval(t, x);
  v.g = cs.g.eval(t, x);
  for (int k = 0; k < 2; ++k) {
    v.sigma[k] = cs.sigma[k].eval(t, x);
    v.upsilon[k].reserve(cs.upsilon[k].size());
    for (const MatrixField& u : cs.upsilon[k]) {
      v.upsilon[k].push_back(u.eval(t, x));
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Assumption audit
// ---------------------------------------------------------------------------

/// Finite audit grid: times, spatial points, and representative marks per
/// family (atoms, or quadrature nodes of the density segments).
struct AuditGrid {
  std::vector<double> times;
  std::vector<Vec> points;

  /// Equispaced 1-d audit grid (each point is a d1-vector with all
  /// coordinates equal for d1 > 1 — a diagonal probe line).
  static AuditGrid line(int d1, double lo, double hi, int n, double t0,
                        double t1, int nt) {
    AuditGrid g;
    for (int i = 0; i < nt; ++i) {
      g.times.push_back(nt == 1 ? t0 : t0 + (t1 - t0) * i / (nt - 1));
    }
    for (int i = 0; i < n; ++i) {
      const double v = (n == 1) ? lo : lo + (hi - lo) * i / (n - 1);
      g.points.push_back(Vec::Constant(d1, v));
    }
    return g;
  }
};

/// Representative marks of one measure for the audit (with tags).
inline std::vector<std::pair<double, SetTag>> audit_marks(
    const JumpMeasureSpec& m) {
  std::vector<std::pair<double, SetTag>> marks;
  if (m.mode == JumpMeasureSpec::Mode::finite_atoms) {
    for (const JumpAtom& a : m.atoms) marks.emplace_back(a.z, a.tag);
    return marks;
  }
  for (const DensitySegment& seg : m.segments) {
    double lo = 0.0, hi = 0.0;
    if (!detail::restricted_range(seg, m.small_jump_cutoff, lo, hi)) continue;
    const int n = 33;
    for (int i = 0; i <= n; ++i) {
      marks.emplace_back(lo + (hi - lo) * i / n, seg.tag);
    }
  }
  return marks;
}

/// One audited clause: the empirical constant (grid max of the governed
/// quantity), the declared bound, and the verdict.
struct AssumptionClause {
  std::string name;
  double empirical = 0.0;
  double bound = 0.0;
  bool pass = true;
};

struct AssumptionReport {
  std::vector<AssumptionClause> clauses;
  /// Integrability sums per family: int_D (K^alpha + Kbar^2) pi and
  /// int_E (K^{1 and alpha} + Kbar) pi.
  double integrability_D[2] = {0.0, 0.0};
  double integrability_E[2] = {0.0, 0.0};

  bool all_pass() const {
    for (const AssumptionClause& c : clauses) {
      if (!c.pass) return false;
    }
    return true;
  }
  const AssumptionClause* find(const std::string& name) const {
    for (const AssumptionClause& c : clauses) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

/// Numerically audit the standing assumptions on a finite grid. Report-only:
/// failures are flags, never exceptions.
inline AssumptionReport verify_assumptions(const ProblemSpec& spec,
                                           const AuditGrid& grid) {
  const CoefficientSet& cs = spec.coefficients;
  AssumptionReport rep;

  const auto clause = [&](const std::string& name, double empirical,
                          double bound) {
    rep.clauses.push_back({name, empirical, bound, empirical <= bound + 1e-12});
  };

  double b_weighted = 0.0, grad_b = 0.0;
  double sig_max[2] = {0.0, 0.0}, grad_sig[2] = {0.0, 0.0};
  double ups_max[2] = {0.0, 0.0};
  double c_max = 0.0;
  double fgh_weighted = 0.0;
  double grad_H[2] = {0.0, 0.0};
  double inv_grad_H[2] = {0.0, 0.0};
  double rho_max[2] = {0.0, 0.0};
  double envelope_defect = 0.0;  // max over grid of |field| - envelope

  Mat jac, m, dm;
  Vec vec;
  std::vector<std::vector<std::pair<double, SetTag>>> marks = {
      audit_marks(spec.measures[0]), audit_marks(spec.measures[1])};

  for (const double t : grid.times) {
    for (const Vec& x : grid.points) {
      const double w1 = 1.0 / weight_r1(x);
      const double wth = std::pow(weight_r1(x), -cs.theta);

      cs.b.eval(t, x, vec);
      b_weighted = std::max(b_weighted, w1 * vec.lpNorm<Eigen::Infinity>());
      cs.b.jacobian(t, x, jac);
      grad_b = std::max(grad_b, jac.lpNorm<Eigen::Infinity>());

      cs.c.eval(t, x, m);
      c_max = std::max(c_max, m.lpNorm<Eigen::Infinity>());

      cs.f.eval(t, x, vec);
      fgh_weighted = std::max(fgh_weighted, wth * vec.lpNorm<Eigen::Infinity>());
      cs.g.eval(t, x, m);
      fgh_weighted = std::max(fgh_weighted, wth * m.lpNorm<Eigen::Infinity>());

      for (int k = 0; k < 2; ++k) {
        cs.sigma[k].eval(t, x, m);
        sig_max[k] = std::max(sig_max[k], m.lpNorm<Eigen::Infinity>());
        for (int j = 0; j < cs.d1; ++j) {
          cs.sigma[k].derivative_x(t, x, j, dm);
          grad_sig[k] = std::max(grad_sig[k], dm.lpNorm<Eigen::Infinity>());
        }
        for (const MatrixField& u : cs.upsilon[k]) {
          u.eval(t, x, m);
          ups_max[k] = std::max(ups_max[k], m.lpNorm<Eigen::Infinity>());
        }
        for (const auto& [z, tag] : marks[static_cast<std::size_t>(k)]) {
          cs.H[k].eval(t, x, z, vec);
          const double hn = vec.norm();
          envelope_defect =
              std::max(envelope_defect, hn - cs.growth.K[k](z));
          cs.rho[k].eval(t, x, z, m);
          rho_max[k] = std::max(rho_max[k], m.lpNorm<Eigen::Infinity>());
          envelope_defect = std::max(
              envelope_defect, m.lpNorm<Eigen::Infinity>() - cs.growth.Kbar[k](z));
          if (tag != SetTag::V) {
            cs.H[k].jacobian(t, x, z, jac);
            grad_H[k] = std::max(grad_H[k], jac.lpNorm<Eigen::Infinity>());
            const Mat inv = (Mat::Identity(cs.d1, cs.d1) + jac).inverse();
            inv_grad_H[k] =
                std::max(inv_grad_H[k], inv.lpNorm<Eigen::Infinity>());
          }
          if (k == 0) {
            cs.h.eval(t, x, z, vec);
            const double hh = wth * vec.lpNorm<Eigen::Infinity>();
            fgh_weighted = std::max(fgh_weighted, hh);
            envelope_defect =
                std::max(envelope_defect, hh - cs.growth.Kbar[k](z));
          }
        }
      }
    }
  }

  clause("weighted drift bound |r1^-1 b|_0", b_weighted, cs.N0);
  clause("drift gradient |grad b|_0", grad_b, cs.N0);
  clause("zero-order bound |c|_0", c_max, cs.N0);
  clause("weighted free terms |r1^-theta (f,g,h)|_0", fgh_weighted, cs.N0);
  for (int k = 0; k < 2; ++k) {
    const std::string sk = std::to_string(k + 1);
    clause("diffusion bound |sigma" + sk + "|_0", sig_max[k], cs.N0);
    clause("diffusion gradient |grad sigma" + sk + "|_0", grad_sig[k], cs.N0);
    clause("zero-order Wiener bound |upsilon" + sk + "|_0", ups_max[k], cs.N0);
    clause("zero-order jump bound |rho" + sk + "|_0", rho_max[k], cs.N0);
    clause("jump contraction |grad H" + sk + "| <= eta" + sk, grad_H[k],
           cs.eta[k]);
    // Neumann-series bound in the contraction regime.
    const double neumann =
        cs.eta[k] < 1.0 ? 1.0 / (1.0 - cs.eta[k]) : cs.N0;
    clause("jump-map inverse gradient |(I+grad H" + sk + ")^-1|",
           inv_grad_H[k], std::max(neumann, 1.0) + 1e-9);
  }
  clause("envelope domination (K, Kbar over sampled fields)",
         envelope_defect, 0.0);

  // Integrability sums via compensator quadrature of the envelopes.
  const double a = cs.alpha;
  for (int k = 0; k < 2; ++k) {
    const auto& K = cs.growth.K[k];
    const auto& Kb = cs.growth.Kbar[k];
    rep.integrability_D[k] = compensator_quadrature(
        [&](double z) { return std::pow(K(z), a) + Kb(z) * Kb(z); },
        spec.measures[k], SetTag::D);
    rep.integrability_E[k] = compensator_quadrature(
        [&](double z) { return std::pow(K(z), std::min(1.0, a)) + Kb(z); },
        spec.measures[k], SetTag::E);
    clause("integrability int_D (K^alpha + Kbar^2) pi, family " +
               std::to_string(k + 1),
           rep.integrability_D[k],
           std::numeric_limits<double>::infinity());
    clause("integrability int_E (K^(1^alpha) + Kbar) pi, family " +
               std::to_string(k + 1),
           rep.integrability_E[k],
           std::numeric_limits<double>::infinity());
  }

  return rep;
}

}  // namespace sidemc
