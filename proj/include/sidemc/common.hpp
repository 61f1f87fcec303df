#pragma once
//
// Shared aliases and error types for the SIDE Monte Carlo library.
//
// The library solves systems of linear parabolic stochastic
// integro-differential equations driven by Wiener processes and Poisson
// random measures by the method of stochastic characteristics:
// simulate the characteristic jump-SDE flow, invert it, carry the linear
// Feynman-Kac transform along characteristics, average over the latent
// noise family, and interlace large jumps.
//

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sidemc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when an input specification is structurally invalid
/// (bad grids, infinite restricted jump mass, shape mismatches, ...).
class ConfigurationError : public std::runtime_error {
 public:
  explicit ConfigurationError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Raised when a numerical procedure fails to meet its contract
/// (non-convergent inversion, quadrature error above tolerance,
/// non-finite state, too many discarded replicas, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Raised when a coefficient field cannot be evaluated at a point.
class EvaluationError : public std::runtime_error {
 public:
  explicit EvaluationError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Noise families: the observed family (k=1) generates the filtration the
/// solution is measurable against; the latent family (k=2) is averaged out
/// by the conditional-expectation estimator.
enum class Family : int { observed = 1, latent = 2 };

inline int family_index(Family f) { return static_cast<int>(f); }

/// Mark-set partition tags. D carries compensated (martingale) integrals,
/// E carries raw-Poisson integrals, V is the finite-mass large-jump set and
/// exists only for the observed family.
enum class SetTag : int { D = 0, E = 1, V = 2 };

inline const char* set_tag_name(SetTag s) {
  switch (s) {
    case SetTag::D: return "D";
    case SetTag::E: return "E";
    case SetTag::V: return "V";
  }
  return "?";
}

}  // namespace sidemc
