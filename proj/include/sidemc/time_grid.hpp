#pragma once
//
// Time discretization of the horizon [0, T].
//

#include <cmath>
#include <limits>
#include <vector>

#include "sidemc/common.hpp"

namespace sidemc {

/// Quasi-uniform partition 0 = s_0 < s_1 < ... < s_n = T of the horizon.
/// This is the *base* grid; simulation grids are built by augmenting it
/// with sampled jump-event times (see PathNoise).
struct TimeGrid {
  double t0 = 0.0;
  double T = 0.0;
  int n_steps = 0;
  std::vector<double> nodes;

  /// Uniform grid with n_steps steps on [0, T].
  static TimeGrid uniform(double T, int n_steps) {
    if (!(T > 0.0) || n_steps < 1) {
      throw ConfigurationError("TimeGrid: need T > 0 and n_steps >= 1");
    }
    TimeGrid g;
    g.T = T;
    g.n_steps = n_steps;
    g.nodes.resize(static_cast<std::size_t>(n_steps) + 1);
    for (int i = 0; i <= n_steps; ++i) {
      g.nodes[static_cast<std::size_t>(i)] =
          T * static_cast<double>(i) / static_cast<double>(n_steps);
    }
    g.nodes.front() = 0.0;
    g.nodes.back() = T;
    return g;
  }

  /// Validate the structural invariants: strictly increasing nodes,
  /// endpoints 0 and T, and quasi-uniformity (max step <= 2 * min step).
  void validate() const {
    if (nodes.size() < 2 || n_steps + 1 != static_cast<int>(nodes.size())) {
      throw ConfigurationError("TimeGrid: node count inconsistent with n_steps");
    }
    if (nodes.front() != 0.0 || nodes.back() != T) {
      throw ConfigurationError("TimeGrid: endpoints must be 0 and T");
    }
    double min_step = std::numeric_limits<double>::infinity();
    double max_step = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      const double dt = nodes[i + 1] - nodes[i];
      if (!(dt > 0.0)) {
        throw ConfigurationError("TimeGrid: nodes must be strictly increasing");
      }
      min_step = std::min(min_step, dt);
      max_step = std::max(max_step, dt);
    }
    if (max_step > 2.0 * min_step * (1.0 + 1e-12)) {
      throw ConfigurationError("TimeGrid: grid is not quasi-uniform");
    }
  }

  /// Index i of the step [s_i, s_{i+1}) containing t; the terminal node T
  /// maps to the last step.
  int step_of(double t) const {
    if (t <= nodes.front()) return 0;
    if (t >= nodes.back()) return n_steps - 1;
    // Binary search over the sorted node vector.
    int lo = 0, hi = n_steps;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (nodes[static_cast<std::size_t>(mid)] <= t) lo = mid; else hi = mid;
    }
    return lo;
  }
};

}  // namespace sidemc
