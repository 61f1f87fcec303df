// Tests for the characteristic-flow simulation: exact constant-coefficient
// cases, the variational Jacobian, compensated jump drift, Newton flow
// inversion, monotonicity, and strong convergence order.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sidemc/flow.hpp"

using namespace sidemc;

namespace {

NoiseRealization empty_noise(const TimeGrid& grid, int channels,
                             std::uint64_t seed_obs = 1,
                             std::uint64_t seed_lat = 2) {
  return sample_noise(grid, channels, JumpMeasureSpec{}, JumpMeasureSpec{},
                      seed_obs, seed_lat);
}

}  // namespace

TEST_CASE("zero problem: flow is constant, Jacobian is the identity") {
  const TimeGrid grid = TimeGrid::uniform(1.0, 16);
  ProblemSpec spec = ProblemSpec::zero(2, 1, 1, 1.5, 1.0);
  const NoiseRealization noise = empty_noise(grid, 1);
  const std::vector<Vec> pts = {Vec::Constant(2, 0.7), Vec::Constant(2, -1.0)};
  const FlowResult flow = simulate_flow(spec, noise, pts, true);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    for (std::size_t i = 0; i < flow.path->nodes.size(); ++i) {
      REQUIRE((flow.trajectory[p][i] - pts[p]).lpNorm<Eigen::Infinity>() == 0.0);
      REQUIRE((flow.jacobian[p][i] - Mat::Identity(2, 2))
                  .lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
}

TEST_CASE("constant drift: X_T(x) = x - T exactly") {
  const TimeGrid grid = TimeGrid::uniform(1.0, 100);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, 1.0);
  spec.coefficients.b = VectorField::constant(Vec::Constant(1, 1.0), "b");
  const NoiseRealization noise = empty_noise(grid, 1);
  const std::vector<Vec> pts = {Vec::Constant(1, 0.25)};
  const FlowResult flow = simulate_flow(spec, noise, pts, false);
  REQUIRE(flow.trajectory[0].back()[0] ==
          Catch::Approx(0.25 - 1.0).margin(1e-13));
}

TEST_CASE("drift is inactive for alpha below 1") {
  const TimeGrid grid = TimeGrid::uniform(1.0, 10);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 0.5, 1.0);
  spec.coefficients.b = VectorField::constant(Vec::Constant(1, 1.0), "b");
  const NoiseRealization noise = empty_noise(grid, 1);
  const FlowResult flow =
      simulate_flow(spec, noise, {Vec::Constant(1, 0.25)}, false);
  REQUIRE(flow.trajectory[0].back()[0] == 0.25);
}

TEST_CASE("constant latent diffusion: X_T = x + W2_T") {
  const TimeGrid grid = TimeGrid::uniform(0.5, 64);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 2.0, 0.5);
  spec.coefficients.sigma[1] = MatrixField::constant(Mat::Constant(1, 1, 1.0),
                                                     "sigma2");
  const NoiseRealization noise = empty_noise(grid, 1, 3u, 4u);
  const WienerLattice lat(grid, Family::latent, 1, 4u);
  const FlowResult flow =
      simulate_flow(spec, noise, {Vec::Constant(1, -0.4)}, true);
  REQUIRE(flow.trajectory[0].back()[0] ==
          Catch::Approx(-0.4 + lat.value(0, 0.5)).margin(1e-12));
  // constant diffusion: Jacobian stays the identity
  REQUIRE(flow.jacobian[0].back()(0, 0) == 1.0);
  REQUIRE(flow.engine->translation_invariant());
}

TEST_CASE("linear drift Jacobian matches the scalar ODE") {
  // Oracle: b(x) = a x with alpha = 1 gives dX = -aX dt, so
  // grad X_T = e^{-aT}; Euler converges at order 1 in dt.
  const double a = 0.8, T = 1.0;
  const TimeGrid grid = TimeGrid::uniform(T, 2000);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, T);
  spec.coefficients.b = VectorField::of(
      1, [a](double, const Vec& x, Vec& out) { out[0] = a * x[0]; }, false, "b");
  const NoiseRealization noise = empty_noise(grid, 1);
  const FlowResult flow =
      simulate_flow(spec, noise, {Vec::Constant(1, 0.3)}, true);
  REQUIRE(flow.jacobian[0].back()(0, 0) ==
          Catch::Approx(std::exp(-a * T)).epsilon(1e-3));
}

TEST_CASE("compensated constant jumps: X_T = x + lam*c*T - c*N_T") {
  // Oracle: one D-atom with rate lam and constant H = c, alpha = 2:
  // the compensator drift adds +lam*c per unit time (H o Htilde^-1 = c) and
  // each event jumps the state by -c.
  const double lam = 3.0, c = 0.4, T = 1.0;
  const TimeGrid grid = TimeGrid::uniform(T, 50);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 2.0, T);
  spec.measures[0].atoms.push_back({1.0, lam, SetTag::D});
  spec.coefficients.H[0] = VectorJumpField::of(
      1, [c](double, const Vec&, double, Vec& out) { out[0] = c; }, true, "H1");
  const NoiseRealization noise =
      sample_noise(grid, 1, spec.measures[0], JumpMeasureSpec{}, 17u, 18u);
  const double n_events =
      static_cast<double>(noise.events_observed.events.size());
  const FlowResult flow =
      simulate_flow(spec, noise, {Vec::Constant(1, 0.0)}, false);
  REQUIRE(flow.trajectory[0].back()[0] ==
          Catch::Approx(lam * c * T - c * n_events).margin(1e-10));
}

TEST_CASE("uncompensated jumps for alpha <= 1") {
  // For alpha = 0.5 the D-compensator indicator 1_{(1,2]} is off: only the
  // raw jumps act.
  const double lam = 3.0, c = 0.4, T = 1.0;
  const TimeGrid grid = TimeGrid::uniform(T, 50);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 0.5, T);
  spec.measures[0].atoms.push_back({1.0, lam, SetTag::D});
  spec.coefficients.H[0] = VectorJumpField::of(
      1, [c](double, const Vec&, double, Vec& out) { out[0] = c; }, true, "H1");
  const NoiseRealization noise =
      sample_noise(grid, 1, spec.measures[0], JumpMeasureSpec{}, 17u, 18u);
  const double n_events =
      static_cast<double>(noise.events_observed.events.size());
  const FlowResult flow =
      simulate_flow(spec, noise, {Vec::Constant(1, 0.0)}, false);
  REQUIRE(flow.trajectory[0].back()[0] ==
          Catch::Approx(-c * n_events).margin(1e-12));
}

TEST_CASE("flow inversion: identity and translation flows") {
  const TimeGrid grid = TimeGrid::uniform(1.0, 20);
  const NoiseRealization noise = empty_noise(grid, 1);

  ProblemSpec idspec = ProblemSpec::zero(1, 1, 1, 1.0, 1.0);
  std::vector<Vec> seeds;
  for (int i = -5; i <= 5; ++i) seeds.push_back(Vec::Constant(1, 0.5 * i));
  const FlowResult idflow = simulate_flow(idspec, noise, seeds, true);
  const Vec q = Vec::Constant(1, 0.77);
  REQUIRE(invert_flow(idflow, 1.0, q)[0] == Catch::Approx(0.77).margin(1e-10));

  ProblemSpec trspec = ProblemSpec::zero(1, 1, 1, 1.0, 1.0);
  trspec.coefficients.b = VectorField::constant(Vec::Constant(1, 1.0), "b");
  const FlowResult trflow = simulate_flow(trspec, noise, seeds, true);
  REQUIRE(invert_flow(trflow, 1.0, q)[0] ==
          Catch::Approx(0.77 + 1.0).margin(1e-10));
}

TEST_CASE("flow inversion round trip on a nonlinear drift") {
  // b(x) = sin x, alpha = 1. The inverse is checked by the round-trip
  // property |X_T(X_T^{-1}(x)) - x| <= 10 tol under the same noise.
  const TimeGrid grid = TimeGrid::uniform(1.0, 200);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, 1.0);
  spec.coefficients.b = VectorField::of(
      1, [](double, const Vec& x, Vec& out) { out[0] = std::sin(x[0]); },
      false, "b");
  const NoiseRealization noise = empty_noise(grid, 1);
  std::vector<Vec> seeds;
  for (int i = 0; i < 21; ++i) seeds.push_back(Vec::Constant(1, -3.0 + 0.3 * i));
  const FlowResult flow = simulate_flow(spec, noise, seeds, true);

  for (const double qx : {-2.0, -0.3, 0.9, 2.4}) {
    const Vec y = invert_flow(flow, 1.0, Vec::Constant(1, qx), 1e-10);
    std::vector<Vec> traj;
    flow.engine->simulate(*flow.path, y, &traj, nullptr);
    REQUIRE(std::abs(traj.back()[0] - qx) <= 1e-9);
  }

  // d1 = 1 small-jump regime: the flow is strictly increasing on the mesh.
  const std::size_t last = flow.path->nodes.size() - 1;
  for (std::size_t p = 0; p + 1 < seeds.size(); ++p) {
    REQUIRE(flow.trajectory[p][last][0] < flow.trajectory[p + 1][last][0]);
  }
}

TEST_CASE("strong convergence order of the drift scheme") {
  // Endpoint error vs a dt = 1e-5 reference decays with order >= 0.9 for
  // b(x) = sin x.
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, 1.0);
  spec.coefficients.b = VectorField::of(
      1, [](double, const Vec& x, Vec& out) { out[0] = std::sin(x[0]); },
      false, "b");
  const Vec x0 = Vec::Constant(1, 1.1);

  const auto endpoint = [&](int n_steps) {
    const TimeGrid grid = TimeGrid::uniform(1.0, n_steps);
    const NoiseRealization noise = empty_noise(grid, 1);
    const FlowResult flow = simulate_flow(spec, noise, {x0}, false);
    return flow.trajectory[0].back()[0];
  };

  const double ref = endpoint(100000);
  const double e1 = std::abs(endpoint(100) - ref);
  const double e2 = std::abs(endpoint(200) - ref);
  const double e3 = std::abs(endpoint(400) - ref);
  const double order12 = std::log2(e1 / e2);
  const double order23 = std::log2(e2 / e3);
  REQUIRE(order12 >= 0.9);
  REQUIRE(order23 >= 0.9);
}

TEST_CASE("jacobian via events: constant H leaves grad X unchanged") {
  const TimeGrid grid = TimeGrid::uniform(1.0, 20);
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 0.5, 1.0);
  spec.measures[0].atoms.push_back({1.0, 2.0, SetTag::E});
  spec.coefficients.H[0] = VectorJumpField::of(
      1, [](double, const Vec&, double, Vec& out) { out[0] = 0.3; }, true, "H1");
  const NoiseRealization noise =
      sample_noise(grid, 1, spec.measures[0], JumpMeasureSpec{}, 9u, 10u);
  const FlowResult flow =
      simulate_flow(spec, noise, {Vec::Constant(1, 0.0)}, true);
  REQUIRE(flow.jacobian[0].back()(0, 0) == Catch::Approx(1.0).margin(1e-14));
}
