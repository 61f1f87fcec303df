// Tests for the transform carried along the characteristic flow: exact
// constant-coefficient cases, the scalar exponential closed form, the
// pathwise decomposition identity, and positivity of the scalar
// fundamental solution.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sidemc/transform.hpp"

using namespace sidemc;

namespace {

NoiseRealization empty_noise(const TimeGrid& grid, int channels,
                             std::uint64_t seed_obs = 1,
                             std::uint64_t seed_lat = 2) {
  return sample_noise(grid, channels, JumpMeasureSpec{}, JumpMeasureSpec{},
                      seed_obs, seed_lat);
}

VectorField const_phi(int d2, double v) {
  return VectorField::constant(Vec::Constant(d2, v), "phi");
}

// Simulate flow + transform and return the node states together with the
// path (needed by closed-form comparisons).
struct Run {
  PathNoise path;
  std::vector<Vec> traj, traj_pre;
  std::vector<TransformState> states;
};

Run run_transform(const ProblemSpec& spec, const NoiseRealization& noise,
                  const Vec& x) {
  Run r;
  r.path = build_path_noise(noise, 0.0, noise.base_grid.T);
  const FlowEngine fe(spec);
  fe.simulate(r.path, x, &r.traj, nullptr, &r.traj_pre);
  const TransformEngine te(spec);
  te.simulate(r.path, r.traj, r.traj_pre, spec.phi.eval(0.0, x), &r.states);
  return r;
}

}  // namespace

TEST_CASE("zero coefficients: the transform is constant") {
  const TimeGrid grid = TimeGrid::uniform(1.0, 16);
  ProblemSpec spec = ProblemSpec::zero(1, 2, 1, 1.5, 1.0);
  spec.phi = const_phi(2, 0.7);
  const NoiseRealization noise = empty_noise(grid, 1);
  const TransformEngine te(spec);
  REQUIRE(te.trivial());
  const auto states = simulate_transform(spec, noise, Vec::Constant(1, 0.3));
  for (const TransformState& s : states) {
    REQUIRE((s.phi - Vec::Constant(2, 0.7)).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE((s.psi - Mat::Identity(2, 2)).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE(s.gamma.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("constant c: Phi_T approaches e^{cT} phi at Euler order 1") {
  // Oracle: dPhi = c Phi dt with c = 0.5, T = 1 gives Phi_T = e^{0.5} phi;
  // Euler error for the scalar exponential is bounded by c^2 T e^{cT} dt / 2.
  const double c = 0.5, T = 1.0;
  const int n = 4000;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, T);
  spec.coefficients.c = MatrixField::constant(Mat::Constant(1, 1, c), "c");
  spec.phi = const_phi(1, 2.0);
  const NoiseRealization noise = empty_noise(TimeGrid::uniform(T, n), 1);
  const auto states = simulate_transform(spec, noise, Vec::Constant(1, 0.0));
  const double exact = 2.0 * std::exp(c * T);
  const double bound = c * c * T * std::exp(c * T) * (T / n);
  REQUIRE(std::abs(states.back().phi[0] - exact) <= bound);
  REQUIRE(states.back().psi(0, 0) == Catch::Approx(std::exp(c * T)).margin(bound));
}

TEST_CASE("constant f: Phi_T = phi + f T exactly, Psi stays the identity") {
  const double T = 0.75;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, T);
  spec.coefficients.f = VectorField::constant(Vec::Constant(1, 1.0), "f");
  spec.phi = const_phi(1, -0.4);
  const NoiseRealization noise = empty_noise(TimeGrid::uniform(T, 30), 1);
  const auto states = simulate_transform(spec, noise, Vec::Constant(1, 0.0));
  REQUIRE(states.back().phi[0] == Catch::Approx(-0.4 + T).margin(1e-13));
  REQUIRE(states.back().psi(0, 0) == 1.0);
  REQUIRE(states.back().gamma[0] == Catch::Approx(T).margin(1e-13));
}

TEST_CASE("constant g: Phi_T = phi + g W1_T exactly") {
  const double T = 0.5;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.0, T);
  spec.coefficients.g = MatrixField::constant(Mat::Constant(1, 1, 1.3), "g");
  spec.phi = const_phi(1, 0.2);
  const TimeGrid grid = TimeGrid::uniform(T, 64);
  const NoiseRealization noise = empty_noise(grid, 1, 7u, 8u);
  const WienerLattice lat(grid, Family::observed, 1, 7u);
  const auto states = simulate_transform(spec, noise, Vec::Constant(1, 0.0));
  REQUIRE(states.back().phi[0] ==
          Catch::Approx(0.2 + 1.3 * lat.value(0, T)).margin(1e-12));
  REQUIRE(states.back().gamma[0] ==
          Catch::Approx(1.3 * lat.value(0, T)).margin(1e-12));
}

TEST_CASE("compensated h jumps: Phi_T = phi + h (N_T - lam T) exactly") {
  // Oracle: one observed D-atom (rate lam) with constant h: the drift is
  // -h lam per unit time and each event adds +h; both are exact for Euler.
  const double lam = 2.0, hv = 0.3, T = 1.0;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.5, T);
  spec.measures[0].atoms.push_back({1.0, lam, SetTag::D});
  spec.coefficients.h = VectorJumpField::of(
      1, [hv](double, const Vec&, double, Vec& out) { out[0] = hv; }, true, "h");
  spec.phi = const_phi(1, 1.0);
  const TimeGrid grid = TimeGrid::uniform(T, 40);
  const NoiseRealization noise =
      sample_noise(grid, 1, spec.measures[0], JumpMeasureSpec{}, 21u, 22u);
  const double n_events =
      static_cast<double>(noise.events_observed.events.size());
  const auto states = simulate_transform(spec, noise, Vec::Constant(1, 0.0));
  REQUIRE(states.back().phi[0] ==
          Catch::Approx(1.0 + hv * (n_events - lam * T)).margin(1e-12));
  REQUIRE(states.back().psi(0, 0) == 1.0);
}

TEST_CASE("E-set rho jumps: Psi_T = (1+rho)^{N_T} with no compensator") {
  const double rv = 0.25, T = 1.0;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.5, T);
  spec.measures[0].atoms.push_back({1.0, 3.0, SetTag::E});
  spec.coefficients.rho[0] = MatrixJumpField::of(
      1, 1, [rv](double, const Vec&, double, Mat& out) { out(0, 0) = rv; },
      true, "rho1");
  spec.phi = const_phi(1, 1.0);
  const TimeGrid grid = TimeGrid::uniform(T, 32);
  const NoiseRealization noise =
      sample_noise(grid, 1, spec.measures[0], JumpMeasureSpec{}, 5u, 6u);
  const double n_events =
      static_cast<double>(noise.events_observed.events.size());
  const auto states = simulate_transform(spec, noise, Vec::Constant(1, 0.0));
  REQUIRE(states.back().psi(0, 0) ==
          Catch::Approx(std::pow(1.0 + rv, n_events)).margin(1e-12));
}

TEST_CASE("D-set rho jumps: Euler Psi matches (1+rho)^{N_T} e^{-rho lam T}") {
  // Oracle: constant rho on a D-atom gives the explicit stochastic
  // exponential (1+rho)^{N_T} e^{-rho lam T}; the Euler drift factor
  // (1 - rho lam dt)^n converges to e^{-rho lam T} at order 1 in dt.
  const double rv = 0.4, lam = 2.5, T = 1.0;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.5, T);
  spec.measures[0].atoms.push_back({1.0, lam, SetTag::D});
  spec.coefficients.rho[0] = MatrixJumpField::of(
      1, 1, [rv](double, const Vec&, double, Mat& out) { out(0, 0) = rv; },
      true, "rho1");
  spec.phi = const_phi(1, 1.0);
  const TimeGrid grid = TimeGrid::uniform(T, 5000);
  const NoiseRealization noise =
      sample_noise(grid, 1, spec.measures[0], JumpMeasureSpec{}, 11u, 12u);
  const double n_events =
      static_cast<double>(noise.events_observed.events.size());
  const double exact =
      std::pow(1.0 + rv, n_events) * std::exp(-rv * lam * T);
  const Run r = run_transform(spec, noise, Vec::Constant(1, 0.0));
  REQUIRE(r.states.back().psi(0, 0) == Catch::Approx(exact).epsilon(2e-3));

  // The closed form is exact here (constant exponent integrand).
  const auto psi = scalar_psi_closed_form(spec, r.path, r.traj, r.traj_pre);
  REQUIRE(psi.back() == Catch::Approx(exact).margin(1e-12));
}

TEST_CASE("closed form vs Euler under refinement: order >= 0.4") {
  // Scalar problem with multiplicative Wiener noise and compensated D-rho
  // jumps on a moving flow. Strong Euler error for the linear SDE decays at
  // order >= 1/2; the closed form evaluated on the same lattice serves as
  // the reference.
  const double T = 1.0;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 2.0, T);
  spec.coefficients.b = VectorField::constant(Vec::Constant(1, 0.4), "b");
  spec.coefficients.sigma[1] =
      MatrixField::constant(Mat::Constant(1, 1, 0.5), "sigma2");
  spec.coefficients.c = MatrixField::of(
      1, 1, [](double, const Vec& x, Mat& out) {
        out(0, 0) = 0.3 * std::tanh(x[0]);
      }, false, "c");
  spec.coefficients.upsilon[0][0] = MatrixField::of(
      1, 1, [](double, const Vec& x, Mat& out) {
        out(0, 0) = 0.4 + 0.1 * std::sin(x[0]);
      }, false, "upsilon1");
  spec.measures[0].atoms.push_back({1.0, 2.0, SetTag::D});
  spec.coefficients.H[0] = VectorJumpField::of(
      1, [](double, const Vec& x, double, Vec& out) {
        out[0] = 0.2 * std::sin(x[0]);
      }, false, "H1");
  spec.coefficients.rho[0] = MatrixJumpField::of(
      1, 1, [](double, const Vec& x, double, Mat& out) {
        out(0, 0) = 0.3 + 0.1 * std::cos(x[0]);
      }, false, "rho1");
  spec.phi = const_phi(1, 1.0);

  // Noise realizations differ per resolution (paths are keyed per base-grid
  // step), so the error is averaged over seeds to tame path-to-path
  // variance before fitting the order.
  const auto mean_error = [&](int n_steps) {
    double sum = 0.0;
    const int n_seeds = 8;
    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
      const TimeGrid grid = TimeGrid::uniform(T, n_steps);
      const NoiseRealization noise = sample_noise(
          grid, 1, spec.measures[0], JumpMeasureSpec{}, 30 + seed, 60 + seed);
      const Run r = run_transform(spec, noise, Vec::Constant(1, 0.1));
      const auto psi =
          scalar_psi_closed_form(spec, r.path, r.traj, r.traj_pre);
      sum += std::abs(r.states.back().psi(0, 0) - psi.back());
    }
    return sum / n_seeds;
  };

  const double e1 = mean_error(100);
  const double e3 = mean_error(1600);
  REQUIRE(e3 < e1);
  const double order = std::log(e1 / e3) / std::log(16.0);
  REQUIRE(order >= 0.4);
}

TEST_CASE("pathwise decomposition: Phi = Psi phi + Gamma") {
  const double T = 1.0;

  SECTION("constant coefficients, defect <= 1e-12") {
    ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 2.0, T);
    spec.coefficients.c = MatrixField::constant(Mat::Constant(1, 1, 0.3), "c");
    spec.coefficients.f = VectorField::constant(Vec::Constant(1, 0.7), "f");
    spec.coefficients.g = MatrixField::constant(Mat::Constant(1, 1, 0.2), "g");
    spec.phi = const_phi(1, 1.5);
    const NoiseRealization noise = empty_noise(TimeGrid::uniform(T, 200), 1);
    const auto states = simulate_transform(spec, noise, Vec::Constant(1, 0.0));
    REQUIRE(decomposition_check(states, Vec::Constant(1, 1.5)) <= 1e-12);
  }

  SECTION("full jump problem over 10 seeds, defect <= 1e-10") {
    ProblemSpec spec = ProblemSpec::zero(2, 2, 1, 2.0, T);
    spec.coefficients.b = VectorField::constant(Vec::Constant(2, 0.3), "b");
    spec.coefficients.sigma[0] =
        MatrixField::constant(Mat::Constant(2, 1, 0.4), "sigma1");
    spec.coefficients.c = MatrixField::of(
        2, 2, [](double, const Vec& x, Mat& out) {
          out << 0.2, 0.1 * std::sin(x[0]), -0.1, 0.3 * std::cos(x[1]);
        }, false, "c");
    spec.coefficients.f = VectorField::of(
        2, [](double, const Vec& x, Vec& out) {
          out << std::tanh(x[0]), 0.5;
        }, false, "f");
    spec.coefficients.g = MatrixField::constant(Mat::Constant(2, 1, 0.25), "g");
    spec.coefficients.upsilon[1][0] = MatrixField::of(
        2, 2, [](double, const Vec&, Mat& out) {
          out << 0.2, 0.0, 0.05, 0.15;
        }, true, "upsilon2");
    spec.measures[0].atoms.push_back({1.0, 2.0, SetTag::D});
    spec.measures[0].atoms.push_back({-1.0, 1.0, SetTag::E});
    spec.measures[1].atoms.push_back({0.5, 1.5, SetTag::D});
    spec.coefficients.H[0] = VectorJumpField::of(
        2, [](double, const Vec& x, double z, Vec& out) {
          out << 0.2 * z * std::sin(x[1]), 0.1 * z;
        }, false, "H1");
    spec.coefficients.H[1] = VectorJumpField::of(
        2, [](double, const Vec& x, double z, Vec& out) {
          out << 0.1 * z, 0.15 * z * std::cos(x[0]);
        }, false, "H2");
    spec.coefficients.rho[0] = MatrixJumpField::of(
        2, 2, [](double, const Vec& x, double z, Mat& out) {
          out << 0.2 * z, 0.05, 0.0, 0.1 * std::cos(x[0]) * z;
        }, false, "rho1");
    spec.coefficients.rho[1] = MatrixJumpField::of(
        2, 2, [](double, const Vec&, double z, Mat& out) {
          out << 0.1 * z, 0.0, 0.05 * z, 0.1 * z;
        }, false, "rho2");
    spec.coefficients.h = VectorJumpField::of(
        2, [](double, const Vec& x, double z, Vec& out) {
          out << 0.3 * z, 0.1 * std::sin(x[0]) * z;
        }, false, "h");
    spec.phi = VectorField::of(
        2, [](double, const Vec& x, Vec& out) {
          out << std::exp(-x.squaredNorm()), std::sin(x[0]);
        }, false, "phi");

    const TimeGrid grid = TimeGrid::uniform(T, 64);
    const Vec x0 = Vec::Constant(2, 0.2);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const NoiseRealization noise = sample_noise(
          grid, 1, spec.measures[0], spec.measures[1], seed, seed + 100);
      const auto states = simulate_transform(spec, noise, x0);
      REQUIRE(decomposition_check(states, spec.phi.eval(0.0, x0)) <= 1e-10);
    }
  }
}

TEST_CASE("scalar closed form is strictly positive") {
  const double T = 1.0;
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 2.0, T);
  spec.coefficients.c = MatrixField::constant(Mat::Constant(1, 1, -0.8), "c");
  spec.coefficients.upsilon[0][0] =
      MatrixField::constant(Mat::Constant(1, 1, 0.6), "upsilon1");
  spec.measures[0].atoms.push_back({1.0, 4.0, SetTag::D});
  spec.coefficients.rho[0] = MatrixJumpField::of(
      1, 1, [](double, const Vec&, double, Mat& out) { out(0, 0) = -0.5; },
      true, "rho1");
  spec.phi = const_phi(1, 1.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TimeGrid grid = TimeGrid::uniform(T, 128);
    const NoiseRealization noise = sample_noise(
        grid, 1, spec.measures[0], JumpMeasureSpec{}, seed, seed + 50);
    const Run r = run_transform(spec, noise, Vec::Constant(1, 0.0));
    const auto psi = scalar_psi_closed_form(spec, r.path, r.traj, r.traj_pre);
    for (const double v : psi) REQUIRE(v > 0.0);
  }
}

TEST_CASE("closed form rejects rho = -1") {
  ProblemSpec spec = ProblemSpec::zero(1, 1, 1, 1.5, 1.0);
  spec.measures[0].atoms.push_back({1.0, 5.0, SetTag::E});
  spec.coefficients.rho[0] = MatrixJumpField::of(
      1, 1, [](double, const Vec&, double, Mat& out) { out(0, 0) = -1.0; },
      true, "rho1");
  spec.phi = const_phi(1, 1.0);
  const TimeGrid grid = TimeGrid::uniform(1.0, 16);
  const NoiseRealization noise = sample_noise(
      grid, 1, spec.measures[0], JumpMeasureSpec{}, 2u, 3u);
  REQUIRE(!noise.events_observed.events.empty());
  const Run r = [&] {
    Run rr;
    rr.path = build_path_noise(noise, 0.0, 1.0);
    const FlowEngine fe(spec);
    fe.simulate(rr.path, Vec::Constant(1, 0.0), &rr.traj, nullptr, &rr.traj_pre);
    return rr;
  }();
  REQUIRE_THROWS_AS(
      scalar_psi_closed_form(spec, r.path, r.traj, r.traj_pre),
      NumericalError);
}
