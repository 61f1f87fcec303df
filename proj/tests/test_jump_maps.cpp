// Tests for the jump-map algebra: fixed-point inversion of x -> x + H(x)
// against closed forms and a bisection oracle, the conjugate map of the
// inverse flow, and the diffeomorphism-estimate report.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sidemc/jump_maps.hpp"

using namespace sidemc;

namespace {

JumpMapHandle sine_handle(double amplitude, double eta) {
  JumpMapHandle h;
  h.H = VectorJumpField::of(
      1,
      [amplitude](double, const Vec& x, double z, Vec& out) {
        out[0] = amplitude * std::sin(x[0]) * z;
      },
      false, "H");
  h.eta = eta;
  return h;
}

// Solve y + amplitude*sin(y) = x by bisection (monotone for amplitude < 1).
double bisect_sine_inverse(double amplitude, double x) {
  double lo = x - std::abs(amplitude) - 1.0, hi = x + std::abs(amplitude) + 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid + amplitude * std::sin(mid) < x) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("zero jump map inverts to the identity") {
  JumpMapHandle h;
  h.H = VectorJumpField::zero(2, "H");
  InversionStats st;
  st.iterations = 99;
  const Vec x = Vec::Constant(2, 1.7);
  const Vec y = invert_jump_map(h, 0.0, x, 0.5, 1e-12, &st);
  REQUIRE(y == x);
  REQUIRE(st.iterations == 0);
  REQUIRE(conjugate_map_F(h, 0.0, x, 0.5).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("constant jump map inverts in one productive step") {
  JumpMapHandle h;
  h.H = VectorJumpField::of(
      1, [](double, const Vec&, double z, Vec& out) { out[0] = 0.7 * z; },
      true, "H");
  h.eta = 0.5;
  InversionStats st;
  const Vec x = Vec::Constant(1, 2.0);
  const Vec y = invert_jump_map(h, 0.0, x, 1.0, 1e-12, &st);
  REQUIRE(y[0] == 2.0 - 0.7);
  REQUIRE(st.iterations == 2);  // one shift plus the zero confirming step
  REQUIRE(st.residual == 0.0);
  const Vec F = conjugate_map_F(h, 0.0, x, 1.0);
  REQUIRE(F[0] == -0.7);
}

TEST_CASE("sine jump map matches the bisection oracle") {
  const JumpMapHandle h = sine_handle(0.4, 0.4);
  const double oracle = bisect_sine_inverse(0.4, 1.0);
  InversionStats st;
  const Vec y =
      invert_jump_map(h, 0.0, Vec::Constant(1, 1.0), 1.0, 1e-12, &st);
  REQUIRE(y[0] == Catch::Approx(oracle).margin(1e-12));
  REQUIRE(st.residual <= 1e-11);
  const Vec F = conjugate_map_F(h, 0.0, Vec::Constant(1, 1.0), 1.0, 1e-12);
  REQUIRE(F[0] == Catch::Approx(-0.4 * std::sin(oracle)).margin(1e-11));
}

TEST_CASE("inversion at eta 0.6 reaches tight tolerance with bounded rate") {
  const JumpMapHandle h = sine_handle(0.6, 0.6);
  for (const double x : {-2.5, -1.0, 0.3, 1.0, 2.0, 3.1}) {
    const double oracle = bisect_sine_inverse(0.6, x);
    InversionStats st;
    const Vec y =
        invert_jump_map(h, 0.0, Vec::Constant(1, x), 1.0, 1e-12, &st);
    REQUIRE(y[0] == Catch::Approx(oracle).margin(1e-12));
    REQUIRE(st.observed_rate <= 0.65);
  }
}

TEST_CASE("linear jump map in two dimensions against the matrix inverse") {
  Mat A(2, 2);
  A << 0.2, -0.1, 0.1, 0.2;
  JumpMapHandle h;
  h.H = VectorJumpField::of(
      2, [A](double, const Vec& x, double z, Vec& out) { out = z * A * x; },
      false, "H");
  h.eta = 0.4;
  Vec x(2);
  x << 1.0, -2.0;
  const Vec y = invert_jump_map(h, 0.0, x, 1.0, 1e-13);
  const Vec oracle = (Mat::Identity(2, 2) + A).partialPivLu().solve(x);
  REQUIRE((y - oracle).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("Newton fallback handles a declared eta near one") {
  const JumpMapHandle h = sine_handle(0.9, 0.95);
  const double oracle = bisect_sine_inverse(0.9, 1.0);
  InversionStats st;
  const Vec y =
      invert_jump_map(h, 0.0, Vec::Constant(1, 1.0), 1.0, 1e-12, &st);
  REQUIRE(y[0] == Catch::Approx(oracle).margin(1e-11));
  REQUIRE(st.iterations <= 20);  // quadratic convergence
}

TEST_CASE("misdeclared contraction bound raises a numerical error") {
  // |grad H| reaches 1.5 while eta is declared as 0.5: the plain iteration
  // cannot meet the step rule within the iteration cap.
  const JumpMapHandle h = sine_handle(1.5, 0.5);
  REQUIRE_THROWS_AS(
      invert_jump_map(h, 0.0, Vec::Constant(1, 2.0), 1.0, 1e-10),
      NumericalError);
}

TEST_CASE("diffeomorphism report for the zero map is clean") {
  JumpMapHandle h;
  h.H = VectorJumpField::zero(1, "H");
  std::vector<Vec> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(Vec::Constant(1, -2.0 + 0.4 * i));
  const DiffeoReport rep = diffeo_report(h, 0.0, grid, {1.0});
  REQUIRE(rep.L2 == 0.0);
  REQUIRE(rep.max_grad_F == 0.0);
  REQUIRE(rep.max_round_trip == 0.0);
  REQUIRE(rep.max_conjugacy == 0.0);
  REQUIRE(rep.grad_F_within_bound);
  REQUIRE(rep.inv_grad_F_within_bound);
  REQUIRE(rep.round_trip_ok);
}

TEST_CASE("diffeomorphism report for the sine map meets its bounds") {
  const JumpMapHandle h = sine_handle(0.4, 0.5);
  std::vector<Vec> grid;
  for (int i = 0; i <= 80; ++i) grid.push_back(Vec::Constant(1, -4.0 + 0.1 * i));
  const DiffeoReport rep = diffeo_report(h, 0.0, grid, {0.5, 1.0}, 1e-12);
  REQUIRE(rep.L2 == Catch::Approx(0.4).margin(1e-5));
  // grad F peaks at gh = -0.4: 0.4 / 0.6 = 2/3; the declared-eta bound is
  // N_kappa * L2 = 0.4 / (1 - 0.5) = 0.8.
  REQUIRE(rep.max_grad_F == Catch::Approx(2.0 / 3.0).margin(5e-3));
  REQUIRE(rep.max_grad_F <= 0.667 + 1e-4);
  REQUIRE(rep.grad_F_bound == Catch::Approx(0.8).margin(1e-5));
  REQUIRE(rep.grad_F_within_bound);
  REQUIRE(rep.inv_grad_F_within_bound);
  REQUIRE(rep.max_inv_grad_F <= rep.inv_grad_F_bound + 1e-6);
  REQUIRE(rep.round_trip_ok);
  REQUIRE(rep.max_round_trip <= 1e-11);
  REQUIRE(rep.max_conjugacy <= 1e-11);
  REQUIRE(rep.max_observed_rate <= 0.4 + 0.05);
}
