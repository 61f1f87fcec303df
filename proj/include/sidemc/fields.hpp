#pragma once
//
// Coefficient fields: thin wrappers over callables (t,x) or (t,x,z) with
// shape information and algebraic metadata.
//
// The metadata flags (`is_zero`, `constant_in_x`) are declarations made at
// construction time (the expression front end derives them from the AST;
// native problems declare them). They license exact short-circuits — e.g.
// a translation-invariant flow or a vanishing transform right-hand side —
// and are never guessed from samples.
//

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sidemc/common.hpp"

namespace sidemc {

/// Default central-difference step for coefficient gradients.
inline constexpr double kGradientStep = 1e-6;

// ---------------------------------------------------------------------------
// Fields of (t, x)
// ---------------------------------------------------------------------------

/// Scalar field (t,x) -> R.
struct ScalarField {
  std::function<double(double, const Vec&)> fn;
  bool is_zero = true;
  bool constant_in_x = true;
  std::string name;

  ScalarField() = default;

  static ScalarField zero(std::string name = {}) {
    ScalarField f;
    f.fn = [](double, const Vec&) { return 0.0; };
    f.name = std::move(name);
    return f;
  }
  static ScalarField constant(double v, std::string name = {}) {
    ScalarField f;
    f.fn = [v](double, const Vec&) { return v; };
    f.is_zero = (v == 0.0);
    f.name = std::move(name);
    return f;
  }
  static ScalarField of(std::function<double(double, const Vec&)> fn,
                        bool constant_in_x = false, std::string name = {}) {
    ScalarField f;
    f.fn = std::move(fn);
    f.is_zero = false;
    f.constant_in_x = constant_in_x;
    f.name = std::move(name);
    return f;
  }

  double operator()(double t, const Vec& x) const { return fn(t, x); }
};

/// Vector field (t,x) -> R^dim.
struct VectorField {
  int dim = 0;
  std::function<void(double, const Vec&, Vec&)> fn;
  /// Optional analytic spatial Jacobian: out(i,j) = d field_i / d x_j.
  std::function<void(double, const Vec&, Mat&)> jac;
  bool is_zero = true;
  bool constant_in_x = true;
  std::string name;

  VectorField() = default;

  static VectorField zero(int dim, std::string name = {}) {
    VectorField f;
    f.dim = dim;
    f.fn = [](double, const Vec&, Vec& out) { out.setZero(); };
    f.name = std::move(name);
    return f;
  }
  static VectorField constant(const Vec& v, std::string name = {}) {
    VectorField f;
    f.dim = static_cast<int>(v.size());
    f.fn = [v](double, const Vec&, Vec& out) { out = v; };
    f.is_zero = (v.lpNorm<Eigen::Infinity>() == 0.0);
    f.name = std::move(name);
    return f;
  }
  static VectorField of(int dim, std::function<void(double, const Vec&, Vec&)> fn,
                        bool constant_in_x = false, std::string name = {}) {
    VectorField f;
    f.dim = dim;
    f.fn = std::move(fn);
    f.is_zero = false;
    f.constant_in_x = constant_in_x;
    f.name = std::move(name);
    return f;
  }

  void eval(double t, const Vec& x, Vec& out) const {
    out.resize(dim);
    fn(t, x, out);
  }
  Vec eval(double t, const Vec& x) const {
    Vec out(dim);
    fn(t, x, out);
    return out;
  }

  /// Spatial Jacobian, analytic if declared, else central differences.
  void jacobian(double t, const Vec& x, Mat& out) const {
    out.resize(dim, x.size());
    if (constant_in_x) {
      out.setZero();
      return;
    }
    if (jac) {
      jac(t, x, out);
      return;
    }
    Vec xp = x, fp(dim), fm(dim);
    for (int j = 0; j < x.size(); ++j) {
      const double x0 = x[j];
      xp[j] = x0 + kGradientStep;
      fn(t, xp, fp);
      xp[j] = x0 - kGradientStep;
      fn(t, xp, fm);
      xp[j] = x0;
      out.col(j) = (fp - fm) / (2.0 * kGradientStep);
    }
  }
};

/// Matrix field (t,x) -> R^{rows x cols}. Used for sigma (d1 x rho_max),
/// c (d2 x d2), g (d2 x rho_max) and per-channel upsilon slices (d2 x d2).
struct MatrixField {
  int rows = 0;
  int cols = 0;
  std::function<void(double, const Vec&, Mat&)> fn;
  /// Optional analytic derivative w.r.t. x_j (same shape as the field).
  std::function<void(double, const Vec&, int, Mat&)> dx;
  bool is_zero = true;
  bool constant_in_x = true;
  std::string name;

  MatrixField() = default;

  static MatrixField zero(int rows, int cols, std::string name = {}) {
    MatrixField f;
    f.rows = rows;
    f.cols = cols;
    f.fn = [](double, const Vec&, Mat& out) { out.setZero(); };
    f.name = std::move(name);
    return f;
  }
  static MatrixField constant(const Mat& m, std::string name = {}) {
    MatrixField f;
    f.rows = static_cast<int>(m.rows());
    f.cols = static_cast<int>(m.cols());
    f.fn = [m](double, const Vec&, Mat& out) { out = m; };
    f.is_zero = (m.lpNorm<Eigen::Infinity>() == 0.0);
    f.name = std::move(name);
    return f;
  }
  static MatrixField of(int rows, int cols,
                        std::function<void(double, const Vec&, Mat&)> fn,
                        bool constant_in_x = false, std::string name = {}) {
    MatrixField f;
    f.rows = rows;
    f.cols = cols;
    f.fn = std::move(fn);
    f.is_zero = false;
    f.constant_in_x = constant_in_x;
    f.name = std::move(name);
    return f;
  }

  void eval(double t, const Vec& x, Mat& out) const {
    out.resize(rows, cols);
    fn(t, x, out);
  }
  Mat eval(double t, const Vec& x) const {
    Mat out(rows, cols);
    fn(t, x, out);
    return out;
  }

  /// d(field)/d x_j, analytic if declared, else central differences.
  void derivative_x(double t, const Vec& x, int j, Mat& out) const {
    out.resize(rows, cols);
    if (constant_in_x) {
      out.setZero();
      return;
    }
    if (dx) {
      dx(t, x, j, out);
      return;
    }
    Vec xp = x;
    Mat fp(rows, cols), fm(rows, cols);
    const double x0 = x[j];
    xp[j] = x0 + kGradientStep;
    fn(t, xp, fp);
    xp[j] = x0 - kGradientStep;
    fn(t, xp, fm);
    out = (fp - fm) / (2.0 * kGradientStep);
  }
};

// ---------------------------------------------------------------------------
// Fields of (t, x, z)  (per-jump coefficients)
// ---------------------------------------------------------------------------

/// Vector jump field (t,x,z) -> R^dim. Used for H^k and h.
struct VectorJumpField {
  int dim = 0;
  std::function<void(double, const Vec&, double, Vec&)> fn;
  /// Optional analytic spatial Jacobian out(i,j) = d field_i / d x_j.
  std::function<void(double, const Vec&, double, Mat&)> jac;
  bool is_zero = true;
  bool constant_in_x = true;
  std::string name;

  VectorJumpField() = default;

  static VectorJumpField zero(int dim, std::string name = {}) {
    VectorJumpField f;
    f.dim = dim;
    f.fn = [](double, const Vec&, double, Vec& out) { out.setZero(); };
    f.name = std::move(name);
    return f;
  }
  static VectorJumpField of(
      int dim, std::function<void(double, const Vec&, double, Vec&)> fn,
      bool constant_in_x = false, std::string name = {}) {
    VectorJumpField f;
    f.dim = dim;
    f.fn = std::move(fn);
    f.is_zero = false;
    f.constant_in_x = constant_in_x;
    f.name = std::move(name);
    return f;
  }

  void eval(double t, const Vec& x, double z, Vec& out) const {
    out.resize(dim);
    fn(t, x, z, out);
  }
  Vec eval(double t, const Vec& x, double z) const {
    Vec out(dim);
    fn(t, x, z, out);
    return out;
  }

  void jacobian(double t, const Vec& x, double z, Mat& out) const {
    out.resize(dim, x.size());
    if (constant_in_x) {
      out.setZero();
      return;
    }
    if (jac) {
      jac(t, x, z, out);
      return;
    }
    Vec xp = x, fp(dim), fm(dim);
    for (int j = 0; j < x.size(); ++j) {
      const double x0 = x[j];
      xp[j] = x0 + kGradientStep;
      fn(t, xp, z, fp);
      xp[j] = x0 - kGradientStep;
      fn(t, xp, z, fm);
      xp[j] = x0;
      out.col(j) = (fp - fm) / (2.0 * kGradientStep);
    }
  }
};

/// Matrix jump field (t,x,z) -> R^{rows x cols}. Used for rho^k.
struct MatrixJumpField {
  int rows = 0;
  int cols = 0;
  std::function<void(double, const Vec&, double, Mat&)> fn;
  bool is_zero = true;
  bool constant_in_x = true;
  std::string name;

  MatrixJumpField() = default;

  static MatrixJumpField zero(int rows, int cols, std::string name = {}) {
    MatrixJumpField f;
    f.rows = rows;
    f.cols = cols;
    f.fn = [](double, const Vec&, double, Mat& out) { out.setZero(); };
    f.name = std::move(name);
    return f;
  }
  static MatrixJumpField of(
      int rows, int cols,
      std::function<void(double, const Vec&, double, Mat&)> fn,
      bool constant_in_x = false, std::string name = {}) {
    MatrixJumpField f;
    f.rows = rows;
    f.cols = cols;
    f.fn = std::move(fn);
    f.is_zero = false;
    f.constant_in_x = constant_in_x;
    f.name = std::move(name);
    return f;
  }

  void eval(double t, const Vec& x, double z, Mat& out) const {
    out.resize(rows, cols);
    fn(t, x, z, out);
  }
  Mat eval(double t, const Vec& x, double z) const {
    Mat out(rows, cols);
    fn(t, x, z, out);
    return out;
  }
};

}  // namespace sidemc
