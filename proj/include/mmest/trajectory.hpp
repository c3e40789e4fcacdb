#pragma once

#include <Eigen/Dense>

#include "mmest/errors.hpp"

namespace mmest {

// Uniform time grid on [t0, T] with N >= 2 intervals (N+1 nodes).
struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int N = 2;

  TimeGrid() = default;
  TimeGrid(double t0_, double T_, int N_) : t0(t0_), T(T_), N(N_) { validate(); }

  void validate() const {
    if (!(T > t0)) throw InputError("TimeGrid: requires T > t0");
    if (N < 2) throw InputError("TimeGrid: requires N >= 2 intervals");
  }

  double h() const { return (T - t0) / N; }
  int nodes() const { return N + 1; }
  double node(int i) const {
    // Pin the endpoints exactly so boundary conditions live at t0 and T.
    if (i == 0) return t0;
    if (i == N) return T;
    return t0 + i * h();
  }

  bool operator==(const TimeGrid& o) const {
    return t0 == o.t0 && T == o.T && N == o.N;
  }
};

// Vector-valued samples on a time grid: one column per node.
struct Trajectory {
  TimeGrid grid;
  Eigen::MatrixXd values;  // dim x (N+1)

  Trajectory() = default;
  Trajectory(TimeGrid g, Eigen::MatrixXd v) : grid(g), values(std::move(v)) {
    if (values.cols() != grid.nodes())
      throw DimensionError("Trajectory: need one value column per grid node");
    if (!values.allFinite())
      throw InputError("Trajectory: samples must be finite");
  }

  static Trajectory zero(TimeGrid g, int dim) {
    return Trajectory(g, Eigen::MatrixXd::Zero(dim, g.nodes()));
  }

  int dim() const { return static_cast<int>(values.rows()); }
  Eigen::VectorXd value(int i) const { return values.col(i); }
};

namespace quadrature {

// Trapezoidal node weights (h/2, h, ..., h, h/2).
inline Eigen::VectorXd trapezoid_weights(const TimeGrid& g) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(g.nodes(), g.h());
  w(0) *= 0.5;
  w(g.N) *= 0.5;
  return w;
}

// Trapezoidal quadrature of the pointwise inner product (a(t), b(t)).
inline double trapezoid_product(const Trajectory& a, const Trajectory& b) {
  if (!(a.grid == b.grid) || a.dim() != b.dim())
    throw DimensionError("trapezoid_product: trajectories on different grids");
  const Eigen::VectorXd w = trapezoid_weights(a.grid);
  double s = 0.0;
  for (int j = 0; j < a.grid.nodes(); ++j) s += w(j) * a.values.col(j).dot(b.values.col(j));
  return s;
}

// Product quadrature for piecewise-linear trajectories: sum over intervals of
// h * (interval mean of a, interval mean of b). For smooth integrands this is
// second-order accurate like the plain trapezoidal rule, and it is the
// pairing under which the Crank-Nicolson solution map of the estimation
// boundary-value problem is self-adjoint to machine precision (the plain
// node-weight rule is only O(h^2)-symmetric there). All bilinear time
// integrals of the estimator (sigma^2, consistency, the power-iteration
// quadratic form) use this rule so that exact-symmetry properties hold.
inline double product_quadrature(const Trajectory& a, const Trajectory& b) {
  if (!(a.grid == b.grid) || a.dim() != b.dim())
    throw DimensionError("product_quadrature: trajectories on different grids");
  const double h = a.grid.h();
  double s = 0.0;
  for (int i = 0; i < a.grid.N; ++i) {
    const Eigen::VectorXd am = 0.5 * (a.values.col(i) + a.values.col(i + 1));
    const Eigen::VectorXd bm = 0.5 * (b.values.col(i) + b.values.col(i + 1));
    s += h * am.dot(bm);
  }
  return s;
}

// L2 norm induced by product_quadrature.
inline double product_norm(const Trajectory& a) {
  return std::sqrt(std::max(0.0, product_quadrature(a, a)));
}

// L2 norm induced by the trapezoidal rule.
inline double trapezoid_norm(const Trajectory& a) {
  return std::sqrt(std::max(0.0, trapezoid_product(a, a)));
}

}  // namespace quadrature
}  // namespace mmest
