#include "mmest/bvp_solver.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>

namespace mmest {

BvpCoefficients assemble_coefficients(const CanonicalDescriptor& canonical) {
  const int r = canonical.r;
  const int na = canonical.algebraic();
  const Eigen::MatrixXd Ir = Eigen::MatrixXd::Identity(r, r);
  const Eigen::MatrixXd Ia = Eigen::MatrixXd::Identity(na, na);

  BvpCoefficients c;
  c.C2 = canonical.C2;
  c.C3 = canonical.C3;
  c.C4 = canonical.C4;
  c.S = (Ia + canonical.C4.transpose() * canonical.C4)
            .ldlt()
            .solve(Ia);
  // Evaluate before assigning: the transpose aliases the destination.
  c.S = (0.5 * (c.S + c.S.transpose())).eval();
  c.A = canonical.C1 -
        canonical.C2 * c.S * canonical.C4.transpose() * canonical.C3;
  c.B = canonical.C2 * c.S * canonical.C2.transpose() + Ir;
  c.W = canonical.C3.transpose() *
            (Ia - canonical.C4 * c.S * canonical.C4.transpose()) *
            canonical.C3 +
        Ir;
  c.D = -canonical.C1.transpose() +
        canonical.C3.transpose() * canonical.C4 * c.S * canonical.C2.transpose();
  c.B = (0.5 * (c.B + c.B.transpose())).eval();
  c.W = (0.5 * (c.W + c.W.transpose())).eval();
  return c;
}

TpbvpSolver::TpbvpSolver(const BvpCoefficients& coeffs, const TimeGrid& grid)
    : coeffs_(coeffs), grid_(grid), r_(coeffs.r()) {
  grid_.validate();
  if (r_ < 1)
    throw InputError("TpbvpSolver: needs r >= 1 (purely algebraic systems "
                     "have no boundary-value part)");
  const int r = r_;
  const double h = grid_.h();
  const Eigen::MatrixXd Ir = Eigen::MatrixXd::Identity(r, r);

  // Interval equation, split into x-rows and q-rows:
  //   -(I + h/2 K) w_i + (I - h/2 K) w_{i+1} = h/2 (g_i + g_{i+1}),
  // K = [[A,B],[W,D]], w = [x1; q1]. The x-rows of interval j join block row
  // j, the q-rows join block row j+1: every block row then couples only to
  // its neighbors and the matrix is block-tridiagonal with 2r x 2r blocks.
  Eigen::MatrixXd Mx(r, 2 * r), Mq(r, 2 * r), Px(r, 2 * r), Pq(r, 2 * r);
  Mx << -(Ir + 0.5 * h * coeffs_.A), -0.5 * h * coeffs_.B;
  Mq << -0.5 * h * coeffs_.W, -(Ir + 0.5 * h * coeffs_.D);
  Px << Ir - 0.5 * h * coeffs_.A, -0.5 * h * coeffs_.B;
  Pq << -0.5 * h * coeffs_.W, Ir - 0.5 * h * coeffs_.D;

  lower_x_ = Mx;
  lower_q_ = Mq;
  upper_x_ = Px;

  Eigen::MatrixXd Lo = Eigen::MatrixXd::Zero(2 * r, 2 * r);
  Lo.topRows(r) = Mq;
  Eigen::MatrixXd Up = Eigen::MatrixXd::Zero(2 * r, 2 * r);
  Up.bottomRows(r) = Px;

  const int N = grid_.N;
  pivot_lu_.reserve(N + 1);
  upper_elim_.reserve(N);

  Eigen::MatrixXd diag(2 * r, 2 * r);
  for (int j = 0; j <= N; ++j) {
    diag.setZero();
    if (j == 0) {
      diag.topLeftCorner(r, r) = Ir;  // boundary row x1(t0) = 0
      diag.bottomRows(r) = Mx;
    } else if (j < N) {
      diag.topRows(r) = Pq;
      diag.bottomRows(r) = Mx;
    } else {
      diag.topRows(r) = Pq;
      diag.block(r, r, r, r) = Ir;  // boundary row q1(T) = 0
    }
    if (j > 0) diag -= Lo * upper_elim_[j - 1];
    pivot_lu_.emplace_back(diag);
    if (!pivot_lu_.back().isInvertible())
      throw SingularPivotError(
          "TpbvpSolver: singular block pivot at node " + std::to_string(j) +
              "; refine the grid",
          j);
    if (j < N) upper_elim_.push_back(pivot_lu_.back().solve(Up));
  }
}

std::pair<Trajectory, Trajectory> TpbvpSolver::solve(
    const Trajectory& y) const {
  const int r = r_;
  const int na = coeffs_.algebraic();
  const int n = coeffs_.n();
  const int N = grid_.N;
  if (y.dim() != n)
    throw DimensionError("TpbvpSolver::solve: y must have n components");
  if (!(y.grid == grid_))
    throw DimensionError("TpbvpSolver::solve: y must live on the solver grid");
  const double h = grid_.h();

  // Forcing per node: gx = C2 S y2, gq = C3' C4 S y2 - y1.
  Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(r, N + 1);
  Eigen::MatrixXd gq = -y.values.topRows(r);
  if (na > 0) {
    const Eigen::MatrixXd Sy2 = coeffs_.S * y.values.bottomRows(na);
    gx += coeffs_.C2 * Sy2;
    gq += coeffs_.C3.transpose() * (coeffs_.C4 * Sy2);
  }

  // Forward elimination, then back substitution over the 2r-blocks.
  std::vector<Eigen::VectorXd> fsol(N + 1);
  Eigen::VectorXd b(2 * r);
  for (int j = 0; j <= N; ++j) {
    if (j == 0)
      b.head(r).setZero();
    else
      b.head(r) = 0.5 * h * (gq.col(j - 1) + gq.col(j));
    if (j == N)
      b.tail(r).setZero();
    else
      b.tail(r) = 0.5 * h * (gx.col(j) + gx.col(j + 1));
    if (j > 0) {
      const Eigen::VectorXd& prev = fsol[j - 1];
      b.head(r) -= lower_q_ * prev;  // only the q-rows couple backwards
    }
    fsol[j] = pivot_lu_[j].solve(b);
  }

  Eigen::MatrixXd x1(r, N + 1), q1(r, N + 1);
  Eigen::VectorXd w = fsol[N];
  x1.col(N) = w.head(r);
  q1.col(N) = w.tail(r);
  for (int j = N - 1; j >= 0; --j) {
    w = fsol[j] - upper_elim_[j] * w;
    x1.col(j) = w.head(r);
    q1.col(j) = w.tail(r);
  }
  // The boundary rows are solved exactly up to the pivot solve; pin them.
  x1.col(0).setZero();
  q1.col(N).setZero();
  return {Trajectory(grid_, std::move(x1)), Trajectory(grid_, std::move(q1))};
}

std::pair<Trajectory, Trajectory> solve_tpbvp(const BvpCoefficients& coeffs,
                                              const Trajectory& y) {
  return TpbvpSolver(coeffs, y.grid).solve(y);
}

std::pair<Trajectory, Trajectory> recover_algebraic(
    const BvpCoefficients& coeffs, const Trajectory& x1, const Trajectory& q1,
    const Trajectory& y) {
  const int r = coeffs.r();
  const int na = coeffs.algebraic();
  const int N = y.grid.N;
  if (y.dim() != coeffs.n())
    throw DimensionError("recover_algebraic: y must have n components");
  if (x1.dim() != r || q1.dim() != r)
    throw DimensionError("recover_algebraic: x1, q1 must have r components");
  if (!(x1.grid == y.grid) || !(q1.grid == y.grid))
    throw DimensionError("recover_algebraic: trajectories on different grids");

  if (na == 0) {
    return {Trajectory(y.grid, Eigen::MatrixXd::Zero(0, N + 1)),
            Trajectory(y.grid, Eigen::MatrixXd::Zero(0, N + 1))};
  }
  const Eigen::MatrixXd Ia = Eigen::MatrixXd::Identity(na, na);
  // t = S (C2' q1 + y2), pointwise.
  Eigen::MatrixXd t = y.values.bottomRows(na);
  if (r > 0) t += coeffs.C2.transpose() * q1.values;
  t = coeffs.S * t;

  Eigen::MatrixXd x2 = t;
  Eigen::MatrixXd q2 = -coeffs.C4 * t;
  if (r > 0) {
    x2 -= coeffs.S * coeffs.C4.transpose() * coeffs.C3 * x1.values;
    q2 -= (Ia - coeffs.C4 * coeffs.S * coeffs.C4.transpose()) * coeffs.C3 *
          x1.values;
  }
  return {Trajectory(y.grid, std::move(x2)), Trajectory(y.grid, std::move(q2))};
}

namespace {

// Stacks [top; bottom] trajectories into one.
Trajectory stack(const Trajectory& top, const Trajectory& bottom) {
  Eigen::MatrixXd v(top.dim() + bottom.dim(), top.grid.nodes());
  if (top.dim() > 0) v.topRows(top.dim()) = top.values;
  if (bottom.dim() > 0) v.bottomRows(bottom.dim()) = bottom.values;
  return Trajectory(top.grid, std::move(v));
}

// Applies the estimation map y -> (x_hat, q_hat) reusing a prebuilt
// factorization when the system has a differential part.
std::pair<Trajectory, Trajectory> estimate_states(const BvpCoefficients& coeffs,
                                                  const TpbvpSolver* solver,
                                                  const Trajectory& y) {
  Trajectory x1 = Trajectory::zero(y.grid, 0);
  Trajectory q1 = Trajectory::zero(y.grid, 0);
  if (coeffs.r() > 0) {
    auto [x1s, q1s] = solver->solve(y);
    x1 = std::move(x1s);
    q1 = std::move(q1s);
  }
  auto [x2, q2] = recover_algebraic(coeffs, x1, q1, y);
  return {stack(x1, x2), stack(q1, q2)};
}

// Applies the piecewise-linear product-quadrature Gram matrix to node values:
// (Q v)_j accumulates h/2 times the interval means adjacent to node j.
Eigen::MatrixXd apply_product_gram(const Eigen::MatrixXd& v, double h) {
  const int N = static_cast<int>(v.cols()) - 1;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(v.rows(), N + 1);
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd mean = 0.25 * (v.col(i) + v.col(i + 1));
    out.col(i) += h * mean;
    out.col(i + 1) += h * mean;
  }
  return out;
}

}  // namespace

DaeEstimate estimate_trajectory(const CanonicalDescriptor& canonical,
                                const Trajectory& y) {
  if (y.dim() != canonical.n())
    throw DimensionError("estimate_trajectory: y must have n components");
  const BvpCoefficients coeffs = assemble_coefficients(canonical);
  std::unique_ptr<TpbvpSolver> solver;
  if (coeffs.r() > 0) solver = std::make_unique<TpbvpSolver>(coeffs, y.grid);

  DaeEstimate est;
  auto [x_hat, q_hat] = estimate_states(coeffs, solver.get(), y);
  est.x_hat = std::move(x_hat);
  est.q_hat = std::move(q_hat);
  Trajectory misfit(y.grid, y.values - est.x_hat.values);
  est.consistency = quadrature::product_quadrature(y, misfit);
  if (est.consistency > 1.0 + kConsistencySlack)
    throw EmptyAposterioriSet(
        "estimate_trajectory: observation incompatible with the unit "
        "uncertainty ball (consistency " + std::to_string(est.consistency) + ")");
  est.factor = std::sqrt(std::max(0.0, 1.0 - est.consistency));
  return est;
}

DirectionalError directional_error(const CanonicalDescriptor& canonical,
                                   const Trajectory& ell) {
  if (ell.dim() != canonical.n())
    throw DimensionError("directional_error: ell must have n components");
  DirectionalError de;
  de.integrand = Eigen::VectorXd::Zero(ell.grid.nodes());

  // Normalize first: the map ell -> p is linear, so the value is absolutely
  // homogeneous by construction and the clamp threshold is scale-invariant.
  const double scale = quadrature::trapezoid_norm(ell);
  if (scale == 0.0) return de;
  Trajectory unit(ell.grid, ell.values / scale);

  const BvpCoefficients coeffs = assemble_coefficients(canonical);
  std::unique_ptr<TpbvpSolver> solver;
  if (coeffs.r() > 0) solver = std::make_unique<TpbvpSolver>(coeffs, ell.grid);
  auto [p, q] = estimate_states(coeffs, solver.get(), unit);

  double value = quadrature::product_quadrature(unit, p);
  if (value < 0.0) {
    if (value < kNegativeIntegralClamp)
      throw InternalError(
          "directional_error: integral of (ell, p) is negative beyond "
          "roundoff (" + std::to_string(value) + "); discretization bug");
    value = 0.0;
    de.clamped = true;
  }
  for (int j = 0; j < ell.grid.nodes(); ++j)
    de.integrand(j) = scale * scale * unit.values.col(j).dot(p.values.col(j));
  de.value = scale * std::sqrt(value);
  return de;
}

WorstCaseError worst_case_error(const CanonicalDescriptor& canonical,
                                const Trajectory& y, double rel_tol,
                                int max_iter) {
  const DaeEstimate est = estimate_trajectory(canonical, y);  // checks emptiness
  const BvpCoefficients coeffs = assemble_coefficients(canonical);
  std::unique_ptr<TpbvpSolver> solver;
  if (coeffs.r() > 0) solver = std::make_unique<TpbvpSolver>(coeffs, y.grid);

  const TimeGrid grid = y.grid;
  const double h = grid.h();
  const Eigen::VectorXd weights = quadrature::trapezoid_weights(grid);

  // Deterministic start direction.
  std::mt19937_64 rng(0x6d6d657374ULL);
  Eigen::MatrixXd v(y.dim(), grid.nodes());
  for (int j = 0; j < v.cols(); ++j)
    for (int i = 0; i < v.rows(); ++i)
      v(i, j) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;

  auto normalize = [&](Eigen::MatrixXd& m) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += weights(j) * m.col(j).squaredNorm();
    s = std::sqrt(s);
    if (s > 0.0) m /= s;
    return s;
  };
  normalize(v);

  // Power iteration for the generalized problem Q G ell = lambda Omega ell:
  // G is the solution map ell -> p (self-adjoint PSD in the product
  // quadrature), Omega the diagonal trapezoidal Gram. Each step is one
  // boundary-value solve on the shared factorization.
  WorstCaseError wc;
  wc.converged = false;
  double rayleigh = 0.0;
  Trajectory ell(grid, v);
  for (int it = 1; it <= max_iter; ++it) {
    auto [p, q] = estimate_states(coeffs, solver.get(), ell);
    const double next = quadrature::product_quadrature(ell, p);
    Eigen::MatrixXd next_v = apply_product_gram(p.values, h);
    for (int j = 0; j < next_v.cols(); ++j) next_v.col(j) /= weights(j);
    normalize(next_v);
    ell = Trajectory(grid, std::move(next_v));
    wc.iterations = it;
    if (it > 1 && std::abs(next - rayleigh) <=
                      rel_tol * std::max(std::abs(next), 1e-300)) {
      rayleigh = next;
      wc.converged = true;
      break;
    }
    rayleigh = next;
  }
  wc.lambda_max = std::max(0.0, rayleigh);
  wc.ell_star = ell;
  wc.value = est.factor * std::sqrt(wc.lambda_max);
  return wc;
}

}  // namespace mmest
