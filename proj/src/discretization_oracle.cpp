#include "mmest/discretization_oracle.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace mmest {

Eigen::VectorXd DiscretizedProblem::pack(const Trajectory& traj) const {
  if (!(traj.grid == grid) || traj.dim() != n)
    throw DimensionError("DiscretizedProblem::pack: trajectory does not match");
  return Eigen::Map<const Eigen::VectorXd>(traj.values.data(),
                                           traj.values.size());
}

Trajectory DiscretizedProblem::unpack(const Eigen::VectorXd& phi) const {
  if (phi.size() != static_cast<Eigen::Index>(n) * grid.nodes())
    throw DimensionError("DiscretizedProblem::unpack: wrong length");
  return Trajectory(grid,
                    Eigen::Map<const Eigen::MatrixXd>(phi.data(), n, grid.nodes()));
}

DiscretizedProblem discretize(const CanonicalDescriptor& canonical,
                              const TimeGrid& grid) {
  grid.validate();
  const int n = canonical.n();
  const int r = canonical.r;
  const int N = grid.N;
  if (static_cast<long>(N) * n > kMaxOracleSize)
    throw InputError("discretize: N * n = " + std::to_string(static_cast<long>(N) * n) +
                     " exceeds the dense-oracle cap " +
                     std::to_string(kMaxOracleSize));
  const double h = grid.h();
  const double sh = std::sqrt(h);

  Eigen::MatrixXd Ftil = Eigen::MatrixXd::Zero(n, n);
  Ftil.topLeftCorner(r, r).setIdentity();
  const Eigen::MatrixXd C = canonical.C_blocks();

  DiscretizedProblem dp;
  dp.grid = grid;
  dp.n = n;
  dp.r = r;
  dp.L_h = Eigen::MatrixXd::Zero(N * n + r, (N + 1) * n);
  const Eigen::MatrixXd left = sh * (-Ftil / h - 0.5 * C);
  const Eigen::MatrixXd right = sh * (Ftil / h - 0.5 * C);
  for (int i = 0; i < N; ++i) {
    dp.L_h.block(i * n, i * n, n, n) = left;
    dp.L_h.block(i * n, (i + 1) * n, n, n) = right;
  }
  dp.L_h.block(N * n, 0, r, r) =
      std::sqrt(kPenaltyWeight) * Eigen::MatrixXd::Identity(r, r);

  const Eigen::VectorXd w = quadrature::trapezoid_weights(grid);
  dp.weights.resize((N + 1) * n);
  dp.H_h = Eigen::MatrixXd::Zero((N + 1) * n, (N + 1) * n);
  for (int j = 0; j <= N; ++j) {
    const double sq = std::sqrt(w(j));
    for (int i = 0; i < n; ++i) {
      dp.H_h(j * n + i, j * n + i) = sq;
      dp.weights(j * n + i) = sq * sq;  // keeps H_h^2 == diag(weights) exact
    }
  }
  return dp;
}

OracleEstimate oracle_estimate(const CanonicalDescriptor& canonical,
                               const Trajectory& y) {
  const DiscretizedProblem dp = discretize(canonical, y.grid);
  const Eigen::VectorXd y_obs = dp.H_h * dp.pack(y);
  const AposterioriResult res = aposteriori_estimate(dp.problem(), y_obs);

  OracleEstimate oe;
  oe.x_hat = dp.unpack(res.phi_hat);
  oe.z_rows = res.q_hat;
  oe.consistency = res.consistency;
  oe.factor = res.factor;
  const double sh = std::sqrt(y.grid.h());
  oe.q_mid.resize(dp.n, y.grid.N);
  for (int i = 0; i < y.grid.N; ++i)
    oe.q_mid.col(i) = oe.z_rows.segment(i * dp.n, dp.n) / sh;
  return oe;
}

double oracle_directional_sigma(const DiscretizedProblem& dp,
                                const Trajectory& ell) {
  // The continuous direction acts through the L2 pairing, so its discrete
  // counterpart is the Gram-weighted vector Omega * ell with
  // Omega = H_h' H_h; sigma^2 = ell' Omega p then matches the trapezoidal
  // integral of (ell, p).
  const Eigen::VectorXd dual = dp.weights.asDiagonal() * dp.pack(ell);
  return solve_euler(dp.problem(), dual).sigma;
}

namespace {

// Trapezoidal L2 norm of node values restricted to the central window.
double windowed_l2(const Eigen::MatrixXd& diff, const TimeGrid& grid,
                   double margin) {
  const int N = grid.N;
  const int lo = static_cast<int>(std::ceil(margin * N));
  const int hi = static_cast<int>(std::floor((1.0 - margin) * N));
  double s = 0.0;
  for (int j = lo; j <= hi; ++j) s += grid.h() * diff.col(j).squaredNorm();
  return std::sqrt(s);
}

double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace

CompareReport compare(const CanonicalDescriptor& canonical,
                      const std::function<Eigen::VectorXd(double)>& y_of_t,
                      const std::vector<int>& refinement) {
  if (refinement.size() < 2)
    throw InputError("compare: need at least two grids for an order estimate");
  const int n = canonical.n();
  CompareReport report;
  for (int N : refinement) {
    TimeGrid grid(canonical.t0, canonical.T, N);
    Eigen::MatrixXd values(n, grid.nodes());
    for (int j = 0; j < grid.nodes(); ++j) {
      Eigen::VectorXd v = y_of_t(grid.node(j));
      if (v.size() != n)
        throw DimensionError("compare: y_of_t must return n components");
      values.col(j) = v;
    }
    Trajectory y(grid, values);

    const DaeEstimate solver_est = estimate_trajectory(canonical, y);
    const OracleEstimate oracle_est = oracle_estimate(canonical, y);

    const Eigen::MatrixXd diff =
        solver_est.x_hat.values - oracle_est.x_hat.values;
    GridComparison gc;
    gc.grid = grid;
    gc.l2_diff = quadrature::trapezoid_norm(Trajectory(grid, diff));
    gc.l2_diff_windowed = windowed_l2(diff, grid, kCompareWindowMargin);
    gc.max_node_diff = diff.cwiseAbs().maxCoeff();
    // Both estimators expose the input estimate q = d(Fx)/dt - Cx; the
    // solver carries it at nodes, the oracle at interval midpoints.
    double qdiff = 0.0;
    for (int i = 0; i < N; ++i) {
      const Eigen::VectorXd solver_mid =
          0.5 * (solver_est.q_hat.values.col(i) +
                 solver_est.q_hat.values.col(i + 1));
      qdiff = std::max(
          qdiff, (solver_mid - oracle_est.q_mid.col(i)).cwiseAbs().maxCoeff());
    }
    gc.q_mid_max_diff = qdiff;
    gc.consistency_rel_diff =
        rel_diff(solver_est.consistency, oracle_est.consistency);
    gc.factor_abs_diff = std::abs(solver_est.factor - oracle_est.factor);
    report.grids.push_back(gc);
  }

  for (std::size_t i = 0; i + 1 < report.grids.size(); ++i) {
    const double d0 = report.grids[i].l2_diff_windowed;
    const double d1 = report.grids[i + 1].l2_diff_windowed;
    const double ratio =
        static_cast<double>(refinement[i + 1]) / refinement[i];
    // A vanishing difference (exactly representable estimate) counts as
    // fully converged; report a large finite order.
    double order;
    if (d1 <= 0.0 || d0 <= 0.0)
      order = 16.0;
    else
      order = std::log(d0 / d1) / std::log(ratio);
    report.orders.push_back(order);
  }
  double sum = 0.0;
  for (double o : report.orders) sum += o;
  report.order = sum / static_cast<double>(report.orders.size());
  return report;
}

}  // namespace mmest
