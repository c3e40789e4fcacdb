#include "mmest/descriptor.hpp"

#include <Eigen/Dense>

namespace mmest {

CanonicalDescriptor svd_canonical_form(const DescriptorSystem& system,
                                       double rank_tol) {
  system.validate();
  if (!(rank_tol > 0.0))
    throw InputError("svd_canonical_form: rank_tol must be positive");
  const int n = system.n();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      system.F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double sigma_max = n > 0 ? sv(0) : 0.0;
  int r = 0;
  while (r < n && sv(r) > rank_tol * sigma_max) ++r;

  CanonicalDescriptor canonical;
  canonical.r = r;
  canonical.U = svd.matrixU();
  canonical.V = svd.matrixV();
  canonical.Sigma_r = sv.head(r);
  canonical.t0 = system.t0;
  canonical.T = system.T;

  // Row-scale the first r rows of U* C V by Sigma_r^-1: this is the same
  // scaling that turns the differential rows of U* F V into the identity.
  Eigen::MatrixXd Ct = canonical.U.transpose() * system.C * canonical.V;
  Ct.topRows(r) = canonical.Sigma_r.cwiseInverse().asDiagonal() * Ct.topRows(r);
  canonical.C1 = Ct.topLeftCorner(r, r);
  canonical.C2 = Ct.topRightCorner(r, n - r);
  canonical.C3 = Ct.bottomLeftCorner(n - r, r);
  canonical.C4 = Ct.bottomRightCorner(n - r, n - r);
  return canonical;
}

namespace {

Trajectory apply_per_node(const Eigen::MatrixXd& M, const Trajectory& x,
                          const char* what) {
  if (x.dim() != M.cols())
    throw DimensionError(std::string(what) + ": trajectory has " +
                         std::to_string(x.dim()) + " components, expected " +
                         std::to_string(M.cols()));
  return Trajectory(x.grid, M * x.values);
}

}  // namespace

Trajectory to_canonical(const CanonicalDescriptor& canonical,
                        const Trajectory& x_original) {
  return apply_per_node(canonical.V.transpose(), x_original, "to_canonical");
}

Trajectory from_canonical(const CanonicalDescriptor& canonical,
                          const Trajectory& x_tilde) {
  return apply_per_node(canonical.V, x_tilde, "from_canonical");
}

Trajectory simulate(const CanonicalDescriptor& canonical, const Trajectory& f,
                    const TimeGrid& grid) {
  grid.validate();
  const int n = canonical.n();
  const int r = canonical.r;
  const int na = n - r;
  if (f.dim() != n)
    throw DimensionError("simulate: forcing must have n components");
  if (!(f.grid == grid))
    throw DimensionError("simulate: forcing must be sampled on the grid");

  // Index-1 requirement: C4 invertible and not too badly conditioned.
  Eigen::PartialPivLU<Eigen::MatrixXd> c4_lu;
  if (na > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(canonical.C4);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > kIndexOneCondBound)
      throw IndexError("simulate: system is not index-1 (C4 singular or cond > 1e8)");
    c4_lu.compute(canonical.C4);
  }

  const double h = grid.h();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, grid.nodes());

  if (r > 0) {
    // Reduced ODE: x1' = (C1 - C2 C4^-1 C3) x1 + f1 - C2 C4^-1 f2.
    Eigen::MatrixXd A = canonical.C1;
    Eigen::MatrixXd forcing(r, grid.nodes());
    forcing = f.values.topRows(r);
    if (na > 0) {
      const Eigen::MatrixXd C4inv_C3 = c4_lu.solve(canonical.C3);
      A -= canonical.C2 * C4inv_C3;
      forcing -= canonical.C2 * c4_lu.solve(f.values.bottomRows(na));
    }
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(r, r);
    Eigen::PartialPivLU<Eigen::MatrixXd> step(I - 0.5 * h * A);
    const Eigen::MatrixXd Ap = I + 0.5 * h * A;
    for (int i = 0; i < grid.N; ++i) {
      x.col(i + 1).head(r) =
          step.solve(Ap * x.col(i).head(r) +
                     0.5 * h * (forcing.col(i) + forcing.col(i + 1)));
    }
  }
  if (na > 0) {
    // Algebraic part pointwise: x2 = -C4^-1 (C3 x1 + f2).
    x.bottomRows(na) =
        -c4_lu.solve(canonical.C3 * x.topRows(r) + f.values.bottomRows(na));
  }
  return Trajectory(grid, std::move(x));
}

}  // namespace mmest
