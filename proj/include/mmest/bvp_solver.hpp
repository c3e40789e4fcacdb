#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "mmest/descriptor.hpp"
#include "mmest/errors.hpp"
#include "mmest/trajectory.hpp"

namespace mmest {

// Clamp threshold for roundoff-negative values of the error integral
// (ell, p); anything more negative is an internal-consistency failure.
inline constexpr double kNegativeIntegralClamp = -1e-12;

// Tolerance above 1 at which the consistency value declares the a posteriori
// set empty.
inline constexpr double kConsistencySlack = 1e-10;

// Coefficient matrices of the estimation boundary-value system
//   x1' = A x1 + B q1 + C2 S y2
//   q1' = W x1 + D q1 + C3' C4 S y2 - y1
// with S = (E + C4' C4)^-1, A = C1 - C2 S C4' C3, B = C2 S C2' + E,
// W = C3' (E - C4 S C4') C3 + E, D = -C1' + C3' C4 S C2'.
// The canonical blocks C2, C3, C4 are kept alongside because the forcing
// terms and the algebraic recovery need them.
struct BvpCoefficients {
  Eigen::MatrixXd S;  // (n-r) x (n-r), symmetric positive definite
  Eigen::MatrixXd A;  // r x r
  Eigen::MatrixXd B;  // r x r, symmetric positive definite
  Eigen::MatrixXd W;  // r x r, symmetric positive definite
  Eigen::MatrixXd D;  // r x r
  Eigen::MatrixXd C2, C3, C4;  // canonical blocks (copies)

  int r() const { return static_cast<int>(A.rows()); }
  int algebraic() const { return static_cast<int>(S.rows()); }
  int n() const { return r() + algebraic(); }
};

// Minimax a posteriori estimate of a descriptor-system trajectory.
struct DaeEstimate {
  Trajectory x_hat;  // n components; x1(t0) = 0 exactly
  Trajectory q_hat;  // n components; q1(T) = 0 exactly
  double factor = 0.0;
  double consistency = 0.0;
};

// Directional error sqrt(integral of (ell, p)); the integrand is reported
// per node. `clamped` notes that a tiny negative integral was clamped to 0.
struct DirectionalError {
  double value = 0.0;
  Eigen::VectorXd integrand;  // (ell(t_j), p(t_j)) per node
  bool clamped = false;
};

// Worst-case a posteriori error over unit-L2-norm directions.
struct WorstCaseError {
  Trajectory ell_star;  // maximizing direction, unit trapezoidal L2 norm
  double value = 0.0;   // factor * sqrt(lambda_max)
  double lambda_max = 0.0;
  bool converged = true;
  int iterations = 0;
};

// Builds the coefficient matrices from the canonical blocks. B and W are
// symmetrized by averaging with their transposes to kill roundoff asymmetry.
BvpCoefficients assemble_coefficients(const CanonicalDescriptor& canonical);

// Reusable factorization of the Crank-Nicolson block-tridiagonal system for
// one grid: build once, then solve for many observation trajectories
// (e.g. the directions visited by the power iteration). Solves are
// read-only on the factorization and safe to run in parallel.
class TpbvpSolver {
 public:
  TpbvpSolver(const BvpCoefficients& coeffs, const TimeGrid& grid);

  // Solves for the given observation y (n components on the grid);
  // returns (x1, q1) with the boundary rows x1(t0) = 0, q1(T) = 0 exact.
  std::pair<Trajectory, Trajectory> solve(const Trajectory& y) const;

  const TimeGrid& grid() const { return grid_; }

 private:
  BvpCoefficients coeffs_;
  TimeGrid grid_;
  int r_;
  // Block-tridiagonal LU sweep data: per node, the factored pivot and the
  // already-eliminated upper coupling; the lower couplings are fixed blocks.
  std::vector<Eigen::FullPivLU<Eigen::MatrixXd>> pivot_lu_;
  std::vector<Eigen::MatrixXd> upper_elim_;  // pivot^-1 * upper block
  Eigen::MatrixXd lower_x_, lower_q_;        // constant sub-blocks
  Eigen::MatrixXd upper_x_;
};

// One-shot convenience wrapper around TpbvpSolver.
std::pair<Trajectory, Trajectory> solve_tpbvp(const BvpCoefficients& coeffs,
                                              const Trajectory& y);

// Pointwise algebraic recovery
//   x2 = -S C4' C3 x1 + S (C2' q1 + y2)
//   q2 = -(E - C4 S C4') C3 x1 - C4 S (C2' q1 + y2).
std::pair<Trajectory, Trajectory> recover_algebraic(
    const BvpCoefficients& coeffs, const Trajectory& x1, const Trajectory& q1,
    const Trajectory& y);

// Full estimation pipeline: boundary-value solve plus algebraic recovery;
// consistency = integral of (y, y - x_hat), factor = sqrt(1 - consistency).
// Throws EmptyAposterioriSet when consistency > 1 + 1e-10.
DaeEstimate estimate_trajectory(const CanonicalDescriptor& canonical,
                                const Trajectory& y);

// A priori directional error sqrt(integral of (ell, p)) where p solves the
// estimation system with y := ell.
DirectionalError directional_error(const CanonicalDescriptor& canonical,
                                   const Trajectory& ell);

// Worst-case a posteriori error: power iteration on the self-adjoint map
// ell -> p, normalized in the trapezoidal L2 norm. Stops when the Rayleigh
// quotient changes by less than rel_tol relative, or flags non-convergence
// after max_iter iterations (returning the best iterate).
WorstCaseError worst_case_error(const CanonicalDescriptor& canonical,
                                const Trajectory& y, double rel_tol = 1e-10,
                                int max_iter = 500);

}  // namespace mmest
