#pragma once

#include <Eigen/Dense>

#include "mmest/errors.hpp"
#include "mmest/trajectory.hpp"

namespace mmest {

// Default relative singular-value threshold declaring the rank of F.
inline constexpr double kRankTol = 1e-10;

// Conditioning bound on C4 for index-1 forward simulation.
inline constexpr double kIndexOneCondBound = 1e8;

// Linear descriptor system d/dt(F x) - C x = f on [t0, T] with F x(t0) = 0.
struct DescriptorSystem {
  Eigen::MatrixXd F;  // n x n, possibly singular
  Eigen::MatrixXd C;  // n x n
  double t0 = 0.0;
  double T = 1.0;

  int n() const { return static_cast<int>(F.rows()); }

  void validate() const {
    if (F.rows() != F.cols() || C.rows() != C.cols() || F.rows() != C.rows())
      throw DimensionError("DescriptorSystem: F and C must be square and equal-sized");
    if (!(T > t0)) throw InputError("DescriptorSystem: requires T > t0");
  }
};

// SVD canonical form of the pencil (F, C): in coordinates x = V x~ and after
// scaling the first r equation rows by Sigma_r^-1, F becomes [[I,0],[0,0]]
// and C splits into blocks
//   [C1 C2]
//   [C3 C4],  C1: r x r, C4: (n-r) x (n-r).
struct CanonicalDescriptor {
  int r = 0;           // rank of F
  Eigen::MatrixXd C1;  // r x r
  Eigen::MatrixXd C2;  // r x (n-r)
  Eigen::MatrixXd C3;  // (n-r) x r
  Eigen::MatrixXd C4;  // (n-r) x (n-r)
  Eigen::MatrixXd U;   // n x n orthogonal
  Eigen::MatrixXd V;   // n x n orthogonal
  Eigen::VectorXd Sigma_r;  // r positive singular values of F
  double t0 = 0.0;
  double T = 1.0;

  int n() const { return static_cast<int>(U.rows()); }
  int algebraic() const { return n() - r; }

  // Full canonical C matrix [[C1,C2],[C3,C4]].
  Eigen::MatrixXd C_blocks() const {
    Eigen::MatrixXd C(n(), n());
    C.topLeftCorner(r, r) = C1;
    C.topRightCorner(r, n() - r) = C2;
    C.bottomLeftCorner(n() - r, r) = C3;
    C.bottomRightCorner(n() - r, n() - r) = C4;
    return C;
  }
};

// Reduces (F, C) to SVD canonical form. The rank r counts singular values
// above rank_tol * sigma_max; r = 0 (purely algebraic) and r = n (pure ODE)
// are valid outcomes.
CanonicalDescriptor svd_canonical_form(const DescriptorSystem& system,
                                       double rank_tol = kRankTol);

// Coordinate changes x~ = V* x and x = V x~, applied per node.
Trajectory to_canonical(const CanonicalDescriptor& canonical,
                        const Trajectory& x_original);
Trajectory from_canonical(const CanonicalDescriptor& canonical,
                          const Trajectory& x_tilde);

// Forward simulation of the index-1 canonical system with x1(t0) = 0:
// integrates x1' = C1 x1 + C2 x2 + f1 by the trapezoidal scheme and recovers
// x2 = -C4^-1 (C3 x1 + f2) pointwise. Requires cond(C4) <= 1e8.
Trajectory simulate(const CanonicalDescriptor& canonical, const Trajectory& f,
                    const TimeGrid& grid);

}  // namespace mmest
