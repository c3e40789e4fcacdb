#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mmest/errors.hpp"

namespace mmest {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Default relative tolerance deciding whether a direction lies in
// R(L*) + R(H*).
inline constexpr double kAdmissibilityTol = 1e-8;

// Relative eigenvalue cutoff of the pseudo-inverse used by the
// normal-equations solver.
inline constexpr double kPinvCutoff = 1e-12;

// Finite-dimensional estimation problem: state equation L*phi = f with
// ||f|| <= radius_f, observation y = H*phi + eta with ||eta|| <= radius_eta.
struct EstimationProblem {
  Eigen::MatrixXd L;  // m x n
  Eigen::MatrixXd H;  // k x n
  double radius_f = 1.0;
  double radius_eta = 1.0;

  int n() const { return static_cast<int>(L.cols()); }
  int m() const { return static_cast<int>(L.rows()); }
  int k() const { return static_cast<int>(H.rows()); }

  void validate() const {
    if (L.cols() != H.cols())
      throw DimensionError("EstimationProblem: L and H need equal column counts");
    if (L.cols() < 1) throw DimensionError("EstimationProblem: need n >= 1");
    if (!(radius_f > 0.0) || !(radius_eta > 0.0))
      throw InputError("EstimationProblem: radii must be positive");
  }
};

// Solution of the Euler equations for a direction ell.
// sigma is +infinity when ell is not admissible (the minimax error is
// infinite); the remaining members then hold the minimum-norm solution for
// the admissible component of ell so callers can still tabulate.
struct EulerSolution {
  Eigen::VectorXd p_hat;  // length n
  Eigen::VectorXd z_hat;  // length m
  Eigen::VectorXd u_hat;  // length k
  double c_hat = 0.0;     // always 0 for centered balls
  double sigma = 0.0;

  bool admissible() const { return std::isfinite(sigma); }
};

// Minimum-norm decomposition evidence for ell in R(L*) + R(H*).
struct AdmissibilityReport {
  bool admissible = false;
  Eigen::VectorXd z_component;  // length m
  Eigen::VectorXd u_component;  // length k
  double residual_norm = 0.0;   // distance from ell to R(L*) + R(H*)
};

// Directional half-width of the a posteriori set.
struct DirectionalRadius {
  std::string name;
  Eigen::VectorXd ell;
  double sigma = 0.0;  // a priori error sigma(ell); +inf when inadmissible
  double d_hat = 0.0;  // factor * sigma; +inf when inadmissible
};

// A posteriori estimate for an observed vector y.
struct AposterioriResult {
  Eigen::VectorXd phi_hat;  // length n
  Eigen::VectorXd q_hat;    // length m, equals L*phi_hat
  double consistency = 0.0; // (y, y - H*phi_hat); the smallest energy
                            // ||f||^2 + ||eta||^2 reproducing y at unit radii
  double factor = 0.0;      // sqrt(1 - consistency); NaN when radii != 1
  std::vector<DirectionalRadius> radius;  // filled for supplied directions
};

// Worst direction of the a priori error over the unit sphere.
// When L and H share a nontrivial null space the error is unbounded;
// `finite` is then false and ell_star certifies it (a common null vector).
struct WorstDirection {
  Eigen::VectorXd ell_star;
  double sigma_max = 0.0;
  bool finite = true;
  bool converged = true;
  int iterations = 0;
};

// Minimum-norm decomposition ell ~= L* z + H* u; admissible iff the residual
// is <= tol * ||ell|| (ell = 0 is always admissible).
AdmissibilityReport check_direction(const EstimationProblem& problem,
                                    const Eigen::VectorXd& ell,
                                    double tol = kAdmissibilityTol);

// Solves (radius_f^-2 L*L + radius_eta^-2 H*H) p = ell for the minimum-norm
// p_hat; z_hat = radius_f^-2 L p_hat, u_hat = radius_eta^-2 H p_hat and
// sigma = sqrt((ell, p_hat)). sigma is +infinity when ell is inadmissible.
EulerSolution solve_euler(const EstimationProblem& problem,
                          const Eigen::VectorXd& ell,
                          double tol = kAdmissibilityTol);

// Value of the a priori error functional for an arbitrary estimator kernel u:
// radius_eta^2 (u,u) + radius_f^2 min{ ||z||^2 : L* z = ell - H* u }.
// Returns +infinity when ell - H* u is outside R(L*).
double apriori_value(const EstimationProblem& problem,
                     const Eigen::VectorXd& ell, const Eigen::VectorXd& u,
                     double tol = kAdmissibilityTol);

// Support value radius * min{ ||z|| : L* z = u }, or +infinity when u is
// outside R(L*).
double support_min_norm(const Eigen::MatrixXd& L, const Eigen::VectorXd& u,
                        double radius, double tol = kAdmissibilityTol);

// A posteriori (central) estimate phi_hat for the observation y, optionally
// with directional radii d_hat = factor * sigma(ell) for named directions.
// Radii in `problem` must both be 1 for factor/radius to be defined; with
// other radii only phi_hat, q_hat and the (weighted) consistency value are
// returned and factor is NaN. Throws EmptyAposterioriSet when no (f, eta)
// inside the unit ball reproduces y.
AposterioriResult aposteriori_estimate(
    const EstimationProblem& problem, const Eigen::VectorXd& y,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& directions = {},
    double tol = kAdmissibilityTol);

// Support interval of the a posteriori set in direction ell:
// ((ell, phi_hat) - d_hat, (ell, phi_hat) + d_hat). Returns
// (-inf, +inf) when ell is inadmissible.
std::pair<double, double> support_aposteriori(const EstimationProblem& problem,
                                              const Eigen::VectorXd& y,
                                              const Eigen::VectorXd& ell,
                                              double tol = kAdmissibilityTol);

// Maximizer of sigma(ell) over unit directions, found by inverse power
// iteration on M = radius_f^-2 L*L + radius_eta^-2 H*H.
WorstDirection worst_direction(const EstimationProblem& problem,
                               double rel_tol = 1e-10, int max_iter = 500);

}  // namespace mmest
