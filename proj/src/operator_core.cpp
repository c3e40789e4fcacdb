#include "mmest/operator_core.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace mmest {
namespace {

// Shared backend for the normal-equations route: eigendecomposition of
// M = radius_f^-2 L*L + radius_eta^-2 H*H with pseudo-inverse behavior on
// R(M) = R(L*) + R(H*). Eigenvalues below kPinvCutoff * lambda_max count
// as zero.
class NormalOperator {
 public:
  explicit NormalOperator(const EstimationProblem& problem) {
    problem.validate();
    const double wf = 1.0 / (problem.radius_f * problem.radius_f);
    const double we = 1.0 / (problem.radius_eta * problem.radius_eta);
    M_ = wf * problem.L.transpose() * problem.L +
         we * problem.H.transpose() * problem.H;
    M_ = 0.5 * (M_ + M_.transpose());  // kill roundoff asymmetry
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M_);
    if (eig.info() != Eigen::Success)
      throw InternalError("NormalOperator: eigendecomposition failed");
    values_ = eig.eigenvalues();
    vectors_ = eig.eigenvectors();
    const double lambda_max = values_.size() ? values_.maxCoeff() : 0.0;
    cutoff_ = kPinvCutoff * std::max(lambda_max, 0.0);
  }

  const Eigen::MatrixXd& matrix() const { return M_; }

  // Minimum-norm solution of M p = v restricted to R(M).
  Eigen::VectorXd pinv_apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd c = vectors_.transpose() * v;
    for (int i = 0; i < c.size(); ++i)
      c(i) = values_(i) > cutoff_ ? c(i) / values_(i) : 0.0;
    return vectors_ * c;
  }

  // Distance from v to R(M).
  double range_residual(const Eigen::VectorXd& v) const {
    Eigen::VectorXd c = vectors_.transpose() * v;
    double s = 0.0;
    for (int i = 0; i < c.size(); ++i)
      if (values_(i) <= cutoff_) s += c(i) * c(i);
    return std::sqrt(s);
  }

  bool in_range(const Eigen::VectorXd& v, double tol) const {
    return range_residual(v) <= tol * v.norm();
  }

  bool positive_definite() const {
    return values_.size() > 0 && values_.minCoeff() > cutoff_;
  }

  // Eigenvector of the smallest eigenvalue (the flattest direction; a common
  // null vector of L and H when M is singular).
  Eigen::VectorXd flattest_direction() const {
    Eigen::Index i;
    values_.minCoeff(&i);
    return vectors_.col(i);
  }

 private:
  Eigen::MatrixXd M_;
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
  double cutoff_ = 0.0;
};

void check_length(const Eigen::VectorXd& v, int expected, const char* what) {
  if (v.size() != expected)
    throw DimensionError(std::string(what) + ": expected length " +
                         std::to_string(expected) + ", got " +
                         std::to_string(v.size()));
}

}  // namespace

AdmissibilityReport check_direction(const EstimationProblem& problem,
                                    const Eigen::VectorXd& ell, double tol) {
  problem.validate();
  check_length(ell, problem.n(), "check_direction: ell");

  // Minimum-norm (z, u) with [L^T H^T] (z; u) ~= ell; the least-squares
  // residual is exactly the distance from ell to R(L*) + R(H*).
  Eigen::MatrixXd A(problem.n(), problem.m() + problem.k());
  A << problem.L.transpose(), problem.H.transpose();
  Eigen::VectorXd w = A.completeOrthogonalDecomposition().solve(ell);

  AdmissibilityReport report;
  report.z_component = w.head(problem.m());
  report.u_component = w.tail(problem.k());
  report.residual_norm = (A * w - ell).norm();
  report.admissible =
      ell.norm() == 0.0 || report.residual_norm <= tol * ell.norm();
  return report;
}

EulerSolution solve_euler(const EstimationProblem& problem,
                          const Eigen::VectorXd& ell, double tol) {
  problem.validate();
  check_length(ell, problem.n(), "solve_euler: ell");
  NormalOperator op(problem);

  EulerSolution sol;
  sol.p_hat = op.pinv_apply(ell);
  sol.z_hat = problem.L * sol.p_hat / (problem.radius_f * problem.radius_f);
  sol.u_hat =
      problem.H * sol.p_hat / (problem.radius_eta * problem.radius_eta);
  sol.c_hat = 0.0;

  if (ell.norm() != 0.0 && !op.in_range(ell, tol)) {
    sol.sigma = kInfinity;  // inadmissible: infinite minimax error
    return sol;
  }
  const double value = ell.dot(sol.p_hat);
  sol.sigma = std::sqrt(std::max(0.0, value));
  return sol;
}

double apriori_value(const EstimationProblem& problem,
                     const Eigen::VectorXd& ell, const Eigen::VectorXd& u,
                     double tol) {
  problem.validate();
  check_length(ell, problem.n(), "apriori_value: ell");
  check_length(u, problem.k(), "apriori_value: u");
  const Eigen::VectorXd rhs = ell - problem.H.transpose() * u;
  const double min_part = support_min_norm(problem.L, rhs, 1.0, tol);
  if (!std::isfinite(min_part)) return kInfinity;
  return problem.radius_eta * problem.radius_eta * u.squaredNorm() +
         problem.radius_f * problem.radius_f * min_part * min_part;
}

double support_min_norm(const Eigen::MatrixXd& L, const Eigen::VectorXd& u,
                        double radius, double tol) {
  if (L.cols() != u.size())
    throw DimensionError("support_min_norm: u length must match columns of L");
  if (!(radius > 0.0)) throw InputError("support_min_norm: radius must be positive");
  if (u.norm() == 0.0) return 0.0;
  Eigen::VectorXd z =
      L.transpose().completeOrthogonalDecomposition().solve(u);
  const double residual = (L.transpose() * z - u).norm();
  if (residual > tol * u.norm()) return kInfinity;  // u outside R(L*)
  return radius * z.norm();
}

AposterioriResult aposteriori_estimate(
    const EstimationProblem& problem, const Eigen::VectorXd& y,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& directions,
    double tol) {
  problem.validate();
  check_length(y, problem.k(), "aposteriori_estimate: y");
  NormalOperator op(problem);

  const double we = 1.0 / (problem.radius_eta * problem.radius_eta);
  AposterioriResult result;
  result.phi_hat = op.pinv_apply(we * problem.H.transpose() * y);
  result.q_hat = problem.L * result.phi_hat;
  // Lagrange identity: the value of min ||L phi||^2 + ||y - H phi||^2 is
  // (y, y - H phi_hat) (weighted by radius_eta^-2 for non-unit radii).
  result.consistency = we * y.dot(y - problem.H * result.phi_hat);

  const bool unit_radii = problem.radius_f == 1.0 && problem.radius_eta == 1.0;
  if (!unit_radii) {
    // The joint-ball radius formula is stated for unit radii only.
    result.factor = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  if (result.consistency > 1.0)
    throw EmptyAposterioriSet(
        "aposteriori_estimate: no (f, eta) in the unit ball reproduces y "
        "(consistency " + std::to_string(result.consistency) + " > 1)");
  result.factor = std::sqrt(std::max(0.0, 1.0 - result.consistency));

  for (const auto& [name, ell] : directions) {
    const EulerSolution e = solve_euler(problem, ell, tol);
    DirectionalRadius r;
    r.name = name;
    r.ell = ell;
    r.sigma = e.sigma;
    r.d_hat = std::isfinite(e.sigma) ? result.factor * e.sigma : kInfinity;
    result.radius.push_back(std::move(r));
  }
  return result;
}

std::pair<double, double> support_aposteriori(const EstimationProblem& problem,
                                              const Eigen::VectorXd& y,
                                              const Eigen::VectorXd& ell,
                                              double tol) {
  const AposterioriResult post = aposteriori_estimate(problem, y, {}, tol);
  const EulerSolution e = solve_euler(problem, ell, tol);
  if (!e.admissible()) return {-kInfinity, kInfinity};  // infinite width
  const double center = ell.dot(post.phi_hat);
  const double d_hat = post.factor * e.sigma;
  return {center - d_hat, center + d_hat};
}

WorstDirection worst_direction(const EstimationProblem& problem,
                               double rel_tol, int max_iter) {
  problem.validate();
  NormalOperator op(problem);

  WorstDirection wd;
  if (!op.positive_definite()) {
    // R(L*) + R(H*) is a strict subspace: the error is unbounded along the
    // flattest direction, which certifies the common null space of L and H.
    wd.finite = false;
    wd.ell_star = op.flattest_direction();
    wd.sigma_max = kInfinity;
    return wd;
  }

  // Inverse power iteration on M: converges to the eigenvector of the
  // smallest eigenvalue of M, i.e. the largest of M^-1.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(op.matrix());
  if (ldlt.info() != Eigen::Success)
    throw InternalError("worst_direction: LDLT factorization failed");

  std::mt19937_64 rng(0x6d6d657374ULL);  // fixed seed: deterministic output
  Eigen::VectorXd v(problem.n());
  for (int i = 0; i < v.size(); ++i)
    v(i) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  v.normalize();

  double rayleigh = v.dot(op.matrix() * v);  // current estimate of lambda_min(M)
  wd.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    v = ldlt.solve(v);
    v.normalize();
    const double next = v.dot(op.matrix() * v);
    wd.iterations = it;
    if (std::abs(next - rayleigh) <= rel_tol * std::abs(next)) {
      rayleigh = next;
      wd.converged = true;
      break;
    }
    rayleigh = next;
  }
  wd.ell_star = v;
  wd.sigma_max = 1.0 / std::sqrt(rayleigh);
  return wd;
}

}  // namespace mmest
