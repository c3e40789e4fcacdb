#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mmest/operator_core.hpp"

using namespace mmest;

namespace {

double uniform(std::mt19937_64& rng) {
  return 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = uniform(rng);
  return m;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = uniform(rng);
  return v;
}

EstimationProblem random_problem(std::mt19937_64& rng, int n, int m, int k,
                                 bool rank_deficient) {
  EstimationProblem p;
  p.L = random_matrix(rng, m, n);
  p.H = random_matrix(rng, k, n);
  if (rank_deficient) {
    // Wipe a column of each factor (but keep a joint full column rank).
    p.L.col(0).setZero();
    p.H.col(n - 1).setZero();
  }
  return p;
}

// Independent minimum-energy value: min ||L phi||^2 + ||y - H phi||^2 via a
// stacked least-squares solve.
double min_energy(const EstimationProblem& p, const Eigen::VectorXd& y) {
  Eigen::MatrixXd A(p.m() + p.k(), p.n());
  A.topRows(p.m()) = p.L;
  A.bottomRows(p.k()) = p.H;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p.m() + p.k());
  b.tail(p.k()) = y;
  const Eigen::VectorXd phi = A.completeOrthogonalDecomposition().solve(b);
  return (p.L * phi).squaredNorm() + (y - p.H * phi).squaredNorm();
}

// Independent sigma^2: ell' M^+ ell through a rank-revealing decomposition
// (no shared code with the library's eigendecomposition route).
double sigma_sq_oracle(const EstimationProblem& p, const Eigen::VectorXd& ell) {
  const Eigen::MatrixXd M = p.L.transpose() * p.L + p.H.transpose() * p.H;
  const Eigen::MatrixXd pinv =
      M.completeOrthogonalDecomposition().pseudoInverse();
  return ell.dot(pinv * ell);
}

}  // namespace

TEST_CASE("scalar problem has the closed-form solution") {
  EstimationProblem p;
  p.L = Eigen::MatrixXd::Identity(1, 1);
  p.H = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd ell = Eigen::VectorXd::Ones(1);

  const EulerSolution s = solve_euler(p, ell);
  CHECK(s.p_hat(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.z_hat(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.u_hat(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.c_hat == 0.0);
  CHECK(s.sigma == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
}

TEST_CASE("stationarity residuals and the sigma identity hold on seeded problems") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 10);
    const int m = 1 + static_cast<int>(rng() % 10);
    const int k = 1 + static_cast<int>(rng() % 10);
    EstimationProblem p = random_problem(rng, n, m, k, trial % 3 == 0);
    const Eigen::MatrixXd M =
        p.L.transpose() * p.L + p.H.transpose() * p.H;
    // Guaranteed-admissible direction: anything in the range of M.
    const Eigen::VectorXd ell = M * random_vector(rng, n);
    if (ell.norm() < 1e-12) continue;

    const EulerSolution s = solve_euler(p, ell);
    REQUIRE(s.admissible());
    CHECK((M * s.p_hat - ell).norm() <= 1e-8 * ell.norm());
    CHECK((s.z_hat - p.L * s.p_hat).norm() <= 1e-12 * (1.0 + s.z_hat.norm()));
    CHECK((s.u_hat - p.H * s.p_hat).norm() <= 1e-12 * (1.0 + s.u_hat.norm()));
    const double ref = ell.dot(s.p_hat);
    CHECK(s.sigma * s.sigma == doctest::Approx(ref).epsilon(1e-10));
    CHECK(s.sigma * s.sigma ==
          doctest::Approx(sigma_sq_oracle(p, ell)).epsilon(1e-9));
  }
}

TEST_CASE("euler value is the minimum of the a priori functional") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    // Full column rank L keeps the functional finite for perturbed kernels.
    EstimationProblem p = random_problem(rng, 4, 6, 3, false);
    const Eigen::MatrixXd M = p.L.transpose() * p.L + p.H.transpose() * p.H;
    const Eigen::VectorXd ell = M * random_vector(rng, 4);
    const EulerSolution s = solve_euler(p, ell);

    // The minimizing kernel attains sigma^2 ...
    const double at_optimum = apriori_value(p, ell, s.u_hat);
    CHECK(at_optimum == doctest::Approx(s.sigma * s.sigma).epsilon(1e-8));
    // ... and every perturbed kernel does no better.
    for (int j = 0; j < 5; ++j) {
      const Eigen::VectorXd u =
          s.u_hat + 0.1 * random_vector(rng, p.k());
      const double value = apriori_value(p, ell, u);
      CHECK(value >= s.sigma * s.sigma - 1e-10);
    }
  }
}

TEST_CASE("inadmissible directions are detected with the exact distance") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6;
    Eigen::VectorXd xi = random_vector(rng, n).normalized();
    const Eigen::MatrixXd P =
        Eigen::MatrixXd::Identity(n, n) - xi * xi.transpose();
    EstimationProblem p;
    p.L = random_matrix(rng, 4, n) * P;  // xi spans the common null space
    p.H = random_matrix(rng, 3, n) * P;

    const double a = 0.7;
    const Eigen::VectorXd ell = a * xi + P * random_vector(rng, n);
    const AdmissibilityReport rep = check_direction(p, ell);
    CHECK_FALSE(rep.admissible);
    CHECK(rep.residual_norm == doctest::Approx(a).epsilon(1e-10));
    // The reported components realize the distance.
    const Eigen::VectorXd gap = ell - p.L.transpose() * rep.z_component -
                                p.H.transpose() * rep.u_component;
    CHECK(gap.norm() == doctest::Approx(rep.residual_norm).epsilon(1e-8));

    const EulerSolution s = solve_euler(p, ell);
    CHECK_FALSE(s.admissible());
    CHECK(s.sigma == kInfinity);

    // The same direction projected into the admissible subspace passes.
    const Eigen::VectorXd ell_ok =
        (p.L.transpose() * p.L + p.H.transpose() * p.H) * random_vector(rng, n);
    CHECK(check_direction(p, ell_ok).admissible);
  }
}

TEST_CASE("zero direction is admissible with zero error") {
  std::mt19937_64 rng(2);
  EstimationProblem p = random_problem(rng, 4, 3, 2, false);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  CHECK(check_direction(p, zero).admissible);
  const EulerSolution s = solve_euler(p, zero);
  CHECK(s.sigma == 0.0);
  CHECK(s.p_hat.norm() == 0.0);
}

TEST_CASE("support_min_norm matches the pseudo-inverse and detects range exits") {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd L = random_matrix(rng, 3, 5);
  const Eigen::VectorXd u = L.transpose() * random_vector(rng, 3);
  const Eigen::VectorXd z_oracle =
      L.transpose().completeOrthogonalDecomposition().pseudoInverse() * u;
  CHECK(support_min_norm(L, u, 2.0) ==
        doctest::Approx(2.0 * z_oracle.norm()).epsilon(1e-10));
  CHECK(support_min_norm(L, Eigen::VectorXd::Zero(5), 1.0) == 0.0);

  // A vector with a component outside R(L*) has infinite support value.
  Eigen::MatrixXd basis = L.transpose();  // 5 x 3
  Eigen::VectorXd outside = random_vector(rng, 5);
  outside -= basis * basis.completeOrthogonalDecomposition().solve(outside);
  REQUIRE(outside.norm() > 1e-6);
  CHECK(support_min_norm(L, outside, 1.0) == kInfinity);
}

TEST_CASE("consistency equals the independently minimized energy") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 15; ++trial) {
    EstimationProblem p = random_problem(rng, 6, 4, 5, trial % 2 == 0);
    Eigen::VectorXd y = 0.05 * random_vector(rng, p.k());
    const AposterioriResult res = aposteriori_estimate(p, y);
    const double oracle = min_energy(p, y);
    CHECK(res.consistency ==
          doctest::Approx(oracle).epsilon(1e-10));
    CHECK((res.q_hat - p.L * res.phi_hat).norm() <= 1e-14);
    CHECK(res.factor ==
          doctest::Approx(std::sqrt(1.0 - oracle)).epsilon(1e-10));
  }
}

TEST_CASE("empty a posteriori set triggers exactly at energy one") {
  std::mt19937_64 rng(53);
  EstimationProblem p = random_problem(rng, 5, 4, 4, false);
  Eigen::VectorXd y = random_vector(rng, 4);
  const double e = min_energy(p, y);
  REQUIRE(e > 0.0);
  const Eigen::VectorXd y_in = y * std::sqrt(0.99 / e);
  const Eigen::VectorXd y_out = y * std::sqrt(1.01 / e);
  CHECK_NOTHROW(aposteriori_estimate(p, y_in));
  CHECK_THROWS_AS(aposteriori_estimate(p, y_out), EmptyAposterioriSet);
}

TEST_CASE("duality identity connects the kernel and the central estimate") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    EstimationProblem p = random_problem(rng, 7, 5, 4, false);
    const Eigen::MatrixXd M = p.L.transpose() * p.L + p.H.transpose() * p.H;
    for (int pair = 0; pair < 10; ++pair) {
      const Eigen::VectorXd ell = M * random_vector(rng, 7);
      const Eigen::VectorXd y = 0.01 * random_vector(rng, p.k());
      const EulerSolution s = solve_euler(p, ell);
      const AposterioriResult res = aposteriori_estimate(p, y);
      const double lhs = s.u_hat.dot(y);
      const double rhs = ell.dot(res.phi_hat);
      CHECK(std::abs(lhs - rhs) <=
            1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1e-6}));
    }
  }
}

TEST_CASE("directional radii scale the a priori error by the factor") {
  std::mt19937_64 rng(71);
  EstimationProblem p = random_problem(rng, 5, 4, 4, false);
  const Eigen::MatrixXd M = p.L.transpose() * p.L + p.H.transpose() * p.H;
  const Eigen::VectorXd ell = M * random_vector(rng, 5);
  const Eigen::VectorXd y = 0.05 * random_vector(rng, 4);

  const AposterioriResult res =
      aposteriori_estimate(p, y, {{"ell", ell}});
  REQUIRE(res.radius.size() == 1);
  const EulerSolution s = solve_euler(p, ell);
  CHECK(res.radius[0].sigma == doctest::Approx(s.sigma).epsilon(1e-12));
  CHECK(res.radius[0].d_hat ==
        doctest::Approx(res.factor * s.sigma).epsilon(1e-12));

  const auto [lo, hi] = support_aposteriori(p, y, ell);
  const double center = ell.dot(res.phi_hat);
  CHECK(lo == doctest::Approx(center - res.radius[0].d_hat).epsilon(1e-12));
  CHECK(hi == doctest::Approx(center + res.radius[0].d_hat).epsilon(1e-12));
}

TEST_CASE("support interval bounds sampled members of the a posteriori set") {
  std::mt19937_64 rng(83);
  EstimationProblem p = random_problem(rng, 5, 4, 4, false);
  const Eigen::MatrixXd M = p.L.transpose() * p.L + p.H.transpose() * p.H;
  const Eigen::MatrixXd Mpinv =
      M.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::VectorXd ell = M * random_vector(rng, 5);
  const Eigen::VectorXd y = 0.05 * random_vector(rng, 4);
  const AposterioriResult res = aposteriori_estimate(p, y);
  const auto [lo, hi] = support_aposteriori(p, y, ell);
  const double slack = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});

  for (int s = 0; s < 200; ++s) {
    // Extreme feasible point along a random admissible direction.
    Eigen::VectorXd d = Mpinv * (M * random_vector(rng, 5));
    if (d.norm() < 1e-12) continue;
    const double quad = (p.L * d).squaredNorm() + (p.H * d).squaredNorm();
    const double t = std::sqrt(std::max(0.0, 1.0 - res.consistency) / quad);
    const Eigen::VectorXd phi = res.phi_hat + t * d;
    const double value = ell.dot(phi);
    CHECK(value >= lo - slack);
    CHECK(value <= hi + slack);
  }

  // The closed-form extremal point attains the upper end.
  const EulerSolution e = solve_euler(p, ell);
  const Eigen::VectorXd phi_star =
      res.phi_hat + res.factor / e.sigma * e.p_hat;
  CHECK(ell.dot(phi_star) >= hi - 1e-9 * std::max(1.0, std::abs(hi)));
  const double energy = (p.L * phi_star).squaredNorm() +
                        (y - p.H * phi_star).squaredNorm();
  CHECK(energy <= 1.0 + 1e-9);
}

TEST_CASE("support interval is the whole line for inadmissible directions") {
  std::mt19937_64 rng(89);
  Eigen::VectorXd xi = random_vector(rng, 4).normalized();
  const Eigen::MatrixXd P =
      Eigen::MatrixXd::Identity(4, 4) - xi * xi.transpose();
  EstimationProblem p;
  p.L = random_matrix(rng, 3, 4) * P;
  p.H = random_matrix(rng, 3, 4) * P;
  const auto [lo, hi] =
      support_aposteriori(p, 0.01 * random_vector(rng, 3), xi);
  CHECK(lo == -kInfinity);
  CHECK(hi == kInfinity);
}

TEST_CASE("non-unit radii reweight the problem consistently") {
  std::mt19937_64 rng(97);
  EstimationProblem p = random_problem(rng, 5, 4, 3, false);
  p.radius_f = 2.0;
  p.radius_eta = 0.5;
  EstimationProblem scaled;
  scaled.L = p.L / p.radius_f;
  scaled.H = p.H / p.radius_eta;

  const Eigen::MatrixXd M =
      p.L.transpose() * p.L / 4.0 + 4.0 * p.H.transpose() * p.H;
  const Eigen::VectorXd ell = M * random_vector(rng, 5);
  const EulerSolution a = solve_euler(p, ell);
  const EulerSolution b = solve_euler(scaled, ell);
  CHECK(a.sigma == doctest::Approx(b.sigma).epsilon(1e-12));
  CHECK((a.p_hat - b.p_hat).norm() <= 1e-12 * (1.0 + b.p_hat.norm()));

  // With non-unit radii the factor is undefined and reported as NaN.
  const Eigen::VectorXd y = 0.05 * random_vector(rng, 3);
  const AposterioriResult res = aposteriori_estimate(p, y);
  CHECK(std::isnan(res.factor));
  CHECK(res.radius.empty());
}

TEST_CASE("worst direction matches a dense eigendecomposition") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 6);
    EstimationProblem p;
    p.L = random_matrix(rng, n + 1, n);
    p.H = random_matrix(rng, 2, n);
    const Eigen::MatrixXd M = p.L.transpose() * p.L + p.H.transpose() * p.H;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    const double sigma_oracle = 1.0 / std::sqrt(eig.eigenvalues()(0));

    const WorstDirection wd = worst_direction(p);
    REQUIRE(wd.finite);
    CHECK(wd.converged);
    CHECK(wd.sigma_max == doctest::Approx(sigma_oracle).epsilon(1e-8));
    CHECK(wd.ell_star.norm() == doctest::Approx(1.0).epsilon(1e-12));
    // The reported direction attains its own value.
    const EulerSolution s = solve_euler(p, wd.ell_star);
    CHECK(s.sigma == doctest::Approx(wd.sigma_max).epsilon(1e-7));
  }
}

TEST_CASE("worst direction certifies unbounded error via the common null space") {
  std::mt19937_64 rng(103);
  Eigen::VectorXd xi = random_vector(rng, 5).normalized();
  const Eigen::MatrixXd P =
      Eigen::MatrixXd::Identity(5, 5) - xi * xi.transpose();
  EstimationProblem p;
  p.L = random_matrix(rng, 4, 5) * P;
  p.H = random_matrix(rng, 3, 5) * P;
  const WorstDirection wd = worst_direction(p);
  CHECK_FALSE(wd.finite);
  CHECK(wd.sigma_max == kInfinity);
  CHECK((p.L * wd.ell_star).norm() <= 1e-10);
  CHECK((p.H * wd.ell_star).norm() <= 1e-10);
}

TEST_CASE("shape and input validation") {
  EstimationProblem p;
  p.L = Eigen::MatrixXd::Identity(2, 3);
  p.H = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(solve_euler(p, Eigen::VectorXd::Zero(3)), DimensionError);
  p.H = Eigen::MatrixXd::Identity(2, 3);
  CHECK_THROWS_AS(solve_euler(p, Eigen::VectorXd::Zero(2)), DimensionError);
  p.radius_f = -1.0;
  CHECK_THROWS_AS(solve_euler(p, Eigen::VectorXd::Zero(3)), InputError);
}
