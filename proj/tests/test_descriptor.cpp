#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mmest/descriptor.hpp"
#include "mmest/trajectory.hpp"

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

Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, int n) {
  const Eigen::MatrixXd a = random_matrix(rng, n, n);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

// Random n x n matrix with exact rank r (up to roundoff).
Eigen::MatrixXd random_rank(std::mt19937_64& rng, int n, int r) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < r; ++i) s(i) = 0.5 + 0.5 * std::abs(uniform(rng));
  return random_orthogonal(rng, n) * s.asDiagonal() *
         random_orthogonal(rng, n).transpose();
}

Eigen::MatrixXd reconstruct(const CanonicalDescriptor& c) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(c.n());
  s.head(c.r) = c.Sigma_r;
  return c.U * s.asDiagonal() * c.V.transpose();
}

CanonicalDescriptor manual_canonical(int r, int na, std::mt19937_64& rng) {
  const int n = r + na;
  CanonicalDescriptor c;
  c.r = r;
  c.C1 = random_matrix(rng, r, r);
  c.C2 = random_matrix(rng, r, na);
  c.C3 = random_matrix(rng, na, r);
  c.C4 = random_matrix(rng, na, na) +
         3.0 * Eigen::MatrixXd::Identity(na, na);  // comfortably index-1
  c.U = Eigen::MatrixXd::Identity(n, n);
  c.V = Eigen::MatrixXd::Identity(n, n);
  c.Sigma_r = Eigen::VectorXd::Ones(r);
  c.t0 = 0.0;
  c.T = 1.0;
  return c;
}

}  // namespace

TEST_CASE("diagonal pencil splits into the expected blocks") {
  DescriptorSystem sys;
  sys.F = Eigen::MatrixXd::Zero(2, 2);
  sys.F(0, 0) = 1.0;
  sys.C = (Eigen::MatrixXd(2, 2) << 1.0, 2.0, 3.0, 4.0).finished();

  const CanonicalDescriptor c = svd_canonical_form(sys);
  CHECK(c.r == 1);
  REQUIRE(c.Sigma_r.size() == 1);
  CHECK(c.Sigma_r(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((c.U - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-14);
  CHECK((c.V - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-14);
  CHECK(c.C1(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(c.C2(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(c.C3(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(c.C4(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("nilpotent pencil has rank one and singular value two") {
  DescriptorSystem sys;
  sys.F = (Eigen::MatrixXd(2, 2) << 0.0, 2.0, 0.0, 0.0).finished();
  sys.C = (Eigen::MatrixXd(2, 2) << 0.0, 0.0, 1.0, 1.0).finished();

  const CanonicalDescriptor c = svd_canonical_form(sys);
  CHECK(c.r == 1);
  CHECK(c.Sigma_r(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK((reconstruct(c) - sys.F).norm() <= 1e-14);
  // In canonical coordinates F has the normalized differential block.
  Eigen::MatrixXd Ft = c.U.transpose() * sys.F * c.V;
  Ft.topRows(c.r) = c.Sigma_r.cwiseInverse().asDiagonal() * Ft.topRows(c.r);
  CHECK(Ft(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(Ft(0, 1)) <= 1e-14);
  CHECK(Ft.bottomRows(1).norm() <= 1e-14);
}

TEST_CASE("zero pencil is purely algebraic") {
  std::mt19937_64 rng(7);
  DescriptorSystem sys;
  sys.F = Eigen::MatrixXd::Zero(3, 3);
  sys.C = random_matrix(rng, 3, 3);

  const CanonicalDescriptor c = svd_canonical_form(sys);
  CHECK(c.r == 0);
  CHECK(c.Sigma_r.size() == 0);
  CHECK(c.C4.rows() == 3);
  // Without row scaling the canonical C is an orthogonal conjugation of C.
  CHECK((c.U * c.C_blocks() * c.V.transpose() - sys.C).norm() <= 1e-13);
}

TEST_CASE("seeded pencils reconstruct and normalize to machine precision") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    int r = static_cast<int>(rng() % (n + 1));
    if (trial == 0) r = 0;
    if (trial == 1) r = n;
    DescriptorSystem sys;
    sys.F = random_rank(rng, n, r);
    sys.C = random_matrix(rng, n, n);

    const CanonicalDescriptor c = svd_canonical_form(sys);
    CHECK(c.r == r);
    CHECK((reconstruct(c) - sys.F).norm() <= 1e-12 * std::max(1.0, sys.F.norm()));
    CHECK((c.U.transpose() * c.U - Eigen::MatrixXd::Identity(n, n)).norm() <=
          1e-12);
    CHECK((c.V.transpose() * c.V - Eigen::MatrixXd::Identity(n, n)).norm() <=
          1e-12);
    CHECK(c.C1.rows() == c.r);
    CHECK(c.C1.cols() == c.r);
    CHECK(c.C4.rows() == n - c.r);
    CHECK(c.C2.cols() == n - c.r);
    CHECK(c.C3.rows() == n - c.r);

    // Scaled pencil: Sigma_r^-1 (U'FV) == [[I,0],[0,0]].
    Eigen::MatrixXd Ft = c.U.transpose() * sys.F * c.V;
    Ft.topRows(c.r) =
        c.Sigma_r.cwiseInverse().asDiagonal() * Ft.topRows(c.r);
    Ft.topLeftCorner(c.r, c.r) -= Eigen::MatrixXd::Identity(c.r, c.r);
    CHECK(Ft.norm() <= 1e-12 * std::max(1.0, sys.F.norm()));

    // The canonical C blocks agree with the defining row-scaled conjugation.
    Eigen::MatrixXd Ct = c.U.transpose() * sys.C * c.V;
    Ct.topRows(c.r) =
        c.Sigma_r.cwiseInverse().asDiagonal() * Ct.topRows(c.r);
    CHECK((Ct - c.C_blocks()).norm() <= 1e-12 * std::max(1.0, Ct.norm()));
  }
}

TEST_CASE("rank threshold separates tiny singular values") {
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd Q1 = random_orthogonal(rng, 2);
  const Eigen::MatrixXd Q2 = random_orthogonal(rng, 2);
  DescriptorSystem sys;
  sys.F = Q1 * Eigen::Vector2d(1.0, 1e-14).asDiagonal() * Q2.transpose();
  sys.C = Eigen::MatrixXd::Identity(2, 2);

  CHECK(svd_canonical_form(sys).r == 1);
  CHECK(svd_canonical_form(sys, 1e-15).r == 2);
  CHECK_THROWS_AS(svd_canonical_form(sys, 0.0), InputError);
}

TEST_CASE("coordinate changes are inverse isometries") {
  std::mt19937_64 rng(19);
  DescriptorSystem sys;
  sys.F = random_rank(rng, 4, 2);
  sys.C = random_matrix(rng, 4, 4);
  const CanonicalDescriptor c = svd_canonical_form(sys);

  const TimeGrid grid{0.0, 1.0, 8};
  Trajectory x(grid, random_matrix(rng, 4, grid.nodes()));
  const Trajectory xt = to_canonical(c, x);
  const Trajectory back = from_canonical(c, xt);
  CHECK((back.values - x.values).norm() <= 1e-13 * x.values.norm());
  for (int i = 0; i <= grid.N; ++i) {
    CHECK(xt.value(i).norm() ==
          doctest::Approx(x.value(i).norm()).epsilon(1e-13));
  }
  Trajectory wrong(grid, random_matrix(rng, 3, grid.nodes()));
  CHECK_THROWS_AS(to_canonical(c, wrong), DimensionError);
}

TEST_CASE("simulation reproduces a manufactured solution at second order") {
  std::mt19937_64 rng(29);
  const int r = 2, na = 1, n = 3;
  const CanonicalDescriptor c = manual_canonical(r, na, rng);
  const Eigen::VectorXd a = Eigen::Vector2d(1.0, -0.5);
  const Eigen::VectorXd b = Eigen::VectorXd::Ones(1);

  // x1(t) = sin(pi t) a satisfies x1(0) = 0; x2(t) = cos(t) b is free.
  const double pi = 3.14159265358979323846;
  auto exact = [&](double t) {
    Eigen::VectorXd x(n);
    x.head(r) = std::sin(pi * t) * a;
    x.tail(na) = std::cos(t) * b;
    return x;
  };
  auto forcing = [&](double t) {
    const Eigen::VectorXd x1 = std::sin(pi * t) * a;
    const Eigen::VectorXd x2 = std::cos(t) * b;
    Eigen::VectorXd f(n);
    f.head(r) = pi * std::cos(pi * t) * a - c.C1 * x1 - c.C2 * x2;
    f.tail(na) = -c.C3 * x1 - c.C4 * x2;
    return f;
  };

  auto max_error = [&](int N) {
    const TimeGrid grid{0.0, 1.0, N};
    Eigen::MatrixXd fv(n, grid.nodes());
    for (int i = 0; i <= N; ++i) fv.col(i) = forcing(grid.node(i));
    const Trajectory x = simulate(c, Trajectory(grid, fv), grid);
    double err = 0.0;
    for (int i = 0; i <= N; ++i)
      err = std::max(err, (x.value(i) - exact(grid.node(i))).norm());
    return err;
  };

  const double e64 = max_error(64);
  const double e128 = max_error(128);
  const double e256 = max_error(256);
  CHECK(e64 < 1e-2);
  CHECK(e64 / e128 > 3.0);
  CHECK(e64 / e128 < 5.0);
  CHECK(e128 / e256 > 3.0);
  CHECK(e128 / e256 < 5.0);
}

TEST_CASE("simulated algebraic components satisfy the constraint exactly") {
  std::mt19937_64 rng(31);
  const CanonicalDescriptor c = manual_canonical(2, 2, rng);
  const TimeGrid grid{0.0, 1.0, 32};
  const Trajectory f(grid, random_matrix(rng, 4, grid.nodes()));
  const Trajectory x = simulate(c, f, grid);
  CHECK(x.value(0).head(2).norm() == 0.0);  // pinned initial condition
  for (int i = 0; i <= grid.N; ++i) {
    const Eigen::VectorXd res = c.C4 * x.value(i).tail(2) +
                                c.C3 * x.value(i).head(2) +
                                f.value(i).tail(2);
    CHECK(res.norm() <= 1e-12 * (1.0 + f.value(i).norm()));
  }
}

TEST_CASE("pure integrator is integrated exactly for linear forcing") {
  CanonicalDescriptor c;
  c.r = 1;
  c.C1 = Eigen::MatrixXd::Zero(1, 1);
  c.C2.resize(1, 0);
  c.C3.resize(0, 1);
  c.C4.resize(0, 0);
  c.U = Eigen::MatrixXd::Identity(1, 1);
  c.V = Eigen::MatrixXd::Identity(1, 1);
  c.Sigma_r = Eigen::VectorXd::Ones(1);

  const TimeGrid grid{0.0, 2.0, 10};
  Eigen::MatrixXd fv(1, grid.nodes());
  for (int i = 0; i <= grid.N; ++i) fv(0, i) = 3.0 * grid.node(i) - 1.0;
  const Trajectory x = simulate(c, Trajectory(grid, fv), grid);
  for (int i = 0; i <= grid.N; ++i) {
    const double t = grid.node(i);
    CHECK(x.values(0, i) ==
          doctest::Approx(1.5 * t * t - t).epsilon(1e-13));
  }
}

TEST_CASE("higher-index and ill-conditioned systems are rejected") {
  std::mt19937_64 rng(37);
  CanonicalDescriptor c = manual_canonical(1, 2, rng);
  const TimeGrid grid{0.0, 1.0, 8};
  const Trajectory f = Trajectory::zero(grid, 3);

  c.C4.setZero();
  CHECK_THROWS_AS(simulate(c, f, grid), IndexError);
  c.C4 = Eigen::Vector2d(1.0, 1e-9).asDiagonal();
  CHECK_THROWS_AS(simulate(c, f, grid), IndexError);
  c.C4 = Eigen::Vector2d(1.0, 1e-7).asDiagonal();
  CHECK_NOTHROW(simulate(c, f, grid));
}

TEST_CASE("input validation for systems and forcing") {
  DescriptorSystem sys;
  sys.F = Eigen::MatrixXd::Zero(2, 3);
  sys.C = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(svd_canonical_form(sys), DimensionError);
  sys.F = Eigen::MatrixXd::Zero(2, 2);
  sys.T = 0.0;
  CHECK_THROWS_AS(svd_canonical_form(sys), InputError);

  std::mt19937_64 rng(41);
  const CanonicalDescriptor c = manual_canonical(1, 1, rng);
  const TimeGrid grid{0.0, 1.0, 8};
  CHECK_THROWS_AS(simulate(c, Trajectory::zero(grid, 3), grid), DimensionError);
  const TimeGrid other{0.0, 2.0, 8};
  CHECK_THROWS_AS(simulate(c, Trajectory::zero(other, 2), grid),
                  DimensionError);
}
