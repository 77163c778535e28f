#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "pulselab/linalg.hpp"

using namespace pulselab;

TEST_SUITE("linalg") {

TEST_CASE("GMRES solves a nonsymmetric system") {
  const int n = 120;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  MatrixXd A = MatrixXd::Identity(n, n) * 4.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) += nd(rng) / std::sqrt(double(n));
  VectorXd b(n);
  for (int i = 0; i < n; ++i) b[i] = nd(rng);
  VectorXd x;
  auto apply = [&](const VectorXd& v) { return VectorXd(A * v); };
  auto ident = [](const VectorXd& v) { return v; };
  const GmresResult r = gmres(apply, ident, b, x, 1e-12, 30);
  CHECK(r.converged);
  const VectorXd ref = A.lu().solve(b);
  CHECK((x - ref).norm() <= 1e-10 * ref.norm());
  // A variable preconditioner is allowed; an exact one converges in one step.
  const Eigen::PartialPivLU<MatrixXd> lu(A);
  VectorXd y;
  const GmresResult r2 =
      gmres(apply, [&](const VectorXd& v) { return VectorXd(lu.solve(v)); }, b, y, 1e-12, 30);
  CHECK(r2.converged);
  CHECK(r2.iterations <= 2);
  VectorXd z;
  CHECK(gmres(apply, ident, VectorXd(VectorXd::Zero(n)), z, 1e-12).converged);
  CHECK(z.norm() == 0.0);
}

TEST_CASE("matrix exponential closed forms") {
  // Rotation generator.
  MatrixXd J(2, 2);
  J << 0.0, -1.0, 1.0, 0.0;
  for (double t : {0.1, 1.0, 7.5}) {
    const MatrixXd E = expm(MatrixXd(t * J));
    CHECK(E(0, 0) == doctest::Approx(std::cos(t)).epsilon(1e-13));
    CHECK(E(1, 0) == doctest::Approx(std::sin(t)).epsilon(1e-13));
  }
  // Jordan block: exp(t [[a,1],[0,a]]) = e^{at} [[1,t],[0,1]].
  MatrixXd B(2, 2);
  B << -2.0, 1.0, 0.0, -2.0;
  const MatrixXd E = expm(MatrixXd(3.0 * B));
  CHECK(E(0, 1) == doctest::Approx(3.0 * std::exp(-6.0)).epsilon(1e-12));
  CHECK(std::abs(E(1, 0)) <= 1e-16);
  // Large norm (scaling and squaring) against eigen-decomposition.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  MatrixXd S(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) S(i, j) = nd(rng);
  const MatrixXd Sym = -(S + S.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Sym);
  const MatrixXd ref = es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() *
                       es.eigenvectors().transpose();
  CHECK((expm(Sym) - ref).norm() <= 1e-11 * ref.norm());
  // Complex version agrees with the real one on real input.
  CHECK((expm(MatrixXcd(Sym.cast<cplx>())).real() - ref).norm() <= 1e-11 * ref.norm());
}

TEST_CASE("shift-invert Arnoldi matches a dense eigensolve") {
  const int n = 200;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  MatrixXcd A = MatrixXcd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = cplx(-0.05 * i, 0.3 * std::sin(double(i)));
    if (i + 1 < n) A(i, i + 1) = 0.2 * nd(rng);
  }
  const cplx shift(0.01, 0.0);
  const Eigen::PartialPivLU<MatrixXcd> lu(A - shift * MatrixXcd::Identity(n, n));
  const VecOp solve = [&](const VectorXcd& v) { return VectorXcd(lu.solve(v)); };
  const VecOp apply = [&](const VectorXcd& v) { return VectorXcd(A * v); };
  const EigenPairs ep = shift_invert_arnoldi(solve, apply, n, shift, 6, 1e-10, 60);
  REQUIRE(ep.values.size() == 6);
  Eigen::ComplexEigenSolver<MatrixXcd> ces(A);
  std::vector<cplx> all(ces.eigenvalues().data(), ces.eigenvalues().data() + n);
  std::sort(all.begin(), all.end(),
            [&](cplx a, cplx b) { return std::abs(a - shift) < std::abs(b - shift); });
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(ep.values[i] - all[i]) <= 1e-8);
    CHECK(ep.residuals[i] <= 1e-8);
  }
}

TEST_CASE("least-squares line") {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(0.5 * i);
    y.push_back(-1.5 * 0.5 * i + 2.0);
  }
  const LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(-1.5).epsilon(1e-13));
  CHECK(f.intercept == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-13));
  y[3] += 1.0;
  CHECK(fit_line(x, y).r2 < 1.0);
}

}  // TEST_SUITE
