#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "fixtures.hpp"
#include "pulselab/errors.hpp"
#include "pulselab/spectral.hpp"

using namespace pulselab;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double kEps = 1e-2;

// The eps = 1e-2 pulse moved onto a coarse grid for dense work.
const PulseProfile& coarse_pulse() {
  static const PulseProfile p = [] {
    const PulseProfile& phi = fixtures::pulse(kEps);
    GridSpec g = phi.grid;
    g.N_z = 256;
    return resample_pulse(phi, g);
  }();
  return p;
}

const SpectralCertificate& certificate() {
  static const SpectralCertificate c = [] {
    const PulseProfile& phi = fixtures::pulse(kEps);
    return spectral_certificate(build_Ln(phi, 0, 1.0), tangent_vector(phi));
  }();
  return c;
}

VectorXcd plane_wave(const GridSpec& g, double k, cplx a, cplx b) {
  VectorXcd x(2 * g.N_z);
  for (int i = 0; i < g.N_z; ++i) {
    const cplx e = std::polar(1.0, k * g.z(i));
    x[i] = a * e;
    x[g.N_z + i] = b * e;
  }
  return x;
}

Field single_mode(const GridSpec& g, int n, std::mt19937_64& rng) {
  Field u(g, Frame::Moving);
  u.u1.col(n) = random_band_limited(g, rng, n != 0);
  u.u2.col(n) = random_band_limited(g, rng, n != 0);
  return u;
}

GridSpec coarse_static(int N = 64, int K = 3) {
  GridSpec g;
  g.N_z = N;
  g.L_z = 8.0 * pi;
  g.N_theta = K;
  return g;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("angular mode blocks differ by the angular eigenvalue on the first component") {
  const PulseProfile& phi = coarse_pulse();
  const double R = 0.8;
  const MatrixXd L0 = build_Ln(phi, 0, R).to_dense();
  const int N = phi.grid.N_z;
  for (int n : {1, 3}) {
    MatrixXd D = build_Ln(phi, n, R).to_dense() - L0;
    MatrixXd expect = MatrixXd::Zero(2 * N, 2 * N);
    expect.topLeftCorner(N, N).diagonal().setConstant(-double(n * n) / (R * R));
    CHECK((D - expect).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("constant-potential block acts on plane waves through the symbol") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  const GridSpec& g = phi.grid;
  const Params p = phi.moving_params();
  for (int n : {0, 2}) {
    const ModeOperator Lb = build_Lbar(phi, n, 1.0);
    for (int j : {0, 3, 40}) {
      const double k = pi * j / g.L_z;
      const Eigen::Matrix2cd m = symbol_matrix(k, n, 1.0, p);
      for (auto [a, b] : {std::pair<cplx, cplx>{1.0, 0.0}, {0.0, 1.0}, {0.3, cplx(0.0, -2.0)}}) {
        const VectorXcd x = plane_wave(g, k, a, b);
        const Eigen::Vector2cd mab = m * Eigen::Vector2cd(a, b);
        const VectorXcd ref = plane_wave(g, k, mab[0], mab[1]);
        CHECK((Lb.apply(x) - ref).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + k * k));
      }
    }
  }
  // The static operator about zero uses the same symbol without the frame speed.
  const GridSpec gs = coarse_static(128, 1);
  Params q = fixtures::params(kEps);
  const ModeOperator A = build_A(constant_metric(1.0, gs), gs, q, 1);
  const double k = pi * 5 / gs.L_z;
  const Eigen::Vector2cd mab = symbol_matrix(k, 1, 1.0, q) * Eigen::Vector2cd(1.0, 0.5);
  CHECK((A.apply(plane_wave(gs, k, 1.0, 0.5)) - plane_wave(gs, k, mab[0], mab[1]))
            .cwiseAbs()
            .maxCoeff() <= 1e-10);
  CHECK(symbol_matrix(k, 1, 1.0, q)(0, 0) == cplx(-k * k - 1.0 - q.alpha, 0.0));
}

TEST_CASE("essential spectrum curves") {
  Params p = fixtures::params(1e-3);
  p.c = singular_speed(p.alpha);
  std::vector<double> ks;
  for (int i = -1000; i <= 1000; ++i) ks.push_back(0.1 * i);
  const auto pts = essential_spectrum_curves(ks, 8, 1.0, p);
  double max_re = -1e300, max_cf = 0.0;
  for (const auto& e : pts) {
    max_re = std::max({max_re, e.lam_plus.real(), e.lam_minus.real()});
    if (e.n == 0) max_cf = std::max(max_cf, std::abs(e.lam_plus - lambda_plus_closed_form(e.k, p)));
  }
  CHECK(max_re <= -p.sigma() + 1e-10);
  CHECK(max_cf <= 1e-12);
  // Independent 2x2 eigensolve at k = 0, n = 0.
  Eigen::Matrix2d m0;
  m0 << -p.alpha, -1.0, p.eps, -p.eps * p.gamma;
  Eigen::EigenSolver<Eigen::Matrix2d> es(m0);
  std::vector<cplx> ref = {es.eigenvalues()[0], es.eigenvalues()[1]};
  std::sort(ref.begin(), ref.end(), [](cplx a, cplx b) { return a.real() > b.real(); });
  const auto at0 = essential_spectrum_curves({0.0}, 0, 1.0, p);
  CHECK(std::abs(at0[0].lam_plus - ref[0]) <= 1e-14);
  CHECK(std::abs(at0[0].lam_minus - ref[1]) <= 1e-14);
  // Far branch approaches ick - eps gamma.
  const cplx far = lambda_plus_closed_form(100.0, p);
  CHECK(std::abs(far.real() + p.eps * p.gamma) <= 1e-3);
  CHECK(far.imag() == doctest::Approx(100.0 * p.c));
}

TEST_CASE("zero eigenvalue is simple and isolated") {
  const SpectralCertificate& c = certificate();
  CHECK(c.accepted);
  CHECK(std::abs(c.zero_eval) <= 1e-6);
  CHECK(c.zero_alignment >= 1.0 - 1e-6);
  CHECK(c.beta > 0.0);
  CHECK(std::abs(c.zero_eval) < c.beta / 2.0);
  for (size_t j = 1; j < c.eigenvalues.size(); ++j) CHECK(c.eigenvalues[j].real() <= -c.beta + 1e-12);
  MESSAGE("beta_hat = " << c.beta << ", next eigenvalue " << c.next_eval);
}

TEST_CASE("higher modes are spectrally stable") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  const double sigma = phi.params.sigma();
  for (int n : {1, 2}) {
    const EigenPairs ep = discrete_spectrum(build_Ln(phi, n, 1.0), 10, 0.0);
    REQUIRE(!ep.values.empty());
    for (size_t j = 0; j < ep.values.size(); ++j) {
      CHECK(ep.values[j].real() <= -sigma + 1e-8);
      CHECK(ep.residuals[j] <= 1e-8);
    }
  }
}

TEST_CASE("dense and Arnoldi eigenvalues agree") {
  const ModeOperator op = build_Ln(coarse_pulse(), 0, 1.0);
  SpectrumOptions dense, arn;
  dense.method = EigMethod::Dense;
  arn.method = EigMethod::Arnoldi;
  const EigenPairs a = discrete_spectrum(op, 12, 0.0, dense);
  const EigenPairs b = discrete_spectrum(op, 12, 0.0, arn);
  auto rightmost = [](std::vector<cplx> v) {
    std::sort(v.begin(), v.end(), [](cplx x, cplx y) {
      return x.real() != y.real() ? x.real() > y.real() : x.imag() > y.imag();
    });
    v.resize(5);
    return v;
  };
  // Conjugate pairs tie in real part, so match each value to its nearest partner.
  const auto ra = rightmost(a.values);
  for (cplx x : ra) {
    double best = 1e300;
    for (cplx y : b.values) best = std::min(best, std::abs(x - y));
    CHECK(best <= 1e-6);
  }
}

TEST_CASE("adjoint zero mode and the Riesz projection") {
  const RieszProjection& P = fixtures::projection(kEps);
  const PulseProfile& phi = fixtures::pulse(kEps);
  const SurfaceMetric& m = P.metric;
  const double eps = phi.params.eps;
  CHECK(inner_eps(P.tau, P.tau_star, m, eps).real() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(P.adjoint_residual <= 1e-6);
  const ModeOperator L0 = build_Ln(phi, 0, 1.0);
  const VectorXd W = L0.weights();
  const VectorXcd ts = P.tau_star.mode(0);
  CHECK(weighted_norm(L0.apply_adjoint(ts), W) <= 1e-6 * weighted_norm(ts, W));
  CHECK((project_P(P.tau, P) - P.tau).max_abs() <= 1e-10 * P.tau.max_abs());

  GridSpec g = phi.grid;
  g.N_theta = 3;
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    Field u = random_field(g, Frame::Moving, rng);
    const Field Pu = project_P(u, P);
    CHECK((project_P(Pu, P) - Pu).max_abs() <= 1e-10 * std::max(1.0, Pu.max_abs()));
    const Field Qu = project_Q(u, P);
    CHECK((project_Q(Qu, P) - Qu).max_abs() <= 1e-10 * std::max(1.0, Qu.max_abs()));
    CHECK((Pu + Qu - u).max_abs() <= 1e-13 * u.max_abs());
  }
  // The range of L0 lies in the range of Q.
  for (int t = 0; t < 5; ++t) {
    const VectorXcd v = random_band_limited(phi.grid, rng, false);
    VectorXcd x(2 * phi.grid.N_z);
    x << v, 0.3 * v;
    Field Lv(phi.grid, Frame::Moving);
    Lv.set_mode(0, L0.apply(x));
    CHECK(norm_eps(project_P(Lv, P), m, eps) <= 1e-6 * norm_eps(Lv, m, eps));
  }
}

TEST_CASE("dissipativity certificates") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  const double sigma = phi.params.sigma();
  CHECK(dissipativity_check(build_Lbar(phi, 0, 1.0), 100, 3).max_rayleigh <= -sigma + 1e-8);
  for (int n : {1, 2, 3}) {
    const DissipativityResult r = dissipativity_check(build_Ln(phi, n, 1.0), 100, 40 + n);
    CHECK(r.trials == 100);
    CHECK(r.max_rayleigh <= -sigma + 1e-8);
  }
  std::vector<ModeOperator> full;
  for (int n = 0; n < 3; ++n) full.push_back(build_Ln(phi, n, 1.0));
  CHECK(dissipativity_check(full, 100, 9).max_rayleigh <= 1.0 + 1e-8);

  const GridSpec gs = coarse_static(128, 1);
  Params q = fixtures::params(1e-3);
  const SurfaceMetric warped =
      build_metric(RadiusFamily{RadiusKind::SineBump, 1.0, 0.05, 0.5}, gs);
  for (int n : {0, 1, 2}) {
    const DissipativityResult r = dissipativity_check(build_A(warped, gs, q, n), 100, 70 + n);
    CHECK(r.max_rayleigh <= -q.sigma() + 1e-8);
  }
}

TEST_CASE("resolvent bounds") {
  const PulseProfile& phi = coarse_pulse();
  const double sigma = phi.params.sigma();
  CHECK(resolvent_norm(0.0, build_Ln(phi, 1, 1.0)) <= 1.0 / sigma * (1.0 + 1e-8));
  const ModeOperator L0 = build_Ln(phi, 0, 1.0);
  CHECK(resolvent_norm(3.0, L0) <= 1.0);
  // An exact eigenvalue of the constant-coefficient block is rejected.
  const GridSpec gs = coarse_static(64, 1);
  const Params pz = fixtures::params(kEps);
  Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(symbol_matrix(0.0, 0, 1.0, pz));
  const ModeOperator A0 = build_A(constant_metric(1.0, gs), gs, pz, 0);
  CHECK_THROWS_AS(resolvent_norm(es.eigenvalues()[0], A0), Error);
  const double sigma_t = 0.5 * sigma;
  const double bound = 2.0 / (sigma - sigma_t);
  const ResolventScan scan =
      resolvent_scan(L0, -sigma_t, {0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0}, bound);
  MESSAGE("empirical N = " << scan.empirical_N);
  CHECK(std::isfinite(scan.empirical_N));
  for (size_t i = 0; i < scan.im.size(); ++i)
    if (scan.im[i] >= scan.empirical_N) CHECK(scan.value[i] <= bound);
}

TEST_CASE("linear decay probe") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  const RieszProjection& P = fixtures::projection(kEps);
  const double rate = std::min({phi.params.alpha, certificate().beta, phi.params.sigma()});
  GridSpec g = phi.grid;
  g.N_theta = 2;
  std::mt19937_64 rng(5);
  const Field v0 = project_Q(random_field(g, Frame::Moving, rng), P);
  DecayProbeOptions opt;
  opt.T = 1000.0;
  opt.dt = 0.1;
  const DecayProbe a = semigroup_decay_probe(phi, P, v0, opt);
  MESSAGE("sigma_hat = " << a.sigma_hat << ", target rate " << rate);
  CHECK(a.sigma_hat >= 0.9 * rate);
  CHECK(a.r2 >= 0.99);
  opt.dt = 0.05;
  const DecayProbe b = semigroup_decay_probe(phi, P, v0, opt);
  CHECK(std::abs(a.sigma_hat - b.sigma_hat) <= 0.01 * b.sigma_hat);

  // Data in the range of P do not move.
  opt.T = 200.0;
  const DecayProbe c = semigroup_decay_probe(phi, P, P.tau, opt);
  for (double n : c.norm21) CHECK(std::abs(n / c.norm21.front() - 1.0) <= 1e-6);
}

TEST_CASE("linearization splits over angular modes") {
  const PulseProfile& phi = coarse_pulse();
  GridSpec g = phi.grid;
  g.N_theta = 3;
  std::vector<ModeOperator> ops;
  for (int n = 0; n < 3; ++n) ops.push_back(build_Ln(phi, n, 1.0));
  std::mt19937_64 rng(1);
  for (int n = 0; n < 3; ++n) {
    const Field u = single_mode(g, n, rng);
    const Field Lu = apply_modes(ops, u);
    for (int m = 0; m < 3; ++m)
      if (m != n) {
        CHECK(Lu.u1.col(m).cwiseAbs().maxCoeff() == 0.0);
        CHECK(Lu.u2.col(m).cwiseAbs().maxCoeff() == 0.0);
      }
  }
}

TEST_CASE("graph norm equivalence constants are finite and stable") {
  // Pulse linearization.
  const PulseProfile& phi = coarse_pulse();
  GridSpec g = phi.grid;
  g.N_theta = 2;
  std::vector<ModeOperator> ops = {build_Ln(phi, 0, 1.0), build_Ln(phi, 1, 1.0)};
  const RatioStats rl = graph_norm_ratios(ops, g, false, 50, 3);
  CHECK(rl.min > 0.0);
  CHECK(std::isfinite(rl.max));
  // Static operator on a warped cylinder, two resolutions.
  Params q = fixtures::params(1e-3);
  RatioStats r[2];
  for (int i = 0; i < 2; ++i) {
    const GridSpec gs = coarse_static(i == 0 ? 64 : 128, 2);
    const SurfaceMetric m = build_metric(RadiusFamily{RadiusKind::SineBump, 1.0, 0.05, 0.5}, gs);
    std::vector<ModeOperator> A = {build_A(m, gs, q, 0), build_A(m, gs, q, 1)};
    r[i] = graph_norm_ratios(A, gs, true, 50, 11);
    CHECK(r[i].min > 0.0);
    CHECK(std::isfinite(r[i].max));
  }
  CHECK(r[1].max / r[0].max == doctest::Approx(1.0).epsilon(0.5));
  CHECK(r[1].min / r[0].min == doctest::Approx(1.0).epsilon(0.5));
}

TEST_CASE("norm equivalence on mildly warped cylinders") {
  const GridSpec g = coarse_static(128, 3);
  const SurfaceMetric ref = constant_metric(1.0, g);
  for (double a : {1.0 / 16.0, 1.0 / 32.0}) {
    const RadiusFamily f{RadiusKind::SineBump, 1.0, a, 0.5};
    REQUIRE(f.analytic_delta() <= 1.0 / 16.0);
    const RatioStats s = norm_equivalence(build_metric(f, g), ref, g, 1e-3, 100, 5);
    CHECK(s.trials == 100);
    CHECK(s.min >= 0.5);
    CHECK(s.max <= 2.0);
  }
}

TEST_CASE("semigroup difference") {
  const GridSpec g = coarse_static(64, 2);
  const Params q = fixtures::params(1e-3);
  const SurfaceMetric ref = constant_metric(1.0, g);
  const SemigroupDiffResult zero = semigroup_difference(ref, ref, g, q, 1, 1e-3, 10.0, 2);
  CHECK(zero.sup_diff <= 1e-12);
  const double omega = 0.5;
  const auto warped = [&](double a) {
    return build_metric(RadiusFamily{RadiusKind::SineBump, 1.0, a, omega}, g);
  };
  const SemigroupDiffResult full = semigroup_difference(ref, warped(0.04), g, q, 1, 1e-3, 10.0, 2);
  const SemigroupDiffResult half = semigroup_difference(ref, warped(0.02), g, q, 1, 1e-3, 10.0, 2);
  REQUIRE(full.rows.size() == half.rows.size());
  CHECK(full.rows.front().t == doctest::Approx(1e-3));
  CHECK(full.rows.back().t >= 10.0);
  for (size_t i = 0; i < full.rows.size(); ++i) {
    CHECK(full.rows[i].diff / half.rows[i].diff == doctest::Approx(2.0).epsilon(0.25));
    CHECK(std::isfinite(full.rows[i].probe_diff));
  }
  CHECK(std::isfinite(full.sup_ratio));
  CHECK(full.sup_ratio <= 10.0);
}

}  // TEST_SUITE
