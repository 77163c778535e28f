#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "fixtures.hpp"
#include "pulselab/errors.hpp"
#include "pulselab/evolve.hpp"
#include "pulselab/linalg.hpp"

using namespace pulselab;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double kEps = 1e-2;

GridSpec box(int N = 64, int K = 2) {
  GridSpec g;
  g.N_z = N;
  g.L_z = 8.0 * pi;
  g.N_theta = K;
  return g;
}

Integrator integrator(Scheme s, double dt, const Params& p, Frame f,
                      const SurfaceMetric& m = {}) {
  Integrator I;
  I.scheme = s;
  I.dt = dt;
  I.params = p;
  I.frame = f;
  I.metric = m;
  return I;
}

Field run(Field u, double T, const GridSpec& g, const Integrator& I, ExplicitTerm term = {}) {
  Evolver ev(g, I, std::move(term));
  integrate(u, T, ev, {});
  return u;
}

}  // namespace

TEST_SUITE("evolve") {

TEST_CASE("rest state is fixed") {
  const GridSpec g = box();
  const Params p = fixtures::params(kEps);
  for (Scheme s : {Scheme::ImexTheta, Scheme::EtdRk2}) {
    const Field z = Field::zeros(g, Frame::Static);
    CHECK(step(z, integrator(s, 0.1, p, Frame::Static)).max_abs() == 0.0);
    CHECK(run(z, 2.0, g, integrator(s, 0.1, p, Frame::Static)).max_abs() == 0.0);
  }
}

TEST_CASE("scheme names") {
  CHECK(scheme_from_string(to_string(Scheme::ImexTheta)) == Scheme::ImexTheta);
  CHECK(scheme_from_string(to_string(Scheme::EtdRk2)) == Scheme::EtdRk2);
  CHECK_THROWS_AS(scheme_from_string("rk4"), Error);
  Integrator bad;
  bad.dt = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("pulse is stationary in the moving frame") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  const SurfaceMetric m = constant_metric(1.0, phi.grid);
  const Field u0 = pulse_field(phi);
  for (Scheme s : {Scheme::ImexTheta, Scheme::EtdRk2}) {
    Evolver ev(phi.grid, integrator(s, 0.01, phi.moving_params(), Frame::Moving));
    double worst = 0.0;
    Field u = u0;
    const Observer obs{"dev", 100, [&](double, const Field& x) {
                         worst = std::max(worst, norm_21(x - u0, m, kEps));
                       }};
    integrate(u, 10.0, ev, {obs});
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("static and moving frames agree") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  const Field u0 = pulse_field(phi);
  Params ps = phi.params;
  ps.c = 0.0;
  for (Scheme s : {Scheme::ImexTheta, Scheme::EtdRk2}) {
    Field st = u0;
    st.frame = Frame::Static;
    st = run(st, 5.0, phi.grid, integrator(s, 0.01, ps, Frame::Static));
    const Field mv = run(u0, 5.0, phi.grid, integrator(s, 0.01, phi.moving_params(), Frame::Moving));
    Field shifted = translate(mv, phi.c * 5.0);
    shifted.frame = Frame::Static;
    CHECK((st - shifted).max_abs() <= 1e-4);
    Field exact = translate(u0, phi.c * 5.0);
    exact.frame = Frame::Static;
    CHECK((st - exact).max_abs() <= 1e-4);
  }
}

TEST_CASE("second-order convergence in time") {
  const GridSpec g = box(64, 2);
  const Params p = fixtures::params(kEps);
  std::mt19937_64 rng(3);
  const Field u0 = cplx(0.8) * random_field(g, Frame::Static, rng);
  const SurfaceMetric warped = build_metric(RadiusFamily{RadiusKind::SineBump, 1.0, 0.05, 0.5}, g);
  for (Scheme s : {Scheme::ImexTheta, Scheme::EtdRk2})
    for (const SurfaceMetric* m : {static_cast<const SurfaceMetric*>(nullptr), &warped}) {
      Field sol[3];
      for (int r = 0; r < 3; ++r) {
        const double dt = 0.05 / (1 << r);
        sol[r] = run(u0, 1.0, g, integrator(s, dt, p, Frame::Static, m ? *m : SurfaceMetric{}));
      }
      const double e0 = (sol[0] - sol[1]).max_abs(), e1 = (sol[1] - sol[2]).max_abs();
      const double order = std::log2(e0 / e1);
      MESSAGE(to_string(s) << std::string(m ? " warped" : " standard") << " observed order " << order);
      CHECK(order == doctest::Approx(2.0).epsilon(0.15));
    }
}

TEST_CASE("warped linear evolution matches the dense exponential") {
  const GridSpec g = box(64, 2);
  const Params p = fixtures::params(kEps);
  const SurfaceMetric m = build_metric(RadiusFamily{RadiusKind::SineBump, 1.0, 0.04, 0.5}, g);
  std::mt19937_64 rng(8);
  const Field u0 = random_field(g, Frame::Static, rng);
  const Field lin = run(u0, 1.0, g, integrator(Scheme::EtdRk2, 0.005, p, Frame::Static, m),
                        [&](const Field& u) {
                          Field c(u.grid, u.frame);
                          const SurfaceMetric R = constant_metric(1.0, u.grid);
                          c.u1 = laplace_beltrami_apply(u.u1, m, u.grid) -
                                 laplace_beltrami_apply(u.u1, R, u.grid);
                          return c;
                        });
  for (int n = 0; n < g.N_theta; ++n) {
    const MatrixXd A = build_A(m, g, p, n).to_dense();
    const VectorXcd ref = expm(A).cast<cplx>() * u0.mode(n);
    CHECK((lin.mode(n) - ref).cwiseAbs().maxCoeff() <= 1e-5 * ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("small data decay on the standard cylinder") {
  const GridSpec g = box(64, 3);
  const Params p = fixtures::params(kEps);
  const SurfaceMetric m = constant_metric(1.0, g);
  std::mt19937_64 rng(4);
  const Field u0 = cplx(1e-6) * random_field(g, Frame::Static, rng);
  const double T = 50.0;
  const Field u = run(u0, T, g, integrator(Scheme::ImexTheta, 0.05, p, Frame::Static));
  CHECK(norm_eps(u, m, p.eps) <= std::exp(-p.sigma() * T) * norm_eps(u0, m, p.eps) * (1.0 + 1e-3));
}

TEST_CASE("nearby data separate at most exponentially") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  GridSpec g = phi.grid;
  g.N_theta = 2;
  const SurfaceMetric m = constant_metric(1.0, g);
  std::mt19937_64 rng(12);
  Field u = pulse_field(phi, 2) + cplx(1e-2) * random_field(g, Frame::Moving, rng);
  Field w = u + cplx(1e-6) * random_field(g, Frame::Moving, rng);
  const double d0 = norm_21(u - w, m, kEps);
  const Integrator I = integrator(Scheme::EtdRk2, 0.02, phi.moving_params(), Frame::Moving);
  Evolver eu(g, I), ew(g, I);
  double K = -1e300;
  for (int k = 1; k <= 10; ++k) {
    integrate(u, k * 1.0, eu, {});
    integrate(w, k * 1.0, ew, {});
    K = std::max(K, std::log(norm_21(u - w, m, kEps) / d0) / (k * 1.0));
  }
  MESSAGE("measured separation rate K = " << K);
  CHECK(std::isfinite(K));
  CHECK(K <= 5.0);
}

TEST_CASE("axisymmetric data stay axisymmetric") {
  const PulseProfile& phi = fixtures::pulse(kEps);
  Field u = pulse_field(phi, 3);
  std::mt19937_64 rng(2);
  GridSpec g = phi.grid;
  g.N_theta = 1;
  const Field bump = cplx(0.05) * random_field(g, Frame::Moving, rng);
  u.u1.col(0) += bump.u1.col(0);
  u.u2.col(0) += bump.u2.col(0);
  u = run(u, 5.0, u.grid, integrator(Scheme::ImexTheta, 0.01, phi.moving_params(), Frame::Moving));
  const double total = u.u1.squaredNorm() + u.u2.squaredNorm();
  const double off = u.u1.rightCols(2).squaredNorm() + u.u2.rightCols(2).squaredNorm();
  CHECK(off <= 1e-12 * total);
}

TEST_CASE("tiny data follow the linear semigroup") {
  const GridSpec g = box(64, 2);
  const Params p = fixtures::params(kEps);
  std::mt19937_64 rng(6);
  Field u0 = random_field(g, Frame::Static, rng);
  const SurfaceMetric m = constant_metric(1.0, g);
  u0 *= cplx(1e-6 / norm_eps(u0, m, p.eps));
  for (Scheme s : {Scheme::ImexTheta, Scheme::EtdRk2}) {
    const Integrator I = integrator(s, 0.01, p, Frame::Static);
    const Field nl = run(u0, 1.0, g, I);
    const Field lin = run(u0, 1.0, g, I, [](const Field& u) { return Field::zeros(u.grid, u.frame); });
    CHECK(norm_eps(nl - lin, m, p.eps) <= 1e-4 * norm_eps(lin, m, p.eps));
  }
}

TEST_CASE("blow-up is reported") {
  const GridSpec g = box(32, 1);
  const Params p = fixtures::params(kEps);
  Field u = Field::axisymmetric(g, Frame::Static, VectorXd::Constant(g.N_z, -50.0),
                                VectorXd::Zero(g.N_z));
  try {
    run(u, 10.0, g, integrator(Scheme::ImexTheta, 0.5, p, Frame::Static));
    FAIL("expected Blowup");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Blowup);
  }
}

TEST_CASE("observers run on their stride and failures are logged") {
  const GridSpec g = box(32, 1);
  const Params p = fixtures::params(kEps);
  Field u = Field::zeros(g, Frame::Static);
  Evolver ev(g, integrator(Scheme::ImexTheta, 0.1, p, Frame::Static));
  std::vector<double> times;
  int bad_calls = 0;
  const Observer rec{"rec", 5, [&](double t, const Field&) { times.push_back(t); }};
  const Observer bad{"bad", 1, [&](double, const Field&) {
                       ++bad_calls;
                       throw std::runtime_error("boom");
                     }};
  const TrajectorySummary s = integrate(u, 2.0, ev, {rec, bad});
  CHECK(s.steps == 20);
  CHECK(s.t_final == doctest::Approx(2.0));
  REQUIRE(times.size() == 5);
  CHECK(times.front() == 0.0);
  CHECK(times.back() == doctest::Approx(2.0));
  CHECK(bad_calls == 1);
  REQUIRE(!s.warnings.empty());
  CHECK(s.warnings.front().find("ObserverFailure") != std::string::npos);
}

}  // TEST_SUITE
