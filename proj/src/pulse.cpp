#include "pulselab/pulse.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "fd.hpp"
#include "pulselab/errors.hpp"
#include "pulselab/linalg.hpp"

namespace pulselab {

double singular_speed(double alpha) { return std::sqrt(2.0) / 2.0 * (1.0 - 2.0 * alpha); }

TailRates tail_rates(const Params& p, double c) {
  // Roots of (mu^2 + c mu - alpha)(c mu - eps gamma) + eps = 0.
  const double a3 = c, a2 = c * c - p.eps * p.gamma, a1 = -(p.alpha + p.eps * p.gamma) * c,
               a0 = p.alpha * p.eps * p.gamma + p.eps;
  Eigen::Matrix3d comp = Eigen::Matrix3d::Zero();
  comp(0, 0) = -a2 / a3;
  comp(0, 1) = -a1 / a3;
  comp(0, 2) = -a0 / a3;
  comp(1, 0) = 1.0;
  comp(2, 1) = 1.0;
  Eigen::EigenSolver<Eigen::Matrix3d> es(comp, false);
  TailRates t{1e300, 1e300};
  for (int i = 0; i < 3; ++i) {
    const double re = es.eigenvalues()[i].real();
    if (re < 0.0) t.mu_front = std::min(t.mu_front, -re);
    if (re > 0.0) t.mu_wake = std::min(t.mu_wake, re);
  }
  return t;
}

double plateau_estimate(const Params& p) {
  // The slow variable climbs along the excited branch at rate ~eps (u1 - gamma u2)/c
  // until it reaches the level where the back can keep pace with the front.
  const double wstar = reaction((2.0 - p.alpha) / 3.0, p.alpha);
  const double c0 = singular_speed(p.alpha);
  const double rate = p.eps * std::max(0.05, 0.95 - 0.5 * p.gamma * wstar);
  return wstar * c0 / rate;
}

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct Layout {
  double front = 0.0;   // z of the leading edge
  double back = 0.0;    // z of the trailing edge
};

Layout layout_for(const Params& p, const GridSpec& grid, double width, double tail) {
  const TailRates r = tail_rates(p, singular_speed(p.alpha));
  const double ell = std::log(1.0 / tail);
  Layout l;
  l.front = grid.L_z - (ell / r.mu_front + 8.0);
  l.back = l.front - width;
  return l;
}

int next_pow2(double x) {
  int n = 8;
  while (n < x) n *= 2;
  return n;
}

}  // namespace

GridSpec suggest_grid(const Params& p, double tail, double dz_max) {
  const TailRates r = tail_rates(p, singular_speed(p.alpha));
  const double ell = std::log(1.0 / tail);
  // The recovery tail starts from an amplitude well above its linear
  // estimate (the nonlinear refractory phase), hence the extra e-folds.
  const double span = (ell / r.mu_front + 8.0) + plateau_estimate(p) * 1.15 +
                      ((ell + 4.0) / r.mu_wake + 16.0);
  GridSpec g;
  g.L_z = 8.0 * std::ceil(0.5 * span / 8.0);
  g.N_z = next_pow2(2.0 * g.L_z / dz_max);
  g.N_theta = 1;
  return g;
}

PulseProfile pulse_seed(const Params& p, const GridSpec& grid, double width) {
  grid.validate();
  if (width <= 0.0) width = plateau_estimate(p);
  const Layout l = layout_for(p, grid, width, 1e-10);
  const int N = grid.N_z;
  const double s = 2.0 * std::sqrt(2.0);
  PulseProfile out;
  out.grid = grid;
  out.grid.N_theta = 1;
  out.params = p;
  out.c = singular_speed(p.alpha);
  out.phi1.resize(N);
  out.phi2 = VectorXd::Zero(N);
  VectorXd rise(N);
  for (int i = 0; i < N; ++i) {
    const double z = grid.z(i);
    rise[i] = 0.5 * (1.0 + std::tanh((z - l.back) / s));
    out.phi1[i] = rise[i] - 0.5 * (1.0 + std::tanh((z - l.front) / s));
  }
  // c phi2' = -eps (phi1 - gamma phi2), integrated leftwards from the right end.
  const double dz = grid.dz();
  const double k = p.eps / out.c;
  double v = 0.0;
  for (int i = N - 1; i >= 0; --i) {
    out.phi2[i] = v;
    if (i > 0) {
      const double f = 0.5 * (out.phi1[i] + out.phi1[i - 1]);
      v = v + dz * k * (f - p.gamma * v);
    }
  }
  // Behind the back the recovery relaxes at the wake rate, with u1 slaved to u2.
  const TailRates r = tail_rates(p, out.c);
  int ib = 0;
  while (ib < N - 1 && grid.z(ib) < l.back) ++ib;
  const double v_back = out.phi2[ib];
  for (int i = 0; i < N; ++i) {
    const double z = grid.z(i);
    if (z < l.back) out.phi2[i] = v_back * std::exp(r.mu_wake * (z - l.back));
    out.phi1[i] -= (1.0 - rise[i]) * out.phi2[i] / p.alpha;
  }
  return out;
}

namespace {

struct System {
  const AxialFft& fft;
  Params p;
  int N;
  double dz;
  double wq;  // quadrature weight 2 pi R dz
  VectorXd s1, s2, ds1, ds2;  // phase reference

  VectorXd residual(const VectorXd& x) const {
    const VectorXd f1 = x.head(N), f2 = x.segment(N, N);
    const double c = x[2 * N];
    VectorXd G(2 * N + 1);
    const VectorXd d1f1 = fft.d1(f1);
    G.head(N) = fft.d2(f1) + c * d1f1 - f2;
    for (int i = 0; i < N; ++i) G[i] += reaction(f1[i], p.alpha);
    G.segment(N, N) = c * fft.d1(f2) + p.eps * (f1 - p.gamma * f2);
    G[2 * N] = dz * ((f1 - s1).dot(ds1) + (f2 - s2).dot(ds2) / p.eps);
    return G;
  }

  double field_norm(const VectorXd& G) const {
    return std::sqrt(wq * (G.head(N).squaredNorm() + G.segment(N, N).squaredNorm() / p.eps));
  }
  double merit(const VectorXd& G) const {
    const double a = field_norm(G);
    return std::sqrt(a * a + G[2 * N] * G[2 * N]);
  }

  VectorXd jacobian_apply(const VectorXd& x, const VectorXd& d1f1, const VectorXd& d1f2,
                          const VectorXd& V, const VectorXd& d) const {
    const double c = x[2 * N];
    const VectorXd a = d.head(N), b = d.segment(N, N);
    const double dc = d[2 * N];
    VectorXd out(2 * N + 1);
    out.head(N) = fft.d2(a) + c * fft.d1(a) + V.cwiseProduct(a) - b + dc * d1f1;
    out.segment(N, N) = c * fft.d1(b) + p.eps * (a - p.gamma * b) + dc * d1f2;
    out[2 * N] = dz * (a.dot(ds1) + b.dot(ds2) / p.eps);
    return out;
  }

  MatrixXd dense_jacobian(const VectorXd& x, const VectorXd& d1f1, const VectorXd& d1f2,
                          const VectorXd& V) const {
    const int M = 2 * N + 1;
    MatrixXd J(M, M);
    VectorXd e = VectorXd::Zero(M);
    for (int j = 0; j < M; ++j) {
      e[j] = 1.0;
      J.col(j) = jacobian_apply(x, d1f1, d1f2, V, e);
      e[j] = 0.0;
    }
    return J;
  }
};

}  // namespace

PulseProfile find_fast_pulse(const Params& p_in, const GridSpec& grid_in,
                             const std::optional<PulseProfile>& init, const PulseOptions& opt) {
  Params p = p_in;
  p.validate();
  GridSpec grid = grid_in;
  grid.N_theta = 1;
  grid.validate();
  PulseProfile start;
  if (init) {
    start = init->grid.same_axial(grid) ? *init : resample_pulse(*init, grid);
  } else {
    start = pulse_seed(p, grid, opt.seed_width);
  }
  const int N = grid.N_z;
  const auto fft = axial_fft(grid);
  System sys{*fft, p, N, grid.dz(), 2.0 * std::numbers::pi * p.R * grid.dz(), start.phi1,
             start.phi2, fft->d1(start.phi1), fft->d1(start.phi2)};
  const bool dense = opt.dense.value_or(N <= 512);

  // Newton direction for the bordered system at x.
  auto direction = [&](const VectorXd& x, const VectorXd& G, double lin_tol) -> VectorXd {
    const VectorXd f1 = x.head(N), f2 = x.segment(N, N);
    const VectorXd d1f1 = fft->d1(f1), d1f2 = fft->d1(f2);
    VectorXd V(N);
    for (int i = 0; i < N; ++i) V[i] = reaction_prime(f1[i], p.alpha);
    if (dense) return sys.dense_jacobian(x, d1f1, d1f2, V).partialPivLu().solve(-G);
    const VectorXd col = (VectorXd(2 * N) << d1f1, d1f2).finished();
    const VectorXd row = (VectorXd(2 * N) << sys.dz * sys.ds1, sys.dz * sys.ds2 / p.eps).finished();
    const auto P = detail::fd_mode_matrix<double>(N, sys.dz, x[2 * N], x[2 * N], V, -1.0, p.eps,
                                                  -p.eps * p.gamma, 0.0);
    detail::BorderedLu<double> lu;
    if (!lu.compute(P, &col, &row, 0.0))
      throw Error(ErrorKind::FactorizationSingular, "pulse preconditioner factorization failed");
    VectorXd dx = VectorXd::Zero(2 * N + 1);
    const VectorXd rhs = -G;
    const auto res = gmres([&](const VectorXd& d) { return sys.jacobian_apply(x, d1f1, d1f2, V, d); },
                           [&](const VectorXd& r) { return lu.solve(r); }, rhs, dx, lin_tol, 80, 1600);
    if (opt.verbose)
      std::fprintf(stderr, "  gmres its=%d rel=%.2e\n", res.iterations, res.rel_residual);
    return dx;
  };

  VectorXd x(2 * N + 1);
  x << start.phi1, start.phi2, start.c;
  VectorXd G = sys.residual(x);
  double rn = sys.merit(G);
  const double target = opt.tol_newton * sys.field_norm(x);
  int it = 0;
  bool converged = rn <= target;
  for (; it < opt.max_iter && !converged; ++it) {
    const VectorXd dx = direction(x, G, 1e-11);
    // Backtracking on the residual merit.
    double lam = 1.0;
    VectorXd xn, Gn;
    double rnew = 0.0;
    for (int ls = 0; ls < 12; ++ls) {
      xn = x + lam * dx;
      Gn = sys.residual(xn);
      rnew = sys.merit(Gn);
      if (std::isfinite(rnew) && rnew <= (1.0 - 1e-4 * lam) * rn) break;
      lam *= 0.5;
    }
    if (opt.verbose)
      std::fprintf(stderr, "newton %d |G|=%.3e step=%.3g c=%.10f\n", it, rnew, lam, xn[2 * N]);
    if (!(rnew < rn)) break;
    x = xn;
    G = Gn;
    rn = rnew;
    converged = rn <= target;
  }

  if (converged && x.head(N).maxCoeff() > 0.5) {
    // The phase condition pins the weighted centre of the profile, which the
    // long recovery tail dominates. Move the leading edge back to its planned
    // position so both tails keep their share of the domain, then re-anchor
    // the phase condition on the shifted profile.
    const VectorXd f1 = x.head(N);
    int i = N - 1;
    while (i > 0 && f1[i] <= 0.5) --i;
    const int j = (i + 1) % N;
    const double t = (f1[i] - 0.5) / (f1[i] - f1[j]);
    const double h = layout_for(p, grid, 0.0, 1e-10).front - (grid.z(i) + t * grid.dz());
    if (std::abs(h) > 0.5 * grid.dz()) {
      x.head(N) = fft->shift(f1, h);
      x.segment(N, N) = fft->shift(VectorXd(x.segment(N, N)), h);
      sys.s1 = x.head(N);
      sys.s2 = x.segment(N, N);
      sys.ds1 = fft->d1(sys.s1);
      sys.ds2 = fft->d1(sys.s2);
      G = sys.residual(x);
      rn = sys.merit(G);
    }
  }
  // Polish toward round-off; stop once a full step no longer halves the merit.
  if (converged) {
    for (int k = 0; k < 4; ++k) {
      const VectorXd xn = x + direction(x, G, 1e-12);
      const VectorXd Gn = sys.residual(xn);
      const double rnew = sys.merit(Gn);
      if (!(rnew < 0.5 * rn)) break;
      x = xn;
      G = Gn;
      rn = rnew;
    }
    converged = rn <= target;
  }

  PulseProfile out;
  out.grid = grid;
  out.params = p;
  out.params.c = 0.0;
  out.phi1 = x.head(N);
  out.phi2 = x.segment(N, N);
  out.c = x[2 * N];
  out.newton_iterations = it;
  out.residual = sys.field_norm(G);

  if (out.phi1.maxCoeff() < 0.1)
    throw Error(ErrorKind::CollapsedToZero, "Newton iterate fell onto the rest state");
  if (!converged)
    throw Error(ErrorKind::NoConvergence,
                "pulse Newton stopped at residual " + sci(rn) + " after " +
                    std::to_string(it) + " iterations");
  if (!(out.c > 0.0)) throw Error(ErrorKind::NoConvergence, "nonpositive speed");
  const double br = boundary_ratio(out);
  if (br > opt.tail_tol)
    throw Error(ErrorKind::BoundaryContamination,
                "boundary magnitude ratio " + sci(br) + " exceeds tail tolerance; enlarge L_z");
  return out;
}

double boundary_ratio(const PulseProfile& phi) {
  const int N = static_cast<int>(phi.phi1.size());
  double b = 0.0;
  for (int i : {0, 1, N - 2, N - 1})
    b = std::max({b, std::abs(phi.phi1[i]), std::abs(phi.phi2[i])});
  return b / phi.phi1.cwiseAbs().maxCoeff();
}

double pulse_residual(const PulseProfile& phi) {
  const Field u = pulse_field(phi);
  const Field G = rhs_moving(u, phi.moving_params());
  return norm_eps(G, constant_metric(phi.params.R, u.grid), phi.params.eps);
}

namespace {
double cubic_sample(const VectorXd& v, const GridSpec& g, double z) {
  const double s = (z + g.L_z) / g.dz();
  const int i = static_cast<int>(std::floor(s));
  const double t = s - i;
  const int N = g.N_z;
  auto at = [&](int j) { return (j < 0 || j >= N) ? 0.0 : v[j]; };
  const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
  return p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
}
}  // namespace

PulseProfile resample_pulse(const PulseProfile& phi, const GridSpec& grid) {
  PulseProfile out = phi;
  out.grid = grid;
  out.grid.N_theta = 1;
  out.phi1.resize(grid.N_z);
  out.phi2.resize(grid.N_z);
  for (int i = 0; i < grid.N_z; ++i) {
    const double zo = grid.z(i) - grid.L_z + phi.grid.L_z;
    out.phi1[i] = cubic_sample(phi.phi1, phi.grid, zo);
    out.phi2[i] = cubic_sample(phi.phi2, phi.grid, zo);
  }
  return out;
}

namespace {
// Position where phi1 crosses 1/2 on the leading (right) or trailing (left) side.
double edge_position(const PulseProfile& phi, bool leading) {
  const GridSpec& g = phi.grid;
  const int N = g.N_z;
  const VectorXd& f = phi.phi1;
  if (leading) {
    int i = N - 1;
    while (i > 0 && f[i] <= 0.5) --i;
    const int j = std::min(i + 1, N - 1);
    const double t = j == i ? 0.0 : (f[i] - 0.5) / (f[i] - f[j]);
    return g.z(i) + t * g.dz();
  }
  int i = 0;
  while (i < N - 1 && f[i] <= 0.5) ++i;
  const int j = std::max(i - 1, 0);
  const double t = j == i ? 0.0 : (f[i] - 0.5) / (f[i] - f[j]);
  return g.z(i) - t * g.dz();
}
}  // namespace

PulseProfile stretch_pulse(const PulseProfile& phi, const Params& target, const GridSpec& grid) {
  const double factor = phi.params.eps / target.eps;
  const double zf = edge_position(phi, true), zb = edge_position(phi, false);
  const double w_old = zf - zb, w_new = factor * w_old;
  const double m = std::min(12.0, 0.25 * w_old);
  const double zf_new = layout_for(target, grid, 0.0, 1e-10).front;
  PulseProfile out = phi;
  out.params = target;
  out.grid = grid;
  out.grid.N_theta = 1;
  out.phi1.resize(grid.N_z);
  out.phi2.resize(grid.N_z);
  for (int i = 0; i < grid.N_z; ++i) {
    const double dn = zf_new - grid.z(i);
    double d;
    if (dn <= m)
      d = dn;
    else if (dn <= w_new - m)
      d = m + (dn - m) * (w_old - 2.0 * m) / (w_new - 2.0 * m);
    else if (dn <= w_new + m)
      d = w_old + (dn - w_new);
    else
      d = w_old + m + (dn - w_new - m) / factor;
    out.phi1[i] = cubic_sample(phi.phi1, phi.grid, zf - d);
    out.phi2[i] = cubic_sample(phi.phi2, phi.grid, zf - d);
  }
  return out;
}

std::vector<PulseProfile> continue_in_eps(const Params& base, const std::vector<double>& eps_path,
                                          const PulseOptions& opt, bool auto_grid,
                                          const GridSpec& fixed) {
  std::vector<PulseProfile> out;
  auto grid_for = [&](double eps) {
    Params q = base;
    q.eps = eps;
    return auto_grid ? suggest_grid(q) : fixed;
  };
  std::optional<PulseProfile> prev;
  for (double target : eps_path) {
    double goal = target;
    int failures = 0;
    while (true) {
      Params q = base;
      q.eps = goal;
      const GridSpec g = grid_for(goal);
      try {
        std::optional<PulseProfile> init;
        if (prev) init = stretch_pulse(*prev, q, g);
        PulseProfile r = find_fast_pulse(q, g, init, opt);
        prev = r;
        failures = 0;
        if (goal == target) {
          out.push_back(r);
          break;
        }
        goal = target;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoConvergence && e.kind() != ErrorKind::CollapsedToZero)
          throw;
        if (!prev || ++failures > 6) throw;
        goal = std::sqrt(prev->params.eps * goal);
      }
    }
  }
  return out;
}

PulseProfile translate_pulse(const PulseProfile& phi, double h) {
  if (h == 0.0) return phi;
  const auto fft = axial_fft(phi.grid);
  PulseProfile out = phi;
  out.phi1 = fft->shift(phi.phi1, h);
  out.phi2 = fft->shift(phi.phi2, h);
  return out;
}

Field pulse_field(const PulseProfile& phi, int n_theta) {
  GridSpec g = phi.grid;
  g.N_theta = n_theta;
  return Field::axisymmetric(g, Frame::Moving, phi.phi1, phi.phi2);
}

Field tangent_vector(const PulseProfile& phi, int n_theta) {
  const auto fft = axial_fft(phi.grid);
  GridSpec g = phi.grid;
  g.N_theta = n_theta;
  return Field::axisymmetric(g, Frame::Moving, -fft->d1(phi.phi1), -fft->d1(phi.phi2));
}

}  // namespace pulselab
