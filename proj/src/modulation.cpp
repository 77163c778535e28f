#include "pulselab/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pulselab/errors.hpp"

namespace pulselab {

std::string to_string(Chart c) { return c == Chart::Local ? "local" : "manifold"; }

PulseManifold::PulseManifold(const PulseProfile& phi, const RieszProjection& proj, double R)
    : phi_(phi), proj_(proj) {
  GridSpec g = phi.grid;
  g.N_theta = 1;
  phi_.grid = g;
  metric_ = constant_metric(R, g);
  const auto fft = axial_fft(g);
  hat1_ = fft->forward(VectorXcd(phi.phi1.cast<cplx>()));
  hat2_ = fft->forward(VectorXcd(phi.phi2.cast<cplx>()));
  tstar1_ = fft->forward(VectorXcd(proj.tau_star.u1.col(0)));
  tstar2_ = fft->forward(VectorXcd(proj.tau_star.u2.col(0)));
  phi_norm21_ = norm21(member(0.0));
}

Field PulseManifold::shifted(const VectorXcd& a, const VectorXcd& b, double h, int modes,
                             int deriv) const {
  GridSpec g = phi_.grid;
  g.N_theta = modes;
  const auto fft = axial_fft(g);
  const int N = g.N_z;
  const VectorXd& k = fft->k();
  const VectorXd& ko = fft->k_odd();
  VectorXcd pa(N), pb(N);
  for (int j = 0; j < N; ++j) {
    // Nyquist: real-valued shift by cos(k h), matching AxialFft::shift.
    cplx ph = (ko[j] == 0.0 && k[j] != 0.0) ? cplx(std::cos(k[j] * h), 0.0)
                                             : std::polar(1.0, -k[j] * h);
    if (deriv == 1) ph *= cplx(0.0, ko[j]);
    pa[j] = a[j] * ph;
    pb[j] = b[j] * ph;
  }
  Field out(g, Frame::Moving);
  out.u1.col(0) = fft->inverse(pa).real().cast<cplx>();
  out.u2.col(0) = fft->inverse(pb).real().cast<cplx>();
  return out;
}

Field PulseManifold::member(double h, int modes) const { return shifted(hat1_, hat2_, h, modes, 0); }

Field PulseManifold::tangent(double h, int modes) const {
  Field d = shifted(hat1_, hat2_, h, modes, 1);
  d *= -1.0;
  return d;
}

Field PulseManifold::adjoint(double h, int modes) const {
  return shifted(tstar1_, tstar2_, h, modes, 0);
}

double PulseManifold::norm21(const Field& u) const {
  GridSpec g = u.grid;
  if (!g.same_axial(phi_.grid)) throw Error(ErrorKind::ShapeMismatch, "field grid differs from pulse grid");
  return norm_21(u, metric_, eps());
}

double PulseManifold::inner0(const Field& u, const Field& w) const {
  const VectorXd W = surface_weights(metric_, phi_.grid);
  double s = 0.0;
  const double e = eps();
  for (int i = 0; i < phi_.grid.N_z; ++i)
    s += W[i] * (u.u1(i, 0).real() * w.u1(i, 0).real() + u.u2(i, 0).real() * w.u2(i, 0).real() / e);
  return s;
}

namespace {

// Squared Hilbertian H^{2,1} distance surrogate to Phi_{j dz} for every grid
// shift j, up to the constant ||u||^2 + ||Phi||^2: returns -2 Re<u, Phi_h>.
int coarse_shift(const Field& u, const PulseManifold& M) {
  const GridSpec& g = M.grid();
  const auto fft = axial_fft(g);
  const int N = g.N_z;
  const double e = M.eps();
  const VectorXcd u1 = fft->forward(VectorXcd(u.u1.col(0)));
  const VectorXcd u2 = fft->forward(VectorXcd(u.u2.col(0)));
  const Field phi = M.member(0.0);
  const VectorXcd p1 = fft->forward(VectorXcd(phi.u1.col(0)));
  const VectorXcd p2 = fft->forward(VectorXcd(phi.u2.col(0)));
  const VectorXd& ko = fft->k_odd();
  VectorXcd X(N);
  for (int j = 0; j < N; ++j) {
    const double k2 = ko[j] * ko[j];
    X[j] = u1[j] * std::conj(p1[j]) * (k2 * k2 + 1.0) + u2[j] * std::conj(p2[j]) * (k2 + 1.0) / e;
  }
  const VectorXcd corr = fft->inverse(X);
  int best = 0;
  for (int j = 1; j < N; ++j)
    if (corr[j].real() > corr[best].real()) best = j;
  return best;
}

struct DistCore {
  const Field& u;
  const PulseManifold& M;
  double value(double h) const {
    Field w = u;
    const Field ph = M.member(h, u.modes());
    w -= ph;
    return M.norm21(w);
  }
  // d/dh of ||Delta w1||_A + ... in the sum form sqrt(A) + sqrt(B).
  double slope(double h) const {
    const GridSpec& g = M.grid();
    const auto fft = axial_fft(g);
    const double e = M.eps();
    Field w = u;
    w -= M.member(h, u.modes());
    const Field tau = M.tangent(h, 1);
    const VectorXd W = surface_weights(M.metric(), g);
    const MatrixXcd lw = laplace_beltrami_apply(w.u1, M.metric(), w.grid);
    const MatrixXcd dw = axial_derivative(w.u2, w.grid);
    const VectorXcd lt = fft->d2(VectorXcd(tau.u1.col(0)));
    const VectorXcd dt = fft->d1(VectorXcd(tau.u2.col(0)));
    double A = 0.0, B = 0.0;
    for (int n = 0; n < w.modes(); ++n) {
      const double m = n == 0 ? 1.0 : 2.0;
      A += m * ((W.array() * lw.col(n).array().abs2()).sum() +
                (W.array() * dw.col(n).array().abs2()).sum() / e);
      B += m * ((W.array() * w.u1.col(n).array().abs2()).sum() +
                (W.array() * w.u2.col(n).array().abs2()).sum() / e);
    }
    double dA = 0.0, dB = 0.0;
    for (int i = 0; i < g.N_z; ++i) {
      dA += W[i] * ((lw(i, 0) * std::conj(lt[i])).real() + (dw(i, 0) * std::conj(dt[i])).real() / e);
      dB += W[i] * ((w.u1(i, 0) * std::conj(tau.u1(i, 0))).real() +
                    (w.u2(i, 0) * std::conj(tau.u2(i, 0))).real() / e);
    }
    dA *= -2.0;
    dB *= -2.0;
    if (A <= 0.0 || B <= 0.0) return 0.0;
    return dA / (2.0 * std::sqrt(A)) + dB / (2.0 * std::sqrt(B));
  }
};

double wrap_shift(double h, double L) {
  const double P = 2.0 * L;
  h = std::fmod(h + L, P);
  if (h < 0) h += P;
  return h - L;
}

}  // namespace

DistResult dist_to_manifold(const Field& u, const PulseManifold& M) {
  if (!u.grid.same_axial(M.grid())) throw Error(ErrorKind::ShapeMismatch, "field grid differs from pulse grid");
  const GridSpec& g = M.grid();
  const double dz = g.dz();
  const int j = coarse_shift(u, M);
  const double h0 = wrap_shift(j * dz, g.L_z);
  DistCore core{u, M};
  // Golden-section on [h0 - 2dz, h0 + 2dz].
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = h0 - 2.0 * dz, b = h0 + 2.0 * dz;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = core.value(c), fd = core.value(d);
  while (b - a > 1e-10 * dz) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = core.value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = core.value(d);
    }
  }
  double h = 0.5 * (a + b);
  double f = core.value(h);
  // Secant polish on the derivative when the minimum is smooth.
  if (f > 1e-10 * std::max(1.0, M.phi_norm21())) {
    double h1 = h - 1e-6 * dz, h2 = h + 1e-6 * dz;
    double s1 = core.slope(h1), s2 = core.slope(h2);
    for (int it = 0; it < 8 && s2 != s1; ++it) {
      const double h3 = h2 - s2 * (h2 - h1) / (s2 - s1);
      if (!std::isfinite(h3) || std::abs(h3 - h) > dz) break;
      h1 = h2;
      s1 = s2;
      h2 = h3;
      s2 = core.slope(h2);
      if (std::abs(h2 - h1) < 1e-14 * std::max(1.0, std::abs(h2))) break;
    }
    const double f2 = core.value(h2);
    if (f2 <= f) {
      h = h2;
      f = f2;
    }
  }
  return {f, h};
}

namespace {

ModulationState decompose_from(const Field& u, const PulseManifold& M, Chart chart,
                               const DecomposeOptions& opt, const DistResult& dr) {
  const double eta = opt.eta_tube > 0.0 ? opt.eta_tube : 0.1 * M.phi_norm21();
  if (!(dr.d <= eta))
    throw Error(ErrorKind::OutsideTube, "distance to the pulse manifold " + std::to_string(dr.d) +
                                            " exceeds the tube radius " + std::to_string(eta));
  const int K = u.modes();
  const Field tstar = M.adjoint(0.0);
  double h = dr.h_min;
  ModulationState st;
  st.chart = chart;
  bool converged = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    Field w = u;
    w -= M.member(h, K);
    const Field tau_h = M.tangent(h);
    double H, dH;
    if (chart == Chart::Local) {
      H = M.inner0(w, tstar);
      dH = -M.inner0(tau_h, tstar);
    } else {
      const Field ts_h = M.adjoint(h);
      // d/dh tau*_h = -d_z tau*_h.
      Field dts = d_axial(ts_h);
      H = M.inner0(w, ts_h);
      dH = -M.inner0(tau_h, ts_h) - M.inner0(w, dts);
    }
    st.iterations = it + 1;
    if (!(std::abs(dH) > 1e-12))
      throw Error(ErrorKind::NewtonStall, "modulation equation has a vanishing derivative");
    const double dh = -H / dH;
    h += dh;
    if (std::abs(dh) <= opt.tol * std::max(1.0, std::abs(h))) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw Error(ErrorKind::NewtonStall, "modulation Newton did not converge in " +
                                            std::to_string(opt.max_iter) + " iterations");
  st.h = h;
  st.v = u;
  st.v -= M.member(h, K);
  st.residual = std::abs(M.inner0(st.v, chart == Chart::Local ? tstar : M.adjoint(h)));
  return st;
}

}  // namespace

ModulationState decompose(const Field& u, const PulseManifold& M, Chart chart,
                          const DecomposeOptions& opt) {
  return decompose_from(u, M, chart, opt, dist_to_manifold(u, M));
}

Field linearized_apply(const Field& v, const PulseManifold& M, double h) {
  const PulseProfile& phi = M.profile();
  const Params p = phi.moving_params();
  const Field ph = M.member(h);
  Field out(v.grid, v.frame);
  const MatrixXcd lap = laplace_beltrami_apply(v.u1, M.metric(), v.grid);
  const MatrixXcd d1 = axial_derivative(v.u1, v.grid);
  const MatrixXcd d2 = axial_derivative(v.u2, v.grid);
  VectorXcd fp(v.grid.N_z);
  for (int i = 0; i < v.grid.N_z; ++i) fp[i] = reaction_prime(ph.u1(i, 0).real(), p.alpha);
  for (int n = 0; n < v.modes(); ++n) {
    out.u1.col(n) = lap.col(n) + p.c * d1.col(n) + fp.cwiseProduct(v.u1.col(n)) - v.u2.col(n);
    out.u2.col(n) = p.c * d2.col(n) + p.eps * v.u1.col(n) - (p.eps * p.gamma) * v.u2.col(n);
  }
  return out;
}

Field N_h(const Field& v, const PulseManifold& M, double h) {
  const double a1 = M.profile().params.alpha + 1.0;
  const Field ph = M.member(h);
  VectorXd p1(v.grid.N_z);
  for (int i = 0; i < v.grid.N_z; ++i) p1[i] = ph.u1(i, 0).real();
  Field out(v.grid, v.frame);
  out.u1 = apply_pointwise(v.u1, [&](int i, cplx y) { return y * y * (a1 - 3.0 * p1[i] - y); });
  return out;
}

ModulationTracker::ModulationTracker(const PulseManifold& M, bool track_dist, DecomposeOptions opt)
    : M_(M), track_dist_(track_dist), opt_(opt) {}

void ModulationTracker::observe(double t, const Field& u) {
  if (stopped_) return;
  try {
    const DistResult dr = dist_to_manifold(u, M_);
    const ModulationState st = decompose_from(u, M_, Chart::Local, opt_, dr);
    ModulationSample s;
    s.t = t;
    s.h = st.h;
    s.v_norm21 = M_.norm21(st.v);
    s.dist = track_dist_ ? dr.d : 0.0;
    s.residual = st.residual;
    Field rhs = linearized_apply(st.v, M_, st.h);
    rhs += N_h(st.v, M_, st.h);
    const Field tstar = M_.adjoint(0.0);
    s.hdot_rhs = M_.inner0(rhs, tstar) / M_.inner0(M_.tangent(st.h), tstar);
    samples_.push_back(s);
    last_h_ = st.h;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::OutsideTube && e.kind() != ErrorKind::NewtonStall) throw;
    stopped_ = true;
    stop_reason_ = e.what();
  }
}

Observer ModulationTracker::observer(int stride) {
  return Observer{"modulation", stride, [this](double t, const Field& u) { observe(t, u); }};
}

Observer ModulationTracker::observer(int stride, double dt, double dense_until) {
  const int st = std::max(1, stride);
  return Observer{"modulation", 1, [this, st, dt, dense_until](double t, const Field& u) {
                    const long k = std::lround(t / dt);
                    if (t < dense_until || k % st == 0) observe(t, u);
                  }};
}

double ModulationTracker::finalize() {
  const size_t n = samples_.size();
  double sup = 0.0;
  for (const auto& s : samples_) sup = std::max(sup, std::abs(s.hdot_rhs));
  double worst = 0.0;
  for (size_t i = 0; i < n; ++i) {
    auto& s = samples_[i];
    if (i == 0 || i + 1 == n) {
      const size_t a = i == 0 ? 0 : i - 1, b = i == 0 ? std::min<size_t>(1, n - 1) : i;
      s.hdot_fd = b > a ? (samples_[b].h - samples_[a].h) / (samples_[b].t - samples_[a].t) : 0.0;
      s.hdot_consistency = sup > 0.0 ? std::abs(s.hdot_fd - s.hdot_rhs) / sup : 0.0;
      continue;
    }
    // Three-point derivative on a nonuniform stencil.
    const double a = s.t - samples_[i - 1].t, b = samples_[i + 1].t - s.t;
    s.hdot_fd = -b / (a * (a + b)) * samples_[i - 1].h + (b - a) / (a * b) * s.h +
                a / (b * (a + b)) * samples_[i + 1].h;
    s.hdot_consistency = sup > 0.0 ? std::abs(s.hdot_fd - s.hdot_rhs) / sup : 0.0;
    worst = std::max(worst, s.hdot_consistency);
  }
  return worst;
}

DecaySummary fit_decay(const std::vector<double>& t, const std::vector<double>& y,
                       const std::vector<double>& h, const DecayOptions& opt) {
  DecaySummary s;
  if (t.size() != y.size() || (!h.empty() && h.size() != t.size()))
    throw Error(ErrorKind::ShapeMismatch, "decay series columns differ in length");
  if (t.size() < 50) {
    s.flag = "fewer than 50 samples";
    if (opt.strict) throw Error(ErrorKind::UnreliableFit, s.flag);
    return s;
  }
  const double t0 = t.front(), T = t.back();
  s.window_start = t0 + 0.5 * (T - t0);
  s.window_end = T;
  size_t half = 0;
  while (half < t.size() && t[half] < s.window_start) ++half;
  if (!h.empty()) {
    s.h_star = h.back();
    s.h_half = h[std::min(half, h.size() - 1)];
    const double h_tol = std::max(1e-12, 0.01 * std::abs(s.h_star));
    s.cauchy_ok = std::abs(s.h_star - s.h_half) <= 10.0 * h_tol;
  }
  const double ymax = *std::max_element(y.begin(), y.end());
  if (!(ymax > 1e-300)) {
    s.xi_hat = std::numeric_limits<double>::quiet_NaN();
    s.C_hat = std::numeric_limits<double>::quiet_NaN();
    s.flag = "zero perturbation";
    return s;
  }
  std::vector<double> ft, fy;
  for (size_t i = half; i < t.size(); ++i) {
    if (y[i] > 0.0) {
      ft.push_back(t[i]);
      fy.push_back(std::log(y[i]));
    }
  }
  if (ft.size() < 2) {
    s.flag = "no positive samples in the fit window";
    if (opt.strict) throw Error(ErrorKind::UnreliableFit, s.flag);
    return s;
  }
  const LineFit f = fit_line(ft, fy);
  s.xi_hat = -f.slope;
  s.C_hat = y.front() > 0.0 ? std::exp(f.intercept + f.slope * t0) / y.front() : 0.0;
  s.r2 = f.r2;
  s.reliable = s.r2 >= opt.min_r2;
  if (!s.reliable) {
    s.flag = "fit R^2 = " + std::to_string(s.r2) + " below " + std::to_string(opt.min_r2);
    if (opt.strict) throw Error(ErrorKind::UnreliableFit, s.flag);
  }
  return s;
}

DecaySummary fit_decay(const std::vector<ModulationSample>& series, const DecayOptions& opt) {
  std::vector<double> t, y, h;
  for (const auto& s : series) {
    t.push_back(s.t);
    y.push_back(s.v_norm21);
    h.push_back(s.h);
  }
  return fit_decay(t, y, h, opt);
}

}  // namespace pulselab
