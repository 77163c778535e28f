#include "pulselab/evolve.hpp"

#include <cmath>

#include "pulselab/errors.hpp"
#include "pulselab/linalg.hpp"

namespace pulselab {

std::string to_string(Scheme s) { return s == Scheme::ImexTheta ? "imex-theta" : "etd-rk2"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "imex-theta" || s == "imex") return Scheme::ImexTheta;
  if (s == "etd-rk2" || s == "etd") return Scheme::EtdRk2;
  throw Error(ErrorKind::InvalidConfig, "unknown scheme '" + s + "'");
}

void Integrator::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::InvalidConfig, "dt must be positive");
  if (!(theta >= 0.5 && theta <= 1.0))
    throw Error(ErrorKind::InvalidConfig, "theta must lie in [0.5, 1]");
  params.validate();
}

namespace {
constexpr double kBlowup = 1e6;

// [e^Z, phi1(Z), phi2(Z)] from the exponential of a 6x6 block matrix.
void etd_coefficients(const Eigen::Matrix2cd& Z, Eigen::Matrix2cd& e, Eigen::Matrix2cd& p1,
                      Eigen::Matrix2cd& p2) {
  MatrixXcd B = MatrixXcd::Zero(6, 6);
  B.block(0, 0, 2, 2) = Z;
  B.block(0, 2, 2, 2).setIdentity();
  B.block(2, 4, 2, 2).setIdentity();
  const MatrixXcd E = expm(B);
  e = E.block(0, 0, 2, 2);
  p1 = E.block(0, 2, 2, 2);
  p2 = E.block(0, 4, 2, 2);
}
}  // namespace

Evolver::Evolver(const GridSpec& grid, Integrator integ, ExplicitTerm term)
    : grid_(grid), integ_(std::move(integ)), term_(std::move(term)) {
  grid_.validate();
  integ_.validate();
  ref_metric_ = constant_metric(integ_.params.R, grid_);
  if (integ_.metric.size() == 0) integ_.metric = ref_metric_;
  if (integ_.metric.size() != grid_.N_z)
    throw Error(ErrorKind::ShapeMismatch, "integrator metric does not match the grid");
  if (std::abs(integ_.metric.R_ref - integ_.params.R) > 1e-14 * integ_.params.R)
    throw Error(ErrorKind::InvalidConfig, "metric reference radius differs from params.R");
  if (integ_.frame == Frame::Moving && !integ_.metric.constant)
    throw Error(ErrorKind::InvalidConfig, "the moving frame is only defined on S_R");

  const auto fft = axial_fft(grid_);
  const int N = grid_.N_z, K = grid_.N_theta;
  const Params& p = integ_.params;
  const double c = integ_.frame == Frame::Moving ? p.c : 0.0;
  const double dt = integ_.dt, th = integ_.theta;
  const double R2 = p.R * p.R;
  blocks_.resize(static_cast<size_t>(N) * K);
  for (int n = 0; n < K; ++n) {
    for (int j = 0; j < N; ++j) {
      const double k = fft->k_odd()[j];
      Eigen::Matrix2cd m;
      m(0, 0) = cplx(-k * k - double(n) * n / R2 - p.alpha, c * k);
      m(0, 1) = -1.0;
      m(1, 0) = p.eps;
      m(1, 1) = cplx(-p.eps * p.gamma, c * k);
      Block& b = blocks_[static_cast<size_t>(n) * N + j];
      if (integ_.scheme == Scheme::ImexTheta) {
        const Eigen::Matrix2cd I = Eigen::Matrix2cd::Identity();
        const Eigen::Matrix2cd inv = (I - th * dt * m).inverse();
        b.a = inv * (I + (1.0 - th) * dt * m);
        b.b = dt * inv;
        b.c.setZero();
      } else {
        Eigen::Matrix2cd e, p1, p2;
        etd_coefficients(dt * m, e, p1, p2);
        b.a = e;
        b.b = dt * p1;
        b.c = dt * p2;
      }
    }
  }
}

void Evolver::reset() {
  have_prev_ = false;
  prev_hat_.clear();
  t_ = 0.0;
  steps_ = 0;
  stiffness_ = 0.0;
}

Field Evolver::explicit_part(const Field& u) {
  const Params& p = integ_.params;
  // sup|N'(y)| <= 3y^2 + 2(alpha+1)y with y bounding |u1| in physical space.
  double y = 0.0;
  for (int i = 0; i < u.grid.N_z; ++i) {
    double s = std::abs(u.u1(i, 0));
    for (int n = 1; n < u.modes(); ++n) s += 2.0 * std::abs(u.u1(i, n));
    y = std::max(y, s);
  }
  stiffness_ = std::max(stiffness_, integ_.dt * (3.0 * y * y + 2.0 * (p.alpha + 1.0) * y));
  if (term_) return term_(u);
  Field out = nonlinearity(u, p);
  if (!integ_.metric.constant)
    out.u1 += laplace_beltrami_apply(u.u1, integ_.metric, u.grid) -
              laplace_beltrami_apply(u.u1, ref_metric_, u.grid);
  return out;
}

void Evolver::to_hat(const Field& u, std::vector<VectorXcd>& hat) const {
  const auto fft = axial_fft(grid_);
  const int K = u.modes();
  hat.resize(2 * K);
  for (int n = 0; n < K; ++n) {
    hat[2 * n] = fft->forward(VectorXcd(u.u1.col(n)));
    hat[2 * n + 1] = fft->forward(VectorXcd(u.u2.col(n)));
  }
}

Field Evolver::from_hat(const std::vector<VectorXcd>& hat) const {
  const auto fft = axial_fft(grid_);
  const int K = static_cast<int>(hat.size()) / 2;
  GridSpec g = grid_;
  g.N_theta = K;
  Field out(g, integ_.frame);
  for (int n = 0; n < K; ++n) {
    out.u1.col(n) = fft->inverse(hat[2 * n]);
    out.u2.col(n) = fft->inverse(hat[2 * n + 1]);
  }
  return out;
}

Field Evolver::step(const Field& u) {
  if (u.grid.N_z != grid_.N_z || u.modes() > grid_.N_theta)
    throw Error(ErrorKind::ShapeMismatch, "field does not match the evolver grid");
  if (!u.finite()) throw Error(ErrorKind::Blowup, "non-finite state before step");
  const int N = grid_.N_z, K = u.modes();
  std::vector<VectorXcd> uh, nh;
  to_hat(u, uh);
  to_hat(explicit_part(u), nh);

  // out = A uh + B f (+ C g) per (k, n) block.
  auto combine = [&](const std::vector<VectorXcd>& x, const std::vector<VectorXcd>& f,
                     const std::vector<VectorXcd>* g) {
    std::vector<VectorXcd> out(2 * K, VectorXcd(N));
    for (int n = 0; n < K; ++n) {
      for (int j = 0; j < N; ++j) {
        const Block& b = blocks_[static_cast<size_t>(n) * N + j];
        const Eigen::Vector2cd xv(x[2 * n][j], x[2 * n + 1][j]);
        const Eigen::Vector2cd fv(f[2 * n][j], f[2 * n + 1][j]);
        Eigen::Vector2cd r = b.a * xv + b.b * fv;
        if (g) r += b.c * Eigen::Vector2cd((*g)[2 * n][j], (*g)[2 * n + 1][j]);
        out[2 * n][j] = r[0];
        out[2 * n + 1][j] = r[1];
      }
    }
    return out;
  };
  auto lin_comb = [&](const std::vector<VectorXcd>& x, double a, const std::vector<VectorXcd>& y,
                      double b) {
    std::vector<VectorXcd> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
  };

  std::vector<VectorXcd> next;
  if (integ_.scheme == Scheme::ImexTheta) {
    const bool history = have_prev_ && static_cast<int>(prev_hat_.size()) == 2 * K;
    if (!history) {
      const std::vector<VectorXcd> pred = combine(uh, nh, nullptr);
      std::vector<VectorXcd> nph;
      to_hat(explicit_part(from_hat(pred)), nph);
      next = combine(uh, lin_comb(nh, 0.5, nph, 0.5), nullptr);
    } else {
      next = combine(uh, lin_comb(nh, 1.5, prev_hat_, -0.5), nullptr);
    }
    prev_hat_ = nh;
    have_prev_ = true;
  } else {
    const std::vector<VectorXcd> ah = combine(uh, nh, nullptr);
    std::vector<VectorXcd> nah;
    to_hat(explicit_part(from_hat(ah)), nah);
    const std::vector<VectorXcd> diff = lin_comb(nah, 1.0, nh, -1.0);
    std::vector<VectorXcd> zero(2 * K, VectorXcd::Zero(N));
    const std::vector<VectorXcd> corr = combine(zero, zero, &diff);
    next = lin_comb(ah, 1.0, corr, 1.0);
  }
  Field out = from_hat(next);
  out.grid = u.grid;
  out.frame = u.frame;
  t_ += integ_.dt;
  ++steps_;
  if (!out.finite() || out.max_abs() > kBlowup)
    throw Error(ErrorKind::Blowup, "state exceeded 1e6 at t = " + std::to_string(t_));
  return out;
}

Field step(const Field& u, const Integrator& integ) {
  GridSpec g = u.grid;
  g.N_theta = u.modes();
  Evolver ev(g, integ);
  return ev.step(u);
}

TrajectorySummary integrate(Field& u, double T, Evolver& ev, const std::vector<Observer>& observers) {
  if (!(T > 0.0)) throw Error(ErrorKind::InvalidConfig, "integration time must be positive");
  const double dt = ev.integrator().dt;
  const long n = static_cast<long>(std::ceil(T / dt - 1e-9));
  std::vector<bool> active(observers.size(), true);
  TrajectorySummary sum;
  auto notify = [&](long s, bool final_call) {
    for (size_t i = 0; i < observers.size(); ++i) {
      if (!active[i] || !observers[i].fn) continue;
      const int stride = std::max(1, observers[i].stride);
      if (!final_call && s % stride != 0) continue;
      if (final_call && s % stride == 0) continue;
      try {
        observers[i].fn(ev.time(), u);
      } catch (const std::exception& e) {
        active[i] = false;
        sum.warnings.push_back(std::string(to_string(ErrorKind::ObserverFailure)) + ": observer '" +
                               observers[i].name + "' disabled at t = " +
                               std::to_string(ev.time()) + ": " + e.what());
      }
    }
  };
  notify(0, false);
  for (long s = 1; s <= n; ++s) {
    u = ev.step(u);
    notify(s, false);
  }
  notify(n, true);
  sum.t_final = ev.time();
  sum.steps = n;
  sum.stiffness = ev.stiffness();
  if (sum.stiffness > 1.0)
    sum.warnings.push_back("dt * sup|N'| reached " + std::to_string(sum.stiffness));
  return sum;
}

}  // namespace pulselab
