#include "pulselab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "fd.hpp"
#include "pulselab/errors.hpp"

namespace pulselab {

namespace {

GridSpec axial_only(GridSpec g) {
  g.N_theta = 1;
  return g;
}

double sym_mode_weight(int n) { return n == 0 ? 1.0 : 2.0; }

}  // namespace

VectorXcd ModeOperator::apply(const VectorXcd& x) const {
  const int N = grid.N_z;
  if (x.size() != 2 * N) throw Error(ErrorKind::ShapeMismatch, "mode vector has wrong length");
  const auto fft = axial_fft(grid);
  const VectorXcd a = x.head(N), b = x.tail(N);
  VectorXcd out(2 * N);
  VectorXcd r1 = laplace_beltrami_mode(a, n, metric, *fft);
  r1.array() += potential.array().cast<cplx>() * a.array();
  r1 -= b;
  VectorXcd r2 = params.eps * a - (params.eps * params.gamma) * b;
  if (params.c != 0.0) {
    r1 += params.c * fft->d1(a);
    r2 += params.c * fft->d1(b);
  }
  out.head(N) = r1;
  out.tail(N) = r2;
  return out;
}

VectorXcd ModeOperator::apply_adjoint(const VectorXcd& x) const {
  const int N = grid.N_z;
  if (x.size() != 2 * N) throw Error(ErrorKind::ShapeMismatch, "mode vector has wrong length");
  const auto fft = axial_fft(grid);
  const VectorXcd a = x.head(N), b = x.tail(N);
  VectorXcd out(2 * N);
  VectorXcd r1 = laplace_beltrami_mode(a, n, metric, *fft);
  r1.array() += potential.array().cast<cplx>() * a.array();
  r1 += b;
  VectorXcd r2 = -params.eps * a - (params.eps * params.gamma) * b;
  if (params.c != 0.0) {
    // Adjoint of c d_z in the sqrt(g)-weighted product: -c g^{-1/2} d_z(g^{1/2} .).
    const Eigen::ArrayXcd sg = metric.sqrt_g.array().cast<cplx>();
    r1 -= params.c * VectorXcd(fft->d1(VectorXcd(sg * a.array())).array() / sg);
    r2 -= params.c * VectorXcd(fft->d1(VectorXcd(sg * b.array())).array() / sg);
  }
  out.head(N) = r1;
  out.tail(N) = r2;
  return out;
}

namespace {
template <class F>
MatrixXd dense_from(int dim, F&& apply) {
  MatrixXd M(dim, dim);
  VectorXcd e = VectorXcd::Zero(dim);
  for (int j = 0; j < dim; ++j) {
    e[j] = 1.0;
    M.col(j) = apply(e).real();
    e[j] = 0.0;
  }
  return M;
}
}  // namespace

MatrixXd ModeOperator::to_dense() const {
  return dense_from(size(), [this](const VectorXcd& x) { return apply(x); });
}

MatrixXd ModeOperator::to_dense_adjoint() const {
  return dense_from(size(), [this](const VectorXcd& x) { return apply_adjoint(x); });
}

VectorXd ModeOperator::weights() const {
  const int N = grid.N_z;
  const VectorXd w = surface_weights(metric, grid);
  VectorXd W(2 * N);
  W.head(N) = w;
  W.tail(N) = w / params.eps;
  return W;
}

ModeOperator build_Ln(const PulseProfile& phi, int n, double R) {
  ModeOperator op;
  op.grid = axial_only(phi.grid);
  op.n = n;
  op.params = phi.moving_params();
  op.params.R = R;
  op.potential.resize(phi.phi1.size());
  for (Eigen::Index i = 0; i < phi.phi1.size(); ++i)
    op.potential[i] = reaction_prime(phi.phi1[i], op.params.alpha);
  op.metric = constant_metric(R, op.grid);
  return op;
}

ModeOperator build_Lbar(const PulseProfile& phi, int n, double R) {
  ModeOperator op = build_Ln(phi, n, R);
  op.potential.setConstant(-op.params.alpha);
  return op;
}

ModeOperator build_A(const SurfaceMetric& metric, const GridSpec& grid, const Params& p, int n) {
  if (metric.size() != grid.N_z) throw Error(ErrorKind::ShapeMismatch, "metric does not match grid");
  ModeOperator op;
  op.grid = axial_only(grid);
  op.n = n;
  op.params = p;
  op.params.c = 0.0;
  op.params.R = metric.R_ref;
  op.potential = VectorXd::Constant(grid.N_z, -p.alpha);
  op.metric = metric;
  return op;
}

Field apply_modes(const std::vector<ModeOperator>& ops, const Field& u) {
  if (static_cast<int>(ops.size()) < u.modes())
    throw Error(ErrorKind::ShapeMismatch, "fewer mode operators than field modes");
  Field out(u.grid, u.frame);
  for (int n = 0; n < u.modes(); ++n) {
    if (ops[n].n != n || ops[n].grid.N_z != u.grid.N_z)
      throw Error(ErrorKind::ShapeMismatch, "mode operator does not match field mode");
    out.set_mode(n, ops[n].apply(u.mode(n)));
  }
  return out;
}

double weighted_norm(const VectorXcd& x, const VectorXd& w) {
  return std::sqrt((w.array() * x.array().abs2()).sum());
}

cplx weighted_inner(const VectorXcd& x, const VectorXcd& y, const VectorXd& w) {
  cplx s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += w[i] * x[i] * std::conj(y[i]);
  return s;
}

Eigen::Matrix2cd symbol_matrix(double k, int n, double R, const Params& p) {
  const cplx ick(0.0, p.c * k);
  Eigen::Matrix2cd m;
  m(0, 0) = -k * k - double(n) * n / (R * R) - p.alpha + ick;
  m(0, 1) = -1.0;
  m(1, 0) = p.eps;
  m(1, 1) = ick - p.eps * p.gamma;
  return m;
}

cplx lambda_plus_closed_form(double k, const Params& p) {
  const double a = k * k + p.alpha;
  const cplx disc = (a - p.eps * p.gamma) * (a - p.eps * p.gamma) - 4.0 * p.eps;
  return cplx(0.0, p.c * k) - 0.5 * (a + p.eps * p.gamma) + 0.5 * std::sqrt(disc);
}

std::vector<EssentialPoint> essential_spectrum_curves(const std::vector<double>& k_samples,
                                                      int n_max, double R, const Params& p) {
  std::vector<EssentialPoint> out;
  out.reserve(k_samples.size() * static_cast<size_t>(n_max + 1));
  for (int n = 0; n <= n_max; ++n) {
    for (double k : k_samples) {
      // Eigenvalues ick + mu, mu roots of mu^2 - (a+d) mu + (ad + eps) with
      // a = -(k^2 + n^2/R^2 + alpha), d = -eps gamma.
      const double a = -(k * k + double(n) * n / (R * R) + p.alpha);
      const double d = -p.eps * p.gamma;
      const double disc = (a - d) * (a - d) - 4.0 * p.eps;
      cplx mp, mm;
      if (disc >= 0.0) {
        // a + d < 0, so the minus root has no cancellation; the plus root
        // follows from the product of the roots.
        const double rm = 0.5 * (a + d) - 0.5 * std::sqrt(disc);
        mm = rm;
        mp = (a * d + p.eps) / rm;
      } else {
        const double im = 0.5 * std::sqrt(-disc);
        mp = cplx(0.5 * (a + d), im);
        mm = cplx(0.5 * (a + d), -im);
      }
      const cplx ick(0.0, p.c * k);
      out.push_back({k, n, ick + mp, ick + mm});
    }
  }
  return out;
}

namespace {

double fd_potential_shift(const ModeOperator& op) {
  const double rr = op.metric.constant ? op.metric.R_ref : op.metric.rho.mean();
  return double(op.n) * op.n / (rr * rr);
}

// Solver for (M - s) x = b. Dense LU (real arithmetic for a real shift) for
// moderate sizes, otherwise GMRES preconditioned by the finite-difference
// analogue.
class ShiftedSolver {
 public:
  ShiftedSolver(const ModeOperator& op, cplx s, bool dense) : op_(op), s_(s), dense_(dense) {
    if (dense_) {
      real_ = s.imag() == 0.0;
      MatrixXd M = op.to_dense();
      if (real_) {
        M.diagonal().array() -= s.real();
        lur_.compute(M);
        ok_ = lur_.rcond() > 1e-14;
      } else {
        MatrixXcd Mc = M.cast<cplx>();
        Mc.diagonal().array() -= s;
        luc_.compute(Mc);
        ok_ = luc_.rcond() > 1e-14;
      }
    } else {
      const VectorXd v1 = op.potential.array() - fd_potential_shift(op);
      const auto P = detail::fd_mode_matrix<cplx>(op.grid.N_z, op.grid.dz(), op.params.c,
                                                  op.params.c, v1, -1.0, op.params.eps,
                                                  -op.params.eps * op.params.gamma, s);
      ok_ = pre_.compute(P);
    }
  }
  bool ok() const { return ok_; }
  VectorXcd solve(const VectorXcd& b) {
    if (dense_) {
      if (!real_) return luc_.solve(b);
      VectorXcd x(b.size());
      x.real() = lur_.solve(b.real());
      x.imag() = lur_.solve(b.imag());
      return x;
    }
    VectorXcd x = pre_.solve(b);
    const auto res = gmres(
        [this](const VectorXcd& v) {
          VectorXcd r = op_.apply(v);
          r -= s_ * v;
          return r;
        },
        [this](const VectorXcd& v) { return pre_.solve(v); }, b, x, 1e-12, 80, 1200);
    if (!res.converged) failed_ = true;
    return x;
  }
  bool failed() const { return failed_; }

 private:
  const ModeOperator& op_;
  cplx s_;
  bool dense_;
  bool real_ = false;
  bool ok_ = false;
  bool failed_ = false;
  Eigen::PartialPivLU<MatrixXd> lur_;
  Eigen::PartialPivLU<MatrixXcd> luc_;
  detail::BorderedLu<cplx> pre_;
};

EigenPairs finish_pairs(const ModeOperator& op, std::vector<cplx> vals, MatrixXcd vecs,
                        cplx shift, int count) {
  std::vector<int> order(vals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(vals[a] - shift) < std::abs(vals[b] - shift);
  });
  const int take = std::min<int>(count, static_cast<int>(order.size()));
  EigenPairs out;
  out.vectors.resize(vecs.rows(), take);
  for (int q = 0; q < take; ++q) {
    VectorXcd v = vecs.col(order[q]);
    v /= v.norm();
    const cplx lam = vals[order[q]];
    out.values.push_back(lam);
    out.vectors.col(q) = v;
    out.residuals.push_back((op.apply(v) - lam * v).norm());
  }
  return out;
}

}  // namespace

EigenPairs discrete_spectrum(const ModeOperator& op, int count, cplx shift,
                             const SpectrumOptions& opt) {
  const bool dense = opt.method == EigMethod::Dense ||
                     (opt.method == EigMethod::Auto && op.grid.N_z <= opt.dense_max_nz);
  if (dense) {
    Eigen::EigenSolver<MatrixXd> es(op.to_dense(), true);
    if (es.info() != Eigen::Success)
      throw Error(ErrorKind::NoConvergence, "dense eigensolver failed");
    const VectorXcd ev = es.eigenvalues();
    return finish_pairs(op, std::vector<cplx>(ev.data(), ev.data() + ev.size()),
                        es.eigenvectors(), shift, count);
  }
  // The iterative solve struggles when the shift sits on an eigenvalue, so
  // shifts are nudged off the spectrum a few times before giving up.
  const bool lu_solve = op.grid.N_z <= 2048;
  for (int attempt = 0; attempt < 4; ++attempt) {
    const double nudge = attempt == 0 ? 0.0 : 1e-4 * std::pow(10.0, attempt - 1);
    const cplx dir = shift.imag() == 0.0 ? cplx(1.0, 0.0) : cplx(1.0, 0.5);
    const cplx s = shift + nudge * std::max(1.0, std::abs(shift)) * dir;
    ShiftedSolver solver(op, s, lu_solve);
    if (!solver.ok()) continue;
    EigenPairs raw = shift_invert_arnoldi([&](const VectorXcd& b) { return solver.solve(b); },
                                          [&](const VectorXcd& x) { return op.apply(x); },
                                          op.size(), s, count, opt.tol, opt.max_dim, opt.seed);
    if (solver.failed()) continue;
    return finish_pairs(op, raw.values, raw.vectors, shift, count);
  }
  throw Error(ErrorKind::FactorizationSingular,
              "shifted operator could not be solved near the requested shift");
}

SpectralCertificate spectral_certificate(const ModeOperator& op0, const Field& tau, int count,
                                         const SpectrumOptions& opt) {
  SpectralCertificate cert;
  cert.sigma = op0.params.sigma();
  const EigenPairs ep = discrete_spectrum(op0, count, 0.0, opt);
  if (ep.values.empty()) throw Error(ErrorKind::NoConvergence, "no eigenvalues returned");
  cert.eigenvalues = ep.values;
  cert.residuals = ep.residuals;
  cert.zero_eval = ep.values[0];
  const VectorXd W = op0.weights();
  const VectorXcd t = tau.mode(0);
  const VectorXcd v = ep.vectors.col(0);
  cert.zero_alignment =
      std::abs(weighted_inner(v, t, W)) / (weighted_norm(v, W) * weighted_norm(t, W));
  double max_re = -1e300;
  for (size_t j = 1; j < ep.values.size(); ++j) {
    if (ep.values[j].real() > max_re) {
      max_re = ep.values[j].real();
      cert.next_eval = ep.values[j];
    }
  }
  cert.beta = ep.values.size() > 1 ? -max_re : 0.0;
  cert.accepted = std::abs(cert.zero_eval) <= 1e-6 && cert.zero_alignment >= 1.0 - 1e-6 &&
                  cert.beta > 0.0 && std::abs(cert.zero_eval) < 0.5 * cert.beta;
  return cert;
}

RieszProjection adjoint_zero_mode(const ModeOperator& op0, const Field& tau) {
  const int N = op0.grid.N_z;
  const int dim = 2 * N;
  const VectorXd W = op0.weights();
  const VectorXd t = tau.mode(0).real();
  const VectorXd wt = W.cwiseProduct(t);
  // Bordered system [L0*, tau; (W tau)^T, 0] [x; mu] = [0; 1] fixes <x, tau> = 1.
  VectorXd x;
  if (N <= 2048) {
    MatrixXd B = MatrixXd::Zero(dim + 1, dim + 1);
    B.topLeftCorner(dim, dim) = op0.to_dense_adjoint();
    B.col(dim).head(dim) = t;
    B.row(dim).head(dim) = wt.transpose();
    VectorXd rhs = VectorXd::Zero(dim + 1);
    rhs[dim] = 1.0;
    Eigen::PartialPivLU<MatrixXd> lu(B);
    x = lu.solve(rhs).head(dim);
  } else {
    const Params& p = op0.params;
    const VectorXd v1 = op0.potential.array() - fd_potential_shift(op0);
    const auto P = detail::fd_mode_matrix<double>(N, op0.grid.dz(), -p.c, -p.c, v1, 1.0, -p.eps,
                                                  -p.eps * p.gamma, 0.0);
    detail::BorderedLu<double> pre;
    if (!pre.compute(P, &t, &wt, 0.0))
      throw Error(ErrorKind::FactorizationSingular, "adjoint preconditioner is singular");
    auto A = [&](const VectorXd& y) {
      VectorXd r(dim + 1);
      r.head(dim) = op0.apply_adjoint(y.head(dim).cast<cplx>()).real() + y[dim] * t;
      r[dim] = wt.dot(y.head(dim));
      return r;
    };
    VectorXd rhs = VectorXd::Zero(dim + 1);
    rhs[dim] = 1.0;
    VectorXd y = pre.solve(rhs);
    const auto res = gmres(A, [&](const VectorXd& r) { return pre.solve(r); }, rhs, y, 1e-13, 80,
                           2000);
    if (!res.converged)
      throw Error(ErrorKind::NoConvergence, "adjoint kernel solve did not converge");
    x = y.head(dim);
  }
  const double tn = std::sqrt(wt.dot(t));
  const double xn = std::sqrt(W.dot(x.cwiseAbs2()));
  const double ip = wt.dot(x);
  if (!std::isfinite(xn) || std::abs(ip) < 1e-8 * tn * xn)
    throw Error(ErrorKind::DegenerateNormalization,
                "adjoint zero mode is nearly orthogonal to tau; zero eigenvalue may not be simple");
  x /= ip;

  RieszProjection proj;
  proj.tau = tau;
  proj.tau_star = Field(tau.grid, tau.frame);
  proj.tau_star.u1.col(0) = x.head(N).cast<cplx>();
  proj.tau_star.u2.col(0) = x.tail(N).cast<cplx>();
  proj.metric = op0.metric;
  proj.eps = op0.params.eps;
  proj.normalization = wt.dot(x);
  const VectorXcd xc = x.cast<cplx>();
  proj.adjoint_residual = weighted_norm(op0.apply_adjoint(xc), W) / weighted_norm(xc, W);
  return proj;
}

namespace {
cplx coefficient_P(const Field& u, const RieszProjection& proj) {
  if (!u.grid.same_axial(proj.tau.grid))
    throw Error(ErrorKind::ShapeMismatch, "field and projection live on different grids");
  const VectorXd w = surface_weights(proj.metric, u.grid);
  cplx s = 0.0;
  for (int i = 0; i < u.grid.N_z; ++i)
    s += w[i] * (u.u1(i, 0) * std::conj(proj.tau_star.u1(i, 0)) +
                 u.u2(i, 0) * std::conj(proj.tau_star.u2(i, 0)) / proj.eps);
  return s;
}
}  // namespace

Field project_P(const Field& u, const RieszProjection& proj) {
  const cplx a = coefficient_P(u, proj);
  Field out(u.grid, u.frame);
  out.u1.col(0) = a * proj.tau.u1.col(0);
  out.u2.col(0) = a * proj.tau.u2.col(0);
  return out;
}

Field project_Q(const Field& u, const RieszProjection& proj) { return u - project_P(u, proj); }

VectorXcd random_band_limited(const GridSpec& grid, std::mt19937_64& rng, bool complex_values) {
  const int N = grid.N_z;
  const auto fft = axial_fft(grid);
  std::normal_distribution<double> nd;
  VectorXcd hat = VectorXcd::Zero(N);
  const int kmax = N / 4;
  for (int j = 0; j < N; ++j) {
    const int idx = j <= N / 2 ? j : j - N;
    if (std::abs(idx) > kmax) continue;
    hat[j] = cplx(nd(rng), nd(rng));
  }
  VectorXcd u = fft->inverse(hat);
  if (!complex_values) u = u.real().cast<cplx>();
  return u / std::sqrt((u.array().abs2()).mean());
}

DissipativityResult dissipativity_check(const ModeOperator& op, int trials, unsigned seed) {
  return dissipativity_check(std::vector<ModeOperator>{op}, trials, seed);
}

DissipativityResult dissipativity_check(const std::vector<ModeOperator>& ops, int trials,
                                        unsigned seed) {
  DissipativityResult res;
  res.seed = seed;
  res.trials = trials;
  if (ops.empty()) return res;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(-3.0, 3.0);
  const int N = ops[0].grid.N_z;
  for (int t = 0; t < trials; ++t) {
    double num = 0.0, den = 0.0;
    for (const auto& op : ops) {
      VectorXcd x(2 * N);
      // Random relative scaling of the components probes the coupling terms.
      const double s2 = std::pow(10.0, scale(rng));
      x.head(N) = random_band_limited(op.grid, rng, op.n != 0);
      x.tail(N) = s2 * random_band_limited(op.grid, rng, op.n != 0);
      const VectorXd W = op.weights();
      const double m = ops.size() > 1 ? sym_mode_weight(op.n) : 1.0;
      num += m * weighted_inner(op.apply(x), x, W).real();
      den += m * weighted_norm(x, W) * weighted_norm(x, W);
    }
    res.max_rayleigh = std::max(res.max_rayleigh, num / den);
  }
  return res;
}

double resolvent_norm(cplx lambda, const ModeOperator& op) {
  const VectorXd W = op.weights();
  const Eigen::ArrayXd sw = W.array().sqrt();
  MatrixXcd S = (-op.to_dense()).cast<cplx>();
  S.diagonal().array() += lambda;
  // W^{1/2} S W^{-1/2}
  for (Eigen::Index j = 0; j < S.cols(); ++j) S.col(j) *= 1.0 / sw[j];
  for (Eigen::Index i = 0; i < S.rows(); ++i) S.row(i) *= sw[i];
  double smin;
  if (S.rows() <= 1536) {
    Eigen::BDCSVD<MatrixXcd> svd(S);
    smin = svd.singularValues().minCoeff();
  } else {
    // Inverse iteration on (S^H S)^{-1} for large blocks.
    Eigen::PartialPivLU<MatrixXcd> lu(S);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    VectorXcd x(S.rows());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = cplx(nd(rng), nd(rng));
    x.normalize();
    double mu = 0.0, prev = 0.0;
    for (int it = 0; it < 500; ++it) {
      VectorXcd y = lu.solve(x);
      VectorXcd z = lu.adjoint().solve(y);
      mu = z.norm();
      x = z / mu;
      if (it > 5 && std::abs(mu - prev) <= 1e-12 * mu) break;
      prev = mu;
    }
    smin = 1.0 / std::sqrt(mu);
  }
  if (!(smin >= 1e-12))
    throw Error(ErrorKind::NearSingular, "lambda is numerically in the spectrum");
  return 1.0 / smin;
}

}  // namespace pulselab
