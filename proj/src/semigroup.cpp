#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "pulselab/errors.hpp"
#include "pulselab/spectral.hpp"

namespace pulselab {

Field random_field(const GridSpec& grid, Frame frame, std::mt19937_64& rng) {
  Field u(grid, frame);
  for (int n = 0; n < grid.N_theta; ++n) {
    const double s = 1.0 / (1.0 + n);
    u.u1.col(n) = s * random_band_limited(grid, rng, n != 0);
    u.u2.col(n) = s * random_band_limited(grid, rng, n != 0);
  }
  return u;
}

ResolventScan resolvent_scan(const ModeOperator& op, double re, const std::vector<double>& im_values,
                             double bound) {
  ResolventScan scan;
  scan.re = re;
  scan.bound = bound;
  for (double im : im_values) {
    scan.im.push_back(im);
    scan.value.push_back(resolvent_norm(cplx(re, im), op));
  }
  scan.empirical_N = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = scan.value.size(); i-- > 0;) {
    if (scan.value[i] > bound) break;
    scan.empirical_N = scan.im[i];
  }
  return scan;
}

DecayProbe semigroup_decay_probe(const PulseProfile& phi, const RieszProjection& proj,
                                 const Field& v0, const DecayProbeOptions& opt) {
  if (!v0.grid.same_axial(phi.grid))
    throw Error(ErrorKind::ShapeMismatch, "probe data and pulse live on different grids");
  GridSpec g = v0.grid;
  g.N_theta = v0.modes();
  Params pm = phi.moving_params();
  pm.R = opt.R;
  const SurfaceMetric met = constant_metric(opt.R, g);
  VectorXd vp(phi.phi1.size());
  for (Eigen::Index i = 0; i < vp.size(); ++i)
    vp[i] = reaction_prime(phi.phi1[i], pm.alpha) + pm.alpha;
  const Eigen::VectorXcd vpc = vp.cast<cplx>();
  ExplicitTerm term = [vpc](const Field& v) {
    Field out(v.grid, v.frame);
    for (int n = 0; n < v.modes(); ++n) out.u1.col(n) = vpc.cwiseProduct(v.u1.col(n));
    return out;
  };
  Integrator integ;
  integ.scheme = opt.scheme;
  integ.dt = opt.dt;
  integ.params = pm;
  integ.frame = Frame::Moving;
  integ.metric = met;
  Evolver ev(g, integ, term);

  DecayProbe out;
  Field v = v0;
  v.frame = Frame::Moving;
  const double n0 = norm_21(v, met, pm.eps);
  auto drift_of = [&](const Field& x) {
    return norm_eps(project_P(x, proj), met, pm.eps) / norm_eps(x, met, pm.eps);
  };
  const bool q_range = drift_of(v) <= 1e-4;
  const long steps = static_cast<long>(std::ceil(opt.T / opt.dt - 1e-9));
  const int stride = std::max(1, opt.record_stride);
  auto record = [&](long s) {
    const double t = s * opt.dt;
    out.t.push_back(t);
    out.norm21.push_back(norm_21(v, met, pm.eps));
    out.drift.push_back(q_range ? drift_of(v) : 0.0);
  };
  record(0);
  for (long s = 1; s <= steps; ++s) {
    v = ev.step(v);
    if (s % stride == 0 || s == steps) {
      if (q_range) {
        const double d = drift_of(v);
        out.max_drift = std::max(out.max_drift, d);
        if (d > 1e-4) {
          v = project_Q(v, proj);
          ev.reset();
          ++out.reprojections;
          if (out.reprojections == 1)
            out.warnings.push_back(std::string(to_string(ErrorKind::ProjectionDrift)) +
                                   ": ||Pv||/||v|| = " + std::to_string(d) + " at t = " +
                                   std::to_string(s * opt.dt) + "; re-projected");
        }
      }
      record(s);
    }
  }
  std::vector<double> ft, fy;
  for (size_t i = 0; i < out.t.size(); ++i) {
    if (out.t[i] >= 0.5 * opt.T && out.norm21[i] > 0.0) {
      ft.push_back(out.t[i]);
      fy.push_back(std::log(out.norm21[i]));
    }
  }
  if (ft.size() >= 2) {
    const LineFit f = fit_line(ft, fy);
    out.sigma_hat = -f.slope;
    out.C_hat = std::exp(f.intercept) / n0;
    out.r2 = f.r2;
  }
  if (out.reprojections > 1)
    out.warnings.push_back("re-projected " + std::to_string(out.reprojections) + " times");
  return out;
}

namespace {

MatrixXd dense_d1(const GridSpec& grid) {
  const auto fft = axial_fft(grid);
  const int N = grid.N_z;
  MatrixXd D(N, N);
  VectorXd e = VectorXd::Zero(N);
  for (int j = 0; j < N; ++j) {
    e[j] = 1.0;
    D.col(j) = fft->d1(e);
    e[j] = 0.0;
  }
  return D;
}

double log_plus_inv(double t) { return std::max(0.0, std::log(1.0 / t)); }

}  // namespace

SemigroupDiffResult semigroup_difference(const SurfaceMetric& reference, const SurfaceMetric& warped,
                                         const GridSpec& grid, const Params& p, int n_max,
                                         double t_min, double t_max, int probes, unsigned seed) {
  if (reference.size() != grid.N_z || warped.size() != grid.N_z)
    throw Error(ErrorKind::ShapeMismatch, "metrics do not match the grid");
  if (!(t_min > 0.0) || !(t_max >= t_min))
    throw Error(ErrorKind::InvalidConfig, "need 0 < t_min <= t_max");
  SemigroupDiffResult res;
  res.delta = c2_distance(warped);
  const int N = grid.N_z;
  const MatrixXd D = dense_d1(grid);
  const VectorXd w = surface_weights(reference, grid);
  const double R = reference.R_ref;
  std::mt19937_64 rng(seed);
  for (int n = 0; n <= n_max; ++n) {
    const MatrixXd AR = build_A(reference, grid, p, n).to_dense();
    const MatrixXd AB = build_A(warped, grid, p, n).to_dense();
    MatrixXd lap = D * D;
    lap.diagonal().array() -= double(n) * n / (R * R);
    // Hilbertian H^{2,1} norm: ||Lap u1||^2 + ||u1||^2 + eps^{-1}(||D u2||^2 + ||u2||^2),
    // within a factor sqrt(2) of the sum form used elsewhere.
    MatrixXd G = MatrixXd::Zero(2 * N, 2 * N);
    G.topLeftCorner(N, N) = lap.transpose() * w.asDiagonal() * lap;
    G.topLeftCorner(N, N).diagonal() += w;
    G.bottomRightCorner(N, N) = (D.transpose() * w.asDiagonal() * D) / p.eps;
    G.bottomRightCorner(N, N).diagonal() += w / p.eps;
    Eigen::LLT<MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::FactorizationSingular, "H^{2,1} Gram matrix is not positive definite");
    const MatrixXd U = llt.matrixU();

    auto norm21_vec = [&](const VectorXd& x) {
      const VectorXd a = lap * x.head(N);
      const VectorXd b = D * x.tail(N);
      const double top = std::sqrt(w.dot(a.cwiseAbs2()) + w.dot(b.cwiseAbs2()) / p.eps);
      const double base =
          std::sqrt(w.dot(x.head(N).cwiseAbs2()) + w.dot(x.tail(N).cwiseAbs2()) / p.eps);
      return top + base;
    };
    std::vector<VectorXd> probe_vecs;
    for (int q = 0; q < probes; ++q) {
      VectorXd x(2 * N);
      x.head(N) = random_band_limited(grid, rng, false).real();
      x.tail(N) = random_band_limited(grid, rng, false).real();
      probe_vecs.push_back(x);
    }

    MatrixXd ER = expm(MatrixXd(t_min * AR));
    MatrixXd EB = expm(MatrixXd(t_min * AB));
    double t = t_min;
    while (true) {
      const MatrixXd X = EB - ER;
      // U X U^{-1}, via a triangular solve on the transpose.
      const MatrixXd UX = U * X;
      const MatrixXd Y =
          U.transpose().triangularView<Eigen::Lower>().solve(UX.transpose()).transpose();
      SemigroupDiffRow row;
      row.n = n;
      row.t = t;
      row.diff = X.isZero(0.0) ? 0.0 : Eigen::BDCSVD<MatrixXd>(Y).singularValues()(0);
      const double scale = res.delta * (1.0 + log_plus_inv(t));
      row.ratio = scale > 0.0 ? row.diff / scale
                              : (row.diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
      for (const auto& x : probe_vecs)
        row.probe_diff = std::max(row.probe_diff, norm21_vec(X * x) / norm21_vec(x));
      res.sup_diff = std::max(res.sup_diff, row.diff);
      res.sup_ratio = std::max(res.sup_ratio, row.ratio);
      res.rows.push_back(row);
      if (t >= t_max) break;
      ER = ER * ER;
      EB = EB * EB;
      t *= 2.0;
    }
  }
  return res;
}

RatioStats norm_equivalence(const SurfaceMetric& warped, const SurfaceMetric& reference,
                            const GridSpec& grid, double eps, int trials, unsigned seed) {
  RatioStats st;
  st.trials = trials;
  st.seed = seed;
  st.min = std::numeric_limits<double>::infinity();
  st.max = 0.0;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < trials; ++i) {
    const Field u = random_field(grid, Frame::Static, rng);
    const double r = norm_21(u, warped, eps) / norm_21(u, reference, eps);
    st.min = std::min(st.min, r);
    st.max = std::max(st.max, r);
  }
  return st;
}

RatioStats graph_norm_ratios(const std::vector<ModeOperator>& ops, const GridSpec& grid,
                             bool zero_one, int trials, unsigned seed) {
  if (ops.empty()) throw Error(ErrorKind::ShapeMismatch, "no mode operators");
  RatioStats st;
  st.trials = trials;
  st.seed = seed;
  st.min = std::numeric_limits<double>::infinity();
  st.max = 0.0;
  GridSpec g = grid;
  g.N_theta = static_cast<int>(ops.size());
  const SurfaceMetric& met = ops[0].metric;
  const double eps = ops[0].params.eps;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < trials; ++i) {
    const Field u = random_field(g, Frame::Moving, rng);
    const Field bu = apply_modes(ops, u);
    const double target = zero_one ? norm_01(bu, met, eps) : norm_eps(bu, met, eps);
    const double r = norm_21(u, met, eps) / (target + norm_eps(u, met, eps));
    st.min = std::min(st.min, r);
    st.max = std::max(st.max, r);
  }
  return st;
}

}  // namespace pulselab
