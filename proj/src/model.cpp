#include "pulselab/model.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "pulselab/errors.hpp"

namespace pulselab {

double Params::sigma() const { return std::min(alpha, eps * gamma); }

void Params::validate() const {
  if (!(alpha > 0.0 && alpha < 0.5))
    throw Error(ErrorKind::InvalidConfig, "alpha must lie in (0, 0.5)");
  if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidConfig, "gamma must be positive");
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidConfig, "eps must be positive");
  if (!(c >= 0.0)) throw Error(ErrorKind::InvalidConfig, "frame speed must be nonnegative");
  if (!(R > 0.0)) throw Error(ErrorKind::NonPositiveRadius, "R must be positive");
}

Field::Field(const GridSpec& g, Frame f)
    : grid(g), frame(f), u1(MatrixXcd::Zero(g.N_z, g.N_theta)),
      u2(MatrixXcd::Zero(g.N_z, g.N_theta)) {}

Field Field::axisymmetric(const GridSpec& g, Frame f, const VectorXd& a, const VectorXd& b) {
  Field u(g, f);
  u.u1.col(0) = a.cast<cplx>();
  u.u2.col(0) = b.cast<cplx>();
  return u;
}

bool Field::finite() const { return u1.allFinite() && u2.allFinite(); }

double Field::max_abs() const {
  double m = 0.0;
  if (u1.size()) m = std::max(m, u1.cwiseAbs().maxCoeff());
  if (u2.size()) m = std::max(m, u2.cwiseAbs().maxCoeff());
  return m;
}

void Field::check_compatible(const Field& o) const {
  if (!grid.same_axial(o.grid) || u1.cols() != o.u1.cols() || u1.rows() != o.u1.rows())
    throw Error(ErrorKind::ShapeMismatch, "fields live on different grids");
}

Field& Field::operator+=(const Field& o) {
  check_compatible(o);
  u1 += o.u1;
  u2 += o.u2;
  return *this;
}

Field& Field::operator-=(const Field& o) {
  check_compatible(o);
  u1 -= o.u1;
  u2 -= o.u2;
  return *this;
}

Field& Field::operator*=(cplx s) {
  u1 *= s;
  u2 *= s;
  return *this;
}

VectorXcd Field::mode(int n) const {
  const int N = static_cast<int>(u1.rows());
  VectorXcd x(2 * N);
  x.head(N) = u1.col(n);
  x.tail(N) = u2.col(n);
  return x;
}

void Field::set_mode(int n, const VectorXcd& x) {
  const int N = static_cast<int>(u1.rows());
  u1.col(n) = x.head(N);
  u2.col(n) = x.tail(N);
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(cplx s, Field a) { return a *= s; }

double reaction(double y, double alpha) { return -y * (y - alpha) * (y - 1.0); }
cplx reaction(cplx y, double alpha) { return -y * (y - alpha) * (y - 1.0); }
double reaction_prime(double y, double alpha) {
  return -3.0 * y * y + 2.0 * (alpha + 1.0) * y - alpha;
}

MatrixXcd apply_pointwise(const MatrixXcd& modes, const std::function<cplx(int, cplx)>& f) {
  const int N = static_cast<int>(modes.rows());
  const int K = static_cast<int>(modes.cols());
  MatrixXcd out(N, K);
  if (K == 1) {
    for (int i = 0; i < N; ++i) out(i, 0) = f(i, modes(i, 0));
    return out;
  }
  const int M = 4 * K;
  std::vector<cplx> e(static_cast<size_t>(M) * K);
  for (int j = 0; j < M; ++j)
    for (int n = 0; n < K; ++n)
      e[j * K + n] = std::polar(1.0, 2.0 * std::numbers::pi * n * j / M);
  std::vector<cplx> phys(M);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < M; ++j) {
      cplx s = modes(i, 0);
      for (int n = 1; n < K; ++n) {
        const cplx a = modes(i, n) * e[j * K + n];
        s += a + std::conj(modes(i, n)) * std::conj(e[j * K + n]);
      }
      phys[j] = f(i, s);
    }
    for (int n = 0; n < K; ++n) {
      cplx acc = 0.0;
      for (int j = 0; j < M; ++j) acc += phys[j] * std::conj(e[j * K + n]);
      out(i, n) = acc / double(M);
    }
  }
  return out;
}

Field nonlinearity(const Field& u, const Params& p) {
  Field out(u.grid, u.frame);
  const double a1 = p.alpha + 1.0;
  out.u1 = apply_pointwise(u.u1, [a1](int, cplx y) { return y * y * (a1 - y); });
  return out;
}

Field linear_A(const Field& u, const SurfaceMetric& metric, const Params& p) {
  Field out(u.grid, u.frame);
  out.u1 = laplace_beltrami_apply(u.u1, metric, u.grid) - p.alpha * u.u1 - u.u2;
  out.u2 = p.eps * (u.u1 - p.gamma * u.u2);
  return out;
}

Field rhs_static(const Field& u, const SurfaceMetric& metric, const Params& p) {
  Field out = linear_A(u, metric, p);
  out += nonlinearity(u, p);
  out.frame = Frame::Static;
  return out;
}

Field rhs_moving(const Field& u, const Params& p) {
  const SurfaceMetric metric = constant_metric(p.R, u.grid);
  Field out = linear_A(u, metric, p);
  out += nonlinearity(u, p);
  if (p.c != 0.0) {
    out.u1 += p.c * axial_derivative(u.u1, u.grid);
    out.u2 += p.c * axial_derivative(u.u2, u.grid);
  }
  out.frame = Frame::Moving;
  return out;
}

namespace {
double mode_weight(int n) { return n == 0 ? 1.0 : 2.0; }

double sq_norm(const MatrixXcd& a, const VectorXd& w) {
  double s = 0.0;
  for (int n = 0; n < a.cols(); ++n)
    s += mode_weight(n) * (w.array() * a.col(n).array().abs2()).sum();
  return s;
}
}  // namespace

cplx inner_eps(const Field& u, const Field& w, const SurfaceMetric& metric, double eps) {
  u.check_compatible(w);
  const VectorXd W = surface_weights(metric, u.grid);
  cplx s = 0.0;
  for (int n = 0; n < u.modes(); ++n) {
    cplx a = 0.0;
    for (int i = 0; i < u.grid.N_z; ++i)
      a += W[i] * (u.u1(i, n) * std::conj(w.u1(i, n)) + u.u2(i, n) * std::conj(w.u2(i, n)) / eps);
    s += mode_weight(n) * a;
  }
  return s;
}

double norm_eps(const Field& u, const SurfaceMetric& metric, double eps) {
  const VectorXd W = surface_weights(metric, u.grid);
  return std::sqrt(sq_norm(u.u1, W) + sq_norm(u.u2, W) / eps);
}

double norm_21(const Field& u, const SurfaceMetric& metric, double eps) {
  const VectorXd W = surface_weights(metric, u.grid);
  const MatrixXcd lap = laplace_beltrami_apply(u.u1, metric, u.grid);
  const MatrixXcd dx = axial_derivative(u.u2, u.grid);
  return std::sqrt(sq_norm(lap, W) + sq_norm(dx, W) / eps) + norm_eps(u, metric, eps);
}

double norm_01(const Field& u, const SurfaceMetric& metric, double eps) {
  const VectorXd W = surface_weights(metric, u.grid);
  const MatrixXcd dx = axial_derivative(u.u2, u.grid);
  return std::sqrt(sq_norm(dx, W) / eps) + norm_eps(u, metric, eps);
}

Field d_axial(const Field& u) {
  Field out(u.grid, u.frame);
  out.u1 = axial_derivative(u.u1, u.grid);
  out.u2 = axial_derivative(u.u2, u.grid);
  return out;
}

Field translate(const Field& u, double h) {
  if (h == 0.0) return u;
  const auto fft = axial_fft(u.grid);
  Field out(u.grid, u.frame);
  for (int n = 0; n < u.modes(); ++n) {
    out.u1.col(n) = fft->shift(VectorXcd(u.u1.col(n)), h);
    out.u2.col(n) = fft->shift(VectorXcd(u.u2.col(n)), h);
  }
  return out;
}

}  // namespace pulselab
