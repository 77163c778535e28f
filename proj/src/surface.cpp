#include "pulselab/surface.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pulselab/errors.hpp"

namespace pulselab {

std::string to_string(RadiusKind kind) {
  switch (kind) {
    case RadiusKind::Constant: return "constant";
    case RadiusKind::SineBump: return "sine-bump";
    case RadiusKind::GaussianBump: return "gaussian-bump";
  }
  return "constant";
}

RadiusKind radius_kind_from_string(const std::string& s) {
  if (s == "constant") return RadiusKind::Constant;
  if (s == "sine-bump") return RadiusKind::SineBump;
  if (s == "gaussian-bump") return RadiusKind::GaussianBump;
  throw Error(ErrorKind::InvalidConfig, "unknown radius kind '" + s + "'");
}

double RadiusFamily::rho(double x) const {
  switch (kind) {
    case RadiusKind::Constant: return R;
    case RadiusKind::SineBump: return R + amplitude * std::sin(omega * x);
    case RadiusKind::GaussianBump: return R + amplitude * std::exp(-omega * omega * x * x);
  }
  return R;
}

double RadiusFamily::drho(double x) const {
  switch (kind) {
    case RadiusKind::Constant: return 0.0;
    case RadiusKind::SineBump: return amplitude * omega * std::cos(omega * x);
    case RadiusKind::GaussianBump: {
      const double w2 = omega * omega;
      return -2.0 * amplitude * w2 * x * std::exp(-w2 * x * x);
    }
  }
  return 0.0;
}

double RadiusFamily::ddrho(double x) const {
  switch (kind) {
    case RadiusKind::Constant: return 0.0;
    case RadiusKind::SineBump: return -amplitude * omega * omega * std::sin(omega * x);
    case RadiusKind::GaussianBump: {
      const double w2 = omega * omega;
      return amplitude * (4.0 * w2 * w2 * x * x - 2.0 * w2) * std::exp(-w2 * x * x);
    }
  }
  return 0.0;
}

double RadiusFamily::analytic_delta() const {
  const double a = std::abs(amplitude);
  switch (kind) {
    case RadiusKind::Constant: return 0.0;
    case RadiusKind::SineBump: return a * std::max({1.0, omega, omega * omega}) / R;
    case RadiusKind::GaussianBump: {
      // sup|rho'| at x = 1/(sqrt(2) omega); sup|rho''| at x = 0.
      const double d1 = a * omega * std::sqrt(2.0) * std::exp(-0.5);
      const double d2 = 2.0 * a * omega * omega;
      return std::max({a, d1, d2}) / R;
    }
  }
  return 0.0;
}

void RadiusFamily::validate() const {
  if (!(R > 0.0)) throw Error(ErrorKind::NonPositiveRadius, "base radius must be positive");
  if (kind != RadiusKind::Constant && !(R - std::abs(amplitude) > 0.0))
    throw Error(ErrorKind::NonPositiveRadius, "R - |a| must be positive");
  if (kind != RadiusKind::Constant && !(omega > 0.0))
    throw Error(ErrorKind::InvalidConfig, "omega must be positive");
}

namespace {
void finish(SurfaceMetric& m) {
  const int n = m.size();
  m.g.resize(n);
  m.sqrt_g.resize(n);
  m.flux.resize(n);
  for (int i = 0; i < n; ++i) {
    const double s = 1.0 + m.drho[i] * m.drho[i];
    m.g[i] = m.rho[i] * m.rho[i] * s;
    m.sqrt_g[i] = m.rho[i] * std::sqrt(s);
    m.flux[i] = m.rho[i] / std::sqrt(s);
  }
}
}  // namespace

SurfaceMetric build_metric(const RadiusFamily& family, const GridSpec& grid) {
  grid.validate();
  if (!(family.R > 0.0)) throw Error(ErrorKind::NonPositiveRadius, "base radius must be positive");
  SurfaceMetric m;
  m.R_ref = family.R;
  m.constant = family.kind == RadiusKind::Constant || family.amplitude == 0.0;
  m.rho.resize(grid.N_z);
  m.drho.resize(grid.N_z);
  m.ddrho.resize(grid.N_z);
  for (int i = 0; i < grid.N_z; ++i) {
    const double x = grid.z(i);
    m.rho[i] = family.rho(x);
    m.drho[i] = family.drho(x);
    m.ddrho[i] = family.ddrho(x);
  }
  if (m.rho.minCoeff() <= 0.0)
    throw Error(ErrorKind::NonPositiveRadius,
                "min rho = " + std::to_string(m.rho.minCoeff()) + " on the grid");
  finish(m);
  return m;
}

SurfaceMetric constant_metric(double R, const GridSpec& grid) {
  return build_metric(RadiusFamily{RadiusKind::Constant, R, 0.0, 1.0}, grid);
}

VectorXcd laplace_beltrami_mode(const VectorXcd& u, int n, const SurfaceMetric& metric,
                                const AxialFft& fft) {
  VectorXcd out;
  if (metric.constant) {
    out = fft.d2(u);
    const double r2 = metric.R_ref * metric.R_ref;
    if (n != 0) out -= (double(n) * n / r2) * u;
    return out;
  }
  VectorXcd q = fft.d1(u);
  q.array() *= metric.flux.array().cast<cplx>();
  out = fft.d1(q);
  out.array() /= metric.sqrt_g.array().cast<cplx>();
  if (n != 0)
    out.array() -= (double(n) * n) * u.array() / metric.rho.array().square().cast<cplx>();
  return out;
}

MatrixXcd laplace_beltrami_apply(const MatrixXcd& u1, const SurfaceMetric& metric,
                                 const GridSpec& grid) {
  if (u1.rows() != grid.N_z || metric.size() != grid.N_z)
    throw Error(ErrorKind::ShapeMismatch, "field/metric rows do not match N_z");
  const auto fft = axial_fft(grid);
  MatrixXcd out(u1.rows(), u1.cols());
  for (int n = 0; n < u1.cols(); ++n)
    out.col(n) = laplace_beltrami_mode(u1.col(n), n, metric, *fft);
  return out;
}

MatrixXcd axial_derivative(const MatrixXcd& u, const GridSpec& grid) {
  if (u.rows() != grid.N_z) throw Error(ErrorKind::ShapeMismatch, "rows do not match N_z");
  const auto fft = axial_fft(grid);
  MatrixXcd out(u.rows(), u.cols());
  for (int n = 0; n < u.cols(); ++n) out.col(n) = fft->d1(VectorXcd(u.col(n)));
  return out;
}

double c2_distance(const SurfaceMetric& m) {
  const double d0 = (m.rho.array() - m.R_ref).abs().maxCoeff();
  const double d1 = m.drho.cwiseAbs().maxCoeff();
  const double d2 = m.ddrho.cwiseAbs().maxCoeff();
  return std::max({d0, d1, d2}) / m.R_ref;
}

VectorXd surface_weights(const SurfaceMetric& metric, const GridSpec& grid) {
  return (2.0 * std::numbers::pi * grid.dz()) * metric.sqrt_g;
}

}  // namespace pulselab
