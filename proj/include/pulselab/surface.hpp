#pragma once

#include <string>

#include "pulselab/grid.hpp"

namespace pulselab {

enum class RadiusKind { Constant, SineBump, GaussianBump };

std::string to_string(RadiusKind kind);
RadiusKind radius_kind_from_string(const std::string& s);

// rho(x) = R                       constant
// rho(x) = R + a sin(omega x)      sine-bump
// rho(x) = R + a exp(-omega^2 x^2) gaussian-bump
struct RadiusFamily {
  RadiusKind kind = RadiusKind::Constant;
  double R = 1.0;
  double amplitude = 0.0;
  double omega = 1.0;

  double rho(double x) const;
  double drho(double x) const;
  double ddrho(double x) const;
  // Exact C^2 distance R^{-1} max{sup|rho-R|, sup|rho'|, sup|rho''|} over the real line.
  double analytic_delta() const;
  void validate() const;
};

struct SurfaceMetric {
  VectorXd rho, drho, ddrho, g;
  double R_ref = 1.0;
  // Derived samples: sqrt(g) and the flux coefficient rho / sqrt(1 + rho'^2).
  VectorXd sqrt_g, flux;
  bool constant = true;

  int size() const { return static_cast<int>(rho.size()); }
};

SurfaceMetric build_metric(const RadiusFamily& family, const GridSpec& grid);
SurfaceMetric constant_metric(double R, const GridSpec& grid);

// Laplace-Beltrami operator on each angular mode column of u1 (N_z x K).
MatrixXcd laplace_beltrami_apply(const MatrixXcd& u1, const SurfaceMetric& metric,
                                 const GridSpec& grid);
VectorXcd laplace_beltrami_mode(const VectorXcd& u, int n, const SurfaceMetric& metric,
                                const AxialFft& fft);

// Axial derivative along the generating curve, d/dx, per column.
MatrixXcd axial_derivative(const MatrixXcd& u, const GridSpec& grid);

double c2_distance(const SurfaceMetric& metric);

// Per-point quadrature weight 2*pi*sqrt(g)*dz of the surface measure for mode 0.
VectorXd surface_weights(const SurfaceMetric& metric, const GridSpec& grid);

}  // namespace pulselab
