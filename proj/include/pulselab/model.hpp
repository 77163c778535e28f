#pragma once

#include <functional>

#include "pulselab/surface.hpp"

namespace pulselab {

struct Params {
  double alpha = 0.1;
  double gamma = 1.0;
  double eps = 1e-3;
  double c = 0.0;    // frame speed
  double R = 1.0;    // reference radius

  double sigma() const;
  void validate() const;
};

enum class Frame { Static, Moving };

// Two-component state stored per angular mode: column n of u1/u2 holds the
// axial profile of the e^{in theta} coefficient, n = 0..N_theta-1. Real fields
// are implied through u_{-n} = conj(u_n).
struct Field {
  GridSpec grid;
  Frame frame = Frame::Moving;
  MatrixXcd u1, u2;

  Field() = default;
  Field(const GridSpec& g, Frame f);
  static Field zeros(const GridSpec& g, Frame f) { return Field(g, f); }
  static Field axisymmetric(const GridSpec& g, Frame f, const VectorXd& a, const VectorXd& b);

  int modes() const { return static_cast<int>(u1.cols()); }
  bool finite() const;
  double max_abs() const;
  // Same grid and number of modes; throws ShapeMismatch otherwise.
  void check_compatible(const Field& o) const;

  Field& operator+=(const Field& o);
  Field& operator-=(const Field& o);
  Field& operator*=(cplx s);
  // Stacks mode n as [u1; u2] and back.
  VectorXcd mode(int n) const;
  void set_mode(int n, const VectorXcd& x);
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(cplx s, Field a);

double reaction(double y, double alpha);
cplx reaction(cplx y, double alpha);
double reaction_prime(double y, double alpha);

// Applies a pointwise map in physical (z, theta) space to mode data. The
// callback receives the axial index and the physical value. Products up to
// cubic order are de-aliased for the retained modes.
MatrixXcd apply_pointwise(const MatrixXcd& modes, const std::function<cplx(int, cplx)>& f);

// N(u) = (-u1^3 + (alpha+1) u1^2, 0).
Field nonlinearity(const Field& u, const Params& p);
// A_rho u = (Delta_rho u1 - alpha u1 - u2, eps (u1 - gamma u2)).
Field linear_A(const Field& u, const SurfaceMetric& metric, const Params& p);
Field rhs_static(const Field& u, const SurfaceMetric& metric, const Params& p);
Field rhs_moving(const Field& u, const Params& p);

// Weighted inner product with Parseval weights 1 (n = 0) and 2 (n >= 1).
cplx inner_eps(const Field& u, const Field& w, const SurfaceMetric& metric, double eps);
double norm_eps(const Field& u, const SurfaceMetric& metric, double eps);
// sqrt(||Delta u1||^2 + eps^{-1}||d_x u2||^2) + ||u||.
double norm_21(const Field& u, const SurfaceMetric& metric, double eps);
// sqrt(eps^{-1}||d_x u2||^2) + ||u||.
double norm_01(const Field& u, const SurfaceMetric& metric, double eps);

// Axial derivative of both components.
Field d_axial(const Field& u);
// Spectral translation u(z - h) of every component and mode.
Field translate(const Field& u, double h);

}  // namespace pulselab
