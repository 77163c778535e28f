#pragma once

#include <complex>
#include <memory>

#include <Eigen/Dense>

namespace pulselab {

using cplx = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// Periodic axial grid on [-L_z, L_z) plus the number of retained angular modes.
struct GridSpec {
  double L_z = 100.0;
  int N_z = 1024;
  int N_theta = 1;

  double dz() const { return 2.0 * L_z / N_z; }
  double z(int i) const { return -L_z + i * dz(); }
  VectorXd nodes() const;
  // Throws InvalidConfig when an invariant is violated.
  void validate() const;
  bool same_axial(const GridSpec& o) const { return N_z == o.N_z && L_z == o.L_z; }
};

bool is_power_of_two(int n);

// FFT-based axial calculus on one grid. Odd derivatives zero the Nyquist
// wavenumber so that D is real and antisymmetric; the second derivative used
// throughout is D*D.
class AxialFft {
 public:
  explicit AxialFft(const GridSpec& grid);
  ~AxialFft();
  AxialFft(const AxialFft&) = delete;
  AxialFft& operator=(const AxialFft&) = delete;

  int size() const { return n_; }
  // Axial wavenumbers in FFT order. k_odd has the Nyquist entry zeroed.
  const VectorXd& k() const { return k_; }
  const VectorXd& k_odd() const { return k_odd_; }

  void forward(const cplx* in, cplx* out) const;   // unnormalized
  void inverse(const cplx* in, cplx* out) const;   // includes the 1/N factor
  VectorXcd forward(const VectorXcd& u) const;
  VectorXcd inverse(const VectorXcd& u) const;

  VectorXcd d1(const VectorXcd& u) const;
  VectorXcd d2(const VectorXcd& u) const;
  VectorXd d1(const VectorXd& u) const;
  VectorXd d2(const VectorXd& u) const;
  // u(z - h) by phase rotation of the Fourier coefficients.
  VectorXcd shift(const VectorXcd& u, double h) const;
  VectorXd shift(const VectorXd& u, double h) const;

 private:
  int n_;
  VectorXd k_, k_odd_;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

// Shared transform for a grid; cached by (N_z, L_z) and safe to use from
// several threads.
std::shared_ptr<const AxialFft> axial_fft(const GridSpec& grid);

}  // namespace pulselab
