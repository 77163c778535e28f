#include "pulselab/grid.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include <fftw3.h>

#include "pulselab/errors.hpp"

namespace pulselab {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonPositiveRadius: return "NonPositiveRadius";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::CollapsedToZero: return "CollapsedToZero";
    case ErrorKind::BoundaryContamination: return "BoundaryContamination";
    case ErrorKind::FactorizationSingular: return "FactorizationSingular";
    case ErrorKind::DegenerateNormalization: return "DegenerateNormalization";
    case ErrorKind::NearSingular: return "NearSingular";
    case ErrorKind::ProjectionDrift: return "ProjectionDrift";
    case ErrorKind::Blowup: return "Blowup";
    case ErrorKind::ObserverFailure: return "ObserverFailure";
    case ErrorKind::OutsideTube: return "OutsideTube";
    case ErrorKind::NewtonStall: return "NewtonStall";
    case ErrorKind::UnreliableFit: return "UnreliableFit";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

VectorXd GridSpec::nodes() const {
  VectorXd z(N_z);
  for (int i = 0; i < N_z; ++i) z[i] = this->z(i);
  return z;
}

void GridSpec::validate() const {
  if (!(L_z > 0.0) || !std::isfinite(L_z))
    throw Error(ErrorKind::InvalidConfig, "L_z must be positive, got " + std::to_string(L_z));
  if (N_z < 8 || !is_power_of_two(N_z))
    throw Error(ErrorKind::InvalidConfig,
                "N_z must be a power of two >= 8, got " + std::to_string(N_z));
  if (N_theta < 1)
    throw Error(ErrorKind::InvalidConfig, "N_theta must be >= 1, got " + std::to_string(N_theta));
}

AxialFft::AxialFft(const GridSpec& grid) : n_(grid.N_z), k_(grid.N_z), k_odd_(grid.N_z) {
  grid.validate();
  const double scale = std::numbers::pi / grid.L_z;
  for (int j = 0; j < n_; ++j) {
    const int m = j <= n_ / 2 ? j : j - n_;
    k_[j] = scale * m;
    k_odd_[j] = (j == n_ / 2) ? 0.0 : k_[j];
  }
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto* a = fftw_alloc_complex(n_);
  auto* b = fftw_alloc_complex(n_);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fwd_ = fftw_plan_dft_1d(n_, a, b, FFTW_FORWARD, flags);
  inv_ = fftw_plan_dft_1d(n_, a, b, FFTW_BACKWARD, flags);
  fftw_free(a);
  fftw_free(b);
}

AxialFft::~AxialFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

void AxialFft::forward(const cplx* in, cplx* out) const {
  fftw_execute_dft(static_cast<fftw_plan>(fwd_),
                   reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

void AxialFft::inverse(const cplx* in, cplx* out) const {
  fftw_execute_dft(static_cast<fftw_plan>(inv_),
                   reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
  const double s = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out[i] *= s;
}

VectorXcd AxialFft::forward(const VectorXcd& u) const {
  VectorXcd out(n_);
  forward(u.data(), out.data());
  return out;
}

VectorXcd AxialFft::inverse(const VectorXcd& u) const {
  VectorXcd out(n_);
  inverse(u.data(), out.data());
  return out;
}

VectorXcd AxialFft::d1(const VectorXcd& u) const {
  VectorXcd h = forward(u);
  for (int j = 0; j < n_; ++j) h[j] *= cplx(0.0, k_odd_[j]);
  return inverse(h);
}

VectorXcd AxialFft::d2(const VectorXcd& u) const {
  VectorXcd h = forward(u);
  for (int j = 0; j < n_; ++j) h[j] *= -k_odd_[j] * k_odd_[j];
  return inverse(h);
}

VectorXd AxialFft::d1(const VectorXd& u) const {
  return d1(VectorXcd(u.cast<cplx>())).real();
}

VectorXd AxialFft::d2(const VectorXd& u) const {
  return d2(VectorXcd(u.cast<cplx>())).real();
}

VectorXcd AxialFft::shift(const VectorXcd& u, double h) const {
  VectorXcd c = forward(u);
  for (int j = 0; j < n_; ++j) {
    // The Nyquist mode is kept real so that real data stay real.
    if (j == n_ / 2)
      c[j] *= std::cos(k_[j] * h);
    else
      c[j] *= std::polar(1.0, -k_[j] * h);
  }
  return inverse(c);
}

VectorXd AxialFft::shift(const VectorXd& u, double h) const {
  return shift(VectorXcd(u.cast<cplx>()), h).real();
}

std::shared_ptr<const AxialFft> axial_fft(const GridSpec& grid) {
  static std::mutex m;
  static std::map<std::pair<int, double>, std::shared_ptr<const AxialFft>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto key = std::make_pair(grid.N_z, grid.L_z);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto t = std::make_shared<const AxialFft>(grid);
  cache.emplace(key, t);
  return t;
}

}  // namespace pulselab
