#pragma once

#include <map>
#include <mutex>
#include <random>

#include "pulselab/pulse.hpp"
#include "pulselab/spectral.hpp"

namespace fixtures {

using namespace pulselab;

inline Params params(double eps) {
  Params p;
  p.alpha = 0.1;
  p.gamma = 1.0;
  p.eps = eps;
  return p;
}

// Pulse on the auto-sized grid, computed once per process and eps.
inline const PulseProfile& pulse(double eps) {
  static std::map<double, PulseProfile> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(eps);
  if (it == cache.end()) {
    const Params p = params(eps);
    it = cache.emplace(eps, find_fast_pulse(p, suggest_grid(p))).first;
  }
  return it->second;
}

inline const RieszProjection& projection(double eps) {
  static std::map<double, RieszProjection> cache;
  static std::mutex mu;
  const PulseProfile& phi = pulse(eps);
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(eps);
  if (it == cache.end())
    it = cache.emplace(eps, adjoint_zero_mode(build_Ln(phi, 0, 1.0), tangent_vector(phi))).first;
  return it->second;
}

// Band-limited test profile sum_j a_j cos(k_j z + p_j) with grid wavenumbers.
inline VectorXd smooth_profile(const GridSpec& g, std::mt19937_64& rng, int terms = 4) {
  std::uniform_int_distribution<int> mode(1, std::max(1, g.N_z / 8));
  std::normal_distribution<double> amp(0.0, 1.0);
  std::uniform_real_distribution<double> ph(0.0, 6.283185307179586);
  VectorXd out = VectorXd::Zero(g.N_z);
  for (int j = 0; j < terms; ++j) {
    const double k = 3.141592653589793 * mode(rng) / g.L_z;
    const double a = amp(rng), p = ph(rng);
    for (int i = 0; i < g.N_z; ++i) out[i] += a * std::cos(k * g.z(i) + p);
  }
  return out;
}

}  // namespace fixtures
