#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pulselab/model.hpp"

namespace pulselab {

struct PulseProfile {
  GridSpec grid;  // N_theta is irrelevant; profiles are axisymmetric
  VectorXd phi1, phi2;
  double c = 0.0;
  double residual = 0.0;
  Params params;
  int newton_iterations = 0;

  Params moving_params() const {
    Params p = params;
    p.c = c;
    return p;
  }
};

struct PulseOptions {
  double tol_newton = 1e-10;  // relative to the weighted norm of the profile
  int max_iter = 60;
  double seed_width = 0.0;    // plateau width of the seed; 0 selects an estimate
  double tail_tol = 1e-8;     // boundary magnitude allowed relative to max|phi1|
  // Use dense LU on the bordered Jacobian instead of preconditioned GMRES.
  // Auto when unset: dense for N_z <= 512.
  std::optional<bool> dense;
  bool verbose = false;
};

// Spatial decay rates of the linearization at the rest state in a frame of
// speed c: mu_front > 0 governs z -> +inf, mu_wake > 0 governs z -> -inf.
struct TailRates {
  double mu_front = 0.0;
  double mu_wake = 0.0;
};
TailRates tail_rates(const Params& p, double c);

// Singular-limit speed sqrt(2)/2 (1 - 2 alpha).
double singular_speed(double alpha);
// Estimated length of the excited plateau of the fast pulse.
double plateau_estimate(const Params& p);

// Grid large enough for pulse tails to fall below `tail` at the wrap point,
// with spacing at most dz_max.
GridSpec suggest_grid(const Params& p, double tail = 1e-10, double dz_max = 0.7);

PulseProfile pulse_seed(const Params& p, const GridSpec& grid, double width = 0.0);

PulseProfile find_fast_pulse(const Params& p, const GridSpec& grid,
                             const std::optional<PulseProfile>& init = std::nullopt,
                             const PulseOptions& opt = {});

// Solves along eps_path (first entry from the seed), halving failed steps in
// log(eps). Each solve uses suggest_grid(eps) unless auto_grid is false.
std::vector<PulseProfile> continue_in_eps(const Params& base, const std::vector<double>& eps_path,
                                          const PulseOptions& opt = {},
                                          bool auto_grid = true, const GridSpec& fixed = {});

// Moves a converged profile onto another grid, keeping the front at the same
// distance from the right end of the domain.
PulseProfile resample_pulse(const PulseProfile& phi, const GridSpec& grid);

// Predictor for a nearby eps: the plateau and recovery tail are rescaled by the
// eps ratio while the front and back keep their shape.
PulseProfile stretch_pulse(const PulseProfile& phi, const Params& target, const GridSpec& grid);

PulseProfile translate_pulse(const PulseProfile& phi, double h);
Field pulse_field(const PulseProfile& phi, int n_theta = 1);
// tau = -d_z Phi.
Field tangent_vector(const PulseProfile& phi, int n_theta = 1);

// ||G(Phi)|| in the weighted norm for the profile's own speed.
double pulse_residual(const PulseProfile& phi);
double boundary_ratio(const PulseProfile& phi);

}  // namespace pulselab
