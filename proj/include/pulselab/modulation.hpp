#pragma once

#include <string>
#include <vector>

#include "pulselab/evolve.hpp"
#include "pulselab/spectral.hpp"

namespace pulselab {

enum class Chart { Local, Manifold };

std::string to_string(Chart c);

// Translates of a pulse and of its tangent/adjoint modes, with the H^{2,1}
// norm on S_R. Shifts are spectral; h is the translation Phi_h = Phi(. - h).
class PulseManifold {
 public:
  PulseManifold(const PulseProfile& phi, const RieszProjection& proj, double R = 1.0);

  Field member(double h, int modes = 1) const;
  Field tangent(double h, int modes = 1) const;
  Field adjoint(double h, int modes = 1) const;

  const PulseProfile& profile() const { return phi_; }
  const RieszProjection& projection() const { return proj_; }
  const SurfaceMetric& metric() const { return metric_; }
  const GridSpec& grid() const { return phi_.grid; }
  double eps() const { return phi_.params.eps; }
  double norm21(const Field& u) const;
  double phi_norm21() const { return phi_norm21_; }
  // Mode-0 inner product <u, w> (other modes do not meet axisymmetric w).
  double inner0(const Field& u, const Field& w) const;

 private:
  PulseProfile phi_;
  RieszProjection proj_;
  SurfaceMetric metric_;
  VectorXcd hat1_, hat2_, tstar1_, tstar2_;
  double phi_norm21_ = 0.0;
  Field shifted(const VectorXcd& a, const VectorXcd& b, double h, int modes, int deriv) const;
};

struct DecomposeOptions {
  double eta_tube = 0.0;   // 0 selects 0.1 ||Phi||_{2,1}
  int max_iter = 30;
  double tol = 1e-13;      // on the Newton step |dh|
};

struct ModulationState {
  double h = 0.0;
  Field v;
  Chart chart = Chart::Local;
  double residual = 0.0;   // |<v, tau*>| (local) or |<v, tau*_h>| (manifold) after convergence
  int iterations = 0;
};

struct DistResult {
  double d = 0.0;
  double h_min = 0.0;
};

// inf_h ||u - Phi_h||_{2,1}: correlation search over grid shifts, then a
// bracketed minimization on the exact norm.
DistResult dist_to_manifold(const Field& u, const PulseManifold& M);

// u = Phi_h + v with <v, tau*> = 0 (local) or <v, tau*_h> = 0 (manifold).
// Throws OutsideTube or NewtonStall.
ModulationState decompose(const Field& u, const PulseManifold& M, Chart chart = Chart::Local,
                          const DecomposeOptions& opt = {});

// L_h v: linearization about Phi_h in the moving frame, per angular mode.
Field linearized_apply(const Field& v, const PulseManifold& M, double h);
// N_h(v) = F(Phi_h + v) - F(Phi_h) - L_h v; first component v1^2 (alpha + 1 - 3 phi_h1 - v1).
Field N_h(const Field& v, const PulseManifold& M, double h);

struct ModulationSample {
  double t = 0.0;
  double h = 0.0;
  double v_norm21 = 0.0;
  double dist = 0.0;
  double residual = 0.0;
  double hdot_rhs = 0.0;          // <L_h v + N_h(v), tau*> / <tau_h, tau*>
  double hdot_fd = 0.0;           // central difference of h (filled after the run)
  double hdot_consistency = 0.0;  // |hdot_fd - hdot_rhs| / sup|hdot_rhs|
};

// Observer that decomposes each sample (local chart) and records the series.
// OutsideTube ends tracking and keeps the partial series.
class ModulationTracker {
 public:
  explicit ModulationTracker(const PulseManifold& M, bool track_dist = true,
                             DecomposeOptions opt = {});
  void observe(double t, const Field& u);
  Observer observer(int stride);
  // Samples every step while t < dense_until, then every `stride` steps of size dt.
  Observer observer(int stride, double dt, double dense_until);
  // Fills hdot_fd and hdot_consistency; returns the largest consistency error
  // over interior samples.
  double finalize();

  const std::vector<ModulationSample>& samples() const { return samples_; }
  bool stopped() const { return stopped_; }
  const std::string& stop_reason() const { return stop_reason_; }

 private:
  const PulseManifold& M_;
  bool track_dist_;
  DecomposeOptions opt_;
  std::vector<ModulationSample> samples_;
  double last_h_ = 0.0;
  bool stopped_ = false;
  std::string stop_reason_;
};

struct DecayOptions {
  double min_r2 = 0.99;
  bool strict = true;  // throw UnreliableFit instead of flagging
};

struct DecaySummary {
  double xi_hat = 0.0;
  double C_hat = 0.0;
  double r2 = 0.0;
  double h_star = 0.0;
  double h_half = 0.0;       // h at the start of the fit window
  double window_start = 0.0;
  double window_end = 0.0;
  bool cauchy_ok = false;    // |h(T) - h(T/2)| <= 10 * h tolerance
  bool reliable = false;
  std::string flag;
};

// Log-linear fit of ||v(t)|| over the second half of the series; y holds the
// norms and h the modulation shift (may be empty).
DecaySummary fit_decay(const std::vector<double>& t, const std::vector<double>& y,
                       const std::vector<double>& h, const DecayOptions& opt = {});
DecaySummary fit_decay(const std::vector<ModulationSample>& series, const DecayOptions& opt = {});

}  // namespace pulselab
