#pragma once

#include <random>
#include <string>
#include <vector>

#include "pulselab/evolve.hpp"
#include "pulselab/linalg.hpp"
#include "pulselab/pulse.hpp"

namespace pulselab {

// One angular-mode block of a linearized operator acting on stacked [u1; u2]
// axial profiles:
//   [ Delta_n + c d_z + V(z)    -1              ]
//   [ eps                        c d_z - eps*gamma ]
// With V = f'(phi1) and constant metric this is L_n about a pulse; with
// V = -alpha, c = 0 and any metric it is A_rho restricted to mode n.
struct ModeOperator {
  GridSpec grid;
  int n = 0;
  Params params;  // params.c is the frame speed used in the operator
  VectorXd potential;
  SurfaceMetric metric;

  int size() const { return 2 * grid.N_z; }
  VectorXcd apply(const VectorXcd& x) const;
  // Adjoint in the weighted inner product (valid for c = 0 or constant metric).
  VectorXcd apply_adjoint(const VectorXcd& x) const;
  MatrixXd to_dense() const;
  MatrixXd to_dense_adjoint() const;
  // Diagonal of the weight W = diag(w, w/eps) for one mode (no Parseval factor).
  VectorXd weights() const;
};

ModeOperator build_Ln(const PulseProfile& phi, int n, double R);
// L_n with the pulse potential replaced by f'(0) = -alpha.
ModeOperator build_Lbar(const PulseProfile& phi, int n, double R);
ModeOperator build_A(const SurfaceMetric& metric, const GridSpec& grid, const Params& p, int n);

// Applies L (or A) mode by mode; the result has exactly the modes of u.
Field apply_modes(const std::vector<ModeOperator>& ops, const Field& u);

double weighted_norm(const VectorXcd& x, const VectorXd& w);
cplx weighted_inner(const VectorXcd& x, const VectorXcd& y, const VectorXd& w);

struct EssentialPoint {
  double k = 0.0;
  int n = 0;
  cplx lam_plus, lam_minus;
};

// Eigenvalues of the symbol m(k,n) for each sample; p.c is the frame speed.
std::vector<EssentialPoint> essential_spectrum_curves(const std::vector<double>& k_samples,
                                                      int n_max, double R, const Params& p);
// The literal closed form ick - (k^2+alpha+eps gamma)/2 + sqrt((k^2+alpha-eps gamma)^2 - 4 eps)/2.
cplx lambda_plus_closed_form(double k, const Params& p);
Eigen::Matrix2cd symbol_matrix(double k, int n, double R, const Params& p);

enum class EigMethod { Auto, Dense, Arnoldi };

struct SpectrumOptions {
  EigMethod method = EigMethod::Auto;
  double tol = 1e-8;
  int max_dim = 240;
  unsigned seed = 7;
  int dense_max_nz = 256;  // Auto uses the dense solver up to this N_z
};

EigenPairs discrete_spectrum(const ModeOperator& op, int count, cplx shift,
                             const SpectrumOptions& opt = {});

struct SpectralCertificate {
  double sigma = 0.0;
  double beta = 0.0;
  cplx zero_eval;
  double zero_alignment = 0.0;
  cplx next_eval;
  std::vector<cplx> eigenvalues;
  std::vector<double> residuals;
  bool accepted = false;
};

SpectralCertificate spectral_certificate(const ModeOperator& op0, const Field& tau, int count = 20,
                                         const SpectrumOptions& opt = {});

struct RieszProjection {
  Field tau;
  Field tau_star;
  double normalization = 0.0;  // <tau, tau*> after normalization
  double adjoint_residual = 0.0;  // ||L0* tau*|| / ||tau*||
  SurfaceMetric metric;
  double eps = 0.0;
};

RieszProjection adjoint_zero_mode(const ModeOperator& op0, const Field& tau);
Field project_P(const Field& u, const RieszProjection& proj);
Field project_Q(const Field& u, const RieszProjection& proj);

struct DissipativityResult {
  double max_rayleigh = -1e300;
  unsigned seed = 0;
  int trials = 0;
};

// max Re<Bv,v>/||v||^2 over random band-limited mode vectors.
DissipativityResult dissipativity_check(const ModeOperator& op, int trials, unsigned seed);
// Same over multi-mode fields for the direct sum of the given mode blocks.
DissipativityResult dissipativity_check(const std::vector<ModeOperator>& ops, int trials,
                                        unsigned seed);
// Random band-limited mode vector (wavenumbers up to half the grid Nyquist).
VectorXcd random_band_limited(const GridSpec& grid, std::mt19937_64& rng, bool complex_values = true);

// Random band-limited field on every mode of grid.N_theta (mode 0 real).
Field random_field(const GridSpec& grid, Frame frame, std::mt19937_64& rng);

// Largest singular value of (lambda - B)^{-1} in the weighted norm.
double resolvent_norm(cplx lambda, const ModeOperator& op);

struct ResolventScan {
  double re = 0.0;
  double bound = 0.0;
  std::vector<double> im, value;
  // Smallest sampled Im lambda beyond which every sample respects the bound;
  // NaN when the last sample exceeds it.
  double empirical_N = 0.0;
};

ResolventScan resolvent_scan(const ModeOperator& op, double re, const std::vector<double>& im_values,
                             double bound);

struct DecayProbeOptions {
  double T = 4000.0;
  double dt = 0.1;
  Scheme scheme = Scheme::EtdRk2;
  int record_stride = 10;
  double R = 1.0;
};

struct DecayProbe {
  double sigma_hat = 0.0;
  double C_hat = 0.0;
  double r2 = 0.0;
  std::vector<double> t, norm21, drift;
  double max_drift = 0.0;
  int reprojections = 0;
  std::vector<std::string> warnings;
};

// Evolves dv/dt = L v and fits log ||v||_{2,1} on [T/2, T]. When v0 is in the
// range of Q, drift of Pv above 1e-4 relative is removed and reported.
DecayProbe semigroup_decay_probe(const PulseProfile& phi, const RieszProjection& proj,
                                 const Field& v0, const DecayProbeOptions& opt = {});

struct SemigroupDiffRow {
  int n = 0;
  double t = 0.0;
  double diff = 0.0;        // operator norm in the Hilbertian H^{2,1} norm
  double ratio = 0.0;       // diff / (delta (1 + log+ 1/t))
  double probe_diff = 0.0;  // max over probes of ||(e^{tA_rho}-e^{tA_R}) p||_{2,1} / ||p||_{2,1}
};

struct SemigroupDiffResult {
  double delta = 0.0;
  std::vector<SemigroupDiffRow> rows;
  double sup_diff = 0.0;
  double sup_ratio = 0.0;
};

// Dense comparison of e^{tA_rho} and e^{tA_R} for modes 0..n_max at
// t = t_min 2^j up to the first sample >= t_max.
SemigroupDiffResult semigroup_difference(const SurfaceMetric& reference, const SurfaceMetric& warped,
                                         const GridSpec& grid, const Params& p, int n_max,
                                         double t_min = 1e-3, double t_max = 10.0, int probes = 4,
                                         unsigned seed = 1);

struct RatioStats {
  double min = 0.0;
  double max = 0.0;
  int trials = 0;
  unsigned seed = 0;
};

// ||u||_{2,1;rho} / ||u||_{2,1;R} over random fields on grid.N_theta modes.
RatioStats norm_equivalence(const SurfaceMetric& warped, const SurfaceMetric& reference,
                            const GridSpec& grid, double eps, int trials, unsigned seed);

// ||u||_{2,1} / (||B u||_X + ||u||) with X the eps-weighted norm (zero_one =
// false) or the H^{0,1} norm (zero_one = true), over random fields.
RatioStats graph_norm_ratios(const std::vector<ModeOperator>& ops, const GridSpec& grid,
                             bool zero_one, int trials, unsigned seed);

}  // namespace pulselab
