#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pulselab/model.hpp"

namespace pulselab {

enum class Scheme { ImexTheta, EtdRk2 };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct Integrator {
  Scheme scheme = Scheme::ImexTheta;
  double dt = 0.01;
  double theta = 0.5;
  Params params;              // params.c is the frame speed when frame == Moving
  Frame frame = Frame::Static;
  SurfaceMetric metric;       // empty selects the constant metric of radius params.R

  void validate() const;
};

// Explicitly treated part of the right-hand side. The default is N(u), plus
// (Delta_rho - Delta_R) u1 on a warped metric.
using ExplicitTerm = std::function<Field(const Field&)>;

// Steps du/dt = Lin u + E(u), where Lin is the constant-coefficient part on
// S_R (including c d_z in the moving frame), diagonal per axial wavenumber and
// angular mode. IMEX-theta pairs theta-weighted implicit Lin with AB2 for E
// (first step: IMEX Heun). ETD-RK2 is the Cox-Matthews scheme.
class Evolver {
 public:
  Evolver(const GridSpec& grid, Integrator integ, ExplicitTerm term = {});

  // Advances the current trajectory by dt. Throws Blowup.
  Field step(const Field& u);
  void reset();

  double time() const { return t_; }
  long steps() const { return steps_; }
  const Integrator& integrator() const { return integ_; }
  const GridSpec& grid() const { return grid_; }
  // Largest dt * sup|N'(u1)| seen so far (explicit-part stability indicator).
  double stiffness() const { return stiffness_; }

 private:
  struct Block {
    Eigen::Matrix2cd a, b, c;
  };
  GridSpec grid_;
  Integrator integ_;
  ExplicitTerm term_;
  SurfaceMetric ref_metric_;
  std::vector<Block> blocks_;  // index n * N_z + j
  std::vector<VectorXcd> prev_hat_;
  bool have_prev_ = false;
  double t_ = 0.0;
  long steps_ = 0;
  double stiffness_ = 0.0;

  Field explicit_part(const Field& u);
  void to_hat(const Field& u, std::vector<VectorXcd>& hat) const;
  Field from_hat(const std::vector<VectorXcd>& hat) const;
};

// One step from u with a fresh Evolver (IMEX start step).
Field step(const Field& u, const Integrator& integ);

struct Observer {
  std::string name;
  int stride = 1;
  std::function<void(double t, const Field& u)> fn;
};

struct TrajectorySummary {
  double t_final = 0.0;
  long steps = 0;
  double stiffness = 0.0;
  std::vector<std::string> warnings;
};

// Runs the evolver from its current time to T (rounded to whole steps).
// Observers see the state at t = 0 and every `stride` steps, and at the end.
// An observer that throws is disabled and the failure logged.
TrajectorySummary integrate(Field& u, double T, Evolver& ev, const std::vector<Observer>& observers);

}  // namespace pulselab
