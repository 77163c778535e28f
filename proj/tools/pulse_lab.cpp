// pulse-lab command line: one subcommand per experiment kind plus
// validate-config. Exit codes: 0 pass, 2 threshold failure, 1 error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pulselab/errors.hpp"
#include "pulselab/io.hpp"
#include "pulselab/lab.hpp"

using namespace pulselab;

namespace {

struct Flags {
  std::string config;
  std::optional<double> alpha, gamma, eps, R, L_z, T, dt, dense_until, amplitude, omega;
  std::optional<int> N_z, N_theta, output_stride;
  std::optional<std::string> scheme, output_dir, radius_kind, shape;
  std::optional<unsigned long long> seed;
  std::vector<double> amplitudes, deltas;
  bool no_q = false;
};

void add_run_flags(CLI::App* app, Flags& f) {
  app->add_option("-c,--config", f.config, "experiment config file (JSON)");
  app->add_option("--alpha", f.alpha, "excitability threshold alpha");
  app->add_option("--gamma", f.gamma, "recovery coupling gamma");
  app->add_option("--eps", f.eps, "time-scale ratio eps");
  app->add_option("--R", f.R, "reference radius");
  app->add_option("--L_z", f.L_z, "domain half-length (with --N_z)");
  app->add_option("--N_z", f.N_z, "axial grid points (power of two, with --L_z)");
  app->add_option("--N_theta", f.N_theta, "angular modes retained");
  app->add_option("--T", f.T, "integration time");
  app->add_option("--dt", f.dt, "time step");
  app->add_option("--scheme", f.scheme, "imex-theta or etd-rk2");
  app->add_option("--output-stride", f.output_stride, "steps between recorded samples");
  app->add_option("--dense-until", f.dense_until, "record every step before this time");
  app->add_option("-o,--output-dir", f.output_dir, "run directory");
  app->add_option("--seed", f.seed, "seed of the run's random generator");
}

json overrides_from(const Flags& f, const std::string& kind) {
  json o = json::object();
  o["kind"] = kind;
  auto put = [&](const char* section, const char* key, const auto& v) {
    if (v) o[section][key] = *v;
  };
  put("params", "alpha", f.alpha);
  put("params", "gamma", f.gamma);
  put("params", "eps", f.eps);
  put("params", "R", f.R);
  put("grid", "L_z", f.L_z);
  put("grid", "N_z", f.N_z);
  put("grid", "N_theta", f.N_theta);
  put("run", "T", f.T);
  put("run", "dt", f.dt);
  put("run", "scheme", f.scheme);
  put("run", "output_stride", f.output_stride);
  put("run", "dense_until", f.dense_until);
  put("run", "output_dir", f.output_dir);
  put("perturbation", "amplitude", f.amplitude);
  put("perturbation", "shape", f.shape);
  put("radius", "omega", f.omega);
  put("radius", "kind", f.radius_kind);
  if (f.no_q) o["perturbation"]["q_projected"] = false;
  if (!f.amplitudes.empty()) o["perturbation"]["sweep"] = f.amplitudes;
  else if (f.amplitude && kind == "stability") o["perturbation"]["sweep"] = json::array();
  if (!f.deltas.empty()) o["deltas"] = f.deltas;
  if (f.seed) o["seed"] = *f.seed;
  return o;
}

int execute(const Flags& f, const std::string& kind) {
  const std::string text = f.config.empty() ? std::string("{}") : read_text(f.config);
  const std::string source = f.config.empty() ? "<flags>" : f.config;
  const ExperimentConfig cfg = parse_config(text, overrides_from(f, kind), source);
  const Report rep = run(cfg);
  for (const auto& c : rep.checks) {
    std::string bound = c.relation == "in"
                            ? "in [" + format_double(c.lo) + ", " + format_double(c.hi) + "]"
                            : c.relation + " " + format_double(c.relation == "<=" ? c.hi : c.lo);
    std::printf("%-5s %-40s %-24s %s%s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                format_double(c.value).c_str(), bound.c_str(), c.informational ? " (info)" : "");
  }
  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("report: %s/report.json (%.1f s)\n", cfg.run.output_dir.c_str(), rep.seconds);
  if (rep.failed) {
    std::fprintf(stderr, "error: %s\n", rep.error.c_str());
    return 1;
  }
  std::printf("%s\n", rep.passed() ? "verdict: pass" : "verdict: threshold failure");
  return rep.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pulse-lab: FitzHugh-Nagumo pulses on standard and warped cylinders"};
  app.require_subcommand(1);
  Flags f;

  auto* pulse = app.add_subcommand("pulse", "compute the fast pulse and its certificates");
  auto* spectrum = app.add_subcommand("spectrum", "spectral suite for the angular modes");
  auto* stability = app.add_subcommand("stability", "perturbed pulse with modulation tracking");
  auto* warp = app.add_subcommand("warp", "pulse on warped cylinders, delta sweep");
  auto* sgd = app.add_subcommand("semigroup-diff", "semigroup difference on warped cylinders");
  auto* validate = app.add_subcommand("validate-config", "parse and validate a config file");
  for (auto* s : {pulse, spectrum, stability, warp, sgd}) add_run_flags(s, f);

  stability->add_option("--amplitude", f.amplitude, "single perturbation amplitude");
  stability->add_option("--amplitudes", f.amplitudes, "amplitude sweep, comma separated")->delimiter(',');
  stability->add_option("--shape", f.shape, "perturbation shape: smooth or band");
  stability->add_flag("--no-q-projection", f.no_q, "skip the Q projection of the perturbation");
  warp->add_option("--delta-sweep", f.deltas, "C^2 distances, comma separated")->delimiter(',');
  warp->add_option("--omega", f.omega, "sine-bump frequency");
  warp->add_option("--radius-kind", f.radius_kind, "sine-bump or gaussian-bump");
  warp->add_option("--amplitude", f.amplitude, "off-manifold start amplitude (0 skips it)");
  sgd->add_option("--delta-sweep", f.deltas, "C^2 distances, comma separated")->delimiter(',');
  sgd->add_option("--omega", f.omega, "sine-bump frequency");
  std::string validate_path;
  validate->add_option("file", validate_path, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (validate->parsed()) {
      const ExperimentConfig cfg = load_config(validate_path);
      std::printf("%s: ok (kind %s)\n", validate_path.c_str(), to_string(cfg.kind).c_str());
      return 0;
    }
    if (pulse->parsed()) return execute(f, "pulse");
    if (spectrum->parsed()) return execute(f, "spectrum");
    if (stability->parsed()) return execute(f, "stability");
    if (warp->parsed()) return execute(f, "warped-persistence");
    if (sgd->parsed()) return execute(f, "semigroup-perturbation");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
