#include "pulselab/lab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "pulselab/errors.hpp"
#include "pulselab/io.hpp"
#include "pulselab/modulation.hpp"
#include "pulselab/spectral.hpp"

namespace pulselab {

namespace fs = std::filesystem;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Pulse: return "pulse";
    case ExperimentKind::Spectrum: return "spectrum";
    case ExperimentKind::Stability: return "stability";
    case ExperimentKind::WarpedPersistence: return "warped-persistence";
    case ExperimentKind::SemigroupPerturbation: return "semigroup-perturbation";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::Pulse, ExperimentKind::Spectrum, ExperimentKind::Stability,
                 ExperimentKind::WarpedPersistence, ExperimentKind::SemigroupPerturbation})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::InvalidConfig, "unknown experiment kind '" + s + "'");
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::Pulse:
      break;
    case ExperimentKind::Spectrum:
      c.N_theta = 4;
      break;
    case ExperimentKind::Stability:
      c.N_theta = 3;
      c.perturbation.sweep = {1e-3, 2e-3, 4e-3};
      // The explicit potential term leaks O(dt^2) a into h; at dt = 0.05 it
      // rivals the quadratic shift for a ~ 1e-3.
      c.run.T = 2000.0;
      c.run.dt = 0.025;
      break;
    case ExperimentKind::WarpedPersistence:
      c.radius.kind = RadiusKind::SineBump;
      c.radius.omega = 1.0;
      c.deltas = {0.01, 0.02, 0.04};
      c.perturbation.amplitude = 4e-3;
      c.perturbation.shape = "band";
      c.run.T = 3000.0;
      c.run.dt = 0.025;
      c.run.output_stride = 80;
      c.run.dense_until = 0.0;
      break;
    case ExperimentKind::SemigroupPerturbation:
      c.radius.kind = RadiusKind::SineBump;
      c.radius.omega = 1.0;
      c.deltas = {0.04, 0.02};
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

struct Location {
  int line = 1, column = 1;
};

Location locate_offset(const std::string& text, size_t offset) {
  Location loc;
  for (size_t i = 0; i < std::min(offset, text.size()); ++i) {
    if (text[i] == '\n') {
      ++loc.line;
      loc.column = 1;
    } else {
      ++loc.column;
    }
  }
  return loc;
}

// Best-effort position of a nested key: each path element is searched after
// the previous one.
Location locate_key(const std::string& text, const std::vector<std::string>& path) {
  size_t pos = 0;
  for (const auto& k : path) {
    const size_t p = text.find("\"" + k + "\"", pos);
    if (p == std::string::npos) break;
    pos = p;
  }
  return locate_offset(text, pos);
}

class ConfigReader {
 public:
  ConfigReader(const std::string* text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
    Location loc = text_ ? locate_key(*text_, path) : Location{};
    std::string dotted;
    for (const auto& p : path) dotted += (dotted.empty() ? "" : ".") + p;
    throw Error(ErrorKind::InvalidConfig, source_ + ":" + std::to_string(loc.line) + ":" +
                                              std::to_string(loc.column) + ": " +
                                              (dotted.empty() ? "" : "'" + dotted + "': ") + msg);
  }

  void only_keys(const json& obj, const std::vector<std::string>& path,
                 const std::vector<std::string>& allowed) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
        auto p = path;
        p.push_back(it.key());
        fail(p, "unknown key");
      }
    }
  }

  double number(const json& obj, const std::vector<std::string>& path, const std::string& key,
                double fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    auto p = path;
    p.push_back(key);
    if (!v.is_number()) fail(p, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(p, "must be finite");
    return x;
  }

  int integer(const json& obj, const std::vector<std::string>& path, const std::string& key,
              int fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    auto p = path;
    p.push_back(key);
    if (!v.is_number_integer()) fail(p, "expected an integer");
    return v.get<int>();
  }

  std::string string(const json& obj, const std::vector<std::string>& path, const std::string& key,
                     const std::string& fallback) const {
    if (!obj.contains(key)) return fallback;
    auto p = path;
    p.push_back(key);
    if (!obj.at(key).is_string()) fail(p, "expected a string");
    return obj.at(key).get<std::string>();
  }

  bool boolean(const json& obj, const std::vector<std::string>& path, const std::string& key,
               bool fallback) const {
    if (!obj.contains(key)) return fallback;
    auto p = path;
    p.push_back(key);
    if (!obj.at(key).is_boolean()) fail(p, "expected true or false");
    return obj.at(key).get<bool>();
  }

  std::vector<double> numbers(const json& obj, const std::vector<std::string>& path,
                              const std::string& key, const std::vector<double>& fallback) const {
    if (!obj.contains(key)) return fallback;
    auto p = path;
    p.push_back(key);
    const json& v = obj.at(key);
    if (!v.is_array()) fail(p, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail(p, "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  // Runs a validator and re-anchors its message at `path`.
  template <class F>
  void validated(const std::vector<std::string>& path, F&& f) const {
    try {
      f();
    } catch (const Error& e) {
      std::string msg = e.what();
      const std::string prefix = std::string(to_string(ErrorKind::InvalidConfig)) + ": ";
      if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
      fail(path, msg);
    }
  }

 private:
  const std::string* text_;
  std::string source_;
};

ExperimentConfig read_tree(const json& tree, ExperimentKind fallback_kind, const std::string* text,
                           const std::string& source) {
  ConfigReader rd(text, source);
  rd.only_keys(tree, {}, {"kind", "params", "grid", "radius", "deltas", "perturbation", "run",
                          "semigroup", "seed"});
  ExperimentKind kind = fallback_kind;
  if (tree.contains("kind")) {
    const std::string s = rd.string(tree, {}, "kind", "");
    rd.validated({"kind"}, [&] { kind = experiment_kind_from_string(s); });
  }
  ExperimentConfig c = default_config(kind);

  if (tree.contains("params")) {
    const json& p = tree.at("params");
    const std::vector<std::string> path{"params"};
    rd.only_keys(p, path, {"alpha", "gamma", "eps", "R"});
    c.params.alpha = rd.number(p, path, "alpha", c.params.alpha);
    c.params.gamma = rd.number(p, path, "gamma", c.params.gamma);
    c.params.eps = rd.number(p, path, "eps", c.params.eps);
    c.params.R = rd.number(p, path, "R", c.params.R);
  }
  rd.validated({"params"}, [&] { c.params.validate(); });

  if (tree.contains("grid")) {
    const json& g = tree.at("grid");
    const std::vector<std::string> path{"grid"};
    rd.only_keys(g, path, {"L_z", "N_z", "N_theta"});
    if (g.contains("L_z")) c.L_z = rd.number(g, path, "L_z", 0.0);
    if (g.contains("N_z")) c.N_z = rd.integer(g, path, "N_z", 0);
    c.N_theta = rd.integer(g, path, "N_theta", c.N_theta);
  }
  if (c.L_z.has_value() != c.N_z.has_value())
    rd.fail({"grid"}, "L_z and N_z must be given together");
  rd.validated({"grid"}, [&] {
    GridSpec g;
    if (c.L_z) {
      g.L_z = *c.L_z;
      g.N_z = *c.N_z;
    }
    g.N_theta = c.N_theta;
    g.validate();
  });

  if (tree.contains("radius")) {
    const json& r = tree.at("radius");
    const std::vector<std::string> path{"radius"};
    rd.only_keys(r, path, {"kind", "R", "amplitude", "omega"});
    if (r.contains("kind")) {
      const std::string s = rd.string(r, path, "kind", "");
      rd.validated({"radius", "kind"}, [&] { c.radius.kind = radius_kind_from_string(s); });
    }
    c.radius.R = rd.number(r, path, "R", c.radius.R);
    c.radius.amplitude = rd.number(r, path, "amplitude", c.radius.amplitude);
    c.radius.omega = rd.number(r, path, "omega", c.radius.omega);
  }
  rd.validated({"radius"}, [&] { c.radius.validate(); });

  c.deltas = rd.numbers(tree, {}, "deltas", c.deltas);
  for (double d : c.deltas)
    if (!(d >= 0.0) || !(d < 1.0)) rd.fail({"deltas"}, "each delta must lie in [0, 1)");

  if (tree.contains("perturbation")) {
    const json& p = tree.at("perturbation");
    const std::vector<std::string> path{"perturbation"};
    rd.only_keys(p, path, {"amplitude", "sweep", "q_projected", "shape"});
    c.perturbation.amplitude = rd.number(p, path, "amplitude", c.perturbation.amplitude);
    c.perturbation.sweep = rd.numbers(p, path, "sweep", c.perturbation.sweep);
    c.perturbation.q_projected = rd.boolean(p, path, "q_projected", c.perturbation.q_projected);
    c.perturbation.shape = rd.string(p, path, "shape", c.perturbation.shape);
  }
  if (c.perturbation.shape != "smooth" && c.perturbation.shape != "band")
    rd.fail({"perturbation", "shape"}, "expected \"smooth\" or \"band\"");
  if (!(c.perturbation.amplitude >= 0.0))
    rd.fail({"perturbation", "amplitude"}, "must be nonnegative");
  for (double a : c.perturbation.sweep)
    if (!(a > 0.0)) rd.fail({"perturbation", "sweep"}, "amplitudes must be positive");

  if (tree.contains("run")) {
    const json& r = tree.at("run");
    const std::vector<std::string> path{"run"};
    rd.only_keys(r, path, {"T", "dt", "scheme", "output_stride", "dense_until", "output_dir"});
    c.run.T = rd.number(r, path, "T", c.run.T);
    c.run.dt = rd.number(r, path, "dt", c.run.dt);
    if (r.contains("scheme")) {
      const std::string s = rd.string(r, path, "scheme", "");
      rd.validated({"run", "scheme"}, [&] { c.run.scheme = scheme_from_string(s); });
    }
    c.run.output_stride = rd.integer(r, path, "output_stride", c.run.output_stride);
    c.run.dense_until = rd.number(r, path, "dense_until", c.run.dense_until);
    c.run.output_dir = rd.string(r, path, "output_dir", c.run.output_dir);
  }
  if (!(c.run.T > 0.0)) rd.fail({"run", "T"}, "must be positive");
  if (!(c.run.dt > 0.0) || c.run.dt > c.run.T) rd.fail({"run", "dt"}, "must lie in (0, T]");
  if (c.run.output_stride < 1) rd.fail({"run", "output_stride"}, "must be at least 1");
  if (c.run.output_dir.empty()) rd.fail({"run", "output_dir"}, "must not be empty");

  if (tree.contains("semigroup")) {
    const json& s = tree.at("semigroup");
    const std::vector<std::string> path{"semigroup"};
    rd.only_keys(s, path, {"N_z", "L_z", "n_max", "t_min", "t_max", "probes", "norm_trials"});
    c.semigroup.N_z = rd.integer(s, path, "N_z", c.semigroup.N_z);
    c.semigroup.L_z = rd.number(s, path, "L_z", c.semigroup.L_z);
    c.semigroup.n_max = rd.integer(s, path, "n_max", c.semigroup.n_max);
    c.semigroup.t_min = rd.number(s, path, "t_min", c.semigroup.t_min);
    c.semigroup.t_max = rd.number(s, path, "t_max", c.semigroup.t_max);
    c.semigroup.probes = rd.integer(s, path, "probes", c.semigroup.probes);
    c.semigroup.norm_trials = rd.integer(s, path, "norm_trials", c.semigroup.norm_trials);
  }
  rd.validated({"semigroup"}, [&] {
    GridSpec g;
    g.N_z = c.semigroup.N_z;
    g.L_z = c.semigroup.L_z;
    g.validate();
  });
  if (c.semigroup.n_max < 0) rd.fail({"semigroup", "n_max"}, "must be nonnegative");
  if (!(c.semigroup.t_min > 0.0) || !(c.semigroup.t_max >= c.semigroup.t_min))
    rd.fail({"semigroup"}, "need 0 < t_min <= t_max");
  if (c.semigroup.probes < 0 || c.semigroup.norm_trials < 1)
    rd.fail({"semigroup"}, "probes must be >= 0 and norm_trials >= 1");

  if (tree.contains("seed")) {
    const json& s = tree.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      rd.fail({"seed"}, "expected a nonnegative integer");
    c.seed = s.get<unsigned long long>();
  }
  return c;
}

json parse_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const Location loc = locate_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    const size_t colon = msg.find(": ", msg.find("parse error"));
    if (colon != std::string::npos) msg = msg.substr(colon + 2);
    throw Error(ErrorKind::InvalidConfig, source + ":" + std::to_string(loc.line) + ":" +
                                              std::to_string(loc.column) + ": " + msg);
  }
}

}  // namespace

json ExperimentConfig::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  j["params"] = {{"alpha", params.alpha}, {"gamma", params.gamma}, {"eps", params.eps}, {"R", params.R}};
  json g = {{"N_theta", N_theta}};
  if (L_z) g["L_z"] = *L_z;
  if (N_z) g["N_z"] = *N_z;
  j["grid"] = g;
  j["radius"] = {{"kind", to_string(radius.kind)},
                 {"R", radius.R},
                 {"amplitude", radius.amplitude},
                 {"omega", radius.omega}};
  j["deltas"] = deltas;
  j["perturbation"] = {{"amplitude", perturbation.amplitude},
                       {"sweep", perturbation.sweep},
                       {"q_projected", perturbation.q_projected},
                       {"shape", perturbation.shape}};
  j["run"] = {{"T", run.T},
              {"dt", run.dt},
              {"scheme", to_string(run.scheme)},
              {"output_stride", run.output_stride},
              {"dense_until", run.dense_until},
              {"output_dir", run.output_dir}};
  j["semigroup"] = {{"N_z", semigroup.N_z},       {"L_z", semigroup.L_z},
                    {"n_max", semigroup.n_max},   {"t_min", semigroup.t_min},
                    {"t_max", semigroup.t_max},   {"probes", semigroup.probes},
                    {"norm_trials", semigroup.norm_trials}};
  j["seed"] = seed;
  return j;
}

ExperimentConfig config_from_json(const json& tree, ExperimentKind fallback_kind) {
  return read_tree(tree, fallback_kind, nullptr, "<config>");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  return read_tree(parse_text(text, source), ExperimentKind::Pulse, &text, source);
}

ExperimentConfig parse_config(const std::string& text, const json& overrides,
                              const std::string& source) {
  json tree = parse_text(text, source);
  if (!tree.is_object()) {
    ConfigReader(&text, source).fail({}, "expected an object at top level");
  }
  tree.merge_patch(overrides);
  return read_tree(tree, ExperimentKind::Pulse, &text, source);
}

ExperimentConfig load_config(const fs::path& path) {
  return parse_config(read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// Reports

bool Report::passed() const {
  if (failed) return false;
  for (const auto& c : checks)
    if (!c.informational && !c.pass) return false;
  return true;
}

json Report::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  j["passed"] = passed();
  j["failed"] = failed;
  if (failed) j["error"] = error;
  j["seed"] = seed;
  j["seconds"] = seconds;
  j["config"] = config;
  j["derived"] = derived;
  json cs = json::array();
  for (const auto& c : checks) {
    json cj = {{"name", c.name},         {"value", c.value}, {"relation", c.relation},
               {"pass", c.pass},         {"informational", c.informational}};
    if (c.relation == "in") cj["bounds"] = {c.lo, c.hi};
    else cj["threshold"] = c.relation == "<=" ? c.hi : c.lo;
    cs.push_back(cj);
  }
  j["checks"] = cs;
  j["warnings"] = warnings;
  json m = json::array();
  for (const auto& e : manifest) m.push_back({{"file", e.file}, {"sha256", e.sha256}, {"bytes", e.bytes}});
  j["manifest"] = m;
  return j;
}

int thread_cap() {
  if (const char* s = std::getenv("PULSE_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end != s && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::string> verify_manifest(const fs::path& run_dir) {
  const json rep = json::parse(read_text(run_dir / "report.json"));
  std::vector<std::string> bad;
  for (const auto& e : rep.at("manifest")) {
    const fs::path f = run_dir / e.at("file").get<std::string>();
    if (!fs::exists(f) || sha256_file(f) != e.at("sha256").get<std::string>())
      bad.push_back(e.at("file").get<std::string>());
  }
  return bad;
}

namespace {

using Clock = std::chrono::steady_clock;

double json_number(double x) { return std::isfinite(x) ? x : std::nan(""); }

class RunContext {
 public:
  RunContext(const ExperimentConfig& cfg, Report& rep) : rep_(rep), dir_(cfg.run.output_dir) {
    fs::create_directories(dir_);
  }
  const fs::path& dir() const { return dir_; }

  void file(const std::string& rel) {
    const fs::path p = dir_ / rel;
    rep_.manifest.push_back({rel, sha256_file(p), fs::file_size(p)});
  }
  void csv(const std::string& rel, const CsvTable& t) {
    t.write(dir_ / rel);
    file(rel);
  }
  void derive(const std::string& name, double value, const std::string& source) {
    rep_.derived[name] = {{"value", json_number(value)}, {"source", source}};
  }
  void derive(const std::string& name, const json& value, const std::string& source) {
    rep_.derived[name] = {{"value", value}, {"source", source}};
  }
  void at_most(const std::string& name, double v, double hi, bool info = false) {
    rep_.checks.push_back({name, v, "<=", 0.0, hi, v <= hi, info});
  }
  void at_least(const std::string& name, double v, double lo, bool info = false) {
    rep_.checks.push_back({name, v, ">=", lo, 0.0, v >= lo, info});
  }
  void within(const std::string& name, double v, double lo, double hi, bool info = false) {
    rep_.checks.push_back({name, v, "in", lo, hi, v >= lo && v <= hi, info});
  }
  void warn(const std::string& w) { rep_.warnings.push_back(w); }

 private:
  Report& rep_;
  fs::path dir_;
};

GridSpec pulse_grid(const ExperimentConfig& cfg) {
  GridSpec g = cfg.L_z ? GridSpec{*cfg.L_z, *cfg.N_z, 1} : suggest_grid(cfg.params);
  g.N_theta = 1;
  return g;
}

double zero_mode_residual(const ModeOperator& L0, const Field& tau) {
  const VectorXd w = L0.weights();
  const VectorXcd t = tau.mode(0);
  return weighted_norm(L0.apply(t), w) / weighted_norm(t, w);
}

// Pulse, its zero-mode data, and the files describing them.
struct PulseBundle {
  PulseProfile phi;
  RieszProjection proj;
  double zero_residual = 0.0;
};

PulseBundle compute_pulse(const ExperimentConfig& cfg, RunContext& ctx) {
  PulseBundle b;
  b.phi = find_fast_pulse(cfg.params, pulse_grid(cfg));
  const ModeOperator L0 = build_Ln(b.phi, 0, cfg.params.R);
  const Field tau = tangent_vector(b.phi);
  b.zero_residual = zero_mode_residual(L0, tau);
  b.proj = adjoint_zero_mode(L0, tau);

  write_pulse_snapshot(ctx.dir() / "pulse.bin", b.phi);
  ctx.file("pulse.bin");
  CsvTable prof({"z", "phi1", "phi2", "tau1", "tau2", "tau_star1", "tau_star2"});
  for (int i = 0; i < b.phi.grid.N_z; ++i)
    prof.add_row({b.phi.grid.z(i), b.phi.phi1[i], b.phi.phi2[i], b.proj.tau.u1(i, 0).real(),
                  b.proj.tau.u2(i, 0).real(), b.proj.tau_star.u1(i, 0).real(),
                  b.proj.tau_star.u2(i, 0).real()});
  ctx.csv("profile.csv", prof);

  const double c0 = singular_speed(cfg.params.alpha);
  ctx.derive("c", b.phi.c, "pulse.bin");
  ctx.derive("c_singular", c0, "pulse.bin");
  ctx.derive("speed_rel_gap", std::abs(b.phi.c - c0) / c0, "pulse.bin");
  ctx.derive("pulse_residual", b.phi.residual, "pulse.bin");
  ctx.derive("boundary_ratio", boundary_ratio(b.phi), "profile.csv");
  ctx.derive("zero_mode_residual", b.zero_residual, "profile.csv");
  ctx.derive("adjoint_residual", b.proj.adjoint_residual, "profile.csv");
  ctx.derive("grid", json{{"L_z", b.phi.grid.L_z}, {"N_z", b.phi.grid.N_z}}, "pulse.bin");
  return b;
}

void pulse_checks(const PulseBundle& b, const ExperimentConfig& cfg, RunContext& ctx) {
  const double c0 = singular_speed(cfg.params.alpha);
  ctx.at_most("speed_rel_gap", std::abs(b.phi.c - c0) / c0, 0.05);
  ctx.at_most("zero_mode_residual", b.zero_residual, 1e-6);
  ctx.at_most("boundary_ratio", boundary_ratio(b.phi), 1e-8);
}

// ---- spectrum --------------------------------------------------------------

void run_spectrum(const ExperimentConfig& cfg, RunContext& ctx, std::mt19937_64& rng) {
  const PulseBundle b = compute_pulse(cfg, ctx);
  pulse_checks(b, cfg, ctx);
  const Params& p = cfg.params;
  const double sigma = std::min(p.alpha, p.eps * p.gamma);
  const Field tau = tangent_vector(b.phi);

  CsvTable spec({"n", "re", "im", "residual"});
  const SpectralCertificate cert = spectral_certificate(build_Ln(b.phi, 0, p.R), tau);
  for (size_t i = 0; i < cert.eigenvalues.size(); ++i)
    spec.add_row({0.0, cert.eigenvalues[i].real(), cert.eigenvalues[i].imag(), cert.residuals[i]});
  for (int n = 1; n < cfg.N_theta; ++n) {
    const EigenPairs ep = discrete_spectrum(build_Ln(b.phi, n, p.R), 10, cplx(0.0, 0.0));
    for (size_t i = 0; i < ep.values.size(); ++i)
      spec.add_row({double(n), ep.values[i].real(), ep.values[i].imag(), ep.residuals[i]});
  }
  ctx.csv("spectrum.csv", spec);
  ctx.derive("zero_eigenvalue_abs", std::abs(cert.zero_eval), "spectrum.csv");
  ctx.derive("zero_alignment", cert.zero_alignment, "spectrum.csv");
  ctx.derive("beta_hat", cert.beta, "spectrum.csv");
  ctx.at_most("zero_eigenvalue_abs", std::abs(cert.zero_eval), 1e-6);
  ctx.at_least("zero_alignment", cert.zero_alignment, 1.0 - 1e-6);
  ctx.at_least("beta_hat", cert.beta, 1e-12);
  ctx.at_least("spectral_certificate", cert.accepted ? 1.0 : 0.0, 1.0);

  std::vector<double> ks;
  for (int i = 0; i <= 2000; ++i) ks.push_back(-100.0 + 0.1 * i);
  Params pm = b.phi.moving_params();
  const auto curves = essential_spectrum_curves(ks, 8, p.R, pm);
  CsvTable cur({"k", "n", "re_plus", "im_plus", "re_minus", "im_minus"});
  double max_re = -1e300, closed_err = 0.0;
  for (const auto& e : curves) {
    cur.add_row({e.k, double(e.n), e.lam_plus.real(), e.lam_plus.imag(), e.lam_minus.real(),
                 e.lam_minus.imag()});
    max_re = std::max({max_re, e.lam_plus.real(), e.lam_minus.real()});
    if (e.n == 0) closed_err = std::max(closed_err, std::abs(e.lam_plus - lambda_plus_closed_form(e.k, pm)));
  }
  ctx.csv("curves.csv", cur);
  ctx.derive("essential_max_re", max_re, "curves.csv");
  ctx.derive("closed_form_error", closed_err, "curves.csv");
  ctx.at_most("essential_max_re", max_re, -sigma + 1e-10);
  ctx.at_most("closed_form_error", closed_err, 1e-12);

  CsvTable dis({"n", "max_rayleigh", "trials", "seed"});
  double worst = -1e300;
  for (int n = 1; n <= 3; ++n) {
    const unsigned seed = static_cast<unsigned>(rng());
    const DissipativityResult d = dissipativity_check(build_Ln(b.phi, n, p.R), 100, seed);
    dis.add_row({double(n), d.max_rayleigh, double(d.trials), double(d.seed)});
    worst = std::max(worst, d.max_rayleigh);
  }
  ctx.csv("dissipativity.csv", dis);
  ctx.derive("dissipativity_max", worst, "dissipativity.csv");
  ctx.at_most("dissipativity_max", worst, -sigma + 1e-8);

  GridSpec g = b.phi.grid;
  g.N_theta = 1;
  double idem = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Field u = random_field(g, Frame::Moving, rng);
    const Field pu = project_P(u, b.proj);
    const Field ppu = project_P(pu, b.proj);
    const double den = norm_eps(pu, b.proj.metric, p.eps);
    if (den > 0.0) idem = std::max(idem, norm_eps(ppu - pu, b.proj.metric, p.eps) / den);
  }
  ctx.derive("projection_idempotency", idem, "profile.csv");
  ctx.derive("projection_normalization", b.proj.normalization, "profile.csv");
  ctx.at_most("projection_idempotency", idem, 1e-10);
}

// ---- perturbations ---------------------------------------------------------

double front_position(const PulseProfile& phi) {
  Eigen::Index im = 0;
  phi.phi1.maxCoeff(&im);
  return phi.grid.z(static_cast<int>(im));
}

// Random perturbation direction with max |u1| coefficient 1 (after the
// optional Q projection), drawn from the run's generator.
Field draw_perturbation(const PulseBundle& b, int modes, const PerturbationSpec& spec,
                        std::mt19937_64& rng) {
  GridSpec g = b.phi.grid;
  g.N_theta = modes;
  Field w(g, Frame::Moving);
  if (spec.shape == "band") {
    w = random_field(g, Frame::Moving, rng);
  } else {
    std::uniform_real_distribution<double> centre(-40.0, 20.0), width(4.0, 10.0);
    std::normal_distribution<double> coef(0.0, 1.0);
    const double zf = front_position(b.phi);
    for (int n = 0; n < modes; ++n) {
      for (int comp = 0; comp < 2; ++comp) {
        for (int bump = 0; bump < 3; ++bump) {
          const double z0 = zf + centre(rng), s = width(rng);
          const double re = coef(rng), im = coef(rng);
          const cplx a = n == 0 ? cplx(re, 0.0) : cplx(re, im);
          const double scale = comp == 0 ? 1.0 : 0.5;
          for (int i = 0; i < g.N_z; ++i) {
            const double x = (g.z(i) - z0) / s;
            const cplx v = scale * a * std::exp(-0.5 * x * x);
            (comp == 0 ? w.u1 : w.u2)(i, n) += v;
          }
        }
      }
    }
  }
  if (spec.q_projected) {
    w = project_Q(w, b.proj);
  }
  const double m = w.u1.cwiseAbs().maxCoeff();
  if (!(m > 0.0)) throw Error(ErrorKind::CollapsedToZero, "perturbation vanished after projection");
  w *= 1.0 / m;
  return w;
}

Field pulse_state(const PulseProfile& phi, int modes, Frame frame) {
  Field u = pulse_field(phi, modes);
  u.frame = frame;
  return u;
}

// ---- stability -------------------------------------------------------------

struct StabilityShared {
  PulseBundle bundle;
  Field w;
  double beta_hat = 0.0;
};

struct MemberResult {
  double a = 0.0;
  double value = 0.0;  // h_star (stability) or sup dist (warp)
  bool ok = false;
};

MemberResult stability_member(const ExperimentConfig& cfg, const StabilityShared& sh, double a,
                              RunContext& ctx) {
  const PulseBundle& b = sh.bundle;
  const Params& p = cfg.params;
  PulseManifold M(b.phi, b.proj, p.R);
  Field u = pulse_state(b.phi, cfg.N_theta, Frame::Moving);
  u += a * sh.w;
  const double v0 = M.norm21(a * sh.w);

  GridSpec g = b.phi.grid;
  g.N_theta = cfg.N_theta;
  Integrator integ;
  integ.scheme = cfg.run.scheme;
  integ.dt = cfg.run.dt;
  integ.params = b.phi.moving_params();
  integ.params.R = p.R;
  integ.frame = Frame::Moving;
  Evolver ev(g, integ);

  ModulationTracker tracker(M, true);
  CsvTable traj({"t", "norm_u", "norm_u_21", "dist_M"});
  const SurfaceMetric& met = M.metric();
  const int stride = cfg.run.output_stride;
  const double dt = cfg.run.dt, dense = cfg.run.dense_until;
  Observer obs{"stability", 1, [&](double t, const Field& x) {
                 const long k = std::lround(t / dt);
                 if (!(t < dense || k % stride == 0)) return;
                 tracker.observe(t, x);
                 const double d = tracker.samples().empty() || tracker.stopped()
                                      ? std::nan("")
                                      : tracker.samples().back().dist;
                 traj.add_row({t, norm_eps(x, met, p.eps), norm_21(x, met, p.eps), d});
               }};
  const TrajectorySummary sum = integrate(u, cfg.run.T, ev, {obs});
  for (const auto& w : sum.warnings) ctx.warn(w);
  const double consistency = tracker.finalize();

  CsvTable series({"t", "h", "v_norm_21", "dist_M", "hdot_consistency"});
  for (const auto& s : tracker.samples())
    series.add_row({s.t, s.h, s.v_norm21, s.dist, s.hdot_consistency});
  ctx.csv("series.csv", series);
  ctx.csv("trajectory.csv", traj);
  write_field_snapshot(ctx.dir() / "final_state.bin", u, ev.time());
  ctx.file("final_state.bin");

  if (tracker.stopped()) {
    ctx.warn("tracking stopped: " + tracker.stop_reason());
    ctx.at_least("tracking_complete", 0.0, 1.0);
  }
  const DecaySummary ds = fit_decay(tracker.samples(), {0.99, false});
  if (!ds.flag.empty()) ctx.warn(ds.flag);
  const double bound = std::min({p.alpha, sh.beta_hat, p.eps * p.gamma});
  ctx.derive("amplitude", a, "series.csv");
  ctx.derive("v0_norm_21", v0, "series.csv");
  ctx.derive("xi_hat", ds.xi_hat, "series.csv");
  ctx.derive("C_hat", ds.C_hat, "series.csv");
  ctx.derive("fit_r2", ds.r2, "series.csv");
  ctx.derive("fit_window", json{ds.window_start, ds.window_end}, "series.csv");
  ctx.derive("h_star", ds.h_star, "series.csv");
  ctx.derive("h_half", ds.h_half, "series.csv");
  ctx.derive("C2_estimate", v0 > 0 ? std::abs(ds.h_star) / v0 : std::nan(""), "series.csv");
  ctx.derive("hdot_consistency", consistency, "series.csv");
  ctx.derive("xi_bound", bound, "../spectrum.csv");
  ctx.derive("stiffness", sum.stiffness, "trajectory.csv");
  ctx.at_least("fit_r2", ds.r2, 0.99);
  ctx.at_least("h_converged", ds.cauchy_ok ? 1.0 : 0.0, 1.0);
  ctx.at_most("hdot_consistency", consistency, 0.05);
  ctx.at_most("xi_hat_over_bound", ds.xi_hat / bound, 1.1, true);
  return {a, ds.h_star, ds.reliable && !tracker.stopped()};
}

// ---- warped persistence ----------------------------------------------------

struct WarpShared {
  PulseBundle bundle;
  Field w;  // off-manifold direction
};

// Sine-bump frequency snapped to the nearest value periodic on [-L_z, L_z).
double periodic_omega(double omega, double L_z) {
  const double m = std::max(1.0, std::round(omega * L_z / std::numbers::pi));
  return m * std::numbers::pi / L_z;
}

RadiusFamily warp_family(const ExperimentConfig& cfg, double delta, double L_z) {
  RadiusFamily f = cfg.radius;
  f.R = cfg.params.R;
  if (delta == 0.0) {
    f.kind = RadiusKind::Constant;
    f.amplitude = 0.0;
    return f;
  }
  if (f.kind == RadiusKind::Constant) f.kind = RadiusKind::SineBump;
  if (f.kind == RadiusKind::SineBump) f.omega = periodic_omega(f.omega, L_z);
  // Scale the amplitude so that the analytic C^2 distance equals delta.
  f.amplitude = 1.0;
  f.amplitude = delta / f.analytic_delta();
  f.validate();
  return f;
}

struct DistRun {
  double sup = 0.0, first = 0.0, last = 0.0;
  bool finite = true;
};

DistRun warp_trajectory(const ExperimentConfig& cfg, const PulseManifold& M, const SurfaceMetric& met,
                        Field u, const std::string& csv, RunContext& ctx) {
  GridSpec g = M.grid();
  g.N_theta = u.modes();
  Integrator integ;
  integ.scheme = cfg.run.scheme;
  integ.dt = cfg.run.dt;
  integ.params = cfg.params;
  integ.params.c = 0.0;
  integ.frame = Frame::Static;
  integ.metric = met;
  Evolver ev(g, integ);
  CsvTable traj({"t", "norm_u", "norm_u_21", "dist_M"});
  DistRun r;
  const double eps = cfg.params.eps;
  Observer obs{"dist", cfg.run.output_stride, [&](double t, const Field& x) {
                 const double d = dist_to_manifold(x, M).d;
                 traj.add_row({t, norm_eps(x, met, eps), norm_21(x, met, eps), d});
                 if (!std::isfinite(d)) r.finite = false;
                 if (traj.rows() == 1) r.first = d;
                 r.last = d;
                 r.sup = std::max(r.sup, d);
               }};
  const TrajectorySummary sum = integrate(u, cfg.run.T, ev, {obs});
  for (const auto& w : sum.warnings) ctx.warn(w);
  ctx.csv(csv, traj);
  return r;
}

MemberResult warp_member(const ExperimentConfig& cfg, const WarpShared& sh, double delta,
                         RunContext& ctx) {
  const PulseBundle& b = sh.bundle;
  PulseManifold M(b.phi, b.proj, cfg.params.R);
  const RadiusFamily fam = warp_family(cfg, delta, b.phi.grid.L_z);
  const SurfaceMetric met = build_metric(fam, b.phi.grid);
  const double d_meas = c2_distance(met);
  ctx.derive("delta", delta, "radius family");
  ctx.derive("delta_sampled", d_meas, "radius family");
  ctx.derive("radius", json{{"kind", to_string(fam.kind)}, {"amplitude", fam.amplitude}, {"omega", fam.omega}},
             "radius family");
  const double eta = 0.1 * M.phi_norm21();

  const DistRun on = warp_trajectory(cfg, M, met, pulse_state(b.phi, 1, Frame::Static),
                                     "trajectory.csv", ctx);
  ctx.derive("sup_dist", on.sup, "trajectory.csv");
  ctx.derive("final_dist", on.last, "trajectory.csv");
  ctx.derive("eta_tube", eta, "pulse.bin");
  ctx.at_least("dist_finite", on.finite ? 1.0 : 0.0, 1.0);
  ctx.at_most("sup_dist_over_tube", on.sup / eta, 1.0);

  if (cfg.perturbation.amplitude > 0.0) {
    Field u = pulse_state(b.phi, 1, Frame::Static);
    Field w = sh.w;
    w.frame = Frame::Static;
    u += cfg.perturbation.amplitude * w;
    const DistRun off = warp_trajectory(cfg, M, met, u, "trajectory_off.csv", ctx);
    ctx.derive("off_initial_dist", off.first, "trajectory_off.csv");
    ctx.derive("off_final_dist", off.last, "trajectory_off.csv");
    ctx.derive("off_sup_dist", off.sup, "trajectory_off.csv");
    ctx.at_least("off_dist_finite", off.finite ? 1.0 : 0.0, 1.0);
    // Decay to the plateau: the final distance is a small fraction of the
    // start and comparable with the on-manifold level.
    ctx.at_most("off_final_over_initial", off.last / off.first, 0.5);
    ctx.at_most("off_final_over_plateau", on.sup > 0 ? off.last / std::max(on.sup, 1e-300) : 0.0, 2.0,
                delta == 0.0);
  }
  return {delta, on.sup, on.finite && on.sup <= eta};
}

// ---- semigroup perturbation ------------------------------------------------

void run_semigroup(const ExperimentConfig& cfg, RunContext& ctx, std::mt19937_64& rng) {
  const SemigroupSpec& s = cfg.semigroup;
  GridSpec g{s.L_z, s.N_z, s.n_max + 1};
  const SurfaceMetric ref = constant_metric(cfg.params.R, g);
  CsvTable tab({"delta", "n", "t", "diff", "ratio", "probe_diff"});
  CsvTable eq({"delta", "ratio_min", "ratio_max", "trials", "seed"});
  std::vector<SemigroupDiffResult> results;
  double sup_ratio = 0.0;
  for (double delta : cfg.deltas) {
    const RadiusFamily fam = warp_family(cfg, delta, s.L_z);
    const SurfaceMetric met = build_metric(fam, g);
    const unsigned seed = static_cast<unsigned>(rng());
    SemigroupDiffResult r =
        semigroup_difference(ref, met, g, cfg.params, s.n_max, s.t_min, s.t_max, s.probes, seed);
    for (const auto& row : r.rows)
      tab.add_row({delta, double(row.n), row.t, row.diff, row.ratio, row.probe_diff});
    if (delta > 0.0) sup_ratio = std::max(sup_ratio, r.sup_ratio);
    results.push_back(std::move(r));
    if (delta <= 1.0 / 16.0) {
      const unsigned s2 = static_cast<unsigned>(rng());
      const RatioStats st = norm_equivalence(met, ref, g, cfg.params.eps, s.norm_trials, s2);
      eq.add_row({delta, st.min, st.max, double(st.trials), double(st.seed)});
      ctx.within("norm_equivalence_min[" + format_double(delta) + "]", st.min, 0.5, 2.0);
      ctx.within("norm_equivalence_max[" + format_double(delta) + "]", st.max, 0.5, 2.0);
    }
  }
  ctx.csv("semigroup.csv", tab);
  ctx.csv("norm_equivalence.csv", eq);
  ctx.derive("sup_ratio", sup_ratio, "semigroup.csv");
  ctx.at_most("sup_ratio", sup_ratio, 10.0);

  // Pairs (delta, delta/2): the raw difference must halve within 25%.
  json halves = json::array();
  for (size_t i = 0; i < results.size(); ++i) {
    for (size_t j = 0; j < results.size(); ++j) {
      const double d1 = cfg.deltas[i], d2 = cfg.deltas[j];
      if (!(d2 > 0.0) || std::abs(d1 - 2.0 * d2) > 1e-12 * d1) continue;
      double lo = 1e300, hi = 0.0;
      for (size_t r = 0; r < results[i].rows.size(); ++r) {
        const double a = results[i].rows[r].diff, b = results[j].rows[r].diff;
        if (!(b > 0.0)) continue;
        lo = std::min(lo, a / b);
        hi = std::max(hi, a / b);
      }
      halves.push_back({{"delta", d1}, {"min_ratio", lo}, {"max_ratio", hi}});
      const std::string tag = "[" + format_double(d1) + "/" + format_double(d2) + "]";
      ctx.within("halving_min" + tag, lo / 2.0, 0.75, 1.25);
      ctx.within("halving_max" + tag, hi / 2.0, 0.75, 1.25);
    }
  }
  ctx.derive("halving", halves, "semigroup.csv");
}

// ---- orchestration ---------------------------------------------------------

void write_report(const Report& rep, const fs::path& dir) {
  write_text(dir / "report.json", rep.to_json().dump(2) + "\n");
}

// Runs fn(i) for i in [0, n) on at most thread_cap() workers.
void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min<size_t>(n, static_cast<size_t>(thread_cap()));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (size_t k = 0; k < workers; ++k)
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::string member_dir(const std::string& prefix, double v) {
  std::string s = format_double(v);
  return prefix + "_" + s;
}

// Log-log slope of values against parameters (positive entries only).
LineFit scaling_fit(const std::vector<MemberResult>& rs) {
  std::vector<double> x, y;
  for (const auto& r : rs) {
    if (r.a > 0.0 && std::abs(r.value) > 0.0) {
      x.push_back(std::log(r.a));
      y.push_back(std::log(std::abs(r.value)));
    }
  }
  if (x.size() < 2) return {std::nan(""), std::nan(""), 0.0};
  return fit_line(x, y);
}

template <class Shared, class Member>
void run_sweep(const ExperimentConfig& cfg, RunContext& ctx, Report& rep, const Shared& shared,
               const std::vector<double>& values, const std::string& prefix, Member member,
               const std::string& exponent_name, double expect) {
  std::vector<Report> reps(values.size());
  std::vector<MemberResult> results(values.size());
  parallel_for(values.size(), [&](size_t i) {
    ExperimentConfig mc = cfg;
    mc.run.output_dir = (fs::path(cfg.run.output_dir) / member_dir(prefix, values[i])).string();
    Report& r = reps[i];
    r.kind = cfg.kind;
    r.config = mc.to_json();
    r.seed = cfg.seed;
    const auto t0 = Clock::now();
    try {
      RunContext mctx(mc, r);
      results[i] = member(mc, shared, values[i], mctx);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    fs::create_directories(mc.run.output_dir);
    write_report(r, mc.run.output_dir);
  });

  json members = json::array();
  for (size_t i = 0; i < values.size(); ++i) {
    const std::string sub = member_dir(prefix, values[i]);
    members.push_back({{"value", values[i]}, {"dir", sub}, {"passed", reps[i].passed()},
                       {"result", json_number(results[i].value)}});
    for (const auto& e : reps[i].manifest) rep.manifest.push_back({sub + "/" + e.file, e.sha256, e.bytes});
    ctx.file(sub + "/report.json");
    ctx.at_least("member_passed[" + sub + "]", reps[i].passed() ? 1.0 : 0.0, 1.0);
    if (reps[i].failed) rep.warnings.push_back(sub + ": " + reps[i].error);
  }
  ctx.derive("members", members, "member reports");

  std::vector<MemberResult> pos;
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i] > 0.0 && !reps[i].failed) pos.push_back(results[i]);
  CsvTable sc({"parameter", "value"});
  for (const auto& r : pos) sc.add_row({r.a, r.value});
  ctx.csv("scaling.csv", sc);
  if (pos.size() >= 2) {
    const LineFit f = scaling_fit(pos);
    ctx.derive(exponent_name, f.slope, "scaling.csv");
    ctx.within(exponent_name, f.slope, expect - 0.3, expect + 0.3);
  } else {
    rep.warnings.push_back("scaling exponent needs at least two positive sweep values");
  }
}

void run_kind(const ExperimentConfig& cfg, RunContext& ctx, Report& rep) {
  std::mt19937_64 rng(cfg.seed);
  switch (cfg.kind) {
    case ExperimentKind::Pulse: {
      const PulseBundle b = compute_pulse(cfg, ctx);
      pulse_checks(b, cfg, ctx);
      break;
    }
    case ExperimentKind::Spectrum:
      run_spectrum(cfg, ctx, rng);
      break;
    case ExperimentKind::Stability: {
      StabilityShared sh;
      sh.bundle = compute_pulse(cfg, ctx);
      const SpectralCertificate cert =
          spectral_certificate(build_Ln(sh.bundle.phi, 0, cfg.params.R), tangent_vector(sh.bundle.phi));
      sh.beta_hat = cert.beta;
      CsvTable spec({"n", "re", "im", "residual"});
      for (size_t i = 0; i < cert.eigenvalues.size(); ++i)
        spec.add_row({0.0, cert.eigenvalues[i].real(), cert.eigenvalues[i].imag(), cert.residuals[i]});
      ctx.csv("spectrum.csv", spec);
      ctx.derive("beta_hat", cert.beta, "spectrum.csv");
      sh.w = draw_perturbation(sh.bundle, cfg.N_theta, cfg.perturbation, rng);
      if (cfg.perturbation.sweep.empty()) {
        stability_member(cfg, sh, cfg.perturbation.amplitude, ctx);
      } else {
        run_sweep(cfg, ctx, rep, sh, cfg.perturbation.sweep, "a", stability_member,
                  "h_star_exponent", 2.0);
      }
      break;
    }
    case ExperimentKind::WarpedPersistence: {
      WarpShared sh;
      sh.bundle = compute_pulse(cfg, ctx);
      PerturbationSpec spec = cfg.perturbation;
      sh.w = draw_perturbation(sh.bundle, 1, spec, rng);
      std::vector<double> deltas = cfg.deltas;
      if (deltas.empty()) deltas.push_back(cfg.radius.analytic_delta());
      if (deltas.size() == 1) {
        warp_member(cfg, sh, deltas[0], ctx);
      } else {
        run_sweep(cfg, ctx, rep, sh, deltas, "delta", warp_member, "sup_dist_exponent", 1.0);
      }
      break;
    }
    case ExperimentKind::SemigroupPerturbation:
      run_semigroup(cfg, ctx, rng);
      break;
  }
}

}  // namespace

Report run(const ExperimentConfig& cfg) {
  Report rep;
  rep.kind = cfg.kind;
  rep.config = cfg.to_json();
  rep.seed = cfg.seed;
  const auto t0 = Clock::now();
  fs::create_directories(cfg.run.output_dir);
  try {
    RunContext ctx(cfg, rep);
    run_kind(cfg, ctx, rep);
  } catch (const std::exception& e) {
    rep.failed = true;
    rep.error = e.what();
  }
  rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  write_report(rep, cfg.run.output_dir);
  return rep;
}

}  // namespace pulselab
