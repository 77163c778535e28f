// Acceptance run: one PASS/FAIL line per criterion. Experiments go through the
// lab harness so every number printed here also lands in a report.json under
// the output directory (first argument, default "acceptance-out").

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pulselab/errors.hpp"
#include "pulselab/evolve.hpp"
#include "pulselab/io.hpp"
#include "pulselab/lab.hpp"
#include "pulselab/linalg.hpp"
#include "pulselab/pulse.hpp"
#include "pulselab/spectral.hpp"

using namespace pulselab;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// Folds the named checks of a report (prefix match) into the outcome.
void require_checks(Outcome& o, const Report& rep, const std::vector<std::string>& prefixes) {
  if (rep.failed) {
    o.require(false, "run error: " + rep.error);
    return;
  }
  for (const auto& pre : prefixes) {
    bool seen = false;
    for (const auto& c : rep.checks) {
      if (c.informational || c.name.rfind(pre, 0) != 0) continue;
      seen = true;
      o.detail << " " << c.name << "=" << format_double(c.value);
      o.require(c.pass, c.name);
    }
    o.require(seen, "missing check " + pre);
  }
}

// Member reports of a sweep, checked in full.
void require_members(Outcome& o, const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory() || !fs::exists(e.path() / "report.json")) continue;
    const json r = json::parse(read_text(e.path() / "report.json"));
    for (const auto& c : r.at("checks")) {
      if (c.at("informational").get<bool>()) continue;
      if (!c.at("pass").get<bool>())
        o.require(false, e.path().filename().string() + "/" + c.at("name").get<std::string>() + "=" +
                             format_double(c.at("value").get<double>()));
    }
  }
}

ExperimentConfig config(ExperimentKind k, const fs::path& dir) {
  ExperimentConfig c = default_config(k);
  c.run.output_dir = dir.string();
  return c;
}

struct Acceptance {
  fs::path root;
  std::vector<std::pair<int, bool>> verdicts;

  void criterion(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      body(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("error: ") + e.what());
    }
    std::printf("%s criterion %d (%s):%s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
                o.detail.str().c_str(), seconds_since(t0));
    std::fflush(stdout);
    verdicts.emplace_back(id, o.pass);
  }
};

}  // namespace

int main(int argc, char** argv) {
  Acceptance acc;
  acc.root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance-out");
  fs::remove_all(acc.root);
  fs::create_directories(acc.root);

  Report spectrum;
  PulseProfile phi;

  acc.criterion(1, "fast-pulse speed", [&](Outcome& o) {
    const auto t0 = Clock::now();
    const Report rep = run(config(ExperimentKind::Pulse, acc.root / "pulse"));
    const double secs = seconds_since(t0);
    require_checks(o, rep, {"speed_rel_gap"});
    phi = read_pulse_snapshot(acc.root / "pulse" / "pulse.bin");
    o.detail << " N_z=" << phi.grid.N_z << " runtime=" << format_double(secs) << "s";
    o.require(secs < 60.0, "runtime under one minute");

    const double c0 = singular_speed(phi.params.alpha);
    const std::vector<PulseProfile> seq = continue_in_eps(phi.params, {1e-3, 5e-4, 2.5e-4});
    double prev = 1e300;
    for (const auto& p : seq) {
      const double gap = std::abs(p.c - c0);
      o.detail << " gap(" << format_double(p.params.eps) << ")=" << format_double(gap);
      o.require(gap < prev, "gap shrinks");
      prev = gap;
    }
  });

  acc.criterion(2, "zero mode", [&](Outcome& o) {
    spectrum = run(config(ExperimentKind::Spectrum, acc.root / "spectrum"));
    require_checks(o, spectrum,
                   {"zero_mode_residual", "zero_eigenvalue_abs", "zero_alignment", "beta_hat",
                    "spectral_certificate"});
  });

  acc.criterion(3, "essential spectrum", [&](Outcome& o) {
    require_checks(o, spectrum, {"essential_max_re", "closed_form_error"});
  });

  acc.criterion(4, "mode dissipativity", [&](Outcome& o) {
    require_checks(o, spectrum, {"dissipativity_max"});
  });

  acc.criterion(5, "linearized decay", [&](Outcome& o) {
    const auto t0 = Clock::now();
    const ModeOperator L0 = build_Ln(phi, 0, phi.params.R);
    const Field tau = tangent_vector(phi);
    const RieszProjection P = adjoint_zero_mode(L0, tau);
    const SpectralCertificate cert = spectral_certificate(L0, tau);
    const double rate = std::min({phi.params.alpha, cert.beta, phi.params.sigma()});
    GridSpec g = phi.grid;
    g.N_theta = 3;
    std::mt19937_64 rng(5);
    const Field v0 = project_Q(random_field(g, Frame::Moving, rng), P);
    DecayProbeOptions opt;
    opt.T = 4000.0;
    opt.dt = 0.1;
    const DecayProbe q = semigroup_decay_probe(phi, P, v0, opt);
    o.detail << " sigma_hat=" << format_double(q.sigma_hat) << " bound=" << format_double(0.9 * rate)
             << " r2=" << format_double(q.r2);
    o.require(q.sigma_hat >= 0.9 * rate, "sigma_hat >= 0.9 min(alpha, beta, eps gamma)");
    opt.T = 1000.0;
    const DecayProbe p = semigroup_decay_probe(phi, P, P.tau, opt);
    double drift = 0.0;
    for (double n : p.norm21) drift = std::max(drift, std::abs(n / p.norm21.front() - 1.0));
    o.detail << " P_drift=" << format_double(drift);
    o.require(drift <= 1e-6, "P-range data constant");
    const double secs = seconds_since(t0);
    o.require(secs < 300.0, "runtime under five minutes");
  });

  acc.criterion(6, "nonlinear orbital stability", [&](Outcome& o) {
    const fs::path dir = acc.root / "stability";
    const Report rep = run(config(ExperimentKind::Stability, dir));
    require_checks(o, rep, {"member_passed", "h_star_exponent"});
    require_members(o, dir);
  });

  acc.criterion(7, "warped persistence", [&](Outcome& o) {
    const fs::path dir = acc.root / "warp";
    const Report rep = run(config(ExperimentKind::WarpedPersistence, dir));
    require_checks(o, rep, {"member_passed", "sup_dist_exponent"});
    require_members(o, dir);
  });

  Report semigroup;
  acc.criterion(8, "semigroup perturbation", [&](Outcome& o) {
    semigroup = run(config(ExperimentKind::SemigroupPerturbation, acc.root / "semigroup"));
    require_checks(o, semigroup, {"sup_ratio", "halving_min", "halving_max"});
  });

  acc.criterion(9, "norm equivalence", [&](Outcome& o) {
    require_checks(o, semigroup, {"norm_equivalence_min", "norm_equivalence_max"});
  });

  acc.criterion(10, "solver quality", [&](Outcome& o) {
    require_checks(o, spectrum, {"projection_idempotency"});

    // Mode leakage of the linearization.
    GridSpec g = phi.grid;
    g.N_theta = 3;
    std::vector<ModeOperator> ops;
    for (int n = 0; n < 3; ++n) ops.push_back(build_Ln(phi, n, phi.params.R));
    std::mt19937_64 rng(1);
    double leak = 0.0;
    for (int n = 0; n < 3; ++n) {
      Field u(g, Frame::Moving);
      u.u1.col(n) = random_band_limited(g, rng, n != 0);
      u.u2.col(n) = random_band_limited(g, rng, n != 0);
      const Field Lu = apply_modes(ops, u);
      for (int m = 0; m < 3; ++m)
        if (m != n) leak = std::max({leak, Lu.u1.col(m).cwiseAbs().maxCoeff(), Lu.u2.col(m).cwiseAbs().maxCoeff()});
    }
    o.detail << " leakage=" << format_double(leak);
    o.require(leak == 0.0, "mode leakage");

    // Frame equivalence at t = 5.
    const Field u0 = pulse_field(phi);
    Params ps = phi.params;
    ps.c = 0.0;
    double frame_err = 0.0;
    for (Scheme s : {Scheme::ImexTheta, Scheme::EtdRk2}) {
      Integrator st;
      st.scheme = s;
      st.dt = 0.01;
      st.params = ps;
      st.frame = Frame::Static;
      Integrator mv = st;
      mv.params = phi.moving_params();
      mv.frame = Frame::Moving;
      Field a = u0;
      a.frame = Frame::Static;
      Evolver es(phi.grid, st), em(phi.grid, mv);
      integrate(a, 5.0, es, {});
      Field b = u0;
      integrate(b, 5.0, em, {});
      Field shifted = translate(b, phi.c * 5.0);
      shifted.frame = Frame::Static;
      frame_err = std::max(frame_err, (a - shifted).max_abs());
    }
    o.detail << " frame_err=" << format_double(frame_err);
    o.require(frame_err <= 1e-4, "frame equivalence");

    // Richardson order on a short box with the pulse parameters.
    GridSpec box;
    box.N_z = 64;
    box.L_z = 8.0 * std::numbers::pi;
    box.N_theta = 2;
    std::mt19937_64 rng2(3);
    const Field w0 = cplx(0.8) * random_field(box, Frame::Static, rng2);
    for (Scheme s : {Scheme::ImexTheta, Scheme::EtdRk2}) {
      Field sol[3];
      for (int r = 0; r < 3; ++r) {
        Integrator I;
        I.scheme = s;
        I.dt = 0.05 / (1 << r);
        I.params = ps;
        I.frame = Frame::Static;
        Evolver ev(box, I);
        sol[r] = w0;
        integrate(sol[r], 1.0, ev, {});
      }
      const double order = std::log2((sol[0] - sol[1]).max_abs() / (sol[1] - sol[2]).max_abs());
      o.detail << " order(" << to_string(s) << ")=" << format_double(order);
      o.require(std::abs(order - 2.0) <= 0.3, "second order");
    }
  });

  int failed = 0;
  for (const auto& [id, ok] : acc.verdicts) failed += ok ? 0 : 1;
  std::printf("%d of %zu criteria passed\n", int(acc.verdicts.size()) - failed, acc.verdicts.size());
  return failed == 0 ? 0 : 1;
}
