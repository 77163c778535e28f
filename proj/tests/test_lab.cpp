#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <string>

#include <sys/wait.h>

#include "fixtures.hpp"
#include "pulselab/errors.hpp"
#include "pulselab/io.hpp"
#include "pulselab/lab.hpp"

using namespace pulselab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pulselab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string error_message(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
    return e.what();
  }
  FAIL("expected InvalidConfig");
  return {};
}

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs the command line tool with stdout and stderr captured into one file.
CliResult cli(const std::string& args, const fs::path& dir) {
  const char* exe = std::getenv("PULSE_LAB_EXE");
  REQUIRE_MESSAGE(exe != nullptr, "PULSE_LAB_EXE is not set");
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + exe + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(log);
  return r;
}

}  // namespace

TEST_SUITE("lab") {

TEST_CASE("config defaults and round trip") {
  const ExperimentConfig c = parse_config("{}");
  CHECK(c.kind == ExperimentKind::Pulse);
  CHECK(c.params.alpha == 0.1);
  CHECK(c.params.gamma == 1.0);
  CHECK(c.params.eps == 1e-3);
  CHECK_FALSE(c.L_z.has_value());
  const ExperimentConfig w = parse_config(R"({"kind": "warped-persistence"})");
  CHECK(w.deltas.size() == 3);
  CHECK(w.radius.kind == RadiusKind::SineBump);
  for (ExperimentKind k : {ExperimentKind::Pulse, ExperimentKind::Spectrum, ExperimentKind::Stability,
                           ExperimentKind::WarpedPersistence, ExperimentKind::SemigroupPerturbation}) {
    CHECK(experiment_kind_from_string(to_string(k)) == k);
    const ExperimentConfig d = default_config(k);
    const ExperimentConfig back = config_from_json(d.to_json(), ExperimentKind::Pulse);
    CHECK(back.to_json() == d.to_json());
  }
}

TEST_CASE("config errors are anchored to a line and column") {
  const std::string unknown = "{\n  \"params\": {\n    \"alpah\": 0.2\n  }\n}\n";
  const std::string m1 = error_message(unknown);
  CHECK(m1.find("cfg.json:3:5") != std::string::npos);
  CHECK(m1.find("params.alpah") != std::string::npos);

  const std::string malformed = "{\n  \"params\": {\n    \"eps\": 0.01,\n  }\n}\n";
  const std::string m2 = error_message(malformed);
  CHECK(std::regex_search(m2, std::regex("cfg\\.json:4:[0-9]+: ")));

  const std::string bad_value = "{\n  \"params\": {\"eps\": -1}\n}\n";
  CHECK(error_message(bad_value).find("cfg.json:2:") != std::string::npos);
  CHECK(error_message(R"({"kind": "nonsense"})").find("cfg.json:1:") != std::string::npos);
}

TEST_CASE("overrides merge into the file tree") {
  const std::string text = R"({"params": {"eps": 0.01, "alpha": 0.2}, "run": {"T": 5}})";
  const json over = {{"params", {{"eps", 0.02}}}, {"run", {{"dt", 0.01}}}};
  const ExperimentConfig c = parse_config(text, over, "f.json");
  CHECK(c.params.eps == 0.02);
  CHECK(c.params.alpha == 0.2);
  CHECK(c.run.T == 5.0);
  CHECK(c.run.dt == 0.01);
}

TEST_CASE("snapshots round trip") {
  const fs::path dir = scratch("snap");
  const PulseProfile& phi = fixtures::pulse(1e-2);
  write_pulse_snapshot(dir / "p.bin", phi);
  const PulseProfile q = read_pulse_snapshot(dir / "p.bin");
  CHECK(q.c == phi.c);
  CHECK(q.params.eps == phi.params.eps);
  CHECK(q.grid.N_z == phi.grid.N_z);
  CHECK((q.phi1 - phi.phi1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.phi2 - phi.phi2).cwiseAbs().maxCoeff() == 0.0);

  GridSpec g = phi.grid;
  g.N_theta = 3;
  std::mt19937_64 rng(1);
  const Field u = random_field(g, Frame::Moving, rng);
  write_field_snapshot(dir / "u.bin", u, 12.5);
  double t = 0.0;
  const Field v = read_field_snapshot(dir / "u.bin", &t);
  CHECK(t == 12.5);
  CHECK(v.frame == Frame::Moving);
  CHECK((u - v).max_abs() == 0.0);
}

TEST_CASE("csv formatting and hashing") {
  CsvTable t({"a", "b"});
  t.add_row({0.1, 1e-300});
  t.add_row({-2.0, 3.0});
  CHECK(t.str() == "a,b\n0.1,1e-300\n-2,3\n");
  CHECK_THROWS(t.add_row({1.0}));
  CHECK(format_double(0.001) == "0.001");
  CHECK(std::stod(format_double(0.1 + 0.2)) == 0.1 + 0.2);
  CHECK(sha256_bytes("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_bytes("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("runs are reproducible and their manifest verifies") {
  const fs::path root = scratch("determinism");
  json tree = {{"kind", "semigroup-perturbation"},
               {"params", {{"eps", 0.01}}},
               {"semigroup", {{"N_z", 64}, {"n_max", 1}, {"probes", 2}, {"norm_trials", 5}}}};
  std::string csv[2], eq[2];
  for (int r = 0; r < 2; ++r) {
    tree["run"]["output_dir"] = (root / ("run" + std::to_string(r))).string();
    const ExperimentConfig c = config_from_json(tree, ExperimentKind::Pulse);
    const Report rep = run(c);
    CHECK_FALSE(rep.failed);
    CHECK(fs::exists(fs::path(c.run.output_dir) / "report.json"));
    csv[r] = read_text(fs::path(c.run.output_dir) / "semigroup.csv");
    eq[r] = read_text(fs::path(c.run.output_dir) / "norm_equivalence.csv");
  }
  CHECK(csv[0] == csv[1]);
  CHECK(eq[0] == eq[1]);

  const fs::path dir = root / "run0";
  CHECK(verify_manifest(dir).empty());
  {
    std::ofstream f(dir / "semigroup.csv", std::ios::app);
    f << "tampered\n";
  }
  const auto bad = verify_manifest(dir);
  REQUIRE(bad.size() == 1);
  CHECK(bad.front().find("semigroup.csv") != std::string::npos);
}

TEST_CASE("command line: validate-config") {
  const fs::path dir = scratch("cli_validate");
  write_text(dir / "bad.json", "{\n  \"run\": {\"T\": 10,,}\n}\n");
  const CliResult bad = cli("validate-config \"" + (dir / "bad.json").string() + "\"", dir);
  CHECK(bad.code == 1);
  CHECK(bad.out.find("bad.json:2:") != std::string::npos);
  write_text(dir / "good.json", R"({"kind": "spectrum"})");
  const CliResult good = cli("validate-config \"" + (dir / "good.json").string() + "\"", dir);
  CHECK(good.code == 0);
  CHECK(cli("no-such-command", dir).code == 1);
}

TEST_CASE("command line: pulse passes at eps 1e-3 and fails the speed gap at eps 1e-2") {
  const fs::path dir = scratch("cli_pulse");
  const CliResult ok =
      cli("pulse --alpha 0.1 --eps 1e-3 --gamma 1 -o \"" + (dir / "a").string() + "\"", dir);
  MESSAGE(ok.out);
  CHECK(ok.code == 0);
  CHECK(fs::exists(dir / "a" / "pulse.bin"));
  CHECK(fs::exists(dir / "a" / "report.json"));
  CHECK(fs::exists(dir / "a" / "profile.csv"));
  const json rep = json::parse(read_text(dir / "a" / "report.json"));
  CHECK(rep.at("passed").get<bool>());

  const CliResult gap = cli("pulse --eps 1e-2 -o \"" + (dir / "b").string() + "\"", dir);
  CHECK(gap.code == 2);
  CHECK(gap.out.find("FAIL") != std::string::npos);
  CHECK(fs::exists(dir / "b" / "report.json"));
}

TEST_CASE("command line: warp delta sweep writes member directories") {
  const fs::path dir = scratch("cli_warp");
  const fs::path out = dir / "w";
  const CliResult r = cli("warp --eps 1e-2 --T 10 --dt 0.05 --amplitude 0 --delta-sweep 0.01,0.02,0.04 -o \"" +
                              out.string() + "\"",
                          dir);
  MESSAGE(r.out);
  CHECK(r.code != 1);
  for (const char* d : {"delta_0.01", "delta_0.02", "delta_0.04"}) {
    CHECK(fs::exists(out / d / "report.json"));
    CHECK(fs::exists(out / d / "trajectory.csv"));
  }
  CHECK(fs::exists(out / "scaling.csv"));
  CHECK(verify_manifest(out).empty());
}

}  // TEST_SUITE
