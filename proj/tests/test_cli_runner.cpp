#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "vortexflow/cli_runner.hpp"
#include "vortexflow/error.hpp"

using namespace vortexflow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vortexflow_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path path = dir / "config.json";
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

json summary(const fs::path& dir) { return json::parse(slurp(dir / "summary.json")); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

ErrorKind parse_error_kind(const std::string& text) {
  try {
    parse_config(json::parse(text));
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error for " << text);
  return ErrorKind::InvalidArgument;
}

int run_text(const std::string& name, const std::string& text, bool strict = false) {
  const fs::path dir = scratch(name);
  RunOptions opts;
  opts.strict = strict;
  opts.output_dir = (dir / "out").string();
  std::ostringstream err;
  return run(write_config(dir, text), opts, err);
}

const std::string kPairQ = "0.3333333333333333";
const std::string kPvRun = R"({"mode":"pv-run","vortices":[[)" + kPairQ + R"(,0,1],[-)" + kPairQ +
                           R"(,0,-1]],"max_time":1})";

}  // namespace

TEST_CASE("format_double gives the shortest round-trip form") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-INFINITY) == "-inf");
}

TEST_CASE("parse_config reads every field") {
  const RunConfig c = parse_config(json::parse(R"({
    "mode": "compare", "output_dir": "o", "emit_plots": true, "flow_kind": "hamiltonian",
    "rk_rel_tol": 1e-8, "rk_abs_tol": 1e-11, "collision_radius": 2e-3, "max_time": 3,
    "output_stride": 0.05, "hamiltonian_continuation": true,
    "vortices": [[0.5, 0, 1], [-0.5, 0, -1]], "n": 2, "s": 0.4, "seed": 9, "trials": 4,
    "slack": 0.02, "epsilon": 0.05, "L": 4, "N": 128, "dt": 1e-3, "pde_time": 2,
    "sample_every": 0.5, "stepper": "explicit", "compare_flow": "gp", "horizon": 0.2,
    "samples": 3, "preparation_time": 0.01})"));
  CHECK(c.mode == RunMode::Compare);
  CHECK(c.output_dir == "o");
  CHECK(c.emit_plots);
  CHECK(c.flow.kind == FlowKind::Hamiltonian);
  CHECK(c.flow.rk_rel_tol == 1e-8);
  CHECK(c.flow.rk_abs_tol == 1e-11);
  CHECK(c.flow.collision_radius == 2e-3);
  CHECK(c.flow.max_time == 3.0);
  CHECK(c.flow.output_stride == 0.05);
  CHECK(c.flow.hamiltonian_continuation);
  REQUIRE(c.vortices.size() == 2);
  CHECK(c.vortices.vortices[1].position.p.x() == -0.5);
  CHECK(c.vortices.vortices[1].degree == -1);
  CHECK(c.n == 2);
  CHECK(c.s == 0.4);
  CHECK(c.seed == 9);
  CHECK(c.trials == 4);
  CHECK(*c.slack == 0.02);
  CHECK(c.epsilon == 0.05);
  CHECK(c.grid.L == 4.0);
  CHECK(c.grid.N == 128);
  CHECK(c.dt == 1e-3);
  CHECK(c.pde_time == 2.0);
  CHECK(c.sample_every == 0.5);
  CHECK(c.stepper == HeatStepper::Explicit);
  CHECK(c.compare_flow == PdeFlow::GrossPitaevskii);
  CHECK(c.horizon == 0.2);
  CHECK(c.samples == 3);
  CHECK(c.preparation_time == 0.01);
}

TEST_CASE("sphere vortex lists are projected to the chart") {
  // (0.6, 0, -0.8) projects to p = (1/3, 0).
  const RunConfig c = parse_config(json::parse(
      R"({"mode":"pv-run","vortices_sphere":[[0.6,0,-0.8,1],[-0.6,0,-0.8,-1]]})"));
  REQUIRE(c.vortices.size() == 2);
  CHECK(c.vortices.vortices[0].position.p.x() == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(c.vortices.vortices[1].position.p.x() == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("invalid configurations raise ConfigError") {
  const char* bad[] = {
      R"([1, 2])",
      R"({"vortices": []})",
      R"({"mode": "pv-walk", "vortices": []})",
      R"({"mode": "pv-run", "vortices": [], "max_tme": 1})",
      R"({"mode": "pv-run"})",
      R"({"mode": "pv-run", "vortices": [[0.1, 0, 2], [0, 0.1, -1]]})",
      R"({"mode": "pv-run", "vortices": [[0.1, 0, 1.0], [0, 0.1, -1]]})",
      R"({"mode": "pv-run", "vortices": [[0.1, 0, 1], [0, 0.1, 1]]})",
      R"({"mode": "pv-run", "vortices": [[0.1, 1]]})",
      R"({"mode": "pv-run", "vortices_sphere": [[1, 1, 0, 1], [-1, 0, 0, -1]]})",
      R"({"mode": "pv-run", "vortices": [], "vortices_sphere": []})",
      R"({"mode": "pv-run", "vortices": [], "flow_kind": "viscous"})",
      R"({"mode": "pv-run", "vortices": [], "rk_rel_tol": -1})",
      R"({"mode": "pv-run", "vortices": [], "max_time": "long"})",
      R"({"mode": "pv-run", "vortices": [], "emit_plots": 1})",
      R"({"mode": "pv-annihilate-scan", "n": 1, "s": 0.6})",
      R"({"mode": "pv-annihilate-scan", "n": 1, "s": 1.0, "trials": 5})",
      R"({"mode": "pv-annihilate-scan", "n": 1, "s": -0.1, "trials": 5})",
      R"({"mode": "pv-annihilate-scan", "n": 0, "s": 0.5, "trials": 5})",
      R"({"mode": "pv-annihilate-scan", "n": 1, "s": 0.5, "trials": 5, "seed": -3})",
      R"({"mode": "gl-evolve", "epsilon": 0.7, "pde_time": 1})",
      R"({"mode": "gl-evolve", "epsilon": 0, "pde_time": 1})",
      R"({"mode": "gl-evolve", "epsilon": 0.1})",
      R"({"mode": "gl-evolve", "epsilon": 0.1, "pde_time": 1, "N": 101})",
      R"({"mode": "gl-evolve", "epsilon": 0.1, "pde_time": 1, "N": 128.0})",
      R"({"mode": "gl-evolve", "epsilon": 0.1, "pde_time": 1, "stepper": "magic"})",
      R"({"mode": "gl-evolve", "epsilon": 0.1, "pde_time": 1, "dt": -1})",
      R"({"mode": "compare", "epsilon": 0.1, "horizon": 0.1})",
      R"({"mode": "compare", "vortices": [], "epsilon": 0.1, "horizon": 0.1, "compare_flow": "x"})",
      R"({"mode": "pv-run", "vortices": [], "seed": {"a": 1}})",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK(parse_error_kind(text) == ErrorKind::ConfigError);
  }
}

TEST_CASE("run maps failures to exit codes") {
  std::ostringstream err;
  CHECK(run("/nonexistent/config.json", {}, err) == kExitConfigError);
  CHECK(run_text("syntax", "{\"mode\": ") == kExitConfigError);
  CHECK(run_text("unknown_key", R"({"mode":"pv-run","vortices":[],"colour":1})") == kExitConfigError);

  // h = 12/128 exceeds epsilon.
  CHECK(run_text("resolution",
                 R"({"mode":"gl-evolve","vortices":[],"epsilon":0.05,"L":6,"N":128,"pde_time":0.1})") ==
        kExitNumericalFailure);
  // kappa = 3 sqrt(1 - 0.81) - 2 < 0.
  CHECK(run_text("cap_kappa", R"({"mode":"pv-annihilate-scan","n":3,"s":0.9,"trials":2})") ==
        kExitNumericalFailure);
}

TEST_CASE("invariant violations exit 3 only under strict") {
  // A loose integrator breaks the exponential growth of V0 beyond 1e-6.
  const std::string loose = R"({"mode":"pv-run","vortices":[[0.3,0.1,1],[-0.5,0.4,-1],[0.2,-0.7,1],)"
                            R"([1.1,0.2,-1]],"rk_rel_tol":1e-2,"rk_abs_tol":1e-2,"max_time":0.5})";
  CHECK(run_text("loose", loose, false) == kExitSuccess);
  CHECK(run_text("loose_strict", loose, true) == kExitInvariantViolation);
  const json s = summary(fs::temp_directory_path() / "vortexflow_cli_test_loose" / "out");
  CHECK_FALSE(s["all_checks_passed"].get<bool>());
  CHECK_FALSE(s["checks"]["v0_growth"]["passed"].get<bool>());
}

TEST_CASE("pv-run of the explicit pair annihilates at ln(1/0.8)") {
  const fs::path dir = scratch("pv_run");
  RunConfig cfg = parse_config(json::parse(kPvRun));
  cfg.emit_plots = true;
  const RunOutcome out = execute(cfg, dir);
  CHECK(out.exit_code == kExitSuccess);
  const json s = summary(dir);
  CHECK(s["mode"] == "pv-run");
  CHECK(s["final_vortex_count"] == 0);
  CHECK(s["termination"] == "all_annihilated");
  // q(t)^2 = (1 + c e^t) / (1 - c e^t), c = -0.8, reaches 0 at ln 1.25.
  CHECK(std::abs(s["annihilation_time"].get<double>() - std::log(1.25)) < 1e-3);
  for (const auto& [name, check] : s["checks"].items()) {
    CAPTURE(name);
    CHECK(check["passed"].get<bool>());
    CHECK(check.contains("residual"));
    CHECK(check.contains("tolerance"));
  }
  for (const char* key : {"v0_growth", "v0_direction", "pair_sum_decay_rate", "energy_monotone",
                          "degree_bookkeeping", "collision_degree_bound"}) {
    CHECK(s["checks"].contains(key));
  }
  const auto traj = read_csv(dir / "trajectory.csv");
  REQUIRE(traj.size() > 2);
  CHECK(traj[0] == std::vector<std::string>{"t", "segment", "vortex_id", "degree", "x1", "x2", "x3", "p1",
                                            "p2", "W", "V0_norm", "pair_sum"});
  CHECK(traj[1][7] == kPairQ);
  const auto col = read_csv(dir / "collisions.csv");
  REQUIRE(col.size() == 2);
  CHECK(col[1][6] == "annihilate");
  CHECK(fs::exists(dir / "trajectory.svg"));
  CHECK(fs::exists(dir / "energy.svg"));
}

TEST_CASE("hamiltonian pv-run records energy conservation") {
  const fs::path dir = scratch("pv_ham");
  const RunConfig cfg = parse_config(json::parse(
      R"({"mode":"pv-run","flow_kind":"hamiltonian","vortices":[[0.4,0.1,1],[-0.6,0.3,-1]],"max_time":1})"));
  CHECK(execute(cfg, dir).exit_code == kExitSuccess);
  const json s = summary(dir);
  CHECK(s["checks"]["energy_conservation"]["passed"].get<bool>());
  CHECK(s["checks"]["energy_conservation"]["residual"].get<double>() <= 1e-6);
}

TEST_CASE("annihilation scan for n = 1, s = 0.6") {
  const fs::path dir = scratch("scan");
  const RunConfig cfg =
      parse_config(json::parse(R"({"mode":"pv-annihilate-scan","n":1,"s":0.6,"trials":50,"seed":3})"));
  CHECK(execute(cfg, dir).exit_code == kExitSuccess);
  const json s = summary(dir);
  CHECK(s["kappa"].get<double>() == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(s["time_bound"].get<double>() == doctest::Approx(std::log(1.25)).epsilon(1e-14));
  CHECK(s["trials"] == 50);
  CHECK(s["completed_within_bound"] == 50);
  CHECK(s["checks"]["annihilated_within_bound"]["passed"].get<bool>());
  CHECK(read_csv(dir / "scan.csv").size() == 51);
}

TEST_CASE("gl-evolve of an empty configuration keeps E = 0") {
  const fs::path dir = scratch("gl_empty");
  RunOptions opts;
  opts.strict = true;
  opts.output_dir = dir.string();
  std::ostringstream err;
  const fs::path cfg = write_config(
      scratch("gl_empty_cfg"),
      R"({"mode":"gl-evolve","vortices":[],"epsilon":0.1,"L":3,"N":128,"pde_time":0.1,"sample_every":0.02})");
  CHECK(run(cfg, opts, err) == kExitSuccess);
  const auto rows = read_csv(dir / "energy.csv");
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == std::vector<std::string>{"t", "E", "F1", "F2", "F3", "m1", "m2", "m3", "n_vortices"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    // The implicit solve leaves u = 1 up to rounding.
    CHECK(std::abs(std::stod(rows[i][1])) < 1e-20);
    CHECK(rows[i][8] == "0");
  }
  CHECK(read_csv(dir / "field_final.csv").size() == 129 * 129 + 1);
  const json s = summary(dir);
  CHECK(s["final_vortex_count"] == 0);
  CHECK(s["checks"]["energy_monotone"]["passed"].get<bool>());
  CHECK(s["checks"]["modulus_bound"]["passed"].get<bool>());
}

TEST_CASE("gl-evolve and gp-evolve of a pair") {
  const fs::path heat = scratch("gl_pair");
  RunConfig cfg = parse_config(json::parse(
      R"({"mode":"gl-evolve","vortices":[[0.6,0,1],[-0.6,0,-1]],"epsilon":0.1,"L":3,"N":128,)"
      R"("pde_time":0.1,"sample_every":0.05,"emit_plots":true})"));
  CHECK(execute(cfg, heat).exit_code == kExitSuccess);
  json s = summary(heat);
  CHECK(s["final_vortex_count"] == 2);
  CHECK(s["final_energy"].get<double>() < s["initial_energy"].get<double>());
  CHECK(fs::exists(heat / "energy.svg"));
  const auto vort = read_csv(heat / "vortices.csv");
  CHECK(vort.size() == 1 + 3 * 2);

  const fs::path gp = scratch("gp_pair");
  cfg.mode = RunMode::GpEvolve;
  cfg.pde_time = 0.002;
  cfg.sample_every = 0.001;
  CHECK(execute(cfg, gp).exit_code == kExitSuccess);
  s = summary(gp);
  CHECK(s["stepper"] == "strang");
  CHECK(s["checks"]["energy_conservation"]["residual"].get<double>() < 1e-6);
}

TEST_CASE("compare mode writes the tracked and predicted paths") {
  const fs::path dir = scratch("compare");
  const RunConfig cfg = parse_config(json::parse(
      R"({"mode":"compare","vortices":[[0.6,0,1],[-0.6,0,-1]],"epsilon":0.1,"L":3,"N":128,)"
      R"("horizon":0.02,"samples":2})"));
  CHECK(execute(cfg, dir).exit_code == kExitSuccess);
  const json s = summary(dir);
  CHECK(s["time_scale"].get<double>() == doctest::Approx(std::log(10.0)));
  CHECK(s["checks"].contains("motion_law_deviation"));
  CHECK(s["checks"]["motion_law_deviation"]["tolerance"].get<double>() == 0.05);
  const auto rows = read_csv(dir / "comparison.csv");
  CHECK(rows.size() == 1 + 2 * 2);
  CHECK(rows[0][8] == "chordal_deviation");
}

TEST_CASE("outputs are byte-identical across runs and thread counts") {
  const std::string scan = R"({"mode":"pv-annihilate-scan","n":2,"s":0.4,"trials":12,"seed":5})";
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c"), d = scratch("det_d");
  setenv("VORTEXFLOW_THREADS", "1", 1);
  execute(parse_config(json::parse(scan)), a);
  execute(parse_config(json::parse(kPvRun)), c);
  setenv("VORTEXFLOW_THREADS", "3", 1);
  execute(parse_config(json::parse(scan)), b);
  execute(parse_config(json::parse(kPvRun)), d);
  unsetenv("VORTEXFLOW_THREADS");
  CHECK(slurp(a / "scan.csv") == slurp(b / "scan.csv"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(c / "trajectory.csv") == slurp(d / "trajectory.csv"));
  CHECK(slurp(c / "collisions.csv") == slurp(d / "collisions.csv"));
}
