#pragma once

// Run configurations, dispatch to the flow and field modules, and the CSV,
// JSON and SVG outputs of the command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "vortexflow/gl_field_solver.hpp"
#include "vortexflow/point_vortex_flow.hpp"

namespace vortexflow {

enum class RunMode { PvRun, PvAnnihilateScan, GlEvolve, GpEvolve, Compare };

std::string to_string(RunMode mode);

struct RunConfig {
  RunMode mode = RunMode::PvRun;
  std::string output_dir = "vortexflow_out";
  bool emit_plots = false;

  FlowSpec flow;
  VortexConfiguration vortices;

  // pv-annihilate-scan
  std::size_t n = 1;
  double s = 0.0;
  std::uint64_t seed = 1;
  std::size_t trials = 0;
  std::optional<double> slack;

  // gl-evolve, gp-evolve, compare
  double epsilon = 0.1;
  Grid grid;
  double dt = 0.0;  // 0 selects the stepper default
  double pde_time = 0.0;
  double sample_every = 0.0;  // 0 selects pde_time / 100
  HeatStepper stepper = HeatStepper::Implicit;

  // compare
  PdeFlow compare_flow = PdeFlow::Heat;
  double horizon = 0.1;
  std::size_t samples = 10;
  double preparation_time = -1.0;
};

/// Parses a flat JSON object. Unknown keys, wrong types, missing
/// mode-specific keys and out-of-range values throw ConfigError.
RunConfig parse_config(const nlohmann::json& j);

/// Reads and parses a config file; I/O and syntax errors throw ConfigError.
RunConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  bool strict = false;
  std::optional<std::string> output_dir;  // overrides the config
};

enum ExitCode : int {
  kExitSuccess = 0,
  kExitConfigError = 1,
  kExitNumericalFailure = 2,
  kExitInvariantViolation = 3,
};

struct RunOutcome {
  int exit_code = kExitSuccess;
  nlohmann::json summary;
};

/// Executes a parsed configuration, writing every output into the output
/// directory. Library errors propagate.
RunOutcome execute(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Loads, executes and maps failures to exit codes; messages go to `err`.
int run(const std::filesystem::path& config_path, const RunOptions& options, std::ostream& err);

/// Shortest round-trip decimal form of x ("nan", "inf" and "-inf" otherwise).
std::string format_double(double x);

}  // namespace vortexflow
