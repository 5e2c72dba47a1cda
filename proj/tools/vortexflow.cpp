#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "vortexflow/cli_runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Vortex dynamics on the sphere: point-vortex flows and Ginzburg-Landau fields"};
  app.require_subcommand(1);

  std::string config;
  vortexflow::RunOptions options;
  std::string out;
  CLI::App* run = app.add_subcommand("run", "Run a JSON configuration");
  run->add_option("config", config, "Path to the configuration file")->required();
  run->add_flag("--strict", options.strict, "Exit with code 3 if an invariant check fails");
  run->add_option("--out", out, "Output directory (overrides output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : vortexflow::kExitConfigError;
  }
  if (!out.empty()) options.output_dir = out;
  return vortexflow::run(config, options, std::cerr);
}
