// emlc: command-line front end for the membrane-LC pipeline.
//
//   emlc <subcommand> --scenario <path> [--out <dir>] [--jobs N] [--seed N] [--mesh-level N]
//
// Exit status: 0 success, 1 validation error, 2 numerical failure.

#include <CLI11.hpp>
#include <fmt/core.h>

#include "emlc/errors.hpp"
#include "emlc/pipeline.hpp"
#include "emlc/scenario.hpp"

namespace {

struct Arguments {
  std::string scenario;
  std::string out;
  int jobs = 1;
  std::int64_t seed = -1;
  int mesh_level = 0;
};

void add_common(CLI::App* sub, Arguments& args) {
  sub->add_option("--scenario", args.scenario, "scenario file")->required();
  sub->add_option("--out", args.out, "output directory (overrides [output] directory)");
  sub->add_option("--jobs", args.jobs, "concurrent sweep points")->check(CLI::PositiveNumber);
  sub->add_option("--seed", args.seed, "Monte-Carlo seed (overrides [montecarlo] seed)")->check(CLI::NonNegativeNumber);
  sub->add_option("--mesh-level", args.mesh_level, "FEM mesh level (overrides [curve] mesh_level)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membrane-LC electromechanics: capacitance, coupling, cooling and readout"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(emlc::tool_version));

  Arguments args;
  const std::vector<std::pair<emlc::Command, std::string>> commands{
      {emlc::Command::capacitance, "capacitance curve and zeta from the field solve"},
      {emlc::Command::equilibrium, "biased equilibrium and coupling constant"},
      {emlc::Command::modes, "normal-mode frequencies and vectors"},
      {emlc::Command::cool, "steady-state cooling, optional transient"},
      {emlc::Command::snr, "readout signal-to-noise spectrum, optional Monte-Carlo"},
      {emlc::Command::sweep, "1-2 axis sweep of exported scalars"},
      {emlc::Command::validate, "parse and validate the scenario only"},
  };
  for (const auto& [command, help] : commands) add_common(app.add_subcommand(std::string(emlc::to_string(command)), help), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const auto command = emlc::parse_command(app.get_subcommands().front()->get_name());
  emlc::RunOptions options;
  options.jobs = args.jobs;
  if (!args.out.empty()) options.out_dir = args.out;
  if (args.seed >= 0) options.seed = static_cast<std::uint64_t>(args.seed);
  if (args.mesh_level > 0) options.mesh_level = args.mesh_level;

  emlc::Scenario scenario;
  try {
    scenario = emlc::load_scenario(args.scenario);
  } catch (const emlc::ValidationError& e) {
    fmt::print(stderr, "{}: invalid scenario\n", args.scenario);
    for (const auto& m : e.messages()) fmt::print(stderr, "  {}\n", m);
    return 1;
  }

  emlc::RunReport report;
  try {
    report = emlc::run_command(*command, scenario, options);
  } catch (const emlc::ValidationError& e) {
    for (const auto& m : e.messages()) fmt::print(stderr, "error: {}\n", m);
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  for (const auto& m : report.messages) fmt::print(stderr, "{}\n", m);
  if (*command == emlc::Command::validate && report.exit_code == 0)
    fmt::print("{}: valid (hash {})\n", args.scenario, emlc::apply_overrides(scenario, options).hash());
  for (const auto& a : report.artifacts) fmt::print("{}\n", a.string());
  return report.exit_code;
}
