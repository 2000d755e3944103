#pragma once

// Stage orchestration for the emlc tool: resolves scenario values into model
// parameters, runs the requested chain (curve -> equilibrium -> modes ->
// cooling -> readout) and writes result tables plus a run manifest.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emlc/cooling.hpp"
#include "emlc/electromech.hpp"
#include "emlc/electrostatics.hpp"
#include "emlc/readout.hpp"
#include "emlc/scenario.hpp"

namespace emlc {

inline constexpr std::string_view tool_version = "1.0.0";

enum class Command { capacitance, equilibrium, modes, cool, snr, sweep, validate };

std::optional<Command> parse_command(std::string_view name);
std::string_view to_string(Command command);

struct EvaluateOptions {
  bool transient = true;     // run the transient when [transient] is present
  bool montecarlo = true;    // run the homodyne simulation when [montecarlo] is present
  // Reused instead of solving (or loading) the curve when set.
  const CapacitanceCurve* curve = nullptr;
};

/// Everything computed for one scenario. Stages that did not run are empty.
struct Evaluation {
  std::optional<CapacitanceCurve> curve;
  std::optional<BiasEquilibrium> equilibrium;
  double omega_m = 0.0;
  double omega_0 = 0.0;
  double g = 0.0;
  double capacitance = 0.0;  // F, 0 when unknown
  double inductance = 0.0;   // H, 0 when unknown
  std::optional<NormalModes> modes;
  std::optional<CoolingParams> cooling_params;
  std::optional<SteadyStateResult> cooling;
  std::vector<TransientSample> transient;
  std::optional<double> fitted_rate;
  std::optional<ReadoutParams> readout;
  std::optional<SnrSpectrum> spectrum;
  std::optional<HomodyneEstimate> montecarlo;
  double signal_amplitude = 0.0;  // |f|

  /// Scalars addressable as sweep outputs, e.g. "cooling.n_b_exact".
  std::map<std::string, double> scalars;
  std::vector<std::string> warnings;
};

/// Names of every exported scalar, with the stage that produces it.
const std::vector<std::pair<std::string, Stage>>& exported_scalars();

/// Runs stages up to `last`. Throws ValidationError for missing or
/// inconsistent inputs and NumericalError subclasses for solver failures.
Evaluation evaluate(const Scenario& scenario, Stage last, const EvaluateOptions& options = {});

/// Reads a curve table (`x_m_over_D, c, zeta_over_D`) for plate separation D.
CapacitanceCurve read_curve_file(const std::filesystem::path& path, double D);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // overrides output.directory
  int jobs = 1;
  std::optional<std::uint64_t> seed;  // overrides montecarlo.seed
  std::optional<int> mesh_level;      // overrides curve.mesh_level
};

/// Scenario with command-line overrides applied.
Scenario apply_overrides(Scenario scenario, const RunOptions& options);

struct RunReport {
  int exit_code = 0;  // 0 success, 1 validation error, 2 numerical failure
  std::vector<std::filesystem::path> artifacts;
  std::vector<std::string> messages;
};

/// Executes a subcommand and writes its tables and manifest.json into the
/// output directory (nothing is written for `validate`).
RunReport run_command(Command command, const Scenario& scenario, const RunOptions& options);

/// Fixed 12-significant-digit rendering used in every table.
std::string format_number(double value);

}  // namespace emlc
