#include "emlc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fmt/core.h>
#include <fstream>
#include <limits>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "emlc/errors.hpp"

namespace emlc {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

// Which stages a command (or a set of sweep outputs) needs, in run order.
enum class Step { curve, equilibrium, modes, cooling, readout };

const char* step_name(Step s) {
  switch (s) {
    case Step::curve: return "capacitance";
    case Step::equilibrium: return "equilibrium";
    case Step::modes: return "modes";
    case Step::cooling: return "cooling";
    case Step::readout: return "snr";
  }
  return "";
}

Step last_step(Stage stage) {
  switch (stage) {
    case Stage::capacitance: return Step::curve;
    case Stage::equilibrium: return Step::equilibrium;
    case Stage::modes: return Step::modes;
    case Stage::cooling: return Step::cooling;
    case Stage::snr: return Step::readout;
  }
  return Step::curve;
}

bool coupling_override(const Scenario& s) { return s.has("coupling.g") || s.has("coupling.g_over_omega"); }

std::vector<Step> steps_for(const Scenario& s, const std::set<Stage>& stages) {
  std::set<Step> wanted;
  for (const Stage stage : stages) {
    const Step last = last_step(stage);
    const bool override_applies = coupling_override(s) && last != Step::curve && last != Step::equilibrium;
    if (!override_applies) {
      wanted.insert(Step::curve);
      if (last != Step::curve) wanted.insert(Step::equilibrium);
    }
    wanted.insert(last);
  }
  return {wanted.begin(), wanted.end()};
}

double resolved_omega_m(const Scenario& s) {
  if (const auto w = s.quantity("membrane.omega_m")) return *w;
  if (const auto f = s.quantity("membrane.f_m")) return *f;
  throw ValidationError("membrane.omega_m or membrane.f_m is required");
}

double required(const Scenario& s, std::string_view path) {
  if (const auto v = s.quantity(path)) return *v;
  throw ValidationError(fmt::format("{} is required", path));
}

CapacitorGeometry geometry_of(const Scenario& s) {
  CapacitorGeometry g;
  g.D = required(s, "geometry.D");
  g.r = required(s, "geometry.r");
  g.t = required(s, "geometry.t");
  g.d = required(s, "geometry.d");
  g.h = required(s, "geometry.h");
  g.eps_membrane = required(s, "geometry.eps_membrane");
  g.bottom = s.text_or("geometry.bottom", "wire_grid") == "solid_plate" ? BottomElectrode::solid_plate
                                                                        : BottomElectrode::wire_grid;
  return g;
}

// Sequential stage runner that fills an Evaluation one step at a time.
class Runner {
 public:
  Runner(const Scenario& s, const EvaluateOptions& options) : s_(s), options_(options) {
    out.omega_m = s.has("membrane.omega_m") || s.has("membrane.f_m") ? resolved_omega_m(s) : 0.0;
  }

  void run(Step step) {
    switch (step) {
      case Step::curve: curve(); break;
      case Step::equilibrium: equilibrium(); break;
      case Step::modes: modes(); break;
      case Step::cooling: cooling(); break;
      case Step::readout: readout(); break;
    }
  }

  // Coupling values for downstream stages when no equilibrium was solved.
  void resolve_override() {
    if (out.equilibrium || resolved_) return;
    resolved_ = true;
    out.omega_m = resolved_omega_m(s_);
    if (const auto g = s_.quantity("coupling.g")) out.g = *g;
    else if (const auto r = s_.quantity("coupling.g_over_omega")) out.g = *r * out.omega_m;
    else throw ValidationError("a bias equilibrium or a [coupling] override is required");
    out.capacitance = s_.quantity_or("circuit.C", 0.0);
    if (const auto L = s_.quantity("circuit.L")) out.inductance = *L;
    else if (s_.text("circuit.L") && out.capacitance > 0.0)
      out.inductance = resonant_inductance(out.omega_m, out.capacitance);
    if (const auto w0 = s_.quantity("circuit.omega_0")) out.omega_0 = *w0;
    else if (out.inductance > 0.0 && out.capacitance > 0.0)
      out.omega_0 = circuit_frequency(out.inductance, out.capacitance);
    else out.omega_0 = out.omega_m;
    export_coupling();
  }

  Evaluation out;

 private:
  void curve() {
    if (options_.curve != nullptr) {
      out.curve = *options_.curve;
    } else if (const auto file = s_.text("curve.file")) {
      out.curve = read_curve_file(*file, required(s_, "geometry.D"));
    } else {
      const CapacitorGeometry g = geometry_of(s_);
      const double x_min = s_.quantity_or("curve.x_min", 0.05 * g.D);
      const double x_max = s_.quantity_or("curve.x_max", 0.6 * g.D);
      const auto n = static_cast<int>(s_.integer_or("curve.n_samples", 23));
      const auto level = static_cast<int>(s_.integer_or("curve.mesh_level", 4));
      out.curve = capacitance_curve(g, x_min, x_max, n, level);
    }
    auto& sc = out.scalars;
    sc["capacitance.convergence_estimate"] = out.curve->convergence_estimate();
    if (const auto x_e = s_.quantity("membrane.x_e"); x_e && out.curve->contains(*x_e)) {
      sc["capacitance.c_at_x_e"] = out.curve->value(*x_e);
      sc["capacitance.zeta_at_x_e"] = zeta_unchecked(*out.curve, *x_e).value;
    }
  }

  MembraneParams membrane() const {
    MembraneParams m;
    m.omega_m = resolved_omega_m(s_);
    if (const auto mass = s_.quantity("membrane.mass")) m.mass = *mass;
    else if (const auto x_zp = s_.quantity("membrane.x_zp"))
      m.mass = MembraneParams::mass_for_zero_point_length(*x_zp, m.omega_m);
    else throw ValidationError("membrane.mass or membrane.x_zp is required");
    m.gamma_m = membrane_damping();
    m.x_e = required(s_, "membrane.x_e");
    return m;
  }

  double membrane_damping() const {
    if (const auto g = s_.quantity("membrane.gamma_m")) return *g;
    if (const auto q = s_.quantity("membrane.Q_m")) return resolved_omega_m(s_) / (2.0 * *q);
    return 0.0;
  }

  double circuit_damping() const {
    if (const auto g = s_.quantity("circuit.gamma")) return *g;
    if (const auto q = s_.quantity("circuit.Q")) return out.omega_0 / (2.0 * *q);
    throw ValidationError("circuit.gamma or circuit.Q is required");
  }

  void equilibrium() {
    if (!out.curve) throw ValidationError("equilibrium needs a capacitance curve");
    const MembraneParams m = membrane();
    CircuitParams c;
    if (const auto L = s_.quantity("circuit.L")) c.inductance = *L;
    else if (!s_.text("circuit.L")) throw ValidationError("circuit.L is required");
    c.plate_area = required(s_, "circuit.A");
    c.gamma = s_.quantity_or("circuit.gamma", 0.0);
    double V = 0.0;
    if (const auto v = s_.quantity("bias.V")) V = *v;
    else if (const auto disp = s_.quantity("bias.displacement")) V = bias_for_displacement(m, c, *out.curve, *disp);
    else throw ValidationError("bias.V or bias.displacement is required");
    out.equilibrium = solve_equilibrium(m, c, *out.curve, V);
    const auto& eq = *out.equilibrium;
    out.omega_m = m.omega_m;
    out.omega_0 = eq.omega_0_at_X;
    out.g = eq.g;
    out.capacitance = eq.C_at_X;
    out.inductance = eq.inductance;
    auto& sc = out.scalars;
    sc["equilibrium.V"] = eq.V;
    sc["equilibrium.X"] = eq.X;
    sc["equilibrium.displacement"] = eq.x_e - eq.X;
    sc["equilibrium.q_bias"] = eq.q_bias;
    sc["equilibrium.C_at_X"] = eq.C_at_X;
    sc["equilibrium.zeta_at_X"] = eq.zeta_at_X.value;
    sc["equilibrium.g_delta_c"] = eq.g_delta_c;
    sc["equilibrium.inductance"] = eq.inductance;
    sc["equilibrium.stable"] = eq.stable ? 1.0 : 0.0;
    sc["equilibrium.iterations"] = eq.iterations;
    export_coupling();
  }

  void export_coupling() {
    out.scalars["equilibrium.g"] = out.g;
    out.scalars["equilibrium.omega_0"] = out.omega_0;
    out.scalars["equilibrium.g_over_omega_m"] = out.g / out.omega_m;
  }

  void modes() {
    resolve_override();
    out.modes = normal_modes(out.omega_0, out.omega_m, out.g);
    const double omega = std::sqrt(out.omega_0 * out.omega_m);
    auto& sc = out.scalars;
    sc["modes.omega_plus"] = out.modes->omega_plus;
    sc["modes.omega_minus"] = out.modes->omega_minus;
    sc["modes.omega_plus_over_omega"] = out.modes->omega_plus / omega;
    sc["modes.omega_minus_over_omega"] = out.modes->omega_minus / omega;
    sc["modes.stable"] = check_stability(out.omega_0, out.omega_m, out.g) ? 1.0 : 0.0;
  }

  double lc_bath() const { return thermal_occupation(required(s_, "circuit.temperature"), out.omega_0); }

  void cooling() {
    resolve_override();
    CoolingParams p;
    p.g = out.g;
    p.Gamma_m = required(s_, "optics.Gamma_m");
    p.gamma_m = membrane_damping();
    p.gamma = circuit_damping();
    p.kappa = s_.quantity_or("optics.kappa", 0.0);
    p.n_a = thermal_occupation(required(s_, "membrane.temperature"), out.omega_m);
    p.n_b = lc_bath();
    p.n_opt = s_.quantity_or("optics.n_opt", 0.0);
    p.omega = out.omega_0;
    out.cooling_params = p;
    out.cooling = lyapunov_steady_state(p);
    const auto& r = *out.cooling;
    auto& sc = out.scalars;
    sc["cooling.Gamma"] = r.cooling_rate_Gamma;
    sc["cooling.n_a_bath"] = p.n_a;
    sc["cooling.n_b_bath"] = p.n_b;
    sc["cooling.n_a_exact"] = r.n_a_exact;
    sc["cooling.n_b_exact"] = r.n_b_exact;
    sc["cooling.n_b_weak"] = r.n_b_weak.value_or(nan);
    sc["cooling.n_b_strong"] = r.n_b_strong.value_or(nan);
    if (p.g > 0.0 && p.kappa > 0.0) sc["cooling.limit"] = cooling_limit(p);
    for (const auto& w : r.warnings) out.warnings.push_back(w);

    if (options_.transient && s_.has("transient.duration")) {
      const double duration = required(s_, "transient.duration");
      const auto steps = static_cast<int>(s_.integer_or("transient.steps", 2000));
      const double n_a0 = s_.quantity_or("transient.n_a0", p.n_a);
      const double n_b0 = s_.quantity_or("transient.n_b0", p.n_b);
      out.transient = transient_occupations(p, n_a0, n_b0, duration, steps);
      try {
        out.fitted_rate = fitted_relaxation_rate(out.transient, r.n_b_exact);
        sc["cooling.fitted_rate"] = *out.fitted_rate;
      } catch (const NumericalError& e) {
        out.warnings.push_back(fmt::format("relaxation rate not fitted: {}", e.what()));
      }
    }
  }

  void readout() {
    resolve_override();
    ReadoutParams p;
    if (const auto G = s_.quantity("readout.Gamma")) p.Gamma = *G;
    else p.Gamma = cooling_rate(out.g, required(s_, "optics.Gamma_m"));
    p.gamma = circuit_damping();
    p.n_b = lc_bath();
    p.n_d = s_.quantity_or("readout.n_d", 0.0);
    out.readout = p;

    if (!(out.capacitance > 0.0) || !(out.inductance > 0.0))
      throw ValidationError("the signal conversion needs C and L (solve an equilibrium or give circuit.C and circuit.L)");
    const double V = required(s_, "signal.V_amplitude");
    const double f = voltage_to_signal(V, out.capacitance, out.inductance);
    out.signal_amplitude = std::abs(f);
    const SignalSpec signal = SignalSpec::flat(f);

    const DetectionBandwidth bw = detection_bandwidth(p.Gamma, p.gamma, p.n_b, p.n_d);
    const double span = 4.0 * bw.half_max_detuning;
    const double nu_min = s_.quantity_or("signal.nu_min", -span);
    const double nu_max = s_.quantity_or("signal.nu_max", span);
    const auto count = static_cast<std::size_t>(s_.integer_or("signal.nu_count", 101));
    std::vector<double> grid(count);
    for (std::size_t k = 0; k < count; ++k)
      grid[k] = count == 1 ? nu_min : nu_min + (nu_max - nu_min) * static_cast<double>(k) / static_cast<double>(count - 1);
    out.spectrum = snr_spectrum(p, signal, grid);

    auto& sc = out.scalars;
    const double f2 = out.signal_amplitude * out.signal_amplitude;
    sc["snr.Gamma"] = p.Gamma;
    sc["snr.S0"] = snr(p, f2, 0.0);
    sc["snr.S_rf_baseline"] = out.spectrum->baseline_rf;
    sc["snr.ratio_to_rf"] = sc["snr.S0"] / out.spectrum->baseline_rf;
    sc["snr.bandwidth"] = bw.formula;
    sc["snr.half_max_full_width"] = bw.half_max_full_width;

    if (options_.montecarlo && s_.has("montecarlo.duration")) {
      const double duration = required(s_, "montecarlo.duration");
      const double dt = s_.quantity_or("montecarlo.dt", 0.02 / std::max(p.gamma, p.Gamma));
      const auto seed = static_cast<std::uint64_t>(s_.integer_or("montecarlo.seed", 1));
      HomodyneOptions mc;
      mc.segment_duration = s_.quantity_or("montecarlo.segment", 0.0);
      const auto tones = static_cast<std::size_t>(s_.integer_or("montecarlo.tones", 1));
      if (tones == 1) mc.bins = {0.0};
      else
        for (std::size_t k = 0; k < tones; ++k)
          mc.bins.push_back(nu_min + (nu_max - nu_min) * static_cast<double>(k) / static_cast<double>(tones - 1));
      out.montecarlo = simulate_homodyne(p, signal, duration, dt, seed, mc);
      const auto nearest = std::min_element(out.montecarlo->bins.begin(), out.montecarlo->bins.end(),
                                            [](const HomodyneBin& a, const HomodyneBin& b) {
                                              return std::abs(a.nu) < std::abs(b.nu);
                                            });
      sc["snr.S_empirical"] = nearest->S_empirical;
      sc["snr.S_empirical_stderr"] = nearest->std_error;
    }
  }

  const Scenario& s_;
  EvaluateOptions options_;
  bool resolved_ = false;
};

Stage stage_of_output(const std::string& name) {
  for (const auto& [key, stage] : exported_scalars())
    if (key == name) return stage;
  throw ValidationError(fmt::format("sweep output '{}' is not an exported scalar", name));
}

// ---------------------------------------------------------------------------
// Tables.

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::string flag(bool b) { return b ? "true" : "false"; }

std::string render(const Table& table, const std::string& metadata) {
  std::string out = metadata;
  for (std::size_t k = 0; k < table.columns.size(); ++k) out += (k ? ", " : "") + table.columns[k];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out += (k ? ", " : "") + row[k];
    out += '\n';
  }
  return out;
}

Table key_values(std::string name, const std::vector<std::tuple<std::string, std::string, std::string>>& items) {
  Table t{std::move(name), {"quantity", "value", "unit"}, {}};
  for (const auto& [q, v, u] : items) t.rows.push_back({q, v, u});
  return t;
}

// Commas would break the column layout of free-text cells.
std::string cell_text(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string metadata_block(Command command, const Scenario& s) {
  std::string out;
  out += fmt::format("# tool: emlc {}\n", tool_version);
  out += fmt::format("# command: {}\n", to_string(command));
  out += fmt::format("# scenario_hash: {}\n", s.hash());
  out += fmt::format("# seed: {}\n", s.integer_or("montecarlo.seed", 1));
  out += fmt::format("# rng: {}\n", rng_algorithm_id());
  out += "# units: SI; rates and detunings in rad/s\n";
  out += "# scenario:\n";
  std::istringstream lines(s.serialize());
  for (std::string line; std::getline(lines, line);)
    if (!line.empty()) out += "#   " + line + "\n";
  return out;
}

std::vector<Table> curve_tables(const Evaluation& e) {
  const auto& curve = *e.curve;
  const double D = curve.geometry().D;
  Table t{"curve", {"x_m_over_D", "c", "zeta_over_D"}, {}};
  for (const auto& sample : curve.samples())
    t.rows.push_back({format_number(sample.x_m / D), format_number(sample.c),
                      format_number(zeta_unchecked(curve, sample.x_m).value / D)});
  std::vector<std::tuple<std::string, std::string, std::string>> kv{
      {"D", format_number(D), "m"},
      {"mesh_level", std::to_string(curve.mesh_level()), ""},
      {"n_samples", std::to_string(curve.samples().size()), ""},
      {"convergence_estimate", format_number(curve.convergence_estimate()), ""},
  };
  if (const auto it = e.scalars.find("capacitance.zeta_at_x_e"); it != e.scalars.end()) {
    kv.emplace_back("c_at_x_e", format_number(e.scalars.at("capacitance.c_at_x_e")), "");
    kv.emplace_back("zeta_at_x_e", format_number(it->second), "m");
    kv.emplace_back("zeta_at_x_e_over_D", format_number(it->second / D), "");
  }
  return {t, key_values("capacitance", kv)};
}

std::vector<Table> equilibrium_tables(const Evaluation& e) {
  const auto& eq = *e.equilibrium;
  return {key_values("equilibrium", {
                                        {"V", format_number(eq.V), "V"},
                                        {"x_e", format_number(eq.x_e), "m"},
                                        {"X", format_number(eq.X), "m"},
                                        {"displacement", format_number(eq.x_e - eq.X), "m"},
                                        {"q_bias", format_number(eq.q_bias), "C"},
                                        {"C_at_X", format_number(eq.C_at_X), "F"},
                                        {"zeta_at_X", format_number(eq.zeta_at_X.value), "m"},
                                        {"zeta_infinite", flag(eq.zeta_at_X.infinite), ""},
                                        {"g", format_number(eq.g), "rad/s"},
                                        {"g_delta_c", format_number(eq.g_delta_c), "rad/s"},
                                        {"g_over_omega_m", format_number(eq.g / e.omega_m), ""},
                                        {"omega_m", format_number(e.omega_m), "rad/s"},
                                        {"omega_0_at_X", format_number(eq.omega_0_at_X), "rad/s"},
                                        {"inductance", format_number(eq.inductance), "H"},
                                        {"stable", flag(eq.stable), ""},
                                        {"iterations", std::to_string(eq.iterations), ""},
                                        {"force_residual", format_number(eq.force_residual), "N"},
                                        {"displayed_shift", format_number(eq.displayed_shift), "m"},
                                        {"force_balance_shift", format_number(eq.force_balance_shift), "m"},
                                    })};
}

std::vector<Table> modes_tables(const Evaluation& e) {
  const auto& m = *e.modes;
  const double omega = std::sqrt(e.omega_0 * e.omega_m);
  Table t{"modes",
          {"omega_0", "omega_m", "g", "omega_plus", "omega_minus", "omega_plus_over_omega",
           "omega_minus_over_omega", "stable", "imaginary_minus"},
          {}};
  t.rows.push_back({format_number(e.omega_0), format_number(e.omega_m), format_number(e.g),
                    format_number(m.omega_plus), format_number(m.omega_minus), format_number(m.omega_plus / omega),
                    format_number(m.omega_minus / omega), flag(check_stability(e.omega_0, e.omega_m, e.g)),
                    flag(m.imaginary_minus)});
  Table v{"mode_vectors", {"mode", "membrane", "circuit"}, {}};
  v.rows.push_back({"plus", format_number(m.mode_vectors(0, 0)), format_number(m.mode_vectors(1, 0))});
  v.rows.push_back({"minus", format_number(m.mode_vectors(0, 1)), format_number(m.mode_vectors(1, 1))});
  return {t, v};
}

std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : format_number(nan); }

std::vector<Table> cooling_tables(const Evaluation& e) {
  const auto& r = *e.cooling;
  const auto& p = *e.cooling_params;
  Table t{"cooling", {"Gamma_m", "Gamma", "n_b_exact", "n_b_weak", "n_b_strong", "regime"}, {}};
  t.rows.push_back({format_number(p.Gamma_m), format_number(r.cooling_rate_Gamma), format_number(r.n_b_exact),
                    optional_number(r.n_b_weak), optional_number(r.n_b_strong), to_string(r.regime)});
  std::vector<std::tuple<std::string, std::string, std::string>> kv{
      {"g", format_number(p.g), "rad/s"},
      {"gamma", format_number(p.gamma), "rad/s"},
      {"gamma_m", format_number(p.gamma_m), "rad/s"},
      {"kappa", format_number(p.kappa), "rad/s"},
      {"n_a_bath", format_number(p.n_a), ""},
      {"n_b_bath", format_number(p.n_b), ""},
      {"n_opt", format_number(p.n_opt), ""},
      {"n_a_exact", format_number(r.n_a_exact), ""},
      {"n_b_exact", format_number(r.n_b_exact), ""},
      {"low_confidence", flag(r.low_confidence), ""},
  };
  if (const auto it = e.scalars.find("cooling.limit"); it != e.scalars.end())
    kv.emplace_back("cooling_limit", format_number(it->second), "");
  if (e.fitted_rate) {
    kv.emplace_back("fitted_relaxation_rate", format_number(*e.fitted_rate), "rad/s");
    kv.emplace_back("expected_relaxation_rate", format_number(p.gamma + r.cooling_rate_Gamma), "rad/s");
  }
  for (const auto& w : e.warnings) kv.emplace_back("warning", cell_text(w), "");
  std::vector<Table> tables{t, key_values("cooling_summary", kv)};
  if (!e.transient.empty()) {
    Table tr{"transient", {"t", "n_a", "n_b"}, {}};
    for (const auto& s : e.transient)
      tr.rows.push_back({format_number(s.t), format_number(s.n_a), format_number(s.n_b)});
    tables.push_back(std::move(tr));
  }
  return tables;
}

std::vector<Table> snr_tables(const Evaluation& e) {
  const auto& sp = *e.spectrum;
  const auto& p = *e.readout;
  Table t{"snr", {"nu_rad_per_s", "S", "S_rf_baseline"}, {}};
  for (const auto& s : sp.samples)
    t.rows.push_back({format_number(s.nu), format_number(s.S), format_number(s.S_rf_baseline)});
  std::vector<Table> tables{t};
  const auto& sc = e.scalars;
  tables.push_back(key_values("snr_summary", {
                                                 {"Gamma", format_number(p.Gamma), "rad/s"},
                                                 {"gamma", format_number(p.gamma), "rad/s"},
                                                 {"n_b", format_number(p.n_b), ""},
                                                 {"n_d", format_number(p.n_d), ""},
                                                 {"signal_amplitude", format_number(e.signal_amplitude), "s^-1/2"},
                                                 {"S0", format_number(sc.at("snr.S0")), ""},
                                                 {"S_rf_baseline", format_number(sp.baseline_rf), ""},
                                                 {"ratio_to_rf", format_number(sc.at("snr.ratio_to_rf")), ""},
                                                 {"bandwidth", format_number(sp.bandwidth.formula), "rad/s"},
                                                 {"half_max_full_width",
                                                  format_number(sp.bandwidth.half_max_full_width), "rad/s"},
                                                 {"baseline_assumption_weak", flag(sp.baseline_assumption_weak), ""},
                                                 {"quantum_limited_probe", flag(sp.quantum_limited_probe), ""},
                                                 {"on_plateau", flag(sp.on_plateau), ""},
                                             }));
  if (e.montecarlo) {
    Table mc{"montecarlo", {"nu_rad_per_s", "S", "S_rf_baseline", "S_empirical", "stderr"}, {}};
    const double f2 = e.signal_amplitude * e.signal_amplitude;
    for (const auto& b : e.montecarlo->bins)
      mc.rows.push_back({format_number(b.nu), format_number(b.S_theory),
                         format_number(rf_baseline_snr(p.gamma, p.n_b, f2)), format_number(b.S_empirical),
                         format_number(b.std_error)});
    tables.push_back(std::move(mc));
  }
  return tables;
}

std::vector<Table> tables_for(Step step, const Evaluation& e) {
  switch (step) {
    case Step::curve: return curve_tables(e);
    case Step::equilibrium: return equilibrium_tables(e);
    case Step::modes: return modes_tables(e);
    case Step::cooling: return cooling_tables(e);
    case Step::readout: return snr_tables(e);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepAxis {
  std::string path;
  std::vector<double> values;
};

// Keys that exclude each other; setting one clears the other.
const std::vector<std::pair<std::string, std::string>>& alternatives() {
  static const std::vector<std::pair<std::string, std::string>> pairs{
      {"membrane.mass", "membrane.x_zp"},     {"membrane.omega_m", "membrane.f_m"},
      {"membrane.gamma_m", "membrane.Q_m"},   {"circuit.gamma", "circuit.Q"},
      {"bias.V", "bias.displacement"},        {"coupling.g", "coupling.g_over_omega"},
  };
  return pairs;
}

void assign(Scenario& s, const std::string& path, double value) {
  for (const auto& [a, b] : alternatives()) {
    if (path == a) s.erase(b);
    if (path == b) s.erase(a);
  }
  const KeySpec* spec = find_key(path);
  if (spec->dimension == Dimension::integer) s.set(path, static_cast<std::int64_t>(std::llround(value)));
  else s.set(path, value);
}

std::vector<SweepAxis> sweep_axes(const Scenario& s) {
  std::vector<SweepAxis> axes;
  for (const std::string suffix : {"", "2"}) {
    const auto path = s.text("sweep.path" + suffix);
    if (!path) continue;
    const KeySpec* target = find_key(*path);
    // Bounds were checked by validate_scenario; re-parse them here.
    auto bound = [&](const std::string& key) {
      const std::string text = *s.text(key);
      if (target->dimension == Dimension::integer) return static_cast<double>(std::stoll(text));
      const auto parsed = parse_scenario(fmt::format("[{}]\n{} = {}\n", target->section, target->key, text));
      return *parsed.quantity(*path);
    };
    const double lo = bound("sweep.from" + suffix);
    const double hi = bound("sweep.to" + suffix);
    const auto n = static_cast<std::size_t>(*s.integer("sweep.count" + suffix));
    const bool log = s.text_or("sweep.spacing" + suffix, "linear") == "log";
    SweepAxis axis{*path, {}};
    for (std::size_t k = 0; k < n; ++k) {
      const double u = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
      axis.values.push_back(log ? lo * std::pow(hi / lo, u) : lo + (hi - lo) * u);
    }
    if (n > 1) axis.values.back() = hi;
    axes.push_back(std::move(axis));
  }
  return axes;
}

std::vector<std::string> sweep_outputs(const Scenario& s) {
  std::vector<std::string> outputs;
  std::istringstream in(s.text_or("sweep.outputs", ""));
  for (std::string item; std::getline(in, item, ',');) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first != std::string::npos) outputs.push_back(item.substr(first, last - first + 1));
  }
  return outputs;
}

bool affects_curve(const std::string& path) {
  return path.rfind("geometry.", 0) == 0 || path.rfind("curve.", 0) == 0;
}

struct SweepPoint {
  std::vector<double> coordinates;
  std::vector<double> values;
  std::string status = "ok";
  bool numerical_failure = false;
  bool validation_failure = false;
};

Evaluation evaluate_steps(const Scenario& s, const std::vector<Step>& steps, const EvaluateOptions& options) {
  Runner runner(s, options);
  for (const Step step : steps) runner.run(step);
  return std::move(runner.out);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

std::optional<Command> parse_command(std::string_view name) {
  for (const Command c : {Command::capacitance, Command::equilibrium, Command::modes, Command::cool, Command::snr,
                          Command::sweep, Command::validate})
    if (to_string(c) == name) return c;
  return std::nullopt;
}

std::string_view to_string(Command command) {
  switch (command) {
    case Command::capacitance: return "capacitance";
    case Command::equilibrium: return "equilibrium";
    case Command::modes: return "modes";
    case Command::cool: return "cool";
    case Command::snr: return "snr";
    case Command::sweep: return "sweep";
    case Command::validate: return "validate";
  }
  return "validate";
}

std::string format_number(double value) { return fmt::format("{:.12g}", value); }

const std::vector<std::pair<std::string, Stage>>& exported_scalars() {
  static const std::vector<std::pair<std::string, Stage>> names{
      {"capacitance.convergence_estimate", Stage::capacitance},
      {"capacitance.c_at_x_e", Stage::capacitance},
      {"capacitance.zeta_at_x_e", Stage::capacitance},
      {"equilibrium.V", Stage::equilibrium},
      {"equilibrium.X", Stage::equilibrium},
      {"equilibrium.displacement", Stage::equilibrium},
      {"equilibrium.q_bias", Stage::equilibrium},
      {"equilibrium.C_at_X", Stage::equilibrium},
      {"equilibrium.zeta_at_X", Stage::equilibrium},
      {"equilibrium.g", Stage::equilibrium},
      {"equilibrium.g_delta_c", Stage::equilibrium},
      {"equilibrium.g_over_omega_m", Stage::equilibrium},
      {"equilibrium.omega_0", Stage::equilibrium},
      {"equilibrium.inductance", Stage::equilibrium},
      {"equilibrium.stable", Stage::equilibrium},
      {"equilibrium.iterations", Stage::equilibrium},
      {"modes.omega_plus", Stage::modes},
      {"modes.omega_minus", Stage::modes},
      {"modes.omega_plus_over_omega", Stage::modes},
      {"modes.omega_minus_over_omega", Stage::modes},
      {"modes.stable", Stage::modes},
      {"cooling.Gamma", Stage::cooling},
      {"cooling.n_a_bath", Stage::cooling},
      {"cooling.n_b_bath", Stage::cooling},
      {"cooling.n_a_exact", Stage::cooling},
      {"cooling.n_b_exact", Stage::cooling},
      {"cooling.n_b_weak", Stage::cooling},
      {"cooling.n_b_strong", Stage::cooling},
      {"cooling.limit", Stage::cooling},
      {"cooling.fitted_rate", Stage::cooling},
      {"snr.Gamma", Stage::snr},
      {"snr.S0", Stage::snr},
      {"snr.S_rf_baseline", Stage::snr},
      {"snr.ratio_to_rf", Stage::snr},
      {"snr.bandwidth", Stage::snr},
      {"snr.half_max_full_width", Stage::snr},
      {"snr.S_empirical", Stage::snr},
      {"snr.S_empirical_stderr", Stage::snr},
  };
  return names;
}

Evaluation evaluate(const Scenario& scenario, Stage last, const EvaluateOptions& options) {
  if (auto missing = missing_inputs(scenario, last); !missing.empty()) throw ValidationError(std::move(missing));
  return evaluate_steps(scenario, steps_for(scenario, {last}), options);
}

CapacitanceCurve read_curve_file(const std::filesystem::path& path, double D) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot read curve file '{}'", path.string()));
  std::vector<CapacitanceSample> samples;
  std::vector<std::string> errors;
  int mesh_level = 0;
  double convergence = nan;
  bool header = false;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string key;
      meta >> key;
      if (key == "mesh_level:") meta >> mesh_level;
      if (key == "convergence_estimate:") meta >> convergence;
      continue;
    }
    if (!header) {
      if (line.rfind("x_m_over_D", 0) != 0)
        errors.push_back(fmt::format("{}:{}: expected header 'x_m_over_D, c, zeta_over_D'", path.string(), line_no));
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string x_text, c_text;
    std::getline(row, x_text, ',');
    std::getline(row, c_text, ',');
    try {
      samples.push_back({std::stod(x_text) * D, std::stod(c_text)});
    } catch (const std::exception&) {
      errors.push_back(fmt::format("{}:{}: malformed row", path.string(), line_no));
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  CapacitorGeometry g;
  g.D = D;
  return CapacitanceCurve(g, std::move(samples), mesh_level, convergence);
}

Scenario apply_overrides(Scenario scenario, const RunOptions& options) {
  if (options.seed) scenario.set("montecarlo.seed", static_cast<std::int64_t>(*options.seed));
  if (options.mesh_level) scenario.set("curve.mesh_level", static_cast<std::int64_t>(*options.mesh_level));
  if (options.out_dir) scenario.set("output.directory", options.out_dir->string());
  if (auto errors = validate_scenario(scenario); !errors.empty()) throw ValidationError(std::move(errors));
  return scenario;
}

RunReport run_command(Command command, const Scenario& input, const RunOptions& options) {
  RunReport report;
  Scenario scenario;
  try {
    scenario = apply_overrides(input, options);
  } catch (const ValidationError& e) {
    report.exit_code = 1;
    report.messages = e.messages();
    return report;
  }
  if (command == Command::validate) return report;

  // Which stages run.
  std::set<Stage> stages;
  std::vector<std::string> outputs;
  switch (command) {
    case Command::capacitance: stages = {Stage::capacitance}; break;
    case Command::equilibrium: stages = {Stage::equilibrium}; break;
    case Command::modes: stages = {Stage::modes}; break;
    case Command::cool: stages = {Stage::cooling}; break;
    case Command::snr: stages = {Stage::snr}; break;
    case Command::sweep: {
      std::vector<std::string> errors;
      if (!scenario.has("sweep.path")) errors.push_back("sweep needs a [sweep] section with path");
      outputs = sweep_outputs(scenario);
      for (const auto& o : outputs) {
        try {
          stages.insert(stage_of_output(o));
        } catch (const ValidationError& e) {
          errors.push_back(e.what());
        }
      }
      if (!errors.empty()) {
        report.exit_code = 1;
        report.messages = std::move(errors);
        return report;
      }
      break;
    }
    case Command::validate: break;
  }
  // Swept keys count as given; check inputs with the first grid point set.
  Scenario first_point = scenario;
  if (command == Command::sweep) {
    try {
      for (const auto& axis : sweep_axes(scenario)) assign(first_point, axis.path, axis.values.front());
    } catch (const ValidationError& e) {
      report.exit_code = 1;
      report.messages = e.messages();
      return report;
    }
  }
  std::vector<std::string> missing;
  for (const Stage stage : stages)
    for (auto& m : missing_inputs(first_point, stage))
      if (std::find(missing.begin(), missing.end(), m) == missing.end()) missing.push_back(std::move(m));
  if (!missing.empty()) {
    report.exit_code = 1;
    report.messages = std::move(missing);
    return report;
  }

  const std::filesystem::path out_dir = scenario.text_or("output.directory", "out");
  std::filesystem::create_directories(out_dir);
  // Where the results go is not part of what was computed.
  Scenario identity = scenario;
  identity.erase("output.directory");
  const std::string metadata = metadata_block(command, identity);

  nlohmann::json manifest;
  manifest["tool"] = "emlc";
  manifest["version"] = tool_version;
  manifest["command"] = to_string(command);
  manifest["scenario_hash"] = identity.hash();
  manifest["seed"] = scenario.integer_or("montecarlo.seed", 1);
  manifest["rng"] = rng_algorithm_id();
  manifest["created_utc"] = utc_timestamp();
  manifest["stages"] = nlohmann::json::array();

  auto write_table = [&](const Table& table, nlohmann::json& stage_entry) {
    const std::filesystem::path file = out_dir / (table.name + ".csv");
    std::ofstream out(file, std::ios::binary);
    out << render(table, metadata);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", file.string()));
    report.artifacts.push_back(file);
    stage_entry["artifacts"].push_back(file.filename().string());
  };

  const auto steps = steps_for(scenario, stages);
  bool failed = false;

  if (command != Command::sweep) {
    Runner runner(scenario, {});
    for (const Step step : steps) {
      nlohmann::json entry{{"name", step_name(step)}, {"artifacts", nlohmann::json::array()}};
      if (failed) {
        entry["status"] = "skipped";
        manifest["stages"].push_back(entry);
        continue;
      }
      try {
        runner.run(step);
        for (const auto& table : tables_for(step, runner.out)) write_table(table, entry);
        entry["status"] = "complete";
      } catch (const ValidationError& e) {
        failed = true;
        report.exit_code = 1;
        entry["status"] = "failed";
        entry["error"] = e.what();
        report.messages.push_back(fmt::format("{}: {}", step_name(step), e.what()));
      } catch (const std::exception& e) {
        failed = true;
        report.exit_code = 2;
        entry["status"] = "failed";
        entry["error"] = e.what();
        report.messages.push_back(fmt::format("{}: {}", step_name(step), e.what()));
      }
      manifest["stages"].push_back(entry);
    }
    for (const auto& w : runner.out.warnings) report.messages.push_back("warning: " + w);
  } else {
    nlohmann::json entry{{"name", "sweep"}, {"artifacts", nlohmann::json::array()}};
    try {
      const auto axes = sweep_axes(scenario);
      const bool curve_varies = std::any_of(axes.begin(), axes.end(), [](const SweepAxis& a) {
        return affects_curve(a.path);
      });
      // The curve is shared across points unless a swept key changes it.
      std::optional<CapacitanceCurve> shared;
      if (!curve_varies && std::find(steps.begin(), steps.end(), Step::curve) != steps.end())
        shared = evaluate_steps(scenario, {Step::curve}, {}).curve;
      const bool want_transient = std::find(outputs.begin(), outputs.end(), "cooling.fitted_rate") != outputs.end();
      const bool want_mc = std::any_of(outputs.begin(), outputs.end(), [](const std::string& o) {
        return o.rfind("snr.S_empirical", 0) == 0;
      });

      std::vector<std::vector<double>> points;
      const std::size_t n1 = axes[0].values.size();
      const std::size_t n2 = axes.size() > 1 ? axes[1].values.size() : 1;
      for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) {
          std::vector<double> p{axes[0].values[i]};
          if (axes.size() > 1) p.push_back(axes[1].values[j]);
          points.push_back(std::move(p));
        }

      std::vector<SweepPoint> results(points.size());
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t k = next++; k < points.size(); k = next++) {
          SweepPoint& r = results[k];
          r.coordinates = points[k];
          r.values.assign(outputs.size(), nan);
          try {
            Scenario local = scenario;
            for (std::size_t a = 0; a < axes.size(); ++a) assign(local, axes[a].path, points[k][a]);
            if (auto errors = validate_scenario(local); !errors.empty()) throw ValidationError(std::move(errors));
            EvaluateOptions eo;
            eo.transient = want_transient;
            eo.montecarlo = want_mc;
            eo.curve = shared ? &*shared : nullptr;
            const Evaluation e = evaluate_steps(local, steps, eo);
            for (std::size_t o = 0; o < outputs.size(); ++o)
              if (const auto it = e.scalars.find(outputs[o]); it != e.scalars.end()) r.values[o] = it->second;
          } catch (const ValidationError& e) {
            r.validation_failure = true;
            r.status = cell_text(fmt::format("invalid: {}", e.what()));
          } catch (const std::exception& e) {
            r.numerical_failure = true;
            r.status = cell_text(fmt::format("failed: {}", e.what()));
          }
        }
      };
      const int jobs = std::max(1, options.jobs);
      if (jobs == 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
      }

      Table table{"sweep", {}, {}};
      for (const auto& a : axes) table.columns.push_back(a.path);
      for (const auto& o : outputs) table.columns.push_back(o);
      table.columns.push_back("status");
      std::size_t bad_points = 0;
      for (const auto& r : results) {
        std::vector<std::string> row;
        for (const double c : r.coordinates) row.push_back(format_number(c));
        for (const double v : r.values) row.push_back(format_number(v));
        row.push_back(r.status);
        table.rows.push_back(std::move(row));
        if (r.validation_failure || r.numerical_failure) {
          ++bad_points;
          report.exit_code = std::max(report.exit_code, r.numerical_failure ? 2 : 1);
        }
      }
      write_table(table, entry);
      entry["points"] = results.size();
      entry["failed_points"] = bad_points;
      entry["status"] = bad_points == 0 ? "complete" : "partial";
      if (bad_points > 0) failed = true;
      if (bad_points > 0) report.messages.push_back(fmt::format("{} of {} sweep points failed", bad_points, results.size()));
    } catch (const ValidationError& e) {
      failed = true;
      report.exit_code = 1;
      entry["status"] = "failed";
      entry["error"] = e.what();
      report.messages.push_back(e.what());
    } catch (const std::exception& e) {
      failed = true;
      report.exit_code = 2;
      entry["status"] = "failed";
      entry["error"] = e.what();
      report.messages.push_back(e.what());
    }
    manifest["stages"].push_back(entry);
  }

  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : report.artifacts) artifacts.push_back(a.filename().string());
  manifest["artifacts"] = artifacts;
  bool any_complete = false;
  for (const auto& st : manifest["stages"])
    if (st["status"] == "complete" || st["status"] == "partial") any_complete = true;
  manifest["status"] = !failed ? "complete" : (any_complete ? "partial" : "failed");
  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  std::ofstream(manifest_path, std::ios::binary) << manifest.dump(2) << '\n';
  report.artifacts.push_back(manifest_path);
  return report;
}

}  // namespace emlc
