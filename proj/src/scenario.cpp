#include "emlc/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/core.h>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "emlc/errors.hpp"

namespace emlc {

namespace {

struct UnitEntry {
  std::string_view symbol;
  double scale;
};

constexpr double two_pi = 2.0 * std::numbers::pi;

const std::vector<UnitEntry>& units_for(Dimension dimension) {
  static const std::vector<UnitEntry> length{{"m", 1.0},    {"mm", 1e-3},  {"um", 1e-6},
                                             {"µm", 1e-6},  {"nm", 1e-9},  {"pm", 1e-12},
                                             {"fm", 1e-15}};
  static const std::vector<UnitEntry> area{{"m2", 1.0}, {"m^2", 1.0}, {"mm2", 1e-6}, {"mm^2", 1e-6},
                                           {"um2", 1e-12}, {"um^2", 1e-12}};
  static const std::vector<UnitEntry> mass{{"kg", 1.0},   {"g", 1e-3},   {"mg", 1e-6},
                                           {"ug", 1e-9},  {"ng", 1e-12}, {"pg", 1e-15}};
  static const std::vector<UnitEntry> rate{{"rad/s", 1.0},      {"krad/s", 1e3},       {"Mrad/s", 1e6},
                                           {"Grad/s", 1e9},     {"Hz", two_pi},        {"kHz", two_pi * 1e3},
                                           {"MHz", two_pi * 1e6}, {"GHz", two_pi * 1e9}};
  static const std::vector<UnitEntry> voltage{{"V", 1.0}, {"kV", 1e3}, {"mV", 1e-3}, {"uV", 1e-6}, {"nV", 1e-9}};
  static const std::vector<UnitEntry> inductance{{"H", 1.0}, {"mH", 1e-3}, {"uH", 1e-6}, {"nH", 1e-9}};
  static const std::vector<UnitEntry> capacitance{{"F", 1.0},    {"uF", 1e-6},  {"nF", 1e-9},
                                                  {"pF", 1e-12}, {"fF", 1e-15}};
  static const std::vector<UnitEntry> temperature{{"K", 1.0}, {"mK", 1e-3}, {"uK", 1e-6}};
  static const std::vector<UnitEntry> time{{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}};
  static const std::vector<UnitEntry> none;
  switch (dimension) {
    case Dimension::length: return length;
    case Dimension::area: return area;
    case Dimension::mass: return mass;
    case Dimension::rate: return rate;
    case Dimension::voltage: return voltage;
    case Dimension::inductance: return inductance;
    case Dimension::capacitance: return capacitance;
    case Dimension::temperature: return temperature;
    case Dimension::time: return time;
    default: return none;
  }
}

bool is_quantity(Dimension d) {
  return d != Dimension::integer && d != Dimension::text;
}

bool needs_unit(Dimension d) {
  return is_quantity(d) && d != Dimension::dimensionless;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

// Keys that name the swept quantity. Sweep bounds take that quantity's units.
constexpr std::string_view sweep_axes[] = {"", "2"};

}  // namespace

std::string_view to_string(Dimension dimension) {
  switch (dimension) {
    case Dimension::length: return "length";
    case Dimension::area: return "area";
    case Dimension::mass: return "mass";
    case Dimension::rate: return "rate";
    case Dimension::voltage: return "voltage";
    case Dimension::inductance: return "inductance";
    case Dimension::capacitance: return "capacitance";
    case Dimension::temperature: return "temperature";
    case Dimension::time: return "time";
    case Dimension::dimensionless: return "dimensionless";
    case Dimension::integer: return "integer";
    case Dimension::text: return "text";
  }
  return "text";
}

std::string_view canonical_unit(Dimension dimension) {
  switch (dimension) {
    case Dimension::length: return "m";
    case Dimension::area: return "m2";
    case Dimension::mass: return "kg";
    case Dimension::rate: return "rad/s";
    case Dimension::voltage: return "V";
    case Dimension::inductance: return "H";
    case Dimension::capacitance: return "F";
    case Dimension::temperature: return "K";
    case Dimension::time: return "s";
    default: return "";
  }
}

std::optional<double> unit_scale(Dimension dimension, std::string_view unit) {
  for (const auto& u : units_for(dimension))
    if (u.symbol == unit) return u.scale;
  return std::nullopt;
}

const std::vector<KeySpec>& scenario_schema() {
  using D = Dimension;
  static const std::vector<KeySpec> schema{
      {"geometry", "D", D::length, "plate to wire-top separation"},
      {"geometry", "r", D::length, "wire width"},
      {"geometry", "t", D::length, "wire thickness"},
      {"geometry", "d", D::length, "gap between wires"},
      {"geometry", "h", D::length, "membrane thickness"},
      {"geometry", "eps_membrane", D::dimensionless, "membrane relative permittivity"},
      {"geometry", "bottom", D::text, "bottom electrode shape", {"wire_grid", "solid_plate"}},

      {"curve", "x_min", D::length, "first sampled membrane position (default 0.05 D)"},
      {"curve", "x_max", D::length, "last sampled membrane position (default 0.6 D)"},
      {"curve", "n_samples", D::integer, "number of samples (default 23)"},
      {"curve", "mesh_level", D::integer, "mesh refinement level (default 4)"},
      {"curve", "file", D::text, "read the curve from this table instead of solving"},

      {"membrane", "mass", D::mass, "effective mass"},
      {"membrane", "x_zp", D::length, "zero-point length; alternative to mass"},
      {"membrane", "omega_m", D::rate, "angular frequency"},
      {"membrane", "f_m", D::rate, "frequency (Hz units are converted to rad/s); alternative to omega_m"},
      {"membrane", "gamma_m", D::rate, "intrinsic amplitude damping"},
      {"membrane", "Q_m", D::dimensionless, "quality factor; alternative to gamma_m"},
      {"membrane", "x_e", D::length, "zero-bias gap"},
      {"membrane", "temperature", D::temperature, "membrane bath temperature"},

      {"circuit", "L", D::inductance, "inductance, or auto-resonant", {}, "auto-resonant"},
      {"circuit", "C", D::capacitance, "capacitance used when no equilibrium is solved"},
      {"circuit", "omega_0", D::rate, "LC frequency used when no equilibrium is solved"},
      {"circuit", "gamma", D::rate, "LC amplitude damping"},
      {"circuit", "Q", D::dimensionless, "LC quality factor; alternative to gamma"},
      {"circuit", "A", D::area, "plate area"},
      {"circuit", "temperature", D::temperature, "LC bath temperature"},

      {"optics", "Gamma_m", D::rate, "optically induced membrane damping"},
      {"optics", "kappa", D::rate, "cavity linewidth"},
      {"optics", "n_opt", D::dimensionless, "occupation of the optical damping channel (default 0)"},

      {"bias", "V", D::voltage, "bias voltage"},
      {"bias", "displacement", D::length, "target x_e - X; alternative to V"},

      {"coupling", "g", D::rate, "coupling constant override"},
      {"coupling", "g_over_omega", D::dimensionless, "g / omega_m override; alternative to g"},

      {"transient", "duration", D::time, "integration time"},
      {"transient", "steps", D::integer, "output steps (default 2000)"},
      {"transient", "n_a0", D::dimensionless, "initial membrane occupation (default: bath value)"},
      {"transient", "n_b0", D::dimensionless, "initial LC occupation (default: bath value)"},

      {"readout", "Gamma", D::rate, "measurement rate (default g^2 / 4 Gamma_m)"},
      {"readout", "n_d", D::dimensionless, "probe field occupation (default 0)"},

      {"signal", "V_amplitude", D::voltage, "rf voltage amplitude, flat over the grid"},
      {"signal", "nu_min", D::rate, "lowest detuning"},
      {"signal", "nu_max", D::rate, "highest detuning"},
      {"signal", "nu_count", D::integer, "detuning grid points (default 101)"},

      {"montecarlo", "duration", D::time, "record length"},
      {"montecarlo", "dt", D::time, "time step"},
      {"montecarlo", "segment", D::time, "Welch segment length (default automatic)"},
      {"montecarlo", "seed", D::integer, "random seed (default 1)"},
      {"montecarlo", "tones", D::integer, "detunings evaluated, spread over the signal grid (default 1: nu = 0)"},

      {"sweep", "path", D::text, "swept key, section.key"},
      {"sweep", "from", D::text, "first value with unit"},
      {"sweep", "to", D::text, "last value with unit"},
      {"sweep", "count", D::integer, "number of points"},
      {"sweep", "spacing", D::text, "linear or log (default linear)", {"linear", "log"}},
      {"sweep", "path2", D::text, "second swept key"},
      {"sweep", "from2", D::text, "second axis first value"},
      {"sweep", "to2", D::text, "second axis last value"},
      {"sweep", "count2", D::integer, "second axis points"},
      {"sweep", "spacing2", D::text, "linear or log", {"linear", "log"}},
      {"sweep", "outputs", D::text, "comma-separated exported scalars"},

      {"output", "directory", D::text, "output directory (default out)"},
      {"output", "formats", D::text, "table formats (csv)", {"csv"}},
  };
  return schema;
}

const KeySpec* find_key(std::string_view path) {
  for (const auto& spec : scenario_schema())
    if (spec.path() == path) return &spec;
  return nullptr;
}

// ---------------------------------------------------------------------------

bool Scenario::has(std::string_view path) const { return find(path) != nullptr; }

const ScenarioValue* Scenario::find(std::string_view path) const {
  const auto it = entries_.find(std::string(path));
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<double> Scenario::quantity(std::string_view path) const {
  const auto* v = find(path);
  if (v == nullptr) return std::nullopt;
  if (const auto* d = std::get_if<double>(v)) return *d;
  return std::nullopt;
}

std::optional<std::int64_t> Scenario::integer(std::string_view path) const {
  const auto* v = find(path);
  if (v == nullptr) return std::nullopt;
  if (const auto* i = std::get_if<std::int64_t>(v)) return *i;
  return std::nullopt;
}

std::optional<std::string> Scenario::text(std::string_view path) const {
  const auto* v = find(path);
  if (v == nullptr) return std::nullopt;
  if (const auto* s = std::get_if<std::string>(v)) return *s;
  return std::nullopt;
}

double Scenario::quantity_or(std::string_view path, double fallback) const {
  return quantity(path).value_or(fallback);
}

std::int64_t Scenario::integer_or(std::string_view path, std::int64_t fallback) const {
  return integer(path).value_or(fallback);
}

std::string Scenario::text_or(std::string_view path, std::string fallback) const {
  return text(path).value_or(std::move(fallback));
}

void Scenario::set(std::string_view path, ScenarioValue value) {
  const KeySpec* spec = find_key(path);
  if (spec == nullptr) throw ValidationError(fmt::format("unknown key '{}'", path));
  const bool ok = std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) return is_quantity(spec->dimension);
        else if constexpr (std::is_same_v<T, std::int64_t>) return spec->dimension == Dimension::integer;
        else return spec->dimension == Dimension::text || v == spec->keyword;
      },
      value);
  if (!ok) throw ValidationError(fmt::format("value type does not match key '{}' ({})", path,
                                             to_string(spec->dimension)));
  entries_[std::string(path)] = std::move(value);
}

void Scenario::erase(std::string_view path) { entries_.erase(std::string(path)); }

std::string Scenario::serialize() const {
  std::string out;
  std::string section;
  for (const auto& spec : scenario_schema()) {
    const auto* v = find(spec.path());
    if (v == nullptr) continue;
    if (spec.section != section) {
      if (!out.empty()) out += '\n';
      out += fmt::format("[{}]\n", spec.section);
      section = spec.section;
    }
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, double>) {
            const auto unit = canonical_unit(spec.dimension);
            if (unit.empty()) out += fmt::format("{} = {}\n", spec.key, format_double(x));
            else out += fmt::format("{} = {} {}\n", spec.key, format_double(x), unit);
          } else {
            out += fmt::format("{} = {}\n", spec.key, x);
          }
        },
        *v);
  }
  return out;
}

std::string Scenario::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : serialize()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------------------

namespace {

// Parses "number unit" for a quantity key; errors name the key.
std::optional<double> parse_quantity(const KeySpec& spec, std::string_view value, std::string& error) {
  const auto space = value.find_first_of(" \t");
  const std::string_view number = trim(value.substr(0, space));
  const std::string_view unit = space == std::string_view::npos ? std::string_view{} : trim(value.substr(space));
  const auto v = parse_double(number);
  if (!v) {
    error = fmt::format("{}: '{}' is not a number", spec.path(), number);
    return std::nullopt;
  }
  if (!needs_unit(spec.dimension)) {
    if (!unit.empty()) {
      error = fmt::format("{}: dimensionless value takes no unit (got '{}')", spec.path(), unit);
      return std::nullopt;
    }
    return *v;
  }
  if (unit.empty()) {
    error = fmt::format("{}: missing unit ({} expected, e.g. '{} {}')", spec.path(), to_string(spec.dimension),
                        number, canonical_unit(spec.dimension));
    return std::nullopt;
  }
  const auto scale = unit_scale(spec.dimension, unit);
  if (!scale) {
    error = fmt::format("{}: unit '{}' is not a {} unit", spec.path(), unit, to_string(spec.dimension));
    return std::nullopt;
  }
  return *v * *scale;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Scenario scenario;
  std::vector<std::string> errors;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(fmt::format("line {}: malformed section header '{}'", line_no, line));
        continue;
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      const bool known = std::any_of(scenario_schema().begin(), scenario_schema().end(),
                                     [&](const KeySpec& s) { return s.section == section; });
      if (!known) errors.push_back(fmt::format("line {}: unknown section [{}]", line_no, section));
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back(fmt::format("line {}: expected 'key = value'", line_no));
      continue;
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) {
      errors.push_back(fmt::format("line {}: key '{}' outside any section", line_no, key));
      continue;
    }
    const std::string path = section + "." + key;
    const KeySpec* spec = find_key(path);
    if (spec == nullptr) {
      errors.push_back(fmt::format("line {}: unknown key '{}'", line_no, path));
      continue;
    }
    if (!seen.insert(path).second) {
      errors.push_back(fmt::format("line {}: duplicate key '{}'", line_no, path));
      continue;
    }
    if (value.empty()) {
      errors.push_back(fmt::format("line {}: {}: missing value", line_no, path));
      continue;
    }

    if (spec->dimension == Dimension::text) {
      if (!spec->choices.empty() &&
          std::find(spec->choices.begin(), spec->choices.end(), value) == spec->choices.end()) {
        std::string allowed;
        for (const auto& c : spec->choices) allowed += (allowed.empty() ? "" : ", ") + c;
        errors.push_back(fmt::format("line {}: {}: '{}' is not one of {}", line_no, path, value, allowed));
        continue;
      }
      scenario.set(path, std::string(value));
    } else if (spec->dimension == Dimension::integer) {
      const auto v = parse_int(value);
      if (!v) errors.push_back(fmt::format("line {}: {}: '{}' is not an integer", line_no, path, value));
      else scenario.set(path, *v);
    } else if (!spec->keyword.empty() && value == spec->keyword) {
      scenario.set(path, std::string(value));
    } else {
      std::string error;
      if (const auto v = parse_quantity(*spec, value, error)) scenario.set(path, *v);
      else errors.push_back(fmt::format("line {}: {}", line_no, error));
    }
  }

  for (auto& e : validate_scenario(scenario)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return scenario;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot read scenario file '{}'", path));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str());
}

// ---------------------------------------------------------------------------

namespace {

void check_positive(const Scenario& s, std::string_view path, std::vector<std::string>& errors) {
  if (const auto v = s.quantity(path); v && !(*v > 0.0))
    errors.push_back(fmt::format("{} must be > 0", path));
}

void check_non_negative(const Scenario& s, std::string_view path, std::vector<std::string>& errors) {
  if (const auto v = s.quantity(path); v && !(*v >= 0.0))
    errors.push_back(fmt::format("{} must be >= 0", path));
}

void check_exclusive(const Scenario& s, std::string_view a, std::string_view b, std::vector<std::string>& errors) {
  if (s.has(a) && s.has(b)) errors.push_back(fmt::format("{} and {} are alternatives; give only one", a, b));
}

// Parses a sweep bound like "1e3 rad/s" against the swept key's dimension.
std::optional<double> sweep_bound(const KeySpec& target, const std::string& text, std::string_view what,
                                  std::vector<std::string>& errors) {
  if (target.dimension == Dimension::integer) {
    const auto v = parse_int(trim(text));
    if (!v) {
      errors.push_back(fmt::format("sweep.{}: '{}' is not an integer for {}", what, text, target.path()));
      return std::nullopt;
    }
    return static_cast<double>(*v);
  }
  std::string error;
  const auto v = parse_quantity(target, trim(text), error);
  if (!v) errors.push_back(fmt::format("sweep.{}: {}", what, error));
  return v;
}

}  // namespace

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> errors;
  for (const char* key : {"geometry.D", "geometry.r", "geometry.t", "geometry.d", "geometry.h",
                          "geometry.eps_membrane", "membrane.mass", "membrane.x_zp", "membrane.omega_m",
                          "membrane.f_m", "membrane.Q_m", "circuit.L", "circuit.C", "circuit.omega_0",
                          "circuit.Q", "circuit.A", "montecarlo.duration", "montecarlo.dt", "montecarlo.segment",
                          "transient.duration"})
    check_positive(s, key, errors);
  for (const char* key : {"membrane.gamma_m", "membrane.temperature", "membrane.x_e", "circuit.gamma",
                          "circuit.temperature", "optics.Gamma_m", "optics.kappa", "optics.n_opt",
                          "coupling.g", "coupling.g_over_omega", "readout.Gamma", "readout.n_d",
                          "transient.n_a0", "transient.n_b0", "geometry.t"})
    check_non_negative(s, key, errors);
  if (const auto eps = s.quantity("geometry.eps_membrane"); eps && *eps < 1.0)
    errors.push_back("geometry.eps_membrane must be >= 1");

  check_exclusive(s, "membrane.mass", "membrane.x_zp", errors);
  check_exclusive(s, "membrane.omega_m", "membrane.f_m", errors);
  check_exclusive(s, "membrane.gamma_m", "membrane.Q_m", errors);
  check_exclusive(s, "circuit.gamma", "circuit.Q", errors);
  check_exclusive(s, "bias.V", "bias.displacement", errors);
  check_exclusive(s, "coupling.g", "coupling.g_over_omega", errors);

  for (const char* key : {"curve.n_samples", "curve.mesh_level", "transient.steps", "signal.nu_count",
                          "montecarlo.tones"})
    if (const auto v = s.integer(key); v && *v < 1) errors.push_back(fmt::format("{} must be >= 1", key));
  if (const auto n = s.integer("curve.n_samples"); n && *n < 5)
    errors.push_back("curve.n_samples must be >= 5");
  if (const auto seed = s.integer("montecarlo.seed"); seed && *seed < 0)
    errors.push_back("montecarlo.seed must be >= 0");

  const auto D = s.quantity("geometry.D");
  const auto h = s.quantity("geometry.h");
  if (D && h && *h >= *D) errors.push_back("geometry.h must be < geometry.D");
  if (D && h) {
    if (const auto x_e = s.quantity("membrane.x_e"); x_e && *x_e + *h >= *D)
      errors.push_back("membrane.x_e + geometry.h must be < geometry.D");
    if (const auto x_max = s.quantity("curve.x_max"); x_max && *x_max + *h >= *D)
      errors.push_back("curve.x_max + geometry.h must be < geometry.D");
  }
  if (const auto lo = s.quantity("curve.x_min"), hi = s.quantity("curve.x_max"); lo && hi && !(*lo < *hi))
    errors.push_back("curve.x_min must be < curve.x_max");
  if (const auto lo = s.quantity("signal.nu_min"), hi = s.quantity("signal.nu_max"); lo && hi && *lo > *hi)
    errors.push_back("signal.nu_min must be <= signal.nu_max");
  if (const auto disp = s.quantity("bias.displacement"); disp && *disp < 0.0)
    errors.push_back("bias.displacement must be >= 0 (the bias attracts the membrane)");

  // Sweep axes: each names one existing numeric key with bounds and a count.
  for (const auto suffix : sweep_axes) {
    const std::string path_key = fmt::format("sweep.path{}", suffix);
    const std::string from_key = fmt::format("sweep.from{}", suffix);
    const std::string to_key = fmt::format("sweep.to{}", suffix);
    const std::string count_key = fmt::format("sweep.count{}", suffix);
    const std::string spacing_key = fmt::format("sweep.spacing{}", suffix);
    const auto path = s.text(path_key);
    if (!path) {
      for (const auto& k : {from_key, to_key, count_key, spacing_key})
        if (s.has(k)) errors.push_back(fmt::format("{} given without {}", k, path_key));
      continue;
    }
    const KeySpec* target = find_key(*path);
    if (target == nullptr || target->section == "sweep" || target->section == "output") {
      errors.push_back(fmt::format("{}: '{}' is not a sweepable scenario key", path_key, *path));
      continue;
    }
    if (target->dimension == Dimension::text) {
      errors.push_back(fmt::format("{}: '{}' is not numeric", path_key, *path));
      continue;
    }
    std::optional<double> lo, hi;
    if (const auto t = s.text(from_key)) lo = sweep_bound(*target, *t, from_key.substr(6), errors);
    else errors.push_back(fmt::format("{} is required", from_key));
    if (const auto t = s.text(to_key)) hi = sweep_bound(*target, *t, to_key.substr(6), errors);
    else errors.push_back(fmt::format("{} is required", to_key));
    const auto count = s.integer(count_key);
    if (!count) errors.push_back(fmt::format("{} is required", count_key));
    else if (*count < 1) errors.push_back(fmt::format("{} must be >= 1", count_key));
    if (s.text_or(spacing_key, "linear") == "log" && lo && hi && !(*lo > 0.0 && *hi > 0.0))
      errors.push_back(fmt::format("{} = log needs positive bounds", spacing_key));
  }
  if (s.has("sweep.path2") && !s.has("sweep.path")) errors.push_back("sweep.path2 needs sweep.path");
  if (const auto a = s.text("sweep.path"), b = s.text("sweep.path2"); a && b && *a == *b)
    errors.push_back("sweep.path and sweep.path2 must name different keys");
  if (s.has("sweep.path") && !s.has("sweep.outputs")) errors.push_back("sweep.outputs is required for a sweep");
  return errors;
}

std::vector<std::string> missing_inputs(const Scenario& s, Stage stage) {
  std::vector<std::string> missing;
  auto need = [&](std::string_view path) {
    if (!s.has(path)) missing.push_back(fmt::format("{} is required", path));
  };
  auto need_one = [&](std::string_view a, std::string_view b) {
    if (!s.has(a) && !s.has(b)) missing.push_back(fmt::format("{} or {} is required", a, b));
  };
  // A coupling override replaces the curve and equilibrium for the later stages.
  const bool have_coupling = (s.has("coupling.g") || s.has("coupling.g_over_omega")) &&
                             stage != Stage::capacitance && stage != Stage::equilibrium;
  const bool need_curve = !have_coupling;

  if (need_curve) {
    if (s.has("curve.file")) {
      if (!s.has("geometry.D")) need("geometry.D");
    } else {
      for (const char* k : {"geometry.D", "geometry.r", "geometry.t", "geometry.d", "geometry.h",
                            "geometry.eps_membrane"})
        need(k);
    }
  }
  if (stage == Stage::capacitance) return missing;

  need_one("membrane.omega_m", "membrane.f_m");
  if (!have_coupling) {
    need_one("membrane.mass", "membrane.x_zp");
    need("membrane.x_e");
    need("circuit.A");
    need("circuit.L");
    need_one("bias.V", "bias.displacement");
  }
  if (stage == Stage::equilibrium || stage == Stage::modes) return missing;

  need_one("circuit.gamma", "circuit.Q");
  need("circuit.temperature");
  if (stage == Stage::cooling) {
    need("optics.Gamma_m");
    need("membrane.temperature");
    return missing;
  }
  // snr
  if (!s.has("readout.Gamma")) need("optics.Gamma_m");
  need("signal.V_amplitude");
  if (have_coupling) {
    need("circuit.C");
    if (!s.has("circuit.L") || s.text("circuit.L")) missing.push_back("circuit.L (a value) is required");
  }
  return missing;
}

}  // namespace emlc
