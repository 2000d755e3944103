#pragma once

// Scenario configuration: line-oriented sections with `key = value unit`
// entries. Values are stored in SI; units are mandatory for dimensioned
// quantities. See README.md for the grammar and the key reference.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace emlc {

enum class Dimension {
  length,
  area,
  mass,
  rate,        // angular rate, rad/s; Hz-family units are multiplied by 2 pi
  voltage,
  inductance,
  capacitance,
  temperature,
  time,
  dimensionless,
  integer,
  text,
};

std::string_view to_string(Dimension dimension);

/// SI unit symbol used when serialising a dimension.
std::string_view canonical_unit(Dimension dimension);

/// Scale factor from `unit` to SI for the dimension; empty if unknown.
std::optional<double> unit_scale(Dimension dimension, std::string_view unit);

struct KeySpec {
  std::string section;
  std::string key;
  Dimension dimension;
  std::string help;
  // Text keys may restrict values to a fixed set.
  std::vector<std::string> choices = {};
  // Numeric keys of a quantity that also accepts one keyword (e.g. L = auto-resonant).
  std::string keyword = {};
  std::string path() const { return section + "." + key; }
};

/// Every key the parser accepts.
const std::vector<KeySpec>& scenario_schema();
const KeySpec* find_key(std::string_view path);

using ScenarioValue = std::variant<double, std::int64_t, std::string>;

class Scenario {
 public:
  bool has(std::string_view path) const;
  const ScenarioValue* find(std::string_view path) const;

  std::optional<double> quantity(std::string_view path) const;
  std::optional<std::int64_t> integer(std::string_view path) const;
  std::optional<std::string> text(std::string_view path) const;

  double quantity_or(std::string_view path, double fallback) const;
  std::int64_t integer_or(std::string_view path, std::int64_t fallback) const;
  std::string text_or(std::string_view path, std::string fallback) const;

  /// Sets a value, checking the key exists and the value type matches.
  void set(std::string_view path, ScenarioValue value);
  void erase(std::string_view path);

  const std::map<std::string, ScenarioValue>& entries() const { return entries_; }

  /// Canonical text: sections in schema order, SI units, 17 significant
  /// digits, so that parse_scenario(serialize()) == *this.
  std::string serialize() const;

  /// 64-bit FNV-1a of serialize(), as 16 hex digits.
  std::string hash() const;

  bool operator==(const Scenario&) const = default;

 private:
  std::map<std::string, ScenarioValue> entries_;
};

/// Parses and validates scenario text. Throws ValidationError carrying every
/// problem found (with line numbers where applicable).
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::string& path);

/// Cross-field checks (mutually exclusive keys, geometric constraints, sweep
/// paths). Returned as a list; empty when valid.
std::vector<std::string> validate_scenario(const Scenario& scenario);

/// Stages a subcommand needs; used to check physics-critical inputs are
/// present.
enum class Stage { capacitance, equilibrium, modes, cooling, snr };

/// Missing-input messages for running up to `stage`.
std::vector<std::string> missing_inputs(const Scenario& scenario, Stage stage);

}  // namespace emlc
