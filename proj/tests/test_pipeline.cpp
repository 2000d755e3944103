#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "emlc/pipeline.hpp"
#include "support.hpp"

using namespace emlc;
using emlc::testing::rel_diff;
namespace fs = std::filesystem;

namespace {

const char* wire_grid_block = R"(
[geometry]
D = 2 um
r = 0.5 um
t = 0.5 um
d = 1.5 um
h = 0.1 um
eps_membrane = 7.6
)";

const char* override_block = R"(
[membrane]
f_m = 1 MHz
gamma_m = 0 rad/s
temperature = 4 K
[circuit]
C = 10 pF
L = 2.533029591058444e-3 H
gamma = 1 kHz
temperature = 4 K
[optics]
Gamma_m = 200 kHz
[coupling]
g_over_omega = 0.01
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("emlc_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Data rows of a table (comment lines and header dropped), split on ", ".
std::vector<std::vector<std::string>> rows(const fs::path& path) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(slurp(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(", ", start)) != std::string::npos; start = pos + 2)
      cells.push_back(line.substr(start, pos - start));
    cells.push_back(line.substr(start));
    out.push_back(std::move(cells));
  }
  return out;
}

std::string value_of(const fs::path& key_value_table, const std::string& quantity) {
  for (const auto& row : rows(key_value_table))
    if (row.at(0) == quantity) return row.at(1);
  FAIL("quantity not found: " << quantity);
  return {};
}

RunOptions to(const fs::path& dir, int jobs = 1) {
  RunOptions o;
  o.out_dir = dir;
  o.jobs = jobs;
  return o;
}

}  // namespace

TEST_CASE("wire-grid geometry gives zeta of about 30 D at 0.2 D") {
  const Scenario s = parse_scenario(std::string(wire_grid_block) + "[curve]\nmesh_level = 2\n");
  const fs::path dir = fresh_dir("wire_grid");
  const RunReport report = run_command(Command::capacitance, s, to(dir));
  REQUIRE(report.exit_code == 0);
  bool found = false;
  for (const auto& row : rows(dir / "curve.csv")) {
    if (std::abs(std::stod(row[0]) - 0.2) > 1e-9) continue;
    found = true;
    const double zeta_over_D = std::stod(row[2]);
    CHECK(zeta_over_D > 30.0 * 0.75);
    CHECK(zeta_over_D < 30.0 * 1.25);
  }
  CHECK(found);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(slurp(dir / "curve.csv").rfind("# tool: emlc", 0) == 0);
}

TEST_CASE("uncoupled cooling reports the bare bath occupation") {
  std::string text = override_block;
  text.replace(text.find("g_over_omega = 0.01"), 19, "g_over_omega = 0");
  const Scenario s = parse_scenario(text);
  const Evaluation e = evaluate(s, Stage::cooling);
  REQUIRE(e.cooling);
  CHECK(rel_diff(e.cooling->n_b_exact, e.cooling_params->n_b) < 1e-12);

  const fs::path dir = fresh_dir("uncoupled");
  REQUIRE(run_command(Command::cool, s, to(dir)).exit_code == 0);
  CHECK(std::stod(value_of(dir / "cooling_summary.csv", "n_b_exact")) ==
        doctest::Approx(std::stod(value_of(dir / "cooling_summary.csv", "n_b_bath"))).epsilon(1e-11));
}

TEST_CASE("modes table follows the resonant closed form") {
  const fs::path dir = fresh_dir("modes");
  REQUIRE(run_command(Command::modes, parse_scenario(override_block), to(dir)).exit_code == 0);
  const auto table = rows(dir / "modes.csv");
  REQUIRE(!table.empty());
  const Evaluation e = evaluate(parse_scenario(override_block), Stage::modes);
  CHECK(e.scalars.at("modes.omega_plus_over_omega") == doctest::Approx(std::sqrt(1.01)).epsilon(1e-12));
  CHECK(e.scalars.at("modes.omega_minus_over_omega") == doctest::Approx(std::sqrt(0.99)).epsilon(1e-12));
  const std::string text = slurp(dir / "modes.csv");
  CHECK(text.find(format_number(std::sqrt(1.01))) != std::string::npos);
  CHECK(text.find(format_number(std::sqrt(0.99))) != std::string::npos);
}

TEST_CASE("optical readout doubles the rf SNR on the plateau centre") {
  const Scenario s = parse_scenario(std::string(override_block) + R"(
[readout]
Gamma = 288.7 kHz
n_d = 0
[signal]
V_amplitude = 100 nV
nu_count = 11
)");
  const Evaluation e = evaluate(s, Stage::snr);
  CHECK(e.scalars.at("snr.ratio_to_rf") == doctest::Approx(2.0).epsilon(0.1));
  const double n_b = e.readout->n_b;
  CHECK(e.readout->Gamma == doctest::Approx(e.readout->gamma * std::sqrt(n_b)).epsilon(0.01));
}

TEST_CASE("default readout rate is the cooling rate") {
  const Scenario s = parse_scenario(std::string(override_block) + "[signal]\nV_amplitude = 1 nV\n");
  const Evaluation e = evaluate(s, Stage::snr);
  const double g = 0.01 * 2 * 3.14159265358979323846 * 1e6;
  const double Gamma_m = 2 * 3.14159265358979323846 * 200e3;
  CHECK(e.readout->Gamma == doctest::Approx(g * g / (4 * Gamma_m)));
}

TEST_CASE("log sweep writes ordered rows and is independent of the job count") {
  const Scenario s = parse_scenario(std::string(override_block) + R"(
[readout]
n_d = 83343.5
[signal]
V_amplitude = 1 nV
[sweep]
path = readout.Gamma
from = 10 Hz
to = 100 kHz
count = 20
spacing = log
outputs = snr.S0, snr.S_rf_baseline, snr.ratio_to_rf
)");
  const fs::path one = fresh_dir("sweep1");
  const fs::path four = fresh_dir("sweep4");
  REQUIRE(run_command(Command::sweep, s, to(one)).exit_code == 0);
  REQUIRE(run_command(Command::sweep, s, to(four, 4)).exit_code == 0);
  const auto table = rows(one / "sweep.csv");
  REQUIRE(table.size() == 20);
  double previous = 0.0;
  for (const auto& row : table) {
    const double Gamma = std::stod(row[0]);
    CHECK(Gamma > previous);
    previous = Gamma;
    CHECK(row.back() == "ok");
  }
  CHECK(std::stod(table.front()[0]) == doctest::Approx(2 * 3.14159265358979323846 * 10).epsilon(1e-10));
  CHECK(std::stod(table.back()[0]) == doctest::Approx(2 * 3.14159265358979323846 * 1e5).epsilon(1e-10));
  CHECK(std::stod(table[1][0]) / std::stod(table[0][0]) ==
        doctest::Approx(std::stod(table[19][0]) / std::stod(table[18][0])).epsilon(1e-9));
  CHECK(slurp(one / "sweep.csv") == slurp(four / "sweep.csv"));
}

TEST_CASE("identical inputs reproduce identical tables") {
  const Scenario s = parse_scenario(std::string(override_block) + R"(
[readout]
Gamma = 50 kHz
[signal]
V_amplitude = 100 nV
nu_count = 5
[montecarlo]
duration = 60 ms
seed = 3
)");
  const fs::path a = fresh_dir("repro_a");
  const fs::path b = fresh_dir("repro_b");
  REQUIRE(run_command(Command::snr, s, to(a)).exit_code == 0);
  REQUIRE(run_command(Command::snr, s, to(b)).exit_code == 0);
  std::size_t tables = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    if (entry.path().extension() != ".csv") continue;
    ++tables;
    CAPTURE(entry.path().filename().string());
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
  CHECK(tables >= 3);
  CHECK(fs::exists(a / "montecarlo.csv"));

  RunOptions reseeded = to(fresh_dir("repro_c"));
  reseeded.seed = 4;
  REQUIRE(run_command(Command::snr, s, reseeded).exit_code == 0);
  CHECK(slurp(a / "montecarlo.csv") != slurp(*reseeded.out_dir / "montecarlo.csv"));
}

TEST_CASE("a failing stage leaves a partial manifest") {
  const Scenario s = parse_scenario(std::string(wire_grid_block) + R"(
[curve]
x_min = 0.2 um
x_max = 1.0 um
n_samples = 9
mesh_level = 1
[membrane]
f_m = 1 MHz
x_zp = 3 fm
x_e = 0.9 um
[circuit]
L = 1 mH
A = 1 mm2
[bias]
V = 5 kV
)");
  const fs::path dir = fresh_dir("partial");
  const RunReport report = run_command(Command::equilibrium, s, to(dir));
  CHECK(report.exit_code == 2);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["status"] == "partial");
  bool curve_done = false, equilibrium_failed = false;
  for (const auto& stage : manifest["stages"]) {
    if (stage["name"] == "capacitance" && stage["status"] == "complete") curve_done = true;
    if (stage["name"] == "equilibrium" && stage["status"] == "failed") equilibrium_failed = true;
  }
  CHECK(curve_done);
  CHECK(equilibrium_failed);
  CHECK(fs::exists(dir / "curve.csv"));
  CHECK_FALSE(fs::exists(dir / "equilibrium.csv"));
}

TEST_CASE("validate writes nothing and missing inputs exit with 1") {
  const fs::path dir = fresh_dir("validate");
  CHECK(run_command(Command::validate, parse_scenario(override_block), to(dir)).exit_code == 0);
  CHECK_FALSE(fs::exists(dir));
  const RunReport missing = run_command(Command::cool, parse_scenario(wire_grid_block), to(dir));
  CHECK(missing.exit_code == 1);
  CHECK_FALSE(missing.messages.empty());
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("command names") {
  for (const auto c : {Command::capacitance, Command::equilibrium, Command::modes, Command::cool, Command::snr,
                       Command::sweep, Command::validate})
    CHECK(parse_command(to_string(c)) == c);
  CHECK_FALSE(parse_command("plot"));
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
}
