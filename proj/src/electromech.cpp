#include "emlc/electromech.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fmt/core.h>
#include <string>
#include <vector>

#include "emlc/constants.hpp"
#include "emlc/errors.hpp"

namespace emlc {

double MembraneParams::zero_point_length() const {
  return std::sqrt(constants::hbar / (2.0 * mass * omega_m));
}

double MembraneParams::mass_for_zero_point_length(double x_zp, double omega_m) {
  return constants::hbar / (2.0 * omega_m * x_zp * x_zp);
}

void MembraneParams::validate() const {
  std::vector<std::string> errors;
  if (!(mass > 0.0)) errors.push_back("membrane mass must be > 0");
  if (!(omega_m > 0.0)) errors.push_back("membrane omega_m must be > 0");
  if (!(gamma_m >= 0.0)) errors.push_back("membrane gamma_m must be >= 0");
  if (!(x_e >= 0.0)) errors.push_back("membrane x_e must be >= 0");
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

void CircuitParams::validate() const {
  std::vector<std::string> errors;
  if (inductance && !(*inductance > 0.0)) errors.push_back("circuit inductance must be > 0");
  if (!(gamma >= 0.0)) errors.push_back("circuit gamma must be >= 0");
  if (!(plate_area > 0.0)) errors.push_back("circuit plate area must be > 0");
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

double circuit_frequency(double inductance, double capacitance) {
  return 1.0 / std::sqrt(inductance * capacitance);
}

double zero_point_charge(double inductance, double omega_0) {
  return std::sqrt(constants::hbar / (2.0 * inductance * omega_0));
}

double resonant_inductance(double omega, double capacitance) {
  return 1.0 / (omega * omega * capacitance);
}

namespace {

// dC/dx in F/m.
double capacitance_slope(const CapacitanceCurve& curve, double area, double x) {
  return constants::epsilon_0 * area / curve.geometry().D * curve.slope(x);
}

// Signed force residual m w^2 (x_e - X) - C V^2 / (2 zeta) = m w^2 (x_e - X) + C' V^2 / 2.
double force_residual(const MembraneParams& m, double area, const CapacitanceCurve& curve, double V,
                      double X) {
  const double stiffness = m.mass * m.omega_m * m.omega_m;
  return stiffness * (m.x_e - X) + 0.5 * capacitance_slope(curve, area, X) * V * V;
}

}  // namespace

double bias_energy(const MembraneParams& membrane, const CircuitParams& circuit,
                   const CapacitanceCurve& curve, double V, double x) {
  const double stiffness = membrane.mass * membrane.omega_m * membrane.omega_m;
  const double dc = curve.absolute(x, circuit.plate_area) - curve.absolute(membrane.x_e, circuit.plate_area);
  const double dx = x - membrane.x_e;
  return 0.5 * stiffness * dx * dx - 0.5 * dc * V * V;
}

BiasEquilibrium solve_equilibrium(const MembraneParams& membrane, const CircuitParams& circuit,
                                  const CapacitanceCurve& curve, double V,
                                  const EquilibriumOptions& options) {
  membrane.validate();
  circuit.validate();
  if (!curve.contains(membrane.x_e))
    throw DomainError(fmt::format("x_e = {:.6e} m is outside the capacitance curve range", membrane.x_e));

  const double D = curve.geometry().D;
  const double area = circuit.plate_area;
  const double stiffness = membrane.mass * membrane.omega_m * membrane.omega_m;
  const double residual_scale = stiffness * D;

  double alpha = options.damping;
  double X = membrane.x_e;
  double previous_step = 0.0;
  int iterations = 0;
  bool converged = false;
  for (; iterations < options.max_iterations; ++iterations) {
    const double target = membrane.x_e + 0.5 * capacitance_slope(curve, area, X) * V * V / stiffness;
    const double step = alpha * (target - X);
    const double next = X + step;
    if (!curve.contains(next))
      throw DomainError(fmt::format("equilibrium iterate X = {:.6e} m left the capacitance curve "
                                    "range (V = {:.6g} V)",
                                    next, V));
    // A sign flip without a decrease in magnitude means the relaxed map is
    // still expansive here.
    if (previous_step != 0.0 && step * previous_step < 0.0 && std::abs(step) >= std::abs(previous_step))
      alpha *= 0.5;
    previous_step = step;
    X = next;
    if (std::abs(step) < options.step_tolerance * D &&
        std::abs(force_residual(membrane, area, curve, V, X)) < options.residual_tolerance * residual_scale) {
      converged = true;
      ++iterations;
      break;
    }
  }
  if (!converged)
    throw ConvergenceError(fmt::format("bias equilibrium did not converge in {} iterations at V = {:.6g} V; "
                                       "electrostatic stiffness likely exceeds the restoring force (pull-in)",
                                       options.max_iterations, V));

  BiasEquilibrium eq;
  eq.V = V;
  eq.X = X;
  eq.x_e = membrane.x_e;
  eq.iterations = iterations;
  eq.C_at_X = curve.absolute(X, area);
  eq.q_bias = eq.C_at_X * V;
  eq.zeta_at_X = zeta_unchecked(curve, X);
  eq.inductance = circuit.inductance ? *circuit.inductance : resonant_inductance(membrane.omega_m, eq.C_at_X);
  eq.omega_0_at_X = circuit_frequency(eq.inductance, eq.C_at_X);
  eq.force_residual = force_residual(membrane, area, curve, V, X);

  const double displacement = membrane.x_e - X;
  if (V == 0.0 || eq.zeta_at_X.infinite) {
    eq.g = 0.0;
  } else {
    eq.g = coupling_constant(membrane.omega_m, eq.omega_0_at_X, std::max(displacement, 0.0), eq.zeta_at_X.value);
  }
  const double delta_c = eq.C_at_X - curve.absolute(membrane.x_e, area);
  eq.g_delta_c = coupling_constant_delta_c(membrane.omega_m, eq.omega_0_at_X, std::max(delta_c, 0.0), eq.C_at_X);

  if (!eq.zeta_at_X.infinite) {
    const double q2_over_c = eq.q_bias * eq.q_bias / eq.C_at_X;
    eq.force_balance_shift = q2_over_c / (2.0 * stiffness * eq.zeta_at_X.value);
    const double x_zp = membrane.zero_point_length();
    eq.displayed_shift =
        0.5 * q2_over_c / (constants::hbar * membrane.omega_m) * x_zp * x_zp / eq.zeta_at_X.value;
  }
  eq.stable = check_stability(eq.omega_0_at_X, membrane.omega_m, eq.g);
  return eq;
}

double bias_for_displacement(const MembraneParams& membrane, const CircuitParams& circuit,
                             const CapacitanceCurve& curve, double displacement) {
  if (!(displacement >= 0.0)) throw DomainError("bias displacement must be >= 0");
  const double X = membrane.x_e - displacement;
  if (!curve.contains(X) || !curve.contains(membrane.x_e))
    throw DomainError("requested displacement leaves the capacitance curve range");
  const double slope = capacitance_slope(curve, circuit.plate_area, X);
  if (displacement == 0.0) return 0.0;
  if (!(slope < 0.0))
    throw DomainError("no attractive bias can produce this displacement: dC/dx is not negative at X");
  const double stiffness = membrane.mass * membrane.omega_m * membrane.omega_m;
  return std::sqrt(2.0 * stiffness * displacement / -slope);
}

double coupling_constant(double omega_m, double omega_0, double displacement, double zeta) {
  const double radicand = displacement / (2.0 * zeta);
  if (!(radicand >= 0.0))
    throw DomainError(fmt::format("negative coupling radicand (x_e - X = {:.3e} m, zeta = {:.3e} m); "
                                  "the configuration is not attractive",
                                  displacement, zeta));
  return std::sqrt(omega_m * omega_0) * std::sqrt(radicand);
}

double coupling_constant(const BiasEquilibrium& eq, double omega_m) {
  if (eq.zeta_at_X.infinite) return 0.0;
  return coupling_constant(omega_m, eq.omega_0_at_X, eq.x_e - eq.X, eq.zeta_at_X.value);
}

double coupling_constant_delta_c(double omega_m, double omega_0, double delta_c, double c) {
  const double radicand = delta_c / (2.0 * c);
  if (!(radicand >= 0.0)) throw DomainError("negative capacitance change in the coupling radicand");
  return std::sqrt(omega_m * omega_0) * std::sqrt(radicand);
}

Eigen::Matrix2d potential_matrix(double omega_0, double omega_m, double g) {
  const double off = g * std::sqrt(omega_0 * omega_m);
  Eigen::Matrix2d k;
  k << omega_m * omega_m, off, off, omega_0 * omega_0;
  return k;
}

NormalModes normal_modes(double omega_0, double omega_m, double g) {
  if (!(omega_0 > 0.0) || !(omega_m > 0.0)) throw ValidationError("normal_modes needs positive frequencies");
  // Scale to O(1) entries before diagonalising.
  const double scale = omega_0 * omega_m;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(potential_matrix(omega_0, omega_m, g) / scale);
  const Eigen::Vector2d values = solver.eigenvalues() * scale;  // ascending

  NormalModes modes;
  modes.eigenvalues << values[1], values[0];
  modes.mode_vectors.col(0) = solver.eigenvectors().col(1);
  modes.mode_vectors.col(1) = solver.eigenvectors().col(0);
  for (int k = 0; k < 2; ++k)
    if (modes.mode_vectors.col(k).sum() < 0.0 ||
        (modes.mode_vectors.col(k).sum() == 0.0 && modes.mode_vectors(0, k) < 0.0))
      modes.mode_vectors.col(k) *= -1.0;
  modes.omega_plus = std::sqrt(std::max(values[1], 0.0));
  modes.imaginary_minus = values[0] < 0.0;
  modes.omega_minus = std::sqrt(std::abs(values[0]));
  return modes;
}

bool check_stability(double omega_0, double omega_m, double g) {
  return g < std::sqrt(omega_0 * omega_m);
}

}  // namespace emlc
