#pragma once

// Biased membrane-capacitor equilibrium, linearised coupling and normal modes.
// SI units throughout with explicit hbar.

#include <Eigen/Core>
#include <optional>

#include "emlc/electrostatics.hpp"

namespace emlc {

struct MembraneParams {
  double mass = 0.0;     // kg
  double omega_m = 0.0;  // rad/s
  double gamma_m = 0.0;  // intrinsic amplitude damping, rad/s
  double x_e = 0.0;      // equilibrium gap at zero bias, m

  /// sqrt(hbar / (2 m omega_m)).
  double zero_point_length() const;
  /// Mass that gives the requested zero-point length at omega_m.
  static double mass_for_zero_point_length(double x_zp, double omega_m);
  void validate() const;
};

struct CircuitParams {
  // Empty means "auto-resonant": L chosen so that omega_0(X) = omega_m.
  std::optional<double> inductance;  // H
  double gamma = 0.0;                // amplitude damping, rad/s
  double plate_area = 0.0;           // m^2

  void validate() const;
};

/// 1 / sqrt(L C).
double circuit_frequency(double inductance, double capacitance);
/// sqrt(hbar / (2 L omega_0)).
double zero_point_charge(double inductance, double omega_0);
/// L such that 1 / sqrt(L C) = omega.
double resonant_inductance(double omega, double capacitance);

struct EquilibriumOptions {
  double damping = 0.5;             // initial relaxation factor alpha
  double step_tolerance = 1e-6;     // |X_{k+1} - X_k| < step_tolerance * D
  double residual_tolerance = 1e-9; // |force residual| < tol * m omega_m^2 D
  int max_iterations = 10000;
};

struct BiasEquilibrium {
  double V = 0.0;             // bias voltage
  double X = 0.0;             // displaced equilibrium gap
  double q_bias = 0.0;        // C(X) V
  double C_at_X = 0.0;        // F
  ZetaEstimate zeta_at_X;     // m
  double g = 0.0;             // rad/s, zeta form
  double g_delta_c = 0.0;     // rad/s, capacitance-change form
  double omega_0_at_X = 0.0;  // rad/s
  double inductance = 0.0;    // H actually used (resolved when auto-resonant)
  bool stable = false;
  int iterations = 0;

  // Diagnostics.
  double x_e = 0.0;
  double force_residual = 0.0;           // N
  double displayed_shift = 0.0;          // q^2 x_zp^2 / (2 C omega_m zeta) / hbar, m
  double force_balance_shift = 0.0;      // q^2 / (2 C m omega_m^2 zeta), m
};

/// Damped fixed-point iteration on the force balance
///   m omega_m^2 (x_e - X) = C(X) V^2 / (2 zeta(X)).
/// Throws DomainError when x_e or an iterate leaves the curve range and
/// ConvergenceError (pull-in / bistability) when the iteration stalls.
BiasEquilibrium solve_equilibrium(const MembraneParams& membrane, const CircuitParams& circuit,
                                  const CapacitanceCurve& curve, double V,
                                  const EquilibriumOptions& options = {});

/// Bias voltage whose equilibrium lies `displacement` below x_e.
double bias_for_displacement(const MembraneParams& membrane, const CircuitParams& circuit,
                             const CapacitanceCurve& curve, double displacement);

/// Classical energy of the biased system along x at fixed V, relative to x_e:
///   m omega_m^2 (x - x_e)^2 / 2 - (C(x) - C(x_e)) V^2 / 2.
double bias_energy(const MembraneParams& membrane, const CircuitParams& circuit,
                   const CapacitanceCurve& curve, double V, double x);

/// g = sqrt(omega_m omega_0) sqrt((x_e - X) / (2 zeta)).
/// Throws DomainError on a negative radicand.
double coupling_constant(double omega_m, double omega_0, double displacement, double zeta);
double coupling_constant(const BiasEquilibrium& eq, double omega_m);

/// g = sqrt(omega_m omega_0) sqrt(delta_C / (2 C)).
double coupling_constant_delta_c(double omega_m, double omega_0, double delta_c, double c);

struct NormalModes {
  double omega_plus = 0.0;
  double omega_minus = 0.0;
  // Columns are the (+, -) normal-mode vectors over mass-weighted
  // (membrane, circuit) coordinates.
  Eigen::Matrix2d mode_vectors = Eigen::Matrix2d::Identity();
  // Potential-energy eigenvalues omega^2 for (+, -).
  Eigen::Vector2d eigenvalues = Eigen::Vector2d::Zero();
  bool imaginary_minus = false;  // lower mode has omega^2 < 0
};

/// Potential-energy matrix of the coupled oscillators in mass-weighted
/// coordinates (sqrt(m) x_m, sqrt(L) q):
///   [[omega_m^2, g sqrt(omega_0 omega_m)], [g sqrt(omega_0 omega_m), omega_0^2]].
/// On resonance its eigenvalues are omega^2 (1 +- g/omega).
Eigen::Matrix2d potential_matrix(double omega_0, double omega_m, double g);

NormalModes normal_modes(double omega_0, double omega_m, double g);

/// True iff g < sqrt(omega_0 omega_m); the marginal case is unstable.
bool check_stability(double omega_0, double omega_m, double g);

}  // namespace emlc
