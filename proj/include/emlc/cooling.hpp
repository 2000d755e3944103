#pragma once

// Cooling of the LC mode through the optically damped membrane, in the
// rotating-wave picture:
//
//   da/dt = -(Gamma_m + gamma_m) a - i (g/2) b + noise(n_opt, n_a)
//   db/dt = -gamma b - i (g/2) a + sqrt(2 gamma) b_in(n_b)
//
// All rates are amplitude rates (occupations relax at twice the rate).

#include <Eigen/Core>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace emlc {

struct CoolingParams {
  double g = 0.0;        // rad/s
  double Gamma_m = 0.0;  // optically induced membrane damping, rad/s
  double gamma_m = 0.0;  // intrinsic membrane damping, rad/s
  double gamma = 0.0;    // LC damping, rad/s
  double kappa = 0.0;    // cavity linewidth, rad/s (0 = not specified)
  double n_a = 0.0;      // membrane bath occupation
  double n_b = 0.0;      // LC bath occupation
  double n_opt = 0.0;    // occupation of the optical damping channel
  double omega = 0.0;    // carrier frequency for the sideband check (0 = skip)

  /// Throws ValidationError on negative rates or occupations.
  void validate() const;
  /// Non-fatal validity notes: Gamma_m above kappa, kappa not sideband resolved.
  std::vector<std::string> warnings() const;
};

/// Bose-Einstein occupation 1 / (exp(hbar omega / k_B T) - 1); 0 at T = 0.
double thermal_occupation(double temperature, double omega);

/// Gamma = g^2 / (4 Gamma_m).
double cooling_rate(double g, double Gamma_m);

struct WeakOccupation {
  double lc_term = 0.0;        // gamma / (Gamma + gamma) n_b
  double membrane_term = 0.0;  // (2 gamma_m / g) n_a
  double total = 0.0;
  bool in_validity_domain = false;  // Gamma_m > g
};

/// Adiabatic-elimination occupation of the LC mode. Throws DomainError when
/// g = 0 with a heated membrane bath (the membrane term is singular).
WeakOccupation occupation_weak(const CoolingParams& params);

/// Mode-resolved strong-coupling occupation gamma n_b / Gamma_m.
/// Throws DomainError when Gamma_m = 0.
double occupation_strong(const CoolingParams& params);

/// max(gamma n_b / g, gamma n_b / kappa). Throws DomainError unless g, kappa > 0.
double cooling_limit(const CoolingParams& params);

enum class CoolingRegime { weak_damping_resolved, strong_damping, intermediate };

std::string to_string(CoolingRegime regime);

/// Strong damping when Gamma_m / g >= 3; resolved normal modes when
/// g / (gamma + Gamma_m) >= 3; otherwise intermediate.
CoolingRegime classify_regime(const CoolingParams& params);

inline constexpr double regime_threshold = 3.0;

using Matrix2c = Eigen::Matrix2cd;

/// Drift matrix of the (a, b) Langevin system.
Matrix2c drift_matrix(const CoolingParams& params);
/// Diffusion matrix for normally ordered moments N_ij = <v_j^dag v_i>.
Eigen::Matrix2d diffusion_matrix(const CoolingParams& params);

struct SteadyStateResult {
  double n_a_exact = 0.0;
  double n_b_exact = 0.0;
  std::optional<double> n_b_weak;    // unset when the formula is singular
  std::optional<double> n_b_strong;  // unset when Gamma_m = 0
  double cooling_rate_Gamma = 0.0;
  CoolingRegime regime = CoolingRegime::intermediate;
  bool low_confidence = true;  // perturbative values outside their regime
  Matrix2c moments;            // N_ij = <v_j^dag v_i>, v = (a, b)
  Eigen::Vector2cd drift_eigenvalues;
  std::vector<std::string> warnings;
};

/// Solves M N + N M^dag + D = 0 exactly. Throws InstabilityError unless the
/// drift is Hurwitz.
SteadyStateResult lyapunov_steady_state(const CoolingParams& params);

struct TransientSample {
  double t = 0.0;
  double n_a = 0.0;
  double n_b = 0.0;
};

struct TransientOptions {
  double relative_tolerance = 1e-8;
  double absolute_tolerance = 1e-14;  // scaled by the largest occupation
};

/// Integrates the closed moment equations dN/dt = M N + N M^dag + D from
/// uncorrelated initial occupations, reporting steps + 1 equally spaced
/// samples over [0, duration]. Throws ValidationError when the output step
/// is too coarse for the membrane damping ((Gamma_m + gamma_m) dt > 0.1).
std::vector<TransientSample> transient_occupations(const CoolingParams& params, double n_a0,
                                                   double n_b0, double duration, int steps,
                                                   const TransientOptions& options = {});

/// Late-time amplitude relaxation rate of n_b toward `steady`: half the
/// log-slope of |n_b(t) - steady|, fitted by least squares over the second
/// half of the samples whose deviation is still resolvable.
double fitted_relaxation_rate(const std::vector<TransientSample>& series, double steady);

}  // namespace emlc
