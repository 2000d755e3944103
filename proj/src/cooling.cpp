#include "emlc/cooling.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <fmt/core.h>

#include "emlc/constants.hpp"
#include "emlc/errors.hpp"

namespace emlc {

void CoolingParams::validate() const {
  std::vector<std::string> errors;
  auto non_negative = [&](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) errors.push_back(fmt::format("cooling {} must be >= 0", name));
  };
  non_negative(g, "g");
  non_negative(Gamma_m, "Gamma_m");
  non_negative(gamma_m, "gamma_m");
  non_negative(gamma, "gamma");
  non_negative(kappa, "kappa");
  non_negative(n_a, "n_a");
  non_negative(n_b, "n_b");
  non_negative(n_opt, "n_opt");
  non_negative(omega, "omega");
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

std::vector<std::string> CoolingParams::warnings() const {
  std::vector<std::string> out;
  if (kappa > 0.0 && Gamma_m > kappa)
    out.push_back(fmt::format("Gamma_m = {:.6g} rad/s exceeds the cavity linewidth kappa = {:.6g} rad/s",
                              Gamma_m, kappa));
  if (kappa > 0.0 && omega > 0.0 && !(kappa < omega))
    out.push_back("cavity is not sideband resolved (kappa >= omega); optical heating is not modelled");
  return out;
}

double thermal_occupation(double temperature, double omega) {
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (!(omega > 0.0)) throw ValidationError("frequency must be > 0");
  if (temperature == 0.0) return 0.0;
  const double x = constants::hbar * omega / (constants::k_boltzmann * temperature);
  return 1.0 / std::expm1(x);
}

double cooling_rate(double g, double Gamma_m) {
  if (!(Gamma_m > 0.0)) throw DomainError("cooling rate needs Gamma_m > 0");
  return g * g / (4.0 * Gamma_m);
}

WeakOccupation occupation_weak(const CoolingParams& p) {
  WeakOccupation out;
  out.in_validity_domain = p.Gamma_m > p.g;
  const double Gamma = p.Gamma_m > 0.0 ? cooling_rate(p.g, p.Gamma_m) : 0.0;
  if (p.gamma + Gamma > 0.0) out.lc_term = p.gamma / (Gamma + p.gamma) * p.n_b;
  else out.lc_term = p.n_b;  // isolated mode keeps its bath value
  if (p.gamma_m > 0.0 && p.n_a > 0.0) {
    if (p.g == 0.0) throw DomainError("weak-coupling occupation is singular at g = 0 with a heated membrane bath");
    out.membrane_term = 2.0 * p.gamma_m / p.g * p.n_a;
  }
  out.total = out.lc_term + out.membrane_term;
  return out;
}

double occupation_strong(const CoolingParams& p) {
  if (!(p.Gamma_m > 0.0)) throw DomainError("strong-coupling occupation needs Gamma_m > 0");
  return p.gamma * p.n_b / p.Gamma_m;
}

double cooling_limit(const CoolingParams& p) {
  if (!(p.g > 0.0) || !(p.kappa > 0.0)) throw DomainError("cooling limit needs g > 0 and kappa > 0");
  return std::max(p.gamma * p.n_b / p.g, p.gamma * p.n_b / p.kappa);
}

std::string to_string(CoolingRegime regime) {
  switch (regime) {
    case CoolingRegime::weak_damping_resolved: return "weak_damping_resolved";
    case CoolingRegime::strong_damping: return "strong_damping";
    case CoolingRegime::intermediate: return "intermediate";
  }
  return "intermediate";
}

CoolingRegime classify_regime(const CoolingParams& p) {
  if (p.g > 0.0 && p.Gamma_m >= regime_threshold * p.g) return CoolingRegime::strong_damping;
  if (p.g >= regime_threshold * (p.gamma + p.Gamma_m) && p.g > 0.0) return CoolingRegime::weak_damping_resolved;
  return CoolingRegime::intermediate;
}

Matrix2c drift_matrix(const CoolingParams& p) {
  using namespace std::complex_literals;
  Matrix2c m;
  m << -(p.Gamma_m + p.gamma_m), -0.5i * p.g, -0.5i * p.g, -p.gamma;
  return m;
}

Eigen::Matrix2d diffusion_matrix(const CoolingParams& p) {
  Eigen::Matrix2d d = Eigen::Matrix2d::Zero();
  d(0, 0) = 2.0 * (p.gamma_m * p.n_a + p.Gamma_m * p.n_opt);
  d(1, 1) = 2.0 * p.gamma * p.n_b;
  return d;
}

SteadyStateResult lyapunov_steady_state(const CoolingParams& p) {
  p.validate();
  const Matrix2c M = drift_matrix(p);
  SteadyStateResult out;
  out.drift_eigenvalues = Eigen::ComplexEigenSolver<Matrix2c>(M).eigenvalues();
  for (int k = 0; k < 2; ++k)
    if (!(out.drift_eigenvalues[k].real() < 0.0))
      throw InstabilityError(fmt::format("drift matrix is not Hurwitz (eigenvalue {:.6g}{:+.6g}i); "
                                         "a mode does not decay",
                                         out.drift_eigenvalues[k].real(), out.drift_eigenvalues[k].imag()));

  // vec(M N + N M^dag) = (I (x) M + conj(M) (x) I) vec(N), column-major vec.
  Eigen::Matrix4cd op = Eigen::Matrix4cd::Zero();
  const Matrix2c I = Matrix2c::Identity();
  const Matrix2c Mc = M.conjugate();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      op.block<2, 2>(2 * a, 2 * b) += I(a, b) * M;
      op.block<2, 2>(2 * a, 2 * b) += Mc(a, b) * I;
    }
  const Eigen::Matrix2d D = diffusion_matrix(p);
  Eigen::Vector4cd rhs;
  rhs << -D(0, 0), -D(1, 0), -D(0, 1), -D(1, 1);
  const Eigen::Vector4cd vecN = op.fullPivLu().solve(rhs);
  out.moments << vecN[0], vecN[2], vecN[1], vecN[3];
  out.moments = 0.5 * (out.moments + out.moments.adjoint()).eval();

  out.n_a_exact = out.moments(0, 0).real();
  out.n_b_exact = out.moments(1, 1).real();
  out.cooling_rate_Gamma = p.Gamma_m > 0.0 ? cooling_rate(p.g, p.Gamma_m) : 0.0;
  try {
    out.n_b_weak = occupation_weak(p).total;
  } catch (const DomainError&) {
  }
  if (p.Gamma_m > 0.0) out.n_b_strong = occupation_strong(p);
  out.regime = classify_regime(p);
  out.low_confidence = out.regime == CoolingRegime::intermediate;
  out.warnings = p.warnings();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Real state: [Re N00, Re N11, Re N10, Im N10]; N01 = conj(N10), N00 and
// N11 are real.
using MomentState = std::array<double, 4>;

struct MomentSystem {
  Matrix2c M;
  Eigen::Matrix2d D;

  void operator()(const MomentState& s, MomentState& ds, double /*t*/) const {
    Matrix2c N;
    const std::complex<double> n10(s[2], s[3]);
    N << s[0], std::conj(n10), n10, s[1];
    const Matrix2c dN = M * N + N * M.adjoint() + D.cast<std::complex<double>>();
    ds[0] = dN(0, 0).real();
    ds[1] = dN(1, 1).real();
    ds[2] = dN(1, 0).real();
    ds[3] = dN(1, 0).imag();
  }
};

}  // namespace

std::vector<TransientSample> transient_occupations(const CoolingParams& p, double n_a0, double n_b0,
                                                   double duration, int steps,
                                                   const TransientOptions& options) {
  p.validate();
  std::vector<std::string> errors;
  if (!(duration > 0.0)) errors.push_back("transient duration must be > 0");
  if (steps < 1) errors.push_back("transient steps must be >= 1");
  if (!(n_a0 >= 0.0) || !(n_b0 >= 0.0)) errors.push_back("initial occupations must be >= 0");
  if (!errors.empty()) throw ValidationError(std::move(errors));
  const double dt = duration / steps;
  if ((p.Gamma_m + p.gamma_m) * dt > 0.1)
    throw ValidationError(fmt::format("transient step {:.3e} s is too coarse for the membrane damping "
                                      "((Gamma_m + gamma_m) dt = {:.3g} > 0.1); increase steps",
                                      dt, (p.Gamma_m + p.gamma_m) * dt));

  namespace odeint = boost::numeric::odeint;
  const MomentSystem system{drift_matrix(p), diffusion_matrix(p)};
  const double scale = std::max({1.0, n_a0, n_b0, p.n_a, p.n_b, p.n_opt});
  auto stepper = odeint::make_dense_output(options.absolute_tolerance * scale, options.relative_tolerance,
                                           odeint::runge_kutta_dopri5<MomentState>());

  std::vector<double> times(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) times[static_cast<std::size_t>(k)] = dt * k;
  std::vector<TransientSample> series;
  series.reserve(times.size());
  MomentState state{n_a0, n_b0, 0.0, 0.0};
  odeint::integrate_times(stepper, system, state, times.begin(), times.end(), dt,
                          [&](const MomentState& s, double t) { series.push_back({t, s[0], s[1]}); });
  return series;
}

double fitted_relaxation_rate(const std::vector<TransientSample>& series, double steady) {
  if (series.size() < 4) throw ValidationError("relaxation fit needs at least 4 samples");
  const double initial = std::abs(series.front().n_b - steady);
  if (!(initial > 0.0)) throw DomainError("n_b starts at its steady state; no relaxation to fit");
  // Deviations below this are dominated by integrator tolerance.
  const double floor = 1e-5 * initial;
  std::vector<std::pair<double, double>> usable;
  for (const auto& s : series) {
    const double dev = std::abs(s.n_b - steady);
    if (dev <= floor) break;
    usable.emplace_back(s.t, std::log(dev));
  }
  if (usable.size() < 4) throw DomainError("too few resolvable samples to fit a relaxation rate");
  const std::size_t first = usable.size() / 2;
  double st = 0, sy = 0, stt = 0, sty = 0;
  const auto n = static_cast<double>(usable.size() - first);
  for (std::size_t k = first; k < usable.size(); ++k) {
    st += usable[k].first;
    sy += usable[k].second;
    stt += usable[k].first * usable[k].first;
    sty += usable[k].first * usable[k].second;
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  return -0.5 * slope;
}

}  // namespace emlc
