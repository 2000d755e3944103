#include <doctest.h>

#include <cmath>
#include <random>

#include "emlc/constants.hpp"
#include "emlc/cooling.hpp"
#include "emlc/errors.hpp"
#include "support.hpp"

using namespace emlc;
using emlc::testing::rel_diff;

namespace {

// Exact LC occupation for a cold damping channel and no intrinsic membrane
// damping, from eliminating the cross moment of the 2x2 Lyapunov system.
double closed_form_n_b(double g, double Gamma_m, double gamma, double n_b) {
  const double G = 0.5 * g;
  return gamma * n_b * (Gamma_m * (Gamma_m + gamma) + G * G) / ((Gamma_m + gamma) * (gamma * Gamma_m + G * G));
}

CoolingParams base() {
  CoolingParams p;
  p.g = 1.0;
  p.Gamma_m = 20.0;
  p.gamma = 1e-3;
  p.n_b = 1000.0;
  return p;
}

}  // namespace

TEST_CASE("thermal occupation") {
  CHECK(thermal_occupation(0.0, 1e6) == 0.0);
  const double omega = 2 * 3.14159265358979 * 1e6;
  const double T = 4.0;
  const double x = constants::hbar * omega / (constants::k_boltzmann * T);
  CHECK(thermal_occupation(T, omega) == doctest::Approx(1.0 / std::expm1(x)).epsilon(1e-12));
  CHECK(thermal_occupation(T, omega) == doctest::Approx(1.0 / x - 0.5).epsilon(1e-6));
  CHECK_THROWS_AS(thermal_occupation(-1.0, omega), ValidationError);
}

TEST_CASE("uncoupled modes relax to their own baths") {
  CoolingParams p = base();
  p.g = 0.0;
  p.gamma_m = 0.3;
  p.n_a = 50.0;
  p.n_opt = 2.0;
  const SteadyStateResult r = lyapunov_steady_state(p);
  CHECK(rel_diff(r.n_b_exact, p.n_b) < 1e-12);
  CHECK(rel_diff(r.n_a_exact, (p.gamma_m * p.n_a + p.Gamma_m * p.n_opt) / (p.gamma_m + p.Gamma_m)) < 1e-12);
  CHECK(std::abs(r.moments(0, 1)) < 1e-12);
}

TEST_CASE("steady state matches the eliminated closed form") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    CoolingParams p;
    p.g = std::pow(10.0, u(rng));
    p.Gamma_m = std::pow(10.0, u(rng));
    p.gamma = std::pow(10.0, u(rng));
    p.n_b = 1e3;
    const SteadyStateResult r = lyapunov_steady_state(p);
    CHECK(rel_diff(r.n_b_exact, closed_form_n_b(p.g, p.Gamma_m, p.gamma, p.n_b)) < 1e-9);
    CHECK(r.moments.isApprox(r.moments.adjoint()));
  }
}

TEST_CASE("weak-coupling formula agrees with the exact state for heavily damped membranes") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    CoolingParams p;
    p.g = std::pow(10.0, -1.0 + 2.0 * u(rng));
    p.Gamma_m = p.g * (10.0 + 90.0 * u(rng));
    const double Gamma = cooling_rate(p.g, p.Gamma_m);
    p.gamma = Gamma * std::pow(10.0, -3.0 * u(rng));
    p.n_b = std::pow(10.0, 1.0 + 4.0 * u(rng));
    const SteadyStateResult r = lyapunov_steady_state(p);
    REQUIRE(r.n_b_weak);
    CHECK(rel_diff(*r.n_b_weak, r.n_b_exact) < 0.10);
  }
}

TEST_CASE("strong-coupling formula agrees with the exact state for resolved modes") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    CoolingParams p;
    p.gamma = std::pow(10.0, -4.0 + 2.0 * u(rng));
    p.Gamma_m = p.gamma * (5.0 + 95.0 * u(rng));
    p.g = (p.gamma + p.Gamma_m) * (10.0 + 90.0 * u(rng));
    p.n_b = std::pow(10.0, 1.0 + 4.0 * u(rng));
    const SteadyStateResult r = lyapunov_steady_state(p);
    REQUIRE(r.n_b_strong);
    CHECK(rel_diff(*r.n_b_strong, r.n_b_exact) < 0.25);
    CHECK(r.regime == CoolingRegime::weak_damping_resolved);
  }
}

TEST_CASE("weak-coupling formula value") {
  CoolingParams p = base();
  p.gamma = cooling_rate(p.g, p.Gamma_m);
  const WeakOccupation w = occupation_weak(p);
  CHECK(w.lc_term == doctest::Approx(500.0));
  CHECK(w.membrane_term == 0.0);
  CHECK(w.in_validity_domain);
  CHECK(lyapunov_steady_state(p).n_b_exact == doctest::Approx(500.0).epsilon(0.01));
  p.gamma_m = 0.1;
  p.n_a = 10.0;
  CHECK(occupation_weak(p).membrane_term == doctest::Approx(2.0));
  p.g = 0.0;
  CHECK_THROWS_AS(occupation_weak(p), DomainError);
  CHECK(occupation_strong(base()) == doctest::Approx(1e-3 * 1000.0 / 20.0));
  p.Gamma_m = 0.0;
  CHECK_THROWS_AS(occupation_strong(p), DomainError);
}

TEST_CASE("drift eigenvalues of underdamped modes share the mean decay rate") {
  CoolingParams p;
  p.g = 2.0;
  p.Gamma_m = 0.3;
  p.gamma = 0.01;
  const SteadyStateResult r = lyapunov_steady_state(p);
  for (int k = 0; k < 2; ++k) CHECK(r.drift_eigenvalues[k].real() == doctest::Approx(-(p.gamma + p.Gamma_m) / 2).epsilon(1e-12));
  CoolingParams dead;
  CHECK_THROWS_AS(lyapunov_steady_state(dead), InstabilityError);
}

TEST_CASE("regime classification") {
  CoolingParams p = base();
  CHECK(classify_regime(p) == CoolingRegime::strong_damping);
  p.Gamma_m = 0.01;
  CHECK(classify_regime(p) == CoolingRegime::weak_damping_resolved);
  p.Gamma_m = 1.0;
  CHECK(classify_regime(p) == CoolingRegime::intermediate);
  CHECK(lyapunov_steady_state(p).low_confidence);
}

TEST_CASE("validity warnings") {
  CoolingParams p = base();
  p.kappa = 10.0;
  p.omega = 5.0;
  const auto w = p.warnings();
  CHECK(w.size() == 2);
  p.kappa = 100.0;
  p.omega = 1e4;
  CHECK(p.warnings().empty());
  p.gamma = -1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("cavity-limited cooling stays within twice the stated limit") {
  CoolingParams p = base();
  p.kappa = 0.4;  // below g / 2: the linewidth caps the useful damping
  double best = 1e300;
  for (int k = 0; k <= 200; ++k) {
    p.Gamma_m = p.kappa * std::pow(10.0, -3.0 + 3.0 * k / 200.0);
    best = std::min(best, lyapunov_steady_state(p).n_b_exact);
  }
  const double limit = cooling_limit(p);
  CHECK(limit == doctest::Approx(p.gamma * p.n_b / p.kappa));
  CHECK(best >= limit);
  CHECK(best <= 2.0 * limit);
}

TEST_CASE("coupling-limited cooling bottoms out at four times gamma n_b / g") {
  CoolingParams p = base();
  p.kappa = 100.0;
  double best = 1e300;
  double best_Gamma_m = 0.0;
  for (int k = 0; k <= 400; ++k) {
    p.Gamma_m = std::pow(10.0, -2.0 + 4.0 * k / 400.0);
    const double n = lyapunov_steady_state(p).n_b_exact;
    if (n < best) {
      best = n;
      best_Gamma_m = p.Gamma_m;
    }
  }
  CHECK(best_Gamma_m == doctest::Approx(p.g / 2).epsilon(0.03));
  CHECK(best / (p.gamma * p.n_b / p.g) == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("transient relaxes at gamma + Gamma and ends at the steady state") {
  CoolingParams p = base();
  p.Gamma_m = 5.0;
  p.gamma = 0.005;
  const SteadyStateResult steady = lyapunov_steady_state(p);
  const double rate = p.gamma + cooling_rate(p.g, p.Gamma_m);
  const double duration = 15.0 / rate;
  const auto series = transient_occupations(p, 0.0, p.n_b, duration, 20000);
  CHECK(series.size() == 20001);
  CHECK(series.front().n_b == p.n_b);
  CHECK(series.back().t == doctest::Approx(duration));
  CHECK(fitted_relaxation_rate(series, steady.n_b_exact) == doctest::Approx(rate).epsilon(0.05));

  const auto long_run = transient_occupations(p, 0.0, p.n_b, 40.0 / rate, 40000);
  CHECK(rel_diff(long_run.back().n_b, steady.n_b_exact) < 1e-6);
  CHECK(rel_diff(long_run.back().n_a, steady.n_a_exact) < 1e-6);
}

TEST_CASE("transient rejects steps that are coarse for the membrane damping") {
  CHECK_THROWS_AS(transient_occupations(base(), 0.0, 1.0, 10.0, 10), ValidationError);
  CHECK_THROWS_AS(transient_occupations(base(), 0.0, 1.0, -1.0, 10), ValidationError);
  const auto series = transient_occupations(base(), 0.0, 1.0, 0.1, 100);
  CHECK_THROWS_AS(fitted_relaxation_rate({series.begin(), series.begin() + 2}, 0.0), ValidationError);
}

TEST_CASE("occupation and rate reference points") {
  const double omega = 2 * 3.14159265358979 * 1e6;
  const double T_ln2 = constants::hbar * omega / (constants::k_boltzmann * std::log(2.0));
  CHECK(thermal_occupation(T_ln2, omega) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(thermal_occupation(300.0, omega) == doctest::Approx(6.2e6).epsilon(0.01));
  CHECK(cooling_rate(0.0, 1.0) == 0.0);
  CHECK(cooling_rate(3.0, 3.0) == doctest::Approx(0.75));
  CHECK(cooling_rate(omega * 1e-2, omega * 1e-1) == doctest::Approx(omega * 2.5e-4));
}

TEST_CASE("cooling never heats the circuit above its bath") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    CoolingParams p;
    p.g = std::pow(10.0, -3.0 + 6.0 * u(rng));
    p.Gamma_m = std::pow(10.0, -3.0 + 6.0 * u(rng));
    p.gamma_m = std::pow(10.0, -4.0 + 4.0 * u(rng));
    p.gamma = std::pow(10.0, -3.0 + 6.0 * u(rng));
    p.n_b = std::pow(10.0, 5.0 * u(rng));
    p.n_a = p.n_b * u(rng);
    p.n_opt = p.n_b * u(rng);
    const SteadyStateResult r = lyapunov_steady_state(p);
    CHECK(r.n_b_exact >= 0.0);
    CHECK(r.n_a_exact >= 0.0);
    CHECK(r.n_b_exact <= p.n_b * (1 + 1e-9));
  }
}
