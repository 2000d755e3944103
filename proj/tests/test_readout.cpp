#include <doctest.h>

#include <cmath>
#include <numeric>

#include "emlc/constants.hpp"
#include "emlc/errors.hpp"
#include "emlc/readout.hpp"
#include "support.hpp"

using namespace emlc;
using emlc::testing::rel_diff;

namespace {

ReadoutParams params(double Gamma, double gamma, double n_b, double n_d) {
  ReadoutParams p;
  p.Gamma = Gamma;
  p.gamma = gamma;
  p.n_b = n_b;
  p.n_d = n_d;
  return p;
}

}  // namespace

TEST_CASE("voltage conversion") {
  const double C = 1e-12, L = 25.33e-3;
  const double expected = -std::pow(C / (4 * constants::hbar * constants::hbar * L), 0.25) * 1e-9;
  CHECK(voltage_to_signal(1e-9, C, L) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::abs(voltage_to_signal(1e-9, C, L)) == doctest::Approx(1.73e5).epsilon(0.01));
  const std::vector<double> V{1e-9, -2e-9};
  const auto f = voltage_to_signal(V, C, L);
  CHECK(f[1] == doctest::Approx(-2.0 * f[0]));
  CHECK_THROWS_AS(voltage_to_signal(1.0, 0.0, L), ValidationError);
}

TEST_CASE("rf-amplifier limit of the SNR formula") {
  const double gamma = 1.0, n = 1e4, f2 = 3.0;
  const ReadoutParams p = params(gamma, gamma, n, n);
  CHECK(rel_diff(snr(p, f2, 0.0), rf_baseline_snr(gamma, n, f2)) < 1e-3);
  // The exact ratio carries the (2n + 1) factors.
  const double exact = 2 * f2 / (2 * (2 * n + 1) + 2 * (2 * n + 1));
  CHECK(snr(p, f2, 0.0) == doctest::Approx(exact).epsilon(1e-14));
}

TEST_CASE("SNR scaling and its maximum at zero detuning") {
  const ReadoutParams p = params(2.0, 0.5, 100.0, 3.0);
  CHECK(snr(p, 2.0, 0.3) == doctest::Approx(2.0 * snr(p, 1.0, 0.3)));
  for (double nu = -50.0; nu <= 50.0; nu += 0.5) CHECK(snr(p, 1.0, nu) <= snr(p, 1.0, 0.0));
  CHECK(snr(p, 1.0, 4.0) == doctest::Approx(snr(p, 1.0, -4.0)));
  CHECK(rf_baseline_snr(2.0, 100.0, 1.0) == doctest::Approx(0.5 * rf_baseline_snr(1.0, 100.0, 1.0)));
}

TEST_CASE("rf SNR at n_d = n_b peaks at Gamma = gamma") {
  const double gamma = 1.0, n = 1e4;
  double best = 0.0, best_Gamma = 0.0;
  for (int k = 0; k <= 400; ++k) {
    const double Gamma = gamma * std::pow(10.0, -2.0 + 4.0 * k / 400.0);
    const double s = snr(params(Gamma, gamma, n, n), 1.0, 0.0);
    if (s > best) {
      best = s;
      best_Gamma = Gamma;
    }
  }
  CHECK(best_Gamma == doctest::Approx(gamma).epsilon(1e-12));
}

TEST_CASE("coherent-probe plateau stays within 3 dB of twice the rf baseline") {
  const double gamma = 1.0, n = 1e4, f2 = 1.0;
  const double reference = f2 / (2 * gamma * n);
  for (int k = 0; k <= 200; ++k) {
    const double Gamma = gamma * std::pow(n, k / 200.0);
    const double s = snr(params(Gamma, gamma, n, 0.0), f2, 0.0);
    CHECK(s >= 0.5 * reference);
    CHECK(s <= 2.0 * reference);
  }
  // Plateau edges against the closed-form ratios.
  CHECK(snr(params(gamma * n, gamma, n, 0.0), f2, 0.0) / reference ==
        doctest::Approx(4.0 / (5.0 + 2.0 / n + 1.0 / (n * n))).epsilon(1e-12));
  CHECK(snr(params(gamma, gamma, n, 0.0), f2, 0.0) / reference == doctest::Approx(2.0 * n / (2 * n + 2)).epsilon(1e-12));
  const double centre = gamma * std::sqrt(n);
  const double ratio = snr(params(centre, gamma, n, 0.0), f2, 0.0) / rf_baseline_snr(gamma, n, f2);
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("broadening the rf circuit costs sqrt(bandwidth ratio) in amplitude sensitivity") {
  const double gamma = 1.0, n = 1e4, widened = 40.0;
  // Smallest |f| with S = 1.
  auto threshold = [&](double g) { return std::sqrt(1.0 / rf_baseline_snr(g, n, 1.0)); };
  CHECK(threshold(widened) / threshold(gamma) == doctest::Approx(std::sqrt(widened / gamma)).epsilon(1e-14));
  CHECK(rf_baseline_snr(gamma, n, 1.0) / rf_baseline_snr(widened, n, 1.0) == doctest::Approx(widened / gamma));
}

TEST_CASE("detection bandwidth") {
  CHECK(detection_bandwidth(1.0, 1.0, 0.0).formula == 0.0);
  const double w = 2 * 3.14159265358979323846 * 1e3;
  const DetectionBandwidth bw = detection_bandwidth(w, w, 1e4);
  CHECK(bw.formula == doctest::Approx(2 * w * std::sqrt(2e4)).epsilon(1e-12));
  CHECK(bw.formula / (2 * 3.14159265358979323846) == doctest::Approx(283e3).epsilon(1e-3));

  // Half-maximum detuning of the formula, n_d = 0, gamma^2 + Gamma^2 << 4 gamma Gamma n_b.
  const ReadoutParams p = params(3.0, 0.5, 1e6, 0.0);
  const DetectionBandwidth direct = detection_bandwidth(p.Gamma, p.gamma, p.n_b, p.n_d);
  CHECK(snr(p, 1.0, direct.half_max_detuning) == doctest::Approx(0.5 * snr(p, 1.0, 0.0)).epsilon(1e-12));
  CHECK(direct.half_max_detuning == doctest::Approx(2 * std::sqrt(p.gamma * p.Gamma * p.n_b)).epsilon(0.01));
  CHECK(direct.half_max_full_width == doctest::Approx(2 * direct.half_max_detuning));
}

TEST_CASE("spectrum on a grid with regime flags") {
  const ReadoutParams p = params(10.0, 1.0, 50.0, 0.0);
  const std::vector<double> grid{-5.0, 0.0, 5.0};
  const SnrSpectrum s = snr_spectrum(p, SignalSpec::flat({3.0, 4.0}), grid);
  REQUIRE(s.samples.size() == 3);
  CHECK(s.samples[1].S == doctest::Approx(snr(p, 25.0, 0.0)));
  CHECK(s.samples[0].S_rf_baseline == doctest::Approx(25.0 / (4 * 50.0)));
  CHECK(s.baseline_assumption_weak);
  CHECK(s.quantum_limited_probe);
  CHECK(s.on_plateau);
  CHECK_THROWS_AS(snr_spectrum(params(0.0, 1.0, 1.0, 0.0), SignalSpec::flat(1.0), grid), ValidationError);
}

TEST_CASE("sampled signals interpolate and vanish outside their range") {
  const SignalSpec s = SignalSpec::sampled({-1.0, 1.0}, {{2.0, 0.0}, {4.0, 0.0}});
  CHECK(s.amplitude(0.0).real() == doctest::Approx(3.0));
  CHECK(s.amplitude(1.0).real() == 4.0);
  CHECK(s.amplitude(1.5) == std::complex<double>(0.0));
  CHECK_THROWS_AS(SignalSpec::sampled({1.0, 0.0}, {1.0, 1.0}), ValidationError);
  const std::vector<std::complex<double>> V{1e-9, 2e-9};
  const SignalSpec v = SignalSpec::from_voltage({0.0, 1.0}, V, 1e-12, 1e-3);
  CHECK(v.amplitude(1.0).real() == doctest::Approx(voltage_to_signal(2e-9, 1e-12, 1e-3)));
}

TEST_CASE("seeded homodyne records are reproducible") {
  const ReadoutParams p = params(1.0, 1.0, 10.0, 0.0);
  const std::vector<double> tones{0.0};
  const auto a = simulate_homodyne_record(p, SignalSpec::flat(1.0), tones, 100.0, 0.01, 42, 0);
  const auto b = simulate_homodyne_record(p, SignalSpec::flat(1.0), tones, 100.0, 0.01, 42, 0);
  const auto c = simulate_homodyne_record(p, SignalSpec::flat(1.0), tones, 100.0, 0.01, 43, 0);
  const auto d = simulate_homodyne_record(p, SignalSpec::flat(1.0), tones, 100.0, 0.01, 42, 1);
  CHECK(a.x_plus == b.x_plus);
  CHECK(a.p_minus == b.p_minus);
  CHECK(a.x_plus != c.x_plus);
  CHECK(a.x_plus != d.x_plus);
  CHECK(a.x_plus.size() == 10000);
  CHECK(rng_algorithm_id().find("mt19937_64") != std::string::npos);
}

TEST_CASE("homodyne input checks") {
  const ReadoutParams p = params(1.0, 1.0, 10.0, 0.0);
  CHECK_THROWS_AS(simulate_homodyne_record(p, SignalSpec::flat(1.0), {}, 100.0, 0.1, 1, 0), ValidationError);
  CHECK_THROWS_AS(simulate_homodyne(p, SignalSpec::flat(1.0), 10.0, 0.01, 1), ValidationError);
  HomodyneOptions close;
  close.bins = {0.0, 0.01};
  CHECK_THROWS_AS(simulate_homodyne(p, SignalSpec::flat(1.0), 1000.0, 0.01, 1, close), ValidationError);
}

TEST_CASE("noise-only homodyne run shows no signal") {
  const ReadoutParams p = params(1.0, 1.0, 100.0, 0.0);
  HomodyneOptions options;
  options.bins = {-2.0, 0.0, 2.0};
  const HomodyneEstimate e = simulate_homodyne(p, SignalSpec::flat(0.0), 4000.0, 0.02, 3, options);
  for (const auto& bin : e.bins) {
    CAPTURE(bin.nu);
    CHECK(bin.S_theory == 0.0);
    CHECK(std::abs(bin.S_empirical) < 3.0 * bin.std_error + 1e-12);
    CHECK(rel_diff(bin.noise_psd, bin.noise_psd_theory) < 0.1);
  }
}

TEST_CASE("homodyne SNR matches the formula at a coherent-probe point") {
  const ReadoutParams p = params(1.0, 1.0, 100.0, 0.0);
  const HomodyneEstimate e = simulate_homodyne(p, SignalSpec::flat(10.0), 1e4, 0.02, 1);
  REQUIRE(e.bins.size() == 1);
  const auto& bin = e.bins.front();
  CHECK(rel_diff(bin.S_empirical, bin.S_theory) < 0.15);
  CHECK(std::abs(bin.S_empirical - bin.S_theory) < 3.0 * bin.std_error);
  CHECK(e.seed == 1);
  CHECK(e.segments > 10);
}
