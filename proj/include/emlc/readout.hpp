#pragma once

// Optical readout of rf signals injected into the LC circuit.
//
//   db/dt = -(gamma + Gamma) b + i f(t) + sqrt(2 gamma) b_in - sqrt(2 Gamma) d_in
//   d_out = d_in + sqrt(2 Gamma) b
//
// d_out is mixed with an auxiliary field d_b on a 50/50 beam splitter and the
// x quadrature of d_+ and the p quadrature of d_- are recorded. Frequencies
// nu are detunings from the LC resonance in the rotating frame.

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace emlc {

struct ReadoutParams {
  double Gamma = 0.0;  // measurement (cooling) rate, rad/s
  double gamma = 0.0;  // LC damping, rad/s
  double n_b = 0.0;    // LC bath occupation
  double n_d = 0.0;    // readout field occupation, 0 for coherent light

  void validate() const;
};

/// f = -(C / (4 hbar^2 L))^(1/4) V.
double voltage_to_signal(double V, double C, double L);
std::vector<double> voltage_to_signal(std::span<const double> V, double C, double L);

/// Frequency-domain signal amplitudes f(nu), either one value applied at
/// every detuning or a sampled spectrum. In a time-domain run each sample
/// becomes a tone f e^{-i nu t}.
class SignalSpec {
 public:
  static SignalSpec flat(std::complex<double> f);
  static SignalSpec sampled(std::vector<double> nu, std::vector<std::complex<double>> f);
  /// Voltage envelope amplitudes at the given detunings, converted with
  /// voltage_to_signal.
  static SignalSpec from_voltage(std::vector<double> nu, std::span<const std::complex<double>> V, double C,
                                 double L);

  /// f at detuning nu: the flat value, the exact sample, or a linear
  /// interpolation between samples (0 outside the sampled range).
  std::complex<double> amplitude(double nu) const;
  bool is_flat() const { return flat_; }
  std::span<const double> frequencies() const { return nu_; }
  std::span<const std::complex<double>> amplitudes() const { return f_; }

 private:
  bool flat_ = true;
  std::vector<double> nu_;
  std::vector<std::complex<double>> f_;
};

/// S(nu) = 2 Gamma |f|^2 / (2 gamma Gamma (2 n_b + 1) + (gamma^2 + Gamma^2 + nu^2)(2 n_d + 1)).
double snr(const ReadoutParams& params, double f_abs2, double nu);

/// |f|^2 / (4 gamma n_b): rf-amplifier readout at Gamma = gamma, n_d = n_b >> 1.
double rf_baseline_snr(double gamma, double n_b, double f_abs2);

/// The rf baseline formula assumes n_b >> 1; flagged below this.
inline constexpr double rf_baseline_min_occupation = 100.0;

struct DetectionBandwidth {
  double formula = 0.0;           // 2 sqrt(2 Gamma gamma n_b)
  double half_max_full_width = 0.0;  // 2 nu_half, where S(nu_half) = S(0) / 2
  double half_max_detuning = 0.0;    // nu_half
};

DetectionBandwidth detection_bandwidth(double Gamma, double gamma, double n_b, double n_d = 0.0);

struct SnrSample {
  double nu = 0.0;
  double S = 0.0;
  double S_rf_baseline = 0.0;
};

struct SnrSpectrum {
  std::vector<SnrSample> samples;
  double baseline_rf = 0.0;  // at nu = 0
  DetectionBandwidth bandwidth;
  // Regime flags.
  bool baseline_assumption_weak = false;  // n_b < rf_baseline_min_occupation
  bool quantum_limited_probe = false;     // n_d == 0
  bool on_plateau = false;                // gamma <= Gamma <= gamma n_b
};

SnrSpectrum snr_spectrum(const ReadoutParams& params, const SignalSpec& signal, std::span<const double> nu_grid);

// ---------------------------------------------------------------------------
// Stochastic homodyne record.

struct HomodyneOptions {
  // Welch segment length; 0 picks 64 / (gamma + Gamma), capped at duration / 5.
  double segment_duration = 0.0;
  // Detunings to evaluate. Empty means the signal's own sample frequencies,
  // or nu = 0 for a flat signal.
  std::vector<double> bins;
};

struct HomodyneRecord {
  double dt = 0.0;
  std::vector<double> x_plus;   // x quadrature of d_+
  std::vector<double> p_minus;  // p quadrature of d_-
};

struct HomodyneBin {
  double nu = 0.0;
  double S_empirical = 0.0;
  double std_error = 0.0;
  double S_theory = 0.0;
  double noise_psd = 0.0;         // estimated PSD of x_+ + i p_-
  double noise_psd_theory = 0.0;  // 2 N(nu)
};

struct HomodyneEstimate {
  std::vector<HomodyneBin> bins;
  std::uint64_t seed = 0;
  std::string rng_algorithm;
  double segment_duration = 0.0;
  int segments = 0;
  std::size_t steps = 0;
};

/// Name of the pseudo-random generator, recorded in output metadata.
std::string rng_algorithm_id();

/// One trajectory of the recorded quadratures. The random stream is derived
/// from (seed, trajectory) only. Throws ValidationError unless
/// dt max(gamma, Gamma) < 0.05.
HomodyneRecord simulate_homodyne_record(const ReadoutParams& params, const SignalSpec& signal,
                                        std::span<const double> tone_frequencies, double duration,
                                        double dt, std::uint64_t seed, std::uint64_t trajectory);

/// Empirical S(nu): coherent tone power in x_+ + i p_- (trajectory 0, with
/// signal) over the Welch noise PSD of a noise-only trajectory (trajectory 1,
/// Hann window, 50% overlap).
HomodyneEstimate simulate_homodyne(const ReadoutParams& params, const SignalSpec& signal, double duration,
                                   double dt, std::uint64_t seed, const HomodyneOptions& options = {});

}  // namespace emlc
