#include "emlc/readout.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <numbers>
#include <random>

#include "emlc/constants.hpp"
#include "emlc/errors.hpp"

namespace emlc {

void ReadoutParams::validate() const {
  std::vector<std::string> errors;
  if (!(Gamma > 0.0)) errors.push_back("readout Gamma must be > 0");
  if (!(gamma > 0.0)) errors.push_back("readout gamma must be > 0");
  if (!(n_b >= 0.0)) errors.push_back("readout n_b must be >= 0");
  if (!(n_d >= 0.0)) errors.push_back("readout n_d must be >= 0");
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

double voltage_to_signal(double V, double C, double L) {
  if (!(C > 0.0) || !(L > 0.0)) throw ValidationError("voltage_to_signal needs C > 0 and L > 0");
  const double hbar2 = constants::hbar * constants::hbar;
  return -std::pow(C / (4.0 * hbar2 * L), 0.25) * V;
}

std::vector<double> voltage_to_signal(std::span<const double> V, double C, double L) {
  std::vector<double> out;
  out.reserve(V.size());
  for (double v : V) out.push_back(voltage_to_signal(v, C, L));
  return out;
}

SignalSpec SignalSpec::flat(std::complex<double> f) {
  SignalSpec s;
  s.flat_ = true;
  s.f_ = {f};
  return s;
}

SignalSpec SignalSpec::sampled(std::vector<double> nu, std::vector<std::complex<double>> f) {
  if (nu.empty() || nu.size() != f.size()) throw ValidationError("signal needs matching, non-empty nu and f samples");
  for (std::size_t k = 0; k < nu.size(); ++k) {
    if (!std::isfinite(nu[k]) || !std::isfinite(f[k].real()) || !std::isfinite(f[k].imag()))
      throw ValidationError("signal samples must be finite");
    if (k > 0 && !(nu[k] > nu[k - 1])) throw ValidationError("signal frequencies must be strictly increasing");
  }
  SignalSpec s;
  s.flat_ = false;
  s.nu_ = std::move(nu);
  s.f_ = std::move(f);
  return s;
}

SignalSpec SignalSpec::from_voltage(std::vector<double> nu, std::span<const std::complex<double>> V, double C,
                                    double L) {
  std::vector<std::complex<double>> f;
  f.reserve(V.size());
  const double scale = voltage_to_signal(1.0, C, L);
  for (auto v : V) f.push_back(scale * v);
  return sampled(std::move(nu), std::move(f));
}

std::complex<double> SignalSpec::amplitude(double nu) const {
  if (flat_) return f_.front();
  if (nu < nu_.front() || nu > nu_.back()) return 0.0;
  const auto it = std::lower_bound(nu_.begin(), nu_.end(), nu);
  const auto k = static_cast<std::size_t>(std::distance(nu_.begin(), it));
  if (nu_[k] == nu) return f_[k];
  const double w = (nu - nu_[k - 1]) / (nu_[k] - nu_[k - 1]);
  return (1.0 - w) * f_[k - 1] + w * f_[k];
}

double snr(const ReadoutParams& p, double f_abs2, double nu) {
  const double denominator = 2.0 * p.gamma * p.Gamma * (2.0 * p.n_b + 1.0) +
                             (p.gamma * p.gamma + p.Gamma * p.Gamma + nu * nu) * (2.0 * p.n_d + 1.0);
  return 2.0 * p.Gamma * f_abs2 / denominator;
}

double rf_baseline_snr(double gamma, double n_b, double f_abs2) {
  if (!(gamma > 0.0) || !(n_b > 0.0)) throw DomainError("rf baseline needs gamma > 0 and n_b > 0");
  return f_abs2 / (4.0 * gamma * n_b);
}

DetectionBandwidth detection_bandwidth(double Gamma, double gamma, double n_b, double n_d) {
  DetectionBandwidth out;
  out.formula = 2.0 * std::sqrt(2.0 * Gamma * gamma * n_b);
  // S(nu) halves where nu^2 equals the nu-independent part of the denominator
  // divided by (2 n_d + 1).
  out.half_max_detuning =
      std::sqrt(2.0 * gamma * Gamma * (2.0 * n_b + 1.0) / (2.0 * n_d + 1.0) + gamma * gamma + Gamma * Gamma);
  out.half_max_full_width = 2.0 * out.half_max_detuning;
  return out;
}

SnrSpectrum snr_spectrum(const ReadoutParams& p, const SignalSpec& signal, std::span<const double> nu_grid) {
  p.validate();
  SnrSpectrum out;
  out.samples.reserve(nu_grid.size());
  for (double nu : nu_grid) {
    if (!std::isfinite(nu)) throw ValidationError("nu grid must be finite");
    const double f2 = std::norm(signal.amplitude(nu));
    out.samples.push_back({nu, snr(p, f2, nu), p.n_b > 0.0 ? rf_baseline_snr(p.gamma, p.n_b, f2) : 0.0});
  }
  const double f0 = std::norm(signal.amplitude(0.0));
  out.baseline_rf = p.n_b > 0.0 ? rf_baseline_snr(p.gamma, p.n_b, f0) : 0.0;
  out.bandwidth = detection_bandwidth(p.Gamma, p.gamma, p.n_b, p.n_d);
  out.baseline_assumption_weak = p.n_b < rf_baseline_min_occupation;
  out.quantum_limited_probe = p.n_d == 0.0;
  out.on_plateau = p.Gamma >= p.gamma && p.Gamma <= p.gamma * p.n_b;
  return out;
}

// ---------------------------------------------------------------------------

std::string rng_algorithm_id() { return "std::mt19937_64(seed_seq{seed,trajectory})+std::normal_distribution"; }

namespace {

struct Tone {
  double nu;
  std::complex<double> f;
};

std::vector<Tone> tones_for(const SignalSpec& signal, std::span<const double> frequencies) {
  std::vector<Tone> tones;
  for (double nu : frequencies) {
    const auto f = signal.amplitude(nu);
    if (f != 0.0) tones.push_back({nu, f});
  }
  return tones;
}

}  // namespace

HomodyneRecord simulate_homodyne_record(const ReadoutParams& p, const SignalSpec& signal,
                                        std::span<const double> tone_frequencies, double duration, double dt,
                                        std::uint64_t seed, std::uint64_t trajectory) {
  p.validate();
  std::vector<std::string> errors;
  if (!(dt > 0.0)) errors.push_back("homodyne dt must be > 0");
  if (!(dt * std::max(p.gamma, p.Gamma) < 0.05))
    errors.push_back(fmt::format("homodyne dt too coarse: dt max(gamma, Gamma) = {:.3g} must be < 0.05",
                                 dt * std::max(p.gamma, p.Gamma)));
  if (!(duration > 0.0) || !(duration > dt)) errors.push_back("homodyne duration must exceed dt");
  if (!errors.empty()) throw ValidationError(std::move(errors));

  const std::vector<Tone> tones = tones_for(signal, tone_frequencies);
  const auto steps = static_cast<std::size_t>(std::floor(duration / dt));
  const double total = p.gamma + p.Gamma;
  const double decay = std::exp(-total * dt);
  const double half_decay = std::exp(-0.5 * total * dt);
  const double drive_gain = -std::expm1(-total * dt) / total;
  const double sqrt2gamma = std::sqrt(2.0 * p.gamma);
  const double sqrt2Gamma = std::sqrt(2.0 * p.Gamma);
  // Symmetrised input noise: E|xi|^2 = (n + 1/2) dt, split over two quadratures.
  const double sigma_b = std::sqrt((p.n_b + 0.5) * dt / 2.0);
  const double sigma_d = std::sqrt((p.n_d + 0.5) * dt / 2.0);

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trajectory), static_cast<std::uint32_t>(trajectory >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto complex_noise = [&](double sigma) {
    const double re = normal(rng);
    const double im = normal(rng);
    return std::complex<double>(sigma * re, sigma * im);
  };

  HomodyneRecord record;
  record.dt = dt;
  record.x_plus.resize(steps);
  record.p_minus.resize(steps);
  std::complex<double> b = 0.0;
  using namespace std::complex_literals;
  for (std::size_t n = 0; n < steps; ++n) {
    const double t_mid = (static_cast<double>(n) + 0.5) * dt;
    std::complex<double> f = 0.0;
    for (const auto& tone : tones) f += tone.f * std::exp(-1.0i * (tone.nu * t_mid));
    const auto xi_b = complex_noise(sigma_b);  // LC bath
    const auto xi_d = complex_noise(sigma_d);  // optical port, drives b and the output
    const auto xi_aux = complex_noise(sigma_d);  // second beam-splitter input
    const auto b_next = decay * b + drive_gain * 1.0i * f + half_decay * (sqrt2gamma * xi_b - sqrt2Gamma * xi_d);
    const auto d_out = xi_d / dt + sqrt2Gamma * 0.5 * (b + b_next);
    const auto aux = xi_aux / dt;
    const auto d_plus = (d_out + aux) / std::numbers::sqrt2;
    const auto d_minus = (d_out - aux) / std::numbers::sqrt2;
    record.x_plus[n] = std::numbers::sqrt2 * d_plus.real();
    record.p_minus[n] = std::numbers::sqrt2 * d_minus.imag();
    b = b_next;
  }
  return record;
}

HomodyneEstimate simulate_homodyne(const ReadoutParams& p, const SignalSpec& signal, double duration, double dt,
                                   std::uint64_t seed, const HomodyneOptions& options) {
  p.validate();
  std::vector<double> bins = options.bins;
  if (bins.empty()) {
    if (signal.is_flat()) bins = {0.0};
    else bins.assign(signal.frequencies().begin(), signal.frequencies().end());
  }
  const double total = p.gamma + p.Gamma;
  double segment = options.segment_duration > 0.0 ? options.segment_duration : 64.0 / total;
  segment = std::min(segment, duration / 5.0);
  std::vector<std::string> errors;
  if (!(duration * p.gamma >= 50.0))
    errors.push_back(fmt::format("homodyne duration must be >> 1/gamma (duration gamma = {:.3g} < 50)",
                                 duration * p.gamma));
  const auto seg_len = static_cast<std::size_t>(std::floor(segment / dt));
  if (seg_len < 16) errors.push_back("Welch segment shorter than 16 samples; reduce dt");
  std::sort(bins.begin(), bins.end());
  const double resolution = 2.0 * std::numbers::pi / segment;
  for (std::size_t k = 1; k < bins.size(); ++k)
    if (bins[k] - bins[k - 1] < 4.0 * resolution)
      errors.push_back(fmt::format("tones at {:.6g} and {:.6g} rad/s are closer than four Welch bins", bins[k - 1],
                                   bins[k]));
  if (!errors.empty()) throw ValidationError(std::move(errors));

  const HomodyneRecord with_signal = simulate_homodyne_record(p, signal, bins, duration, dt, seed, 0);
  const HomodyneRecord noise_only =
      simulate_homodyne_record(p, SignalSpec::flat(0.0), {}, duration, dt, seed, 1);
  const std::size_t steps = with_signal.x_plus.size();

  auto hann = [](std::size_t n, std::size_t len) {
    return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(n) + 0.5) / static_cast<double>(len));
  };
  using namespace std::complex_literals;

  HomodyneEstimate out;
  out.seed = seed;
  out.rng_algorithm = rng_algorithm_id();
  out.segment_duration = static_cast<double>(seg_len) * dt;
  out.steps = steps;
  const std::size_t hop = seg_len / 2;
  const std::size_t n_segments = steps >= seg_len ? (steps - seg_len) / hop + 1 : 0;
  out.segments = static_cast<int>(n_segments);
  // Equivalent number of independent periodograms for Hann, 50% overlap.
  const double effective_segments = 9.0 / 11.0 * static_cast<double>(n_segments);

  double seg_w2 = 0.0;
  for (std::size_t n = 0; n < seg_len; ++n) seg_w2 += hann(n, seg_len) * hann(n, seg_len);
  double rec_w = 0.0;
  double rec_w2 = 0.0;
  for (std::size_t n = 0; n < steps; ++n) {
    rec_w += hann(n, steps);
    rec_w2 += hann(n, steps) * hann(n, steps);
  }

  for (double nu : bins) {
    // Noise PSD of z = x_+ + i p_- from the noise-only record.
    double power = 0.0;
    for (std::size_t s = 0; s < n_segments; ++s) {
      std::complex<double> acc = 0.0;
      const std::size_t start = s * hop;
      for (std::size_t n = 0; n < seg_len; ++n) {
        const std::size_t idx = start + n;
        const double t = (static_cast<double>(idx) + 0.5) * dt;
        acc += hann(n, seg_len) * std::complex<double>(noise_only.x_plus[idx], noise_only.p_minus[idx]) *
               std::exp(1.0i * (nu * t));
      }
      power += std::norm(acc * dt);
    }
    const double psd = power / static_cast<double>(n_segments) / (dt * seg_w2);

    // Coherent tone amplitude over the whole signal record.
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < steps; ++n) {
      const double t = (static_cast<double>(n) + 0.5) * dt;
      acc += hann(n, steps) * std::complex<double>(with_signal.x_plus[n], with_signal.p_minus[n]) *
             std::exp(1.0i * (nu * t));
    }
    const std::complex<double> amplitude = acc / rec_w;
    const double amplitude_noise = psd * rec_w2 / (dt * rec_w * rec_w);
    const double signal_power = std::norm(amplitude) - amplitude_noise;

    HomodyneBin bin;
    bin.nu = nu;
    bin.noise_psd = psd;
    bin.S_empirical = signal_power / psd;
    const double var_power = 2.0 * std::max(signal_power, 0.0) * amplitude_noise + amplitude_noise * amplitude_noise;
    bin.std_error = std::sqrt(var_power / (psd * psd) + bin.S_empirical * bin.S_empirical / effective_segments);
    bin.S_theory = snr(p, std::norm(signal.amplitude(nu)), nu);
    bin.noise_psd_theory = ((p.gamma * p.gamma + p.Gamma * p.Gamma + nu * nu) * (2.0 * p.n_d + 1.0) +
                            2.0 * p.gamma * p.Gamma * (2.0 * p.n_b + 1.0)) /
                           (total * total + nu * nu);
    out.bins.push_back(bin);
  }
  return out;
}

}  // namespace emlc
