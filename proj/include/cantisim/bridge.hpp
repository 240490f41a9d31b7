#ifndef CANTISIM_BRIDGE_HPP
#define CANTISIM_BRIDGE_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "cantisim/errors.hpp"

namespace cantisim {

enum class ResistorKind { Diffused, PmosLinear };

/// Piezoresistive Wheatstone bridge, voltage-domain behavioral model.
///
/// The noise model is input-referred at the bridge output node:
/// S(f) = white_noise_density * (1 + flicker_corner / f).
struct BridgeConfig {
  double bias_voltage = 5.0;   // V
  double gauge_factor = 100.0;
  double active_fraction = 0.5;  // in (0, 1]; half-active bridge by default
  ResistorKind resistor_kind = ResistorKind::PmosLinear;
  double white_noise_density = 1e-16;  // V^2/Hz
  double flicker_corner = 1e4;         // Hz

  static constexpr double kDiffusedFlickerCornerHz = 1e3;
  static constexpr double kPmosFlickerCornerHz = 1e4;

  static BridgeConfig defaults_for(ResistorKind kind);

  void collect_issues(const std::string& path, ValidationIssues& out) const;
  void validate() const;
};

/// Noise-free bridge output: dV = V_b * active_fraction * GF * strain.
/// Small-signal region only, |strain| < 1e-2.
double bridge_output(const BridgeConfig& cfg, double strain);

/// One-sided noise PSD at f > 0: S(f) = S_w * (1 + f_c / f), V^2/Hz.
double noise_psd(const BridgeConfig& cfg, double f_hz);

/// One sample of bridge noise, with the white and flicker parts kept
/// separate so downstream blocks can shape them differently (the chopper
/// suppresses flicker but not the white floor).
struct NoiseSample {
  double white = 0.0;    // V
  double flicker = 0.0;  // V
  double total() const { return white + flicker; }
};

/// Deterministic time-domain realization of the bridge noise PSD.
///
/// The flicker part is a sum of first-order low-pass-filtered white sources
/// with pole frequencies spaced one per octave across the simulated band
/// [1/(n dt), 1/(2 dt)], scaled so the summed spectrum tracks S_w * f_c / f.
class BridgeNoiseGenerator {
 public:
  /// n_samples fixes the low end of the synthesized band; the generator may
  /// be stepped any number of times.
  BridgeNoiseGenerator(const BridgeConfig& cfg, double dt, std::size_t n_samples, uint64_t seed);

  NoiseSample next();

  std::size_t section_count() const { return sections_.size(); }

 private:
  struct Section {
    double pole_coeff;   // AR(1) pole
    double drive_sigma;  // std-dev of the white drive
    double state = 0.0;
  };

  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  std::vector<Section> sections_;
  double white_sigma_ = 0.0;
};

/// Generates n samples of total bridge noise at spacing dt.
std::vector<double> sample_noise(const BridgeConfig& cfg, double dt, std::size_t n, uint64_t seed);

}  // namespace cantisim

#endif
