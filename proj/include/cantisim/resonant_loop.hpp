#ifndef CANTISIM_RESONANT_LOOP_HPP
#define CANTISIM_RESONANT_LOOP_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "cantisim/bridge.hpp"
#include "cantisim/counter.hpp"
#include "cantisim/errors.hpp"
#include "cantisim/mech.hpp"

namespace cantisim {

/// Where the frequency counter picks up its signal. The bridge voltage is the
/// largest clean electrical node; the comparator hysteresis is interpreted in
/// the tap signal's units.
enum class CounterTap { BridgeVoltage, TipDisplacement };

/// Every block parameter of the resonant feedback loop: bridge -> DDA
/// instrumentation amplifier -> high-pass cascade -> variable-gain amplifier
/// -> amplitude limiter -> class-AB buffer -> coil -> Lorentz force ->
/// cantilever -> bridge.
///
/// The DDA is a pure gain; loop phase comes only from the high-pass sections
/// and the resonator.
struct LoopConfig {
  double dda_gain = 100.0;                       // V/V
  std::vector<double> hpf_cutoffs = {275.0, 275.0};  // Hz; empty bypasses the cascade
  double vga_gain = 1.0;                         // V/V, runtime-adjustable
  double limiter_level = 2e-3;                   // V; +inf removes the limiter
  bool hard_clip_limiter = false;
  double buffer_current_limit = 1e-3;    // A
  double coil_resistance = 50.0;         // Ohm
  double coil_effective_length = 1e-4;   // m
  double magnetic_field = 0.1;           // T
  double sample_rate = 0.0;              // Hz; 0 selects ceil(100 * f0)
  double bridge_dc_offset = 0.0;         // V, DC disturbance added at the bridge output
  double startup_kick = 1e-12;           // m, initial displacement when noise is disabled
  CounterTap counter_tap = CounterTap::BridgeVoltage;

  double effective_sample_rate(double f0) const {
    return sample_rate > 0.0 ? sample_rate : std::ceil(100.0 * f0);
  }

  void collect_issues(const std::string& path, double f0, ValidationIssues& out) const;
  void validate(double f0) const;
};

/// F = B * I * L_c.
double lorentz_force(double current, double field, double coil_length);

/// Smooth limiter v_lim * tanh(x / v_lim); identity when v_lim is +inf.
double limiter(double x, double v_lim);

/// Hard-clip alternative, clamp(x, +/-v_lim).
double hard_limiter(double x, double v_lim);

/// Class-AB buffer into the coil: I = clamp(v / R_coil, +/-I_max).
double buffer_drive(double v, const LoopConfig& cfg);

struct SettlingResult {
  bool settled = false;
  double amplitude = 0.0;  // m, half the mean peak-to-peak of the window
  double time = 0.0;       // s, start of the first qualifying window
};

/// Declares the envelope settled when the per-cycle peak-to-peak stays within
/// +/-band of its window mean for n_cycles consecutive cycles.
SettlingResult detect_settling(std::span<const double> displacement, double sample_rate_hz,
                               double band, int n_cycles);

enum class LoopStatus { Settled, NotSettled, NoOscillation };

struct LoopTrace {
  double sample_rate = 0.0;
  std::vector<double> tip_displacement;  // m
  std::vector<double> tip_velocity;      // m/s
  std::vector<double> bridge_voltage;    // V, noisy node; the counter tap
  std::vector<double> coil_current;      // A

  LoopStatus status = LoopStatus::NoOscillation;
  double settled_amplitude = 0.0;   // m
  double settled_frequency = 0.0;   // Hz, counter reading over the tail gate
  long counter_count = 0;
  double startup_time = 0.0;        // s
  double max_abs_current = 0.0;     // A
  double displacement_noise_floor = 0.0;  // m, basis of the oscillation test
  double energy_balance_error = 0.0;      // relative, settled cycles only

  std::string status_message;
};

/// Simulates the closed loop sample-by-sample at the loop sample rate.
/// Startup is seeded by bridge noise; when the bridge noise is disabled a
/// startup_kick initial displacement is applied instead.
LoopTrace run_oscillator(const CantileverDevice& device, const ModalModel& modal,
                         const BridgeConfig& bridge, const LoopConfig& loop,
                         const CounterConfig& counter, double duration, uint64_t seed);

/// Small-signal loop gain magnitude at frequency f (limiter at its unity
/// small-signal slope, buffer in its linear region).
double loop_gain_at(double f_hz, const CantileverDevice& device, const ModalModel& modal,
                    const BridgeConfig& bridge, const LoopConfig& loop);

/// vga_gain that makes the small-signal loop gain at f0 exactly one.
double critical_vga_gain(const CantileverDevice& device, const ModalModel& modal,
                         const BridgeConfig& bridge, const LoopConfig& loop);

}  // namespace cantisim

#endif
