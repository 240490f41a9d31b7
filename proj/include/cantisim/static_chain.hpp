#ifndef CANTISIM_STATIC_CHAIN_HPP
#define CANTISIM_STATIC_CHAIN_HPP

#include <functional>

#include "cantisim/bridge.hpp"
#include "cantisim/errors.hpp"
#include "cantisim/filters.hpp"

namespace cantisim {

/// Readout path for static (surface-stress) operation: 4-to-1 input
/// multiplexer, chopper-stabilized first stage, single-pole low-pass filter,
/// programmable offset-compensation DAC, two further gain stages.
///
/// Chopping is modeled parametrically: the input offset and the sub-corner
/// flicker noise are attenuated by chop_suppression_db; the white noise floor
/// passes unchanged. Chopper ripple at the chop frequency is assumed removed
/// by the on-chip filter and is not modeled.
struct StaticChainConfig {
  static constexpr int kNumChannels = 4;

  double chop_frequency = 1e3;      // Hz
  double first_stage_gain = 100.0;  // V/V
  double input_offset = 0.0;        // V, first-stage offset before chopping
  double chop_suppression_db = 40.0;
  double lpf_cutoff = 50.0;  // Hz, single pole
  int dac_bits = 10;
  double dac_full_scale = 0.02;  // V, compensation range at the filter node
  double gain2 = 3.1622776601683795;
  double gain3 = 3.1622776601683795;
  double sample_rate = 0.0;  // Hz; 0 selects 100 * chop_frequency

  double effective_sample_rate() const {
    return sample_rate > 0.0 ? sample_rate : 100.0 * chop_frequency;
  }
  int midscale_code() const { return 1 << (dac_bits - 1); }

  void collect_issues(const std::string& path, ValidationIssues& out) const;
  void validate() const;
};

struct ChainState {
  int selected_channel = 0;
  double lpf_state = 0.0;  // V, current filter output
  int dac_code = 0;
};

/// One sample of chain input: the selected cantilever's bridge voltage plus
/// that bridge's noise.
struct ChainInput {
  double bridge_voltage = 0.0;  // V
  NoiseSample noise{};
};

class StaticChain {
 public:
  explicit StaticChain(const StaticChainConfig& cfg);

  /// Connects cantilever ch (0..3) and restarts filter settling.
  void select_channel(int ch);

  /// Advances the discrete-time chain by one sample and returns the output.
  double process_sample(double bridge_voltage, const NoiseSample& noise);
  double process_sample(const ChainInput& in) { return process_sample(in.bridge_voltage, in.noise); }

  void set_dac_code(int code);

  /// Bisects the DAC code to null the mean settled output while the
  /// cantilever is unloaded (caller contract). Leaves the found code set and
  /// returns it; throws OffsetRangeError when the residual exceeds one
  /// output-referred LSB.
  int calibrate_offset(const std::function<ChainInput()>& quiet_source);

  const ChainState& state() const { return state_; }
  const StaticChainConfig& config() const { return cfg_; }

  /// Output-referred correction currently applied by the DAC stage.
  double dac_offset() const;

  /// Settled DC output for a constant bridge voltage at the given code
  /// (closed form; used for quasi-static sweeps and oracle checks).
  static double dc_output(const StaticChainConfig& cfg, double bridge_voltage, int dac_code);

 private:
  double measure_mean_output(const std::function<ChainInput()>& source);

  StaticChainConfig cfg_;
  ChainState state_;
  OnePole lpf_;
  OnePole flicker_shelf_;
  double suppression_;  // linear factor 10^(-dB/20)
};

}  // namespace cantisim

#endif
