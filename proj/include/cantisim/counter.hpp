#ifndef CANTISIM_COUNTER_HPP
#define CANTISIM_COUNTER_HPP

#include <span>

#include "cantisim/errors.hpp"

namespace cantisim {

enum class CounterMode { GatedCount, Reciprocal };

struct CounterConfig {
  double gate_time = 0.1;  // s
  CounterMode mode = CounterMode::Reciprocal;
  double hysteresis = 0.0;  // V, full band of the zero-crossing comparator

  void collect_issues(const std::string& path, ValidationIssues& out) const;
  void validate() const;
};

struct FrequencyReading {
  double frequency = 0.0;  // Hz
  long count = 0;          // cycles inside the gate
};

/// Digital frequency readout over a recorded voltage series.
///
/// Rising edges are detected by a comparator with thresholds at +/- h/2 and
/// edge times are linearly interpolated between samples. The gate opens at
/// the first rising edge (synchronous gating); GatedCount returns
/// count/gate_time, Reciprocal divides the counted cycles by the measured
/// span between the first and last edge.
///
/// Throws NoSignalError when fewer than two edges are found.
FrequencyReading measure_frequency(std::span<const double> signal, double sample_rate_hz,
                                   const CounterConfig& cfg);

}  // namespace cantisim

#endif
