#include "cantisim/counter.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cantisim {

void CounterConfig::collect_issues(const std::string& path, ValidationIssues& out) const {
  if (!(gate_time > 0.0))
    out.push_back({path + ".gate_time_s", std::to_string(gate_time), "must be > 0"});
  if (!(hysteresis >= 0.0))
    out.push_back({path + ".hysteresis_v", std::to_string(hysteresis), "must be >= 0"});
}

void CounterConfig::validate() const {
  ValidationIssues issues;
  collect_issues("counter", issues);
  throw_if_issues(issues);
}

FrequencyReading measure_frequency(std::span<const double> signal, double sample_rate_hz,
                                   const CounterConfig& cfg) {
  cfg.validate();
  if (!(sample_rate_hz > 0.0))
    throw ValidationError("sample_rate = " + std::to_string(sample_rate_hz) + ": must be > 0");
  const double dt = 1.0 / sample_rate_hz;
  if (static_cast<double>(signal.size()) * dt < cfg.gate_time)
    throw ValidationError("signal of " + std::to_string(signal.size()) +
                          " samples is shorter than the gate time");

  // The comparator is referenced to the record mean (AC coupling), so DC
  // drift at the tap node moves both thresholds with the signal.
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(signal.size());

  const double thr_hi = mean + 0.5 * cfg.hysteresis;
  const double thr_lo = mean - 0.5 * cfg.hysteresis;

  // Comparator starts high so the first counted edge is a full low-to-high
  // transition, never a partial rise at the start of the record.
  // Strict comparisons: equality holds the comparator state, so a flat or
  // all-zero record produces no edges.
  std::vector<double> edges;
  bool high = true;
  for (std::size_t i = 1; i < signal.size(); ++i) {
    const double x = signal[i];
    if (high) {
      if (x < thr_lo) high = false;
    } else if (x > thr_hi) {
      high = true;
      const double x0 = signal[i - 1];
      const double frac = (x == x0) ? 0.0 : (thr_hi - x0) / (x - x0);
      edges.push_back((static_cast<double>(i - 1) + frac) * dt);
    }
  }

  if (edges.size() < 2) throw NoSignalError("fewer than 2 threshold crossings in the record");

  const double t0 = edges.front();
  // Relative guard absorbs interpolation rounding when f * T_g is an exact
  // integer, keeping synchronous gating's plus-minus-one-count law exact.
  const double gate_end = t0 + cfg.gate_time * (1.0 + 1e-9);
  if (t0 + cfg.gate_time > static_cast<double>(signal.size() - 1) * dt)
    throw ValidationError("record does not span a full gate after the first crossing");

  long count = 0;
  double t_last = t0;
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] > gate_end) break;
    ++count;
    t_last = edges[i];
  }
  if (count < 1) throw NoSignalError("no full cycle inside the gate");

  FrequencyReading reading;
  reading.count = count;
  if (cfg.mode == CounterMode::GatedCount) {
    reading.frequency = static_cast<double>(count) / cfg.gate_time;
  } else {
    reading.frequency = static_cast<double>(count) / (t_last - t0);
  }
  return reading;
}

}  // namespace cantisim
