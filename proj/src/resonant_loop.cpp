#include "cantisim/resonant_loop.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "cantisim/filters.hpp"

namespace cantisim {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::string num(double v) { return std::to_string(v); }

struct CyclePeak {
  double time = 0.0;  // s, cycle start
  double p2p = 0.0;   // peak-to-peak over the cycle
};

double refine_extremum(std::span<const double> x, std::size_t idx, std::size_t lo,
                       std::size_t hi) {
  if (idx <= lo || idx + 1 >= hi) return x[idx];
  const double ym = x[idx - 1], y0 = x[idx], yp = x[idx + 1];
  const double denom = ym - 2.0 * y0 + yp;
  if (denom == 0.0) return y0;
  const double d = ym - yp;
  return y0 - d * d / (8.0 * denom);
}

/// Peak-to-peak amplitude per oscillation cycle, cycles delimited by rising
/// zero crossings. Sample peaks are refined with a three-point parabola.
std::vector<CyclePeak> cycle_envelope(std::span<const double> z, double fs) {
  std::vector<std::size_t> crossings;
  for (std::size_t i = 1; i < z.size(); ++i)
    if (z[i - 1] < 0.0 && z[i] >= 0.0) crossings.push_back(i);

  std::vector<CyclePeak> env;
  if (crossings.size() < 2) return env;
  env.reserve(crossings.size() - 1);
  for (std::size_t c = 0; c + 1 < crossings.size(); ++c) {
    const std::size_t lo = crossings[c], hi = crossings[c + 1];
    std::size_t imax = lo, imin = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (z[i] > z[imax]) imax = i;
      if (z[i] < z[imin]) imin = i;
    }
    const double top = refine_extremum(z, imax, lo > 0 ? lo - 1 : lo, hi + 1);
    const double bot = refine_extremum(z, imin, lo > 0 ? lo - 1 : lo, hi + 1);
    env.push_back({static_cast<double>(lo) / fs, top - bot});
  }
  return env;
}

}  // namespace

void LoopConfig::collect_issues(const std::string& path, double f0, ValidationIssues& out) const {
  if (!(dda_gain > 0.0)) out.push_back({path + ".dda_gain", num(dda_gain), "must be > 0"});
  if (!(vga_gain >= 0.0)) out.push_back({path + ".vga_gain", num(vga_gain), "must be >= 0"});
  if (!(limiter_level > 0.0))
    out.push_back({path + ".limiter_level_v", num(limiter_level), "must be > 0 (+inf disables)"});
  if (!(buffer_current_limit > 0.0))
    out.push_back({path + ".buffer_current_limit_a", num(buffer_current_limit), "must be > 0"});
  if (!(coil_resistance > 0.0))
    out.push_back({path + ".coil_resistance_ohm", num(coil_resistance), "must be > 0"});
  if (!(coil_effective_length > 0.0))
    out.push_back({path + ".coil_effective_length_m", num(coil_effective_length), "must be > 0"});
  if (!(magnetic_field > 0.0))
    out.push_back({path + ".magnetic_field_t", num(magnetic_field), "must be > 0"});
  if (!std::isfinite(bridge_dc_offset))
    out.push_back({path + ".bridge_dc_offset_v", num(bridge_dc_offset), "must be finite"});
  if (!(startup_kick > 0.0))
    out.push_back({path + ".startup_kick_m", num(startup_kick), "must be > 0"});
  for (std::size_t i = 0; i < hpf_cutoffs.size(); ++i) {
    const double c = hpf_cutoffs[i];
    if (!(c > 0.0 && c < f0 / 10.0))
      out.push_back({path + ".hpf_cutoffs_hz[" + std::to_string(i) + "]", num(c),
                     "must satisfy 0 < hpf_cutoff < f0/10 = " + num(f0 / 10.0)});
  }
  if (sample_rate > 0.0 && !(sample_rate >= 100.0 * f0))
    out.push_back({path + ".sample_rate_hz", num(sample_rate),
                   "must be >= 100 * f0 = " + num(100.0 * f0) + " (or 0 for the default)"});
}

void LoopConfig::validate(double f0) const {
  ValidationIssues issues;
  collect_issues("loop", f0, issues);
  throw_if_issues(issues);
}

double lorentz_force(double current, double field, double coil_length) {
  return field * current * coil_length;
}

double limiter(double x, double v_lim) {
  if (!(v_lim > 0.0)) throw ValidationError("limiter level must be > 0");
  if (std::isinf(v_lim)) return x;
  return v_lim * std::tanh(x / v_lim);
}

double hard_limiter(double x, double v_lim) {
  if (!(v_lim > 0.0)) throw ValidationError("limiter level must be > 0");
  if (std::isinf(v_lim)) return x;
  return std::clamp(x, -v_lim, v_lim);
}

double buffer_drive(double v, const LoopConfig& cfg) {
  const double i = v / cfg.coil_resistance;
  return std::clamp(i, -cfg.buffer_current_limit, cfg.buffer_current_limit);
}

SettlingResult detect_settling(std::span<const double> displacement, double sample_rate_hz,
                               double band, int n_cycles) {
  if (!(band > 0.0 && band <= 0.2))
    throw ValidationError("band = " + num(band) + ": must be in (0, 0.2]");
  if (n_cycles < 10)
    throw ValidationError("n_cycles = " + std::to_string(n_cycles) + ": must be >= 10");
  if (!(sample_rate_hz > 0.0)) throw ValidationError("sample_rate must be > 0");

  const auto env = cycle_envelope(displacement, sample_rate_hz);
  const auto window = static_cast<std::size_t>(n_cycles);
  SettlingResult result;
  if (env.size() < window) return result;

  for (std::size_t start = 0; start + window <= env.size(); ++start) {
    double mean = 0.0;
    for (std::size_t j = 0; j < window; ++j) mean += env[start + j].p2p;
    mean /= static_cast<double>(window);
    if (!(mean > 0.0)) continue;
    bool stable = true;
    for (std::size_t j = 0; j < window && stable; ++j)
      stable = std::abs(env[start + j].p2p - mean) <= band * mean;
    if (stable) {
      result.settled = true;
      result.amplitude = 0.5 * mean;
      result.time = env[start].time;
      return result;
    }
  }
  return result;
}

double loop_gain_at(double f_hz, const CantileverDevice& device, const ModalModel& modal,
                    const BridgeConfig& bridge, const LoopConfig& loop) {
  device.validate();
  modal.validate();
  bridge.validate();
  const double f0 = modal.natural_frequency;
  loop.validate(f0);
  if (!(f_hz > 0.0)) throw ValidationError("f = " + num(f_hz) + " Hz: must be > 0");
  if (std::isinf(modal.quality_factor))
    throw ValidationError("loop gain requires a finite quality factor");

  const Geometry& g = device.geometry;
  const double strain_per_z = 3.0 * g.thickness / (2.0 * g.length * g.length);
  const double volts_per_strain =
      bridge.bias_voltage * bridge.active_fraction * bridge.gauge_factor;

  const double fs = loop.effective_sample_rate(f0);
  double hpf_mag = 1.0;
  for (double c : loop.hpf_cutoffs) hpf_mag *= OnePole::high_pass(c, fs).magnitude(f_hz, fs);

  const double omega = kTwoPi * f_hz;
  const double omega0 = kTwoPi * f0;
  const double m = modal.effective_mass;
  const double k = modal.spring_constant;
  const double damping = m * omega0 / modal.quality_factor;
  const double re = k - m * omega * omega;
  const double im = damping * omega;
  const double mech_mag = 1.0 / std::sqrt(re * re + im * im);

  return strain_per_z * volts_per_strain * loop.dda_gain * hpf_mag * loop.vga_gain *
         (1.0 / loop.coil_resistance) * loop.magnetic_field * loop.coil_effective_length *
         mech_mag;
}

double critical_vga_gain(const CantileverDevice& device, const ModalModel& modal,
                         const BridgeConfig& bridge, const LoopConfig& loop) {
  LoopConfig unity = loop;
  unity.vga_gain = 1.0;
  const double g = loop_gain_at(modal.natural_frequency, device, modal, bridge, unity);
  if (!(g > 0.0)) throw ValidationError("loop gain is degenerate; cannot derive a critical gain");
  return 1.0 / g;
}

LoopTrace run_oscillator(const CantileverDevice& device, const ModalModel& modal,
                         const BridgeConfig& bridge, const LoopConfig& loop,
                         const CounterConfig& counter, double duration, uint64_t seed) {
  device.validate();
  modal.validate();
  bridge.validate();
  counter.validate();
  const double f0 = modal.natural_frequency;
  loop.validate(f0);
  if (std::isinf(modal.quality_factor))
    throw ValidationError("closed-loop simulation requires a finite quality factor");
  if (!(duration >= 100.0 / f0))
    throw ValidationError("duration = " + num(duration) +
                          " s: must cover at least 100 resonance periods");

  const double fs = loop.effective_sample_rate(f0);
  const double dt = 1.0 / fs;
  const auto n = static_cast<std::size_t>(std::llround(duration * fs));

  const Geometry& g = device.geometry;
  const double strain_per_z = 3.0 * g.thickness / (2.0 * g.length * g.length);
  const double volts_per_strain =
      bridge.bias_voltage * bridge.active_fraction * bridge.gauge_factor;

  const bool noise_on = bridge.white_noise_density > 0.0;
  std::optional<BridgeNoiseGenerator> noise;
  if (noise_on) noise.emplace(bridge, dt, n, seed);

  std::vector<OnePole> hpfs;
  hpfs.reserve(loop.hpf_cutoffs.size());
  for (double c : loop.hpf_cutoffs) hpfs.push_back(OnePole::high_pass(c, fs));

  // The bridge senses displacement while sustained oscillation needs drive in
  // phase with velocity; the sustaining electronics therefore include a 90
  // degree phase element centered on the modal resonance. Off-center error
  // only adds to the small high-pass phase lead absorbed by the resonator.
  OnePole phase_shifter = OnePole::quadrature_all_pass(f0, fs);

  LoopTrace trace;
  trace.sample_rate = fs;
  trace.tip_displacement.reserve(n);
  trace.tip_velocity.reserve(n);
  trace.bridge_voltage.reserve(n);
  trace.coil_current.reserve(n);

  OscState state;
  state.z = noise_on ? 0.0 : loop.startup_kick;

  for (std::size_t i = 0; i < n; ++i) {
    const double strain = strain_per_z * state.z;
    if (!(std::abs(strain) < 1e-2))
      throw SimulationError("bridge strain " + num(strain) +
                            " left the small-signal region; the loop diverged");

    const double v_bridge = volts_per_strain * strain +
                            (noise_on ? noise->next().total() : 0.0) + loop.bridge_dc_offset;

    double v = phase_shifter.step(loop.dda_gain * v_bridge);
    for (auto& h : hpfs) v = h.step(v);
    v *= loop.vga_gain;
    v = loop.hard_clip_limiter ? hard_limiter(v, loop.limiter_level)
                               : limiter(v, loop.limiter_level);
    const double current = buffer_drive(v, loop);
    const double force =
        lorentz_force(current, loop.magnetic_field, loop.coil_effective_length);

    trace.tip_displacement.push_back(state.z);
    trace.tip_velocity.push_back(state.v);
    trace.bridge_voltage.push_back(v_bridge);
    trace.coil_current.push_back(current);
    trace.max_abs_current = std::max(trace.max_abs_current, std::abs(current));

    state = oscillator_step(state, modal, force, dt);
  }

  // Displacement-equivalent noise floor: input-referred bridge noise through
  // the resonator's equivalent noise bandwidth. With noise disabled the
  // startup kick is the reference level.
  double floor = loop.startup_kick;
  if (noise_on) {
    const double psd = noise_psd(bridge, f0);
    const double enbw = M_PI * f0 / (2.0 * modal.quality_factor);
    floor = std::sqrt(psd * enbw) / (volts_per_strain * strain_per_z);
  }
  trace.displacement_noise_floor = floor;

  const auto env = cycle_envelope(trace.tip_displacement, fs);
  double peak_amplitude = 0.0;
  for (const auto& c : env) peak_amplitude = std::max(peak_amplitude, 0.5 * c.p2p);

  if (env.empty() || peak_amplitude <= 10.0 * floor) {
    trace.status = LoopStatus::NoOscillation;
    trace.status_message = "no oscillation: envelope never exceeded 10x the noise floor";
    return trace;
  }

  const SettlingResult settling = detect_settling(trace.tip_displacement, fs, 0.02, 50);
  if (!settling.settled) {
    trace.status = LoopStatus::NotSettled;
    trace.status_message = "not settled: envelope did not stabilize within the duration";
    return trace;
  }

  // The first qualifying window can fire while the envelope is still creeping
  // toward the limit cycle; report the limit-cycle amplitude from the tail and
  // require the tail itself to be stable.
  double tail_amplitude = settling.amplitude;
  {
    const std::size_t tail_cycles = 50;
    if (env.size() < tail_cycles) {
      trace.status = LoopStatus::NotSettled;
      trace.status_message = "not settled: too few cycles for a tail window";
      return trace;
    }
    double mean = 0.0;
    for (std::size_t j = env.size() - tail_cycles; j < env.size(); ++j) mean += env[j].p2p;
    mean /= static_cast<double>(tail_cycles);
    bool stable = mean > 0.0;
    for (std::size_t j = env.size() - tail_cycles; j < env.size() && stable; ++j)
      stable = std::abs(env[j].p2p - mean) <= 0.02 * mean;
    if (!stable) {
      trace.status = LoopStatus::NotSettled;
      trace.status_message = "not settled: envelope still evolving at the end of the run";
      return trace;
    }
    tail_amplitude = 0.5 * mean;
  }

  const double gate_needed = counter.gate_time * 1.02 + 5.0 / f0;
  if (duration - settling.time < gate_needed) {
    trace.status = LoopStatus::NotSettled;
    trace.status_message =
        "not settled: no room for the counter gate after settling; extend the duration";
    return trace;
  }

  const auto gate_start = static_cast<std::size_t>(
      std::max(settling.time, duration - gate_needed) * fs);
  const auto& tap_series = loop.counter_tap == CounterTap::TipDisplacement
                               ? trace.tip_displacement
                               : trace.bridge_voltage;
  const auto reading =
      measure_frequency(std::span<const double>(tap_series).subspan(gate_start), fs, counter);

  // Energy bookkeeping over the last whole cycles: drive work vs damping loss.
  const std::size_t settle_index = static_cast<std::size_t>(settling.time * fs);
  std::vector<std::size_t> crossings;
  for (std::size_t i = std::max<std::size_t>(settle_index, 1); i < n; ++i)
    if (trace.tip_displacement[i - 1] < 0.0 && trace.tip_displacement[i] >= 0.0)
      crossings.push_back(i);
  double balance_error = 0.0;
  if (crossings.size() >= 21) {
    const std::size_t first = crossings[crossings.size() - 21];
    const std::size_t last = crossings.back();
    const double damping = modal.effective_mass * kTwoPi * f0 / modal.quality_factor;
    double w_in = 0.0, w_diss = 0.0;
    for (std::size_t i = first; i < last; ++i) {
      const double force = loop.magnetic_field * loop.coil_effective_length *
                           trace.coil_current[i];
      w_in += force * trace.tip_velocity[i] * dt;
      w_diss += damping * trace.tip_velocity[i] * trace.tip_velocity[i] * dt;
    }
    balance_error = w_diss > 0.0 ? std::abs(w_in - w_diss) / w_diss : 0.0;
  }

  trace.status = LoopStatus::Settled;
  trace.settled_amplitude = tail_amplitude;
  trace.startup_time = settling.time;
  trace.settled_frequency = reading.frequency;
  trace.counter_count = reading.count;
  trace.energy_balance_error = balance_error;
  trace.status_message = "settled";
  return trace;
}

}  // namespace cantisim
