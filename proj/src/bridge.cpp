#include "cantisim/bridge.hpp"

#include <cmath>
#include <string>

namespace cantisim {

namespace {

std::string num(double v) { return std::to_string(v); }

}  // namespace

BridgeConfig BridgeConfig::defaults_for(ResistorKind kind) {
  BridgeConfig cfg;
  cfg.resistor_kind = kind;
  cfg.flicker_corner =
      kind == ResistorKind::PmosLinear ? kPmosFlickerCornerHz : kDiffusedFlickerCornerHz;
  return cfg;
}

void BridgeConfig::collect_issues(const std::string& path, ValidationIssues& out) const {
  if (!(bias_voltage > 0.0))
    out.push_back({path + ".bias_voltage_v", num(bias_voltage), "must be > 0"});
  if (!(gauge_factor > 0.0))
    out.push_back({path + ".gauge_factor", num(gauge_factor), "must be > 0"});
  if (!(active_fraction > 0.0 && active_fraction <= 1.0))
    out.push_back({path + ".active_fraction", num(active_fraction), "must be in (0, 1]"});
  if (!(white_noise_density >= 0.0))
    out.push_back({path + ".white_noise_v2_hz", num(white_noise_density), "must be >= 0"});
  if (!(flicker_corner >= 0.0))
    out.push_back({path + ".flicker_corner_hz", num(flicker_corner), "must be >= 0"});
  if (resistor_kind == ResistorKind::PmosLinear && flicker_corner < kDiffusedFlickerCornerHz)
    out.push_back({path + ".flicker_corner_hz", num(flicker_corner),
                   "pmos_linear bridges are flicker-dominated; corner must be >= 1000 Hz"});
}

void BridgeConfig::validate() const {
  ValidationIssues issues;
  collect_issues("bridge", issues);
  throw_if_issues(issues);
}

double bridge_output(const BridgeConfig& cfg, double strain) {
  cfg.validate();
  if (!(std::abs(strain) < 1e-2))
    throw ValidationError("strain = " + num(strain) +
                          ": outside the small-signal region |strain| < 1e-2");
  return cfg.bias_voltage * cfg.active_fraction * cfg.gauge_factor * strain;
}

double noise_psd(const BridgeConfig& cfg, double f_hz) {
  cfg.validate();
  if (!(f_hz > 0.0)) throw ValidationError("f = " + num(f_hz) + " Hz: must be > 0");
  return cfg.white_noise_density * (1.0 + cfg.flicker_corner / f_hz);
}

BridgeNoiseGenerator::BridgeNoiseGenerator(const BridgeConfig& cfg, double dt,
                                           std::size_t n_samples, uint64_t seed)
    : rng_(seed) {
  cfg.validate();
  if (!(dt > 0.0)) throw ValidationError("dt = " + num(dt) + " s: must be > 0");
  if (n_samples < 2) throw ValidationError("n = " + std::to_string(n_samples) + ": must be >= 2");

  white_sigma_ = std::sqrt(cfg.white_noise_density / (2.0 * dt));

  const double target = cfg.white_noise_density * cfg.flicker_corner;  // S_w * f_c
  if (target <= 0.0) return;                                           // no flicker component

  const double f_lo = 1.0 / (static_cast<double>(n_samples) * dt);
  const double f_hi = 1.0 / (2.0 * dt);
  const int n_sections = std::max(1, static_cast<int>(std::ceil(std::log2(f_hi / f_lo))) + 1);

  // Octave ladder of AR(1) sections. With per-section low-frequency plateau
  // proportional to 1/f_i the summed spectrum falls as 1/f across the band;
  // one overall scale pins it to S_w * f_c / f at the band's geometric center.
  sections_.reserve(static_cast<std::size_t>(n_sections));
  std::vector<double> unit_var(static_cast<std::size_t>(n_sections));
  for (int i = 0; i < n_sections; ++i) {
    const double f_pole = f_lo * std::pow(2.0, i);
    const double r = std::exp(-2.0 * M_PI * f_pole * dt);
    const double one_minus_r = 1.0 - r;
    unit_var[static_cast<std::size_t>(i)] = one_minus_r * one_minus_r / (2.0 * dt * f_pole);
    sections_.push_back({r, 0.0, 0.0});
  }

  const auto ladder_psd = [&](double f) {
    const double s = std::sin(M_PI * f * dt);
    double sum = 0.0;
    for (int i = 0; i < n_sections; ++i) {
      const double r = sections_[static_cast<std::size_t>(i)].pole_coeff;
      const double omr = 1.0 - r;
      sum += 2.0 * dt * unit_var[static_cast<std::size_t>(i)] / (omr * omr + 4.0 * r * s * s);
    }
    return sum;
  };

  const double f_ref = std::sqrt(f_lo * f_hi);
  const double scale = (target / f_ref) / ladder_psd(f_ref);
  for (int i = 0; i < n_sections; ++i)
    sections_[static_cast<std::size_t>(i)].drive_sigma =
        std::sqrt(scale * unit_var[static_cast<std::size_t>(i)]);
}

NoiseSample BridgeNoiseGenerator::next() {
  NoiseSample s;
  if (white_sigma_ > 0.0) s.white = white_sigma_ * gauss_(rng_);
  for (auto& sec : sections_) {
    sec.state = sec.pole_coeff * sec.state + sec.drive_sigma * gauss_(rng_);
    s.flicker += sec.state;
  }
  return s;
}

std::vector<double> sample_noise(const BridgeConfig& cfg, double dt, std::size_t n,
                                 uint64_t seed) {
  if (n == 0) throw ValidationError("n = 0: must be > 0");
  BridgeNoiseGenerator gen(cfg, dt, std::max<std::size_t>(n, 2), seed);
  std::vector<double> out(n);
  for (auto& v : out) v = gen.next().total();
  return out;
}

}  // namespace cantisim
