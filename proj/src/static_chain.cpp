#include "cantisim/static_chain.hpp"

#include <cmath>
#include <string>

namespace cantisim {

namespace {

std::string num(double v) { return std::to_string(v); }

}  // namespace

void StaticChainConfig::collect_issues(const std::string& path, ValidationIssues& out) const {
  if (!(chop_frequency > 0.0))
    out.push_back({path + ".chop_frequency_hz", num(chop_frequency), "must be > 0"});
  if (!(lpf_cutoff > 0.0)) out.push_back({path + ".lpf_cutoff_hz", num(lpf_cutoff), "must be > 0"});
  if (chop_frequency > 0.0 && lpf_cutoff > 0.0 && !(chop_frequency > 10.0 * lpf_cutoff))
    out.push_back({path + ".chop_frequency_hz", num(chop_frequency),
                   "must be > 10 * lpf_cutoff_hz"});
  if (!(first_stage_gain > 0.0))
    out.push_back({path + ".first_stage_gain", num(first_stage_gain), "must be > 0"});
  if (!(gain2 > 0.0)) out.push_back({path + ".gain2", num(gain2), "must be > 0"});
  if (!(gain3 > 0.0)) out.push_back({path + ".gain3", num(gain3), "must be > 0"});
  if (!(chop_suppression_db >= 0.0))
    out.push_back({path + ".chop_suppression_db", num(chop_suppression_db), "must be >= 0"});
  if (!(dac_bits >= 4 && dac_bits <= 16))
    out.push_back({path + ".dac_bits", std::to_string(dac_bits), "must be in [4, 16]"});
  if (!(dac_full_scale > 0.0))
    out.push_back({path + ".dac_full_scale_v", num(dac_full_scale), "must be > 0"});
  if (!std::isfinite(input_offset))
    out.push_back({path + ".input_offset_v", num(input_offset), "must be finite"});
  const double fs = effective_sample_rate();
  if (!(fs > 2.0 * chop_frequency))
    out.push_back({path + ".sample_rate_hz", num(sample_rate),
                   "must exceed 2 * chop_frequency_hz (or 0 for the default)"});
}

void StaticChainConfig::validate() const {
  ValidationIssues issues;
  collect_issues("chain", issues);
  throw_if_issues(issues);
}

namespace {

const StaticChainConfig& validated(const StaticChainConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

StaticChain::StaticChain(const StaticChainConfig& cfg)
    : cfg_(validated(cfg)),
      lpf_(OnePole::low_pass(cfg_.lpf_cutoff, cfg_.effective_sample_rate())),
      flicker_shelf_(OnePole::low_shelf(cfg_.chop_frequency, cfg_.effective_sample_rate(),
                                        std::pow(10.0, -cfg_.chop_suppression_db / 20.0))),
      suppression_(std::pow(10.0, -cfg_.chop_suppression_db / 20.0)) {
  state_.dac_code = cfg_.midscale_code();
}

void StaticChain::select_channel(int ch) {
  if (ch < 0 || ch >= StaticChainConfig::kNumChannels)
    throw ValidationError("channel = " + std::to_string(ch) + ": the multiplexer has inputs 0..3");
  state_.selected_channel = ch;
  lpf_.reset();
  state_.lpf_state = 0.0;
}

void StaticChain::set_dac_code(int code) {
  if (code < 0 || code >= (1 << cfg_.dac_bits))
    throw ValidationError("dac_code = " + std::to_string(code) + ": must be in [0, 2^bits - 1]");
  state_.dac_code = code;
}

double StaticChain::dac_offset() const {
  const double full = cfg_.dac_full_scale;
  return static_cast<double>(state_.dac_code) / static_cast<double>(1 << cfg_.dac_bits) * full -
         0.5 * full;
}

double StaticChain::process_sample(double bridge_voltage, const NoiseSample& noise) {
  const double shaped_noise = noise.white + flicker_shelf_.step(noise.flicker);
  const double stage1 =
      cfg_.first_stage_gain * (bridge_voltage + shaped_noise + suppression_ * cfg_.input_offset);
  const double filtered = lpf_.step(stage1);
  state_.lpf_state = filtered;
  return cfg_.gain3 * cfg_.gain2 * (filtered - dac_offset());
}

double StaticChain::dc_output(const StaticChainConfig& cfg, double bridge_voltage, int dac_code) {
  cfg.validate();
  const double suppression = std::pow(10.0, -cfg.chop_suppression_db / 20.0);
  const double full = cfg.dac_full_scale;
  const double dac =
      static_cast<double>(dac_code) / static_cast<double>(1 << cfg.dac_bits) * full - 0.5 * full;
  return cfg.gain3 * cfg.gain2 *
         (cfg.first_stage_gain * (bridge_voltage + suppression * cfg.input_offset) - dac);
}

double StaticChain::measure_mean_output(const std::function<ChainInput()>& source) {
  const double fs = cfg_.effective_sample_rate();
  const double tau_samples = fs / (2.0 * M_PI * cfg_.lpf_cutoff);
  const auto settle = static_cast<std::size_t>(std::ceil(12.0 * tau_samples));
  const auto window = static_cast<std::size_t>(std::ceil(4.0 * tau_samples));

  lpf_.reset();
  state_.lpf_state = 0.0;
  for (std::size_t i = 0; i < settle; ++i) process_sample(source());
  double sum = 0.0;
  for (std::size_t i = 0; i < window; ++i) sum += process_sample(source());
  return sum / static_cast<double>(window);
}

int StaticChain::calibrate_offset(const std::function<ChainInput()>& quiet_source) {
  const int max_code = (1 << cfg_.dac_bits) - 1;
  int lo = 0;
  int hi = max_code;

  // The output is affine in the code with negative slope, so bisection on the
  // sign of the mean settled output converges to the bracketing pair.
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    set_dac_code(mid);
    const double mean = measure_mean_output(quiet_source);
    if (mean > 0.0)
      lo = mid;
    else
      hi = mid;
  }

  set_dac_code(lo);
  const double out_lo = measure_mean_output(quiet_source);
  set_dac_code(hi);
  const double out_hi = measure_mean_output(quiet_source);

  double best = out_hi;
  int best_code = hi;
  if (std::abs(out_lo) < std::abs(out_hi)) {
    best = out_lo;
    best_code = lo;
  }
  set_dac_code(best_code);

  const double lsb_out = cfg_.dac_full_scale / static_cast<double>(1 << cfg_.dac_bits) *
                         cfg_.gain2 * cfg_.gain3;
  if (std::abs(best) > lsb_out)
    throw OffsetRangeError("offset residual " + std::to_string(best) +
                           " V exceeds one DAC LSB; input offset is outside the "
                           "compensation range");
  return best_code;
}

}  // namespace cantisim
