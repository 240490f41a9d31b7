#include <doctest.h>

#include <cmath>
#include <vector>

#include "cantisim/bridge.hpp"
#include "cantisim/static_chain.hpp"
#include "support/spectral.hpp"

using namespace cantisim;

namespace {

StaticChainConfig ref_chain() {
  StaticChainConfig cfg;
  cfg.chop_frequency = 1e3;
  cfg.first_stage_gain = 100.0;
  cfg.input_offset = 0.0;
  cfg.chop_suppression_db = 40.0;
  cfg.lpf_cutoff = 50.0;
  cfg.dac_bits = 10;
  cfg.dac_full_scale = 0.02;
  cfg.gain2 = 3.1622776601683795;
  cfg.gain3 = 3.1622776601683795;
  return cfg;
}

BridgeConfig flicker_bridge() {
  BridgeConfig cfg = BridgeConfig::defaults_for(ResistorKind::PmosLinear);
  cfg.white_noise_density = 1e-16;
  cfg.flicker_corner = 1e4;
  return cfg;
}

double settled_output(StaticChain& chain, double v_in, int n_settle = 8000, int n_avg = 2000) {
  double out = 0.0;
  for (int i = 0; i < n_settle; ++i) out = chain.process_sample(v_in, {});
  double sum = 0.0;
  for (int i = 0; i < n_avg; ++i) sum += chain.process_sample(v_in, {});
  return sum / n_avg;
}

}  // namespace

TEST_CASE("all-zero chain with midscale DAC outputs zero") {
  StaticChain chain(ref_chain());
  for (int i = 0; i < 1000; ++i) CHECK(chain.process_sample(0.0, {}) == 0.0);
}

TEST_CASE("chopped input offset leaves the documented residual") {
  StaticChainConfig cfg = ref_chain();
  cfg.input_offset = 1e-3;
  cfg.chop_suppression_db = 40.0;
  StaticChain chain(cfg);
  // 1 mV offset suppressed 40 dB -> 10 uV input-referred -> times the full
  // chain gain of 1000.
  const double expected = 10e-6 * cfg.first_stage_gain * cfg.gain2 * cfg.gain3 / 100.0 * 100.0;
  CHECK(settled_output(chain, 0.0) == doctest::Approx(10e-6 * 1000.0).epsilon(1e-6));
  CHECK(settled_output(chain, 0.0) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("static reference case settles to 3.33 mV at chain gain 1000") {
  StaticChain chain(ref_chain());
  const double v_bridge = 3.3284023668639047e-6;  // bridge output for 5 mN/m
  CHECK(settled_output(chain, v_bridge) == doctest::Approx(3.3284e-3).epsilon(1e-4));
}

TEST_CASE("DC gain equals the three-stage product after ten time constants") {
  const StaticChainConfig cfg = ref_chain();
  StaticChain chain(cfg);
  const double fs = cfg.effective_sample_rate();
  const double tau_samples = fs / (2.0 * M_PI * cfg.lpf_cutoff);
  const double v_in = 2e-6;

  double out = 0.0;
  const int n = static_cast<int>(10.0 * tau_samples) + 1;
  for (int i = 0; i < n; ++i) out = chain.process_sample(v_in, {});
  const double dc_gain = cfg.first_stage_gain * cfg.gain2 * cfg.gain3;
  CHECK(out / v_in == doctest::Approx(dc_gain).epsilon(1e-3));
}

TEST_CASE("output is affine in the DAC code with the exact negative slope") {
  const StaticChainConfig cfg = ref_chain();
  StaticChain chain(cfg);
  const double slope = -cfg.dac_full_scale / (1 << cfg.dac_bits) * cfg.gain2 * cfg.gain3;

  std::vector<double> outs;
  for (int code : {100, 400, 512, 700, 1023}) {
    chain.set_dac_code(code);
    outs.push_back(settled_output(chain, 1e-6, 4000, 100));
  }
  const std::vector<int> codes = {100, 400, 512, 700, 1023};
  for (std::size_t i = 1; i < outs.size(); ++i) {
    const double measured = (outs[i] - outs[0]) / (codes[i] - codes[0]);
    CHECK(measured == doctest::Approx(slope).epsilon(1e-9));
  }
}

TEST_CASE("multiplexer rejects channels beyond the four cantilevers") {
  StaticChain chain(ref_chain());
  CHECK_NOTHROW(chain.select_channel(0));
  CHECK_NOTHROW(chain.select_channel(3));
  CHECK_THROWS_AS(chain.select_channel(4), ValidationError);
  CHECK_THROWS_AS(chain.select_channel(-1), ValidationError);
  CHECK(chain.state().selected_channel == 3);
}

TEST_CASE("re-selecting the same channel restarts filter settling") {
  StaticChain chain(ref_chain());
  chain.select_channel(1);
  const double settled = settled_output(chain, 1e-6);
  chain.select_channel(1);
  const double first_after = chain.process_sample(1e-6, {});
  CHECK(std::abs(first_after) < std::abs(settled) / 10.0);
}

TEST_CASE("channel switching does not leak the previous channel's history") {
  StaticChain chain(ref_chain());
  chain.select_channel(0);
  for (int i = 0; i < 5000; ++i) chain.process_sample(5e-6, {});

  chain.select_channel(2);
  StaticChain fresh(ref_chain());
  fresh.select_channel(2);
  for (int i = 0; i < 3000; ++i) {
    const double a = chain.process_sample(-2e-6, {});
    const double b = fresh.process_sample(-2e-6, {});
    CHECK(a == b);
  }
}

TEST_CASE("offset calibration: zero offset lands on midscale") {
  StaticChain chain(ref_chain());
  const int code = chain.calibrate_offset([] { return ChainInput{}; });
  CHECK(code == ref_chain().midscale_code());
}

TEST_CASE("offset calibration residual is within half an output LSB") {
  for (double v_os : {2e-4, -3.7e-4, 7.9e-4}) {
    StaticChainConfig cfg = ref_chain();
    cfg.input_offset = v_os;
    cfg.chop_suppression_db = 20.0;
    StaticChain chain(cfg);
    chain.calibrate_offset([] { return ChainInput{}; });
    const double residual = settled_output(chain, 0.0, 4000, 100);
    const double lsb_out =
        cfg.dac_full_scale / (1 << cfg.dac_bits) * cfg.gain2 * cfg.gain3;
    CHECK(std::abs(residual) <= 0.5 * lsb_out * (1.0 + 1e-9));
  }
}

TEST_CASE("offsets beyond the DAC range fail calibration") {
  StaticChainConfig cfg = ref_chain();
  cfg.input_offset = 50e-3;       // 50 mV; suppressed + amplified it swamps the DAC span
  cfg.chop_suppression_db = 0.0;  // no chopping help
  StaticChain chain(cfg);
  CHECK_THROWS_AS(chain.calibrate_offset([] { return ChainInput{}; }), OffsetRangeError);
}

TEST_CASE("chopping buys at least 20 dB of low-frequency noise power") {
  const BridgeConfig bridge = flicker_bridge();
  const double fs = ref_chain().effective_sample_rate();
  const std::size_t n = 1 << 19;

  const auto band_power_with = [&](double suppression_db) {
    StaticChainConfig cfg = ref_chain();
    cfg.chop_suppression_db = suppression_db;
    StaticChain chain(cfg);
    BridgeNoiseGenerator gen(bridge, 1.0 / fs, n, 99);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = chain.process_sample(0.0, gen.next());
    const auto psd = spectral::welch_psd(out, fs, 1 << 17);
    return spectral::band_power(psd, 1.0, 100.0);
  };

  const double raw = band_power_with(0.0);
  const double chopped = band_power_with(40.0);
  const double gain_db = 10.0 * std::log10(raw / chopped);
  CHECK(gain_db >= 20.0);
}

TEST_CASE("chain config invariants") {
  StaticChainConfig cfg = ref_chain();
  cfg.chop_frequency = 400.0;  // must exceed 10x the LPF cutoff
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = ref_chain();
  cfg.dac_bits = 3;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = ref_chain();
  cfg.dac_bits = 17;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = ref_chain();
  cfg.gain2 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK_NOTHROW(ref_chain().validate());
}
