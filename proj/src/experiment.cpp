#include "cantisim/experiment.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <thread>

namespace cantisim {

namespace {

using nlohmann::json;

constexpr uint64_t kCalibrationSeedSalt = 0x9e3779b97f4a7c15ULL;

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw SimulationError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  std::filesystem::rename(tmp, path);
}

/// One summary row as ordered (column, formatted value) cells, so sweeps can
/// reuse the per-mode summary layout.
struct SummaryRow {
  std::vector<std::pair<std::string, std::string>> cells;

  void add(const std::string& name, double v) { cells.emplace_back(name, csv_num(v)); }
  void add(const std::string& name, const std::string& v) { cells.emplace_back(name, v); }
};

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string text;
  if (rows.empty()) return text;
  for (std::size_t i = 0; i < rows.front().cells.size(); ++i) {
    if (i) text += ',';
    text += rows.front().cells[i].first;
  }
  text += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.cells.size(); ++i) {
      if (i) text += ',';
      text += row.cells[i].second;
    }
    text += '\n';
  }
  return text;
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

void issue(ValidationIssues& out, const std::string& path, const std::string& given,
           const std::string& constraint) {
  out.push_back({path, given, constraint});
}

bool read_double(const json& obj, const std::string& path, const char* key, double& target,
                 ValidationIssues& issues) {
  if (!obj.contains(key)) return false;
  const auto& v = obj.at(key);
  if (!v.is_number()) {
    issue(issues, path + "." + key, v.dump(), "must be a number");
    return false;
  }
  target = v.get<double>();
  return true;
}

bool read_int(const json& obj, const std::string& path, const char* key, int& target,
              ValidationIssues& issues) {
  if (!obj.contains(key)) return false;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) {
    issue(issues, path + "." + key, v.dump(), "must be an integer");
    return false;
  }
  target = v.get<int>();
  return true;
}

bool read_bool(const json& obj, const std::string& path, const char* key, bool& target,
               ValidationIssues& issues) {
  if (!obj.contains(key)) return false;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) {
    issue(issues, path + "." + key, v.dump(), "must be a boolean");
    return false;
  }
  target = v.get<bool>();
  return true;
}

void parse_device(const json& j, CantileverDevice& d, ValidationIssues& issues) {
  read_double(j, "device", "length_m", d.geometry.length, issues);
  read_double(j, "device", "width_m", d.geometry.width, issues);
  read_double(j, "device", "thickness_m", d.geometry.thickness, issues);
  read_double(j, "device", "youngs_modulus_pa", d.material.youngs_modulus, issues);
  read_double(j, "device", "density_kg_m3", d.material.density, issues);
  read_double(j, "device", "poisson_ratio", d.material.poisson_ratio, issues);
  read_double(j, "device", "quality_factor", d.quality_factor, issues);
}

void parse_bridge(const json& j, BridgeConfig& b, ValidationIssues& issues) {
  if (j.contains("resistor_kind")) {
    const auto& v = j.at("resistor_kind");
    if (v.is_string() && v.get<std::string>() == "diffused") {
      b = BridgeConfig::defaults_for(ResistorKind::Diffused);
    } else if (v.is_string() && v.get<std::string>() == "pmos_linear") {
      b = BridgeConfig::defaults_for(ResistorKind::PmosLinear);
    } else {
      issue(issues, "bridge.resistor_kind", v.dump(), "must be \"diffused\" or \"pmos_linear\"");
    }
  }
  read_double(j, "bridge", "bias_voltage_v", b.bias_voltage, issues);
  read_double(j, "bridge", "gauge_factor", b.gauge_factor, issues);
  read_double(j, "bridge", "active_fraction", b.active_fraction, issues);
  read_double(j, "bridge", "white_noise_v2_hz", b.white_noise_density, issues);
  read_double(j, "bridge", "flicker_corner_hz", b.flicker_corner, issues);
}

void parse_chain(const json& j, StaticChainConfig& c, bool& auto_calibrate,
                 ValidationIssues& issues) {
  read_double(j, "chain", "chop_frequency_hz", c.chop_frequency, issues);
  read_double(j, "chain", "first_stage_gain", c.first_stage_gain, issues);
  read_double(j, "chain", "input_offset_v", c.input_offset, issues);
  read_double(j, "chain", "chop_suppression_db", c.chop_suppression_db, issues);
  read_double(j, "chain", "lpf_cutoff_hz", c.lpf_cutoff, issues);
  read_int(j, "chain", "dac_bits", c.dac_bits, issues);
  read_double(j, "chain", "dac_full_scale_v", c.dac_full_scale, issues);
  read_double(j, "chain", "gain2", c.gain2, issues);
  read_double(j, "chain", "gain3", c.gain3, issues);
  read_double(j, "chain", "sample_rate_hz", c.sample_rate, issues);
  read_bool(j, "chain", "auto_calibrate", auto_calibrate, issues);
}

void parse_loop(const json& j, LoopConfig& l, double& over_critical, ValidationIssues& issues) {
  read_double(j, "loop", "dda_gain", l.dda_gain, issues);
  if (j.contains("hpf_cutoffs_hz")) {
    const auto& v = j.at("hpf_cutoffs_hz");
    if (!v.is_array()) {
      issue(issues, "loop.hpf_cutoffs_hz", v.dump(), "must be an array of numbers");
    } else {
      l.hpf_cutoffs.clear();
      for (const auto& e : v) {
        if (!e.is_number()) {
          issue(issues, "loop.hpf_cutoffs_hz", e.dump(), "must be an array of numbers");
          break;
        }
        l.hpf_cutoffs.push_back(e.get<double>());
      }
    }
  }
  read_double(j, "loop", "vga_gain", l.vga_gain, issues);
  read_double(j, "loop", "vga_gain_over_critical", over_critical, issues);
  read_double(j, "loop", "limiter_level_v", l.limiter_level, issues);
  read_bool(j, "loop", "hard_clip_limiter", l.hard_clip_limiter, issues);
  read_double(j, "loop", "buffer_current_limit_a", l.buffer_current_limit, issues);
  read_double(j, "loop", "coil_resistance_ohm", l.coil_resistance, issues);
  read_double(j, "loop", "coil_effective_length_m", l.coil_effective_length, issues);
  read_double(j, "loop", "magnetic_field_t", l.magnetic_field, issues);
  read_double(j, "loop", "sample_rate_hz", l.sample_rate, issues);
  read_double(j, "loop", "bridge_dc_offset_v", l.bridge_dc_offset, issues);
  read_double(j, "loop", "startup_kick_m", l.startup_kick, issues);
  if (j.contains("counter_tap")) {
    const auto& v = j.at("counter_tap");
    if (v.is_string() && v.get<std::string>() == "bridge_voltage") {
      l.counter_tap = CounterTap::BridgeVoltage;
    } else if (v.is_string() && v.get<std::string>() == "tip_displacement") {
      l.counter_tap = CounterTap::TipDisplacement;
    } else {
      issue(issues, "loop.counter_tap", v.dump(),
            "must be \"bridge_voltage\" or \"tip_displacement\"");
    }
  }
}

void parse_counter(const json& j, CounterConfig& c, ValidationIssues& issues) {
  read_double(j, "counter", "gate_time_s", c.gate_time, issues);
  read_double(j, "counter", "hysteresis_v", c.hysteresis, issues);
  if (j.contains("mode")) {
    const auto& v = j.at("mode");
    if (v.is_string() && v.get<std::string>() == "gated_count") {
      c.mode = CounterMode::GatedCount;
    } else if (v.is_string() && v.get<std::string>() == "reciprocal") {
      c.mode = CounterMode::Reciprocal;
    } else {
      issue(issues, "counter.mode", v.dump(), "must be \"gated_count\" or \"reciprocal\"");
    }
  }
}

void parse_assay(const json& j, AssayConfig& a, ValidationIssues& issues) {
  read_double(j, "assay", "k_on_per_molar_s", a.k_on, issues);
  read_double(j, "assay", "k_off_per_s", a.k_off, issues);
  read_double(j, "assay", "concentration_molar", a.concentration, issues);
  read_double(j, "assay", "site_density_per_m2", a.site_density, issues);
  read_double(j, "assay", "molecule_mass_kg", a.molecule_mass, issues);
  read_double(j, "assay", "max_surface_stress_n_m", a.max_surface_stress, issues);
  read_double(j, "assay", "active_area_m2", a.active_area, issues);
}

void parse_load(const json& j, LoadSpec& l, ValidationIssues& issues) {
  read_double(j, "load", "delta_m_kg", l.delta_m, issues);
  read_double(j, "load", "surface_stress_n_m", l.surface_stress, issues);
  read_double(j, "load", "mass_placement_factor", l.mass_placement_factor, issues);
}

struct FieldAccess {
  std::function<double&(ExperimentSpec&)> ref;
};

const std::map<std::string, FieldAccess>& sweep_registry() {
  static const std::map<std::string, FieldAccess> registry = {
      {"device.length_m", {[](ExperimentSpec& s) -> double& { return s.device.geometry.length; }}},
      {"device.width_m", {[](ExperimentSpec& s) -> double& { return s.device.geometry.width; }}},
      {"device.thickness_m",
       {[](ExperimentSpec& s) -> double& { return s.device.geometry.thickness; }}},
      {"device.quality_factor",
       {[](ExperimentSpec& s) -> double& { return s.device.quality_factor; }}},
      {"bridge.bias_voltage_v",
       {[](ExperimentSpec& s) -> double& { return s.bridge.bias_voltage; }}},
      {"bridge.gauge_factor", {[](ExperimentSpec& s) -> double& { return s.bridge.gauge_factor; }}},
      {"bridge.white_noise_v2_hz",
       {[](ExperimentSpec& s) -> double& { return s.bridge.white_noise_density; }}},
      {"bridge.flicker_corner_hz",
       {[](ExperimentSpec& s) -> double& { return s.bridge.flicker_corner; }}},
      {"chain.input_offset_v",
       {[](ExperimentSpec& s) -> double& { return s.chain.input_offset; }}},
      {"chain.chop_suppression_db",
       {[](ExperimentSpec& s) -> double& { return s.chain.chop_suppression_db; }}},
      {"loop.vga_gain", {[](ExperimentSpec& s) -> double& { return s.loop.vga_gain; }}},
      {"loop.limiter_level_v",
       {[](ExperimentSpec& s) -> double& { return s.loop.limiter_level; }}},
      {"loop.bridge_dc_offset_v",
       {[](ExperimentSpec& s) -> double& { return s.loop.bridge_dc_offset; }}},
      {"counter.gate_time_s", {[](ExperimentSpec& s) -> double& { return s.counter.gate_time; }}},
      {"assay.concentration_molar",
       {[](ExperimentSpec& s) -> double& { return s.assay.concentration; }}},
      {"assay.k_on_per_molar_s", {[](ExperimentSpec& s) -> double& { return s.assay.k_on; }}},
      {"assay.k_off_per_s", {[](ExperimentSpec& s) -> double& { return s.assay.k_off; }}},
      {"load.delta_m_kg", {[](ExperimentSpec& s) -> double& { return s.load.delta_m; }}},
      {"load.surface_stress_n_m",
       {[](ExperimentSpec& s) -> double& { return s.load.surface_stress; }}},
      {"duration_s", {[](ExperimentSpec& s) -> double& { return s.duration; }}},
  };
  return registry;
}

}  // namespace

std::string to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::Static: return "static";
    case ExperimentMode::Resonant: return "resonant";
    case ExperimentMode::AssayStatic: return "assay_static";
    case ExperimentMode::AssayResonant: return "assay_resonant";
    case ExperimentMode::Characterize: return "characterize";
  }
  return "unknown";
}

std::optional<ExperimentMode> mode_from_string(const std::string& name) {
  if (name == "static") return ExperimentMode::Static;
  if (name == "resonant") return ExperimentMode::Resonant;
  if (name == "assay_static") return ExperimentMode::AssayStatic;
  if (name == "assay_resonant") return ExperimentMode::AssayResonant;
  if (name == "characterize") return ExperimentMode::Characterize;
  return std::nullopt;
}

void LoadSpec::collect_issues(const std::string& path, ValidationIssues& out) const {
  if (!std::isfinite(delta_m))
    out.push_back({path + ".delta_m_kg", std::to_string(delta_m), "must be finite"});
  if (!std::isfinite(surface_stress))
    out.push_back({path + ".surface_stress_n_m", std::to_string(surface_stress),
                   "must be finite"});
  if (!(mass_placement_factor > 0.0))
    out.push_back({path + ".mass_placement_factor", std::to_string(mass_placement_factor),
                   "must be > 0"});
}

ExperimentSpec ExperimentSpec::reference(ExperimentMode mode) {
  ExperimentSpec spec;
  spec.mode = mode;
  spec.loop.vga_gain = 0.0;
  spec.vga_gain_over_critical = 3.0;
  spec.counter.hysteresis = 2e-4;
  spec.seed = 42;
  switch (mode) {
    case ExperimentMode::Static:
      spec.load.surface_stress = 5e-3;
      spec.duration = 0.5;
      spec.output.decimate = 50;
      break;
    case ExperimentMode::Resonant:
      spec.duration = 0.35;
      spec.output.decimate = 2000;
      break;
    case ExperimentMode::AssayStatic:
    case ExperimentMode::AssayResonant:
      spec.duration = 3600.0;
      break;
    case ExperimentMode::Characterize:
      spec.duration = 0.1;
      break;
  }
  return spec;
}

std::string ExperimentSpec::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["mode"] = to_string(mode);
  j["device"] = {{"length_m", device.geometry.length},
                 {"width_m", device.geometry.width},
                 {"thickness_m", device.geometry.thickness},
                 {"youngs_modulus_pa", device.material.youngs_modulus},
                 {"density_kg_m3", device.material.density},
                 {"poisson_ratio", device.material.poisson_ratio},
                 {"quality_factor", device.quality_factor}};
  j["bridge"] = {
      {"resistor_kind",
       bridge.resistor_kind == ResistorKind::PmosLinear ? "pmos_linear" : "diffused"},
      {"bias_voltage_v", bridge.bias_voltage},
      {"gauge_factor", bridge.gauge_factor},
      {"active_fraction", bridge.active_fraction},
      {"white_noise_v2_hz", bridge.white_noise_density},
      {"flicker_corner_hz", bridge.flicker_corner}};
  j["chain"] = {{"chop_frequency_hz", chain.chop_frequency},
                {"first_stage_gain", chain.first_stage_gain},
                {"input_offset_v", chain.input_offset},
                {"chop_suppression_db", chain.chop_suppression_db},
                {"lpf_cutoff_hz", chain.lpf_cutoff},
                {"dac_bits", chain.dac_bits},
                {"dac_full_scale_v", chain.dac_full_scale},
                {"gain2", chain.gain2},
                {"gain3", chain.gain3},
                {"sample_rate_hz", chain.sample_rate},
                {"auto_calibrate", chain_auto_calibrate}};
  j["loop"] = {{"dda_gain", loop.dda_gain},
               {"hpf_cutoffs_hz", loop.hpf_cutoffs},
               {"vga_gain", loop.vga_gain},
               {"vga_gain_over_critical", vga_gain_over_critical},
               {"limiter_level_v", loop.limiter_level},
               {"hard_clip_limiter", loop.hard_clip_limiter},
               {"buffer_current_limit_a", loop.buffer_current_limit},
               {"coil_resistance_ohm", loop.coil_resistance},
               {"coil_effective_length_m", loop.coil_effective_length},
               {"magnetic_field_t", loop.magnetic_field},
               {"sample_rate_hz", loop.sample_rate},
               {"bridge_dc_offset_v", loop.bridge_dc_offset},
               {"startup_kick_m", loop.startup_kick},
               {"counter_tap", loop.counter_tap == CounterTap::TipDisplacement
                                   ? "tip_displacement"
                                   : "bridge_voltage"}};
  j["counter"] = {{"gate_time_s", counter.gate_time},
                  {"mode", counter.mode == CounterMode::Reciprocal ? "reciprocal" : "gated_count"},
                  {"hysteresis_v", counter.hysteresis}};
  j["assay"] = {{"k_on_per_molar_s", assay.k_on},
                {"k_off_per_s", assay.k_off},
                {"concentration_molar", assay.concentration},
                {"site_density_per_m2", assay.site_density},
                {"molecule_mass_kg", assay.molecule_mass},
                {"max_surface_stress_n_m", assay.max_surface_stress},
                {"active_area_m2", assay.active_area}};
  j["load"] = {{"delta_m_kg", load.delta_m},
               {"surface_stress_n_m", load.surface_stress},
               {"mass_placement_factor", load.mass_placement_factor}};
  j["duration_s"] = duration;
  j["seed"] = seed;
  if (sweep.active()) j["sweep"] = {{"parameter", sweep.parameter}, {"values", sweep.values}};
  j["output"] = {{"decimate", output.decimate}};
  return j.dump(2) + "\n";
}

ValidationIssues validate(const ExperimentSpec& spec) {
  ValidationIssues issues;
  if (spec.schema_version != 1)
    issue(issues, "schema_version", std::to_string(spec.schema_version), "must be 1");

  spec.device.collect_issues("device", issues);
  spec.bridge.collect_issues("bridge", issues);
  spec.load.collect_issues("load", issues);
  spec.counter.collect_issues("counter", issues);

  const bool needs_chain =
      spec.mode == ExperimentMode::Static || spec.mode == ExperimentMode::AssayStatic;
  const bool needs_loop = spec.mode == ExperimentMode::Resonant;
  const bool needs_assay =
      spec.mode == ExperimentMode::AssayStatic || spec.mode == ExperimentMode::AssayResonant;

  if (needs_chain) spec.chain.collect_issues("chain", issues);
  if (needs_assay) spec.assay.collect_issues("assay", issues);

  ValidationIssues device_issues;
  spec.device.collect_issues("device", device_issues);
  const bool device_ok = device_issues.empty();

  if (needs_loop && device_ok) {
    const ModalModel modal = ModalModel::from_device(spec.device);
    spec.loop.collect_issues("loop", modal.natural_frequency, issues);
    if (spec.vga_gain_over_critical > 0.0 && spec.loop.vga_gain != 0.0)
      issue(issues, "loop.vga_gain", std::to_string(spec.loop.vga_gain),
            "must be 0 when vga_gain_over_critical is set");
    if (!(spec.vga_gain_over_critical >= 0.0))
      issue(issues, "loop.vga_gain_over_critical", std::to_string(spec.vga_gain_over_critical),
            "must be >= 0");
    if (!(spec.duration >= 100.0 / modal.natural_frequency))
      issue(issues, "duration_s", std::to_string(spec.duration),
            "must cover at least 100 resonance periods");
    if (!(spec.duration > spec.counter.gate_time * 1.02 + 100.0 / modal.natural_frequency))
      issue(issues, "duration_s", std::to_string(spec.duration),
            "must leave room for the counter gate after startup");
  }

  if (!(spec.duration > 0.0))
    issue(issues, "duration_s", std::to_string(spec.duration), "must be > 0");
  if (!(spec.output.decimate >= 1))
    issue(issues, "output.decimate", std::to_string(spec.output.decimate), "must be >= 1");

  if (spec.sweep.active()) {
    if (!sweep_registry().contains(spec.sweep.parameter)) {
      issue(issues, "sweep.parameter", spec.sweep.parameter,
            "must name a sweepable numeric field");
    }
    if (spec.sweep.values.empty())
      issue(issues, "sweep.values", "[]", "must contain at least one value");
    for (double v : spec.sweep.values)
      if (!std::isfinite(v)) issue(issues, "sweep.values", std::to_string(v), "must be finite");
  }
  return issues;
}

SpecParseResult validate_spec(const std::string& json_text) {
  SpecParseResult result;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    issue(result.issues, "config", "", std::string("invalid JSON: ") + e.what());
    return result;
  }
  if (!j.is_object()) {
    issue(result.issues, "config", j.dump().substr(0, 40), "top level must be an object");
    return result;
  }

  ExperimentSpec spec;
  auto& issues = result.issues;

  read_int(j, "", "schema_version", spec.schema_version, issues);

  if (!j.contains("mode")) {
    issue(issues, "mode", "", "section required: one of static, resonant, assay_static, "
                              "assay_resonant, characterize");
  } else if (!j.at("mode").is_string()) {
    issue(issues, "mode", j.at("mode").dump(), "must be a string");
  } else {
    const auto mode = mode_from_string(j.at("mode").get<std::string>());
    if (!mode) {
      issue(issues, "mode", j.at("mode").get<std::string>(),
            "must be one of static, resonant, assay_static, assay_resonant, characterize");
    } else {
      spec.mode = *mode;
    }
  }

  const auto section = [&](const char* name) -> const json* {
    if (!j.contains(name)) return nullptr;
    if (!j.at(name).is_object()) {
      issue(issues, name, j.at(name).dump().substr(0, 40), "must be an object");
      return nullptr;
    }
    return &j.at(name);
  };

  const json* device = section("device");
  const json* bridge = section("bridge");
  const json* chain = section("chain");
  const json* loop = section("loop");
  const json* counter = section("counter");
  const json* assay = section("assay");
  const json* load = section("load");

  if (device) parse_device(*device, spec.device, issues);
  if (bridge) parse_bridge(*bridge, spec.bridge, issues);
  if (chain) parse_chain(*chain, spec.chain, spec.chain_auto_calibrate, issues);
  if (loop) parse_loop(*loop, spec.loop, spec.vga_gain_over_critical, issues);
  if (counter) parse_counter(*counter, spec.counter, issues);
  if (assay) parse_assay(*assay, spec.assay, issues);
  if (load) parse_load(*load, spec.load, issues);

  // Required sections per mode. Absent optional sections keep their defaults.
  const auto require = [&](const json* s, const char* name) {
    if (!s)
      issue(issues, name, "", "section required for mode " + to_string(spec.mode));
  };
  require(device, "device");
  switch (spec.mode) {
    case ExperimentMode::Static:
      require(bridge, "bridge");
      require(chain, "chain");
      break;
    case ExperimentMode::Resonant:
      require(bridge, "bridge");
      require(loop, "loop");
      require(counter, "counter");
      break;
    case ExperimentMode::AssayStatic:
      require(bridge, "bridge");
      require(chain, "chain");
      require(assay, "assay");
      break;
    case ExperimentMode::AssayResonant:
      require(assay, "assay");
      break;
    case ExperimentMode::Characterize:
      require(bridge, "bridge");
      break;
  }

  read_double(j, "", "duration_s", spec.duration, issues);
  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (!v.is_number_unsigned() && !v.is_number_integer()) {
      issue(issues, "seed", v.dump(), "must be a non-negative integer");
    } else {
      spec.seed = v.get<uint64_t>();
    }
  }
  if (j.contains("sweep")) {
    const auto& v = j.at("sweep");
    if (!v.is_object()) {
      issue(issues, "sweep", v.dump().substr(0, 40), "must be an object");
    } else {
      if (v.contains("parameter") && v.at("parameter").is_string())
        spec.sweep.parameter = v.at("parameter").get<std::string>();
      else
        issue(issues, "sweep.parameter", "", "must be a string naming a numeric field");
      if (v.contains("values") && v.at("values").is_array()) {
        for (const auto& e : v.at("values")) {
          if (!e.is_number()) {
            issue(issues, "sweep.values", e.dump(), "must be numbers");
            break;
          }
          spec.sweep.values.push_back(e.get<double>());
        }
      } else {
        issue(issues, "sweep.values", "", "must be an array of numbers");
      }
    }
  }
  if (j.contains("output")) {
    const auto& v = j.at("output");
    if (v.is_object()) read_int(v, "output", "decimate", spec.output.decimate, issues);
  }

  auto semantic = cantisim::validate(spec);
  issues.insert(issues.end(), semantic.begin(), semantic.end());
  if (issues.empty()) result.spec = spec;
  return result;
}

std::vector<std::string> sweep_parameter_names() {
  std::vector<std::string> names;
  for (const auto& [name, access] : sweep_registry()) names.push_back(name);
  return names;
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

namespace {

/// Resolves runtime-derived loop fields (vga from the critical-gain ratio).
LoopConfig resolved_loop(const ExperimentSpec& spec, const ModalModel& modal) {
  LoopConfig loop = spec.loop;
  if (spec.vga_gain_over_critical > 0.0 && loop.vga_gain == 0.0)
    loop.vga_gain = spec.vga_gain_over_critical *
                    critical_vga_gain(spec.device, modal, spec.bridge, loop);
  return loop;
}

struct ModeOutput {
  SummaryRow summary;
  std::string trace_name;  // empty when the mode writes no trace
  std::string trace_csv;
  int exit_code = 0;
  std::string diagnostic;
};

ModeOutput run_characterize(const ExperimentSpec& spec) {
  const auto& g = spec.device.geometry;
  const auto& m = spec.device.material;
  const ModalModel modal = ModalModel::from_device(spec.device);

  ModeOutput out;
  auto& row = out.summary;
  row.add("length_m", g.length);
  row.add("width_m", g.width);
  row.add("thickness_m", g.thickness);
  row.add("quality_factor", spec.device.quality_factor);
  row.add("spring_constant_n_per_m", modal.spring_constant);
  row.add("effective_mass_kg", modal.effective_mass);
  row.add("natural_frequency_hz", modal.natural_frequency);
  row.add("stoney_responsivity_m_per_n_per_m", stoney_tip_deflection(g, m, 1.0));
  row.add("clamp_strain_per_n_per_m", clamp_strain_static(g, m, 1.0));
  row.add("bridge_sensitivity_v_per_strain",
          spec.bridge.bias_voltage * spec.bridge.active_fraction * spec.bridge.gauge_factor);
  row.add("mass_responsivity_hz_per_kg",
          -modal.natural_frequency / (2.0 * modal.effective_mass));
  row.add("chain_dc_gain",
          spec.chain.first_stage_gain * spec.chain.gain2 * spec.chain.gain3);
  return out;
}

ModeOutput run_static(const ExperimentSpec& spec) {
  const auto& g = spec.device.geometry;
  const auto& m = spec.device.material;
  const double strain = clamp_strain_static(g, m, spec.load.surface_stress);
  const double v_bridge = bridge_output(spec.bridge, strain);

  const double fs = spec.chain.effective_sample_rate();
  const double dt = 1.0 / fs;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * fs));
  const bool noise_on = spec.bridge.white_noise_density > 0.0;

  ModeOutput out;
  StaticChain chain(spec.chain);

  if (spec.chain_auto_calibrate) {
    std::optional<BridgeNoiseGenerator> cal_noise;
    if (noise_on)
      cal_noise.emplace(spec.bridge, dt, std::max<std::size_t>(n, 2),
                        spec.seed ^ kCalibrationSeedSalt);
    try {
      chain.calibrate_offset([&]() {
        ChainInput in;
        if (cal_noise) in.noise = cal_noise->next();
        return in;
      });
    } catch (const OffsetRangeError& e) {
      out.exit_code = 2;
      out.diagnostic = e.what();
      out.summary.add("status", "offset_out_of_range");
      return out;
    }
  }

  std::optional<BridgeNoiseGenerator> noise;
  if (noise_on) noise.emplace(spec.bridge, dt, std::max<std::size_t>(n, 2), spec.seed);

  std::vector<double> output(n);
  std::string trace = "time_s,output_v\n";
  for (std::size_t i = 0; i < n; ++i) {
    const NoiseSample ns = noise ? noise->next() : NoiseSample{};
    output[i] = chain.process_sample(v_bridge, ns);
    if (i % static_cast<std::size_t>(spec.output.decimate) == 0)
      trace += csv_num(static_cast<double>(i) * dt) + "," + csv_num(output[i]) + "\n";
  }

  const std::size_t tail = std::max<std::size_t>(n / 4, 1);
  double settled = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) settled += output[i];
  settled /= static_cast<double>(tail);

  auto& row = out.summary;
  row.add("status", "ok");
  row.add("surface_stress_n_m", spec.load.surface_stress);
  row.add("clamp_strain", strain);
  row.add("bridge_voltage_v", v_bridge);
  row.add("settled_output_v", settled);
  row.add("chain_dc_gain",
          spec.chain.first_stage_gain * spec.chain.gain2 * spec.chain.gain3);
  row.add("dac_code", static_cast<double>(chain.state().dac_code));
  out.trace_name = "static_trace.csv";
  out.trace_csv = std::move(trace);
  return out;
}

ModeOutput run_resonant(const ExperimentSpec& spec) {
  const ModalModel unloaded = ModalModel::from_device(spec.device);
  const double delta_m_eff = spec.load.delta_m * spec.load.mass_placement_factor;
  const ModalModel modal = unloaded.with_added_mass(delta_m_eff);
  const LoopConfig loop = resolved_loop(spec, modal);

  ModeOutput out;
  LoopTrace trace;
  try {
    trace = run_oscillator(spec.device, modal, spec.bridge, loop, spec.counter, spec.duration,
                           spec.seed);
  } catch (const SimulationError& e) {
    out.exit_code = 2;
    out.diagnostic = e.what();
    out.summary.add("status", "diverged");
    return out;
  }

  const char* status = trace.status == LoopStatus::Settled        ? "settled"
                       : trace.status == LoopStatus::NotSettled   ? "not_settled"
                                                                  : "no_oscillation";
  auto& row = out.summary;
  row.add("status", status);
  row.add("model_frequency_hz", modal.natural_frequency);
  row.add("settled_frequency_hz", trace.settled_frequency);
  row.add("counter_count", static_cast<double>(trace.counter_count));
  row.add("settled_amplitude_m", trace.settled_amplitude);
  row.add("startup_time_s", trace.startup_time);
  row.add("max_coil_current_a", trace.max_abs_current);
  row.add("energy_balance_error", trace.energy_balance_error);
  row.add("vga_gain", loop.vga_gain);
  row.add("loop_gain_at_f0",
          loop.vga_gain > 0.0
              ? loop_gain_at(modal.natural_frequency, spec.device, modal, spec.bridge, loop)
              : 0.0);

  std::string csv = "time_s,tip_displacement_m,bridge_voltage_v,coil_current_a\n";
  const auto dec = static_cast<std::size_t>(spec.output.decimate);
  for (std::size_t i = 0; i < trace.tip_displacement.size(); i += dec) {
    csv += csv_num(static_cast<double>(i) / trace.sample_rate) + "," +
           csv_num(trace.tip_displacement[i]) + "," + csv_num(trace.bridge_voltage[i]) + "," +
           csv_num(trace.coil_current[i]) + "\n";
  }
  out.trace_name = "resonant_trace.csv";
  out.trace_csv = std::move(csv);

  if (trace.status != LoopStatus::Settled) {
    out.exit_code = 2;
    out.diagnostic = trace.status_message;
  }
  return out;
}

ModeOutput run_assay(const ExperimentSpec& spec) {
  const ModalModel modal = ModalModel::from_device(spec.device);
  const bool resonant = spec.mode == ExperimentMode::AssayResonant;

  const double rate = spec.assay.k_on * spec.assay.concentration + spec.assay.k_off;
  const std::size_t n_rows = 400;
  const double dt_row = spec.duration / static_cast<double>(n_rows);
  std::size_t steps_per_row = 1;
  double dt = dt_row;
  if (rate > 0.0) {
    const double dt_max = 1e-3 / rate;
    steps_per_row = static_cast<std::size_t>(std::ceil(dt_row / dt_max));
    dt = dt_row / static_cast<double>(steps_per_row);
  }

  std::string csv = resonant
                        ? "time_s,coverage,delta_m_kg,surface_stress_n_m,frequency_hz,"
                          "frequency_shift_hz\n"
                        : "time_s,coverage,delta_m_kg,surface_stress_n_m,output_v\n";

  const auto output_for = [&](const BindingLoad& load_now, double& f_or_v, double& shift) {
    if (resonant) {
      const double dm = load_now.delta_m * spec.load.mass_placement_factor;
      f_or_v = mass_loaded_frequency(modal, dm);
      shift = f_or_v - modal.natural_frequency;
    } else {
      const double strain =
          clamp_strain_static(spec.device.geometry, spec.device.material, load_now.dsigma_s);
      f_or_v = StaticChain::dc_output(spec.chain, bridge_output(spec.bridge, strain),
                                      spec.chain.midscale_code());
      shift = 0.0;
    }
  };

  AssayState state;
  for (std::size_t r = 0; r <= n_rows; ++r) {
    const BindingLoad load_now = coverage_to_load(state.coverage, spec.assay);
    double f_or_v = 0.0, shift = 0.0;
    output_for(load_now, f_or_v, shift);
    csv += csv_num(state.time) + "," + csv_num(state.coverage) + "," +
           csv_num(load_now.delta_m) + "," + csv_num(load_now.dsigma_s) + "," + csv_num(f_or_v);
    if (resonant) csv += "," + csv_num(shift);
    csv += "\n";
    if (r == n_rows) break;
    for (std::size_t s = 0; s < steps_per_row; ++s)
      state = langmuir_step(state, spec.assay, dt);
  }

  const double theta_eq = equilibrium_coverage(spec.assay);
  const BindingLoad eq_load = coverage_to_load(theta_eq, spec.assay);
  double eq_out = 0.0, eq_shift = 0.0;
  output_for(eq_load, eq_out, eq_shift);

  ModeOutput out;
  auto& row = out.summary;
  row.add("status", "ok");
  row.add("equilibrium_coverage", theta_eq);
  row.add("time_constant_s", rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity());
  row.add("equilibrium_delta_m_kg", eq_load.delta_m);
  row.add("equilibrium_surface_stress_n_m", eq_load.dsigma_s);
  if (resonant) {
    row.add("equilibrium_frequency_hz", eq_out);
    row.add("equilibrium_frequency_shift_hz", eq_shift);
  } else {
    row.add("equilibrium_output_v", eq_out);
  }
  row.add("final_coverage", state.coverage);
  out.trace_name = "assay_trace.csv";
  out.trace_csv = std::move(csv);
  return out;
}

ModeOutput run_mode(const ExperimentSpec& spec) {
  switch (spec.mode) {
    case ExperimentMode::Characterize: return run_characterize(spec);
    case ExperimentMode::Static: return run_static(spec);
    case ExperimentMode::Resonant: return run_resonant(spec);
    case ExperimentMode::AssayStatic:
    case ExperimentMode::AssayResonant: return run_assay(spec);
  }
  throw ValidationError("unknown experiment mode");
}

}  // namespace

RunResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir, int workers) {
  {
    auto issues = validate(spec);
    throw_if_issues(issues);
  }
  if (workers < 1) throw ValidationError("workers must be >= 1");

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  RunResult result;

  if (!spec.sweep.active()) {
    ModeOutput out = run_mode(spec);
    if (!out.trace_name.empty()) {
      const auto path = dir / out.trace_name;
      write_file_atomic(path, out.trace_csv);
      result.files.push_back(path.string());
    }
    const auto summary_path = dir / (to_string(spec.mode) + "_summary.csv");
    write_file_atomic(summary_path, summary_csv({out.summary}));
    result.files.push_back(summary_path.string());
    result.exit_code = out.exit_code;
    result.diagnostic = out.diagnostic;
    return result;
  }

  const auto& registry = sweep_registry();
  const auto access = registry.find(spec.sweep.parameter);
  if (access == registry.end())
    throw ValidationError("sweep.parameter = " + spec.sweep.parameter +
                          ": must name a sweepable numeric field");

  const std::size_t n_points = spec.sweep.values.size();
  std::vector<ModeOutput> outputs(n_points);
  std::atomic<std::size_t> next{0};

  const auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_points) return;
      ExperimentSpec point = spec;
      point.sweep = {};
      access->second.ref(point) = spec.sweep.values[i];
      auto issues = validate(point);
      if (!issues.empty()) {
        outputs[i].exit_code = 2;
        outputs[i].diagnostic = issues.front().to_string();
        outputs[i].summary.add("status", "invalid_point");
        continue;
      }
      try {
        outputs[i] = run_mode(point);
      } catch (const std::exception& e) {
        outputs[i].exit_code = 2;
        outputs[i].diagnostic = e.what();
        outputs[i].summary.add("status", "error");
      }
    }
  };

  if (workers == 1 || n_points <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(workers, static_cast<int>(n_points));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<SummaryRow> rows(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    SummaryRow row;
    row.add("parameter", spec.sweep.parameter);
    row.add("value", spec.sweep.values[i]);
    // Pad failed points to the widest layout so every row shares columns.
    rows[i] = row;
  }
  // Use the first successful row as the column template.
  std::size_t template_idx = n_points;
  for (std::size_t i = 0; i < n_points; ++i)
    if (outputs[i].exit_code == 0) {
      template_idx = i;
      break;
    }
  for (std::size_t i = 0; i < n_points; ++i) {
    if (template_idx < n_points && outputs[i].summary.cells.size() !=
                                       outputs[template_idx].summary.cells.size()) {
      // Rebuild failed rows against the template column set.
      SummaryRow padded;
      for (const auto& [name, value] : outputs[template_idx].summary.cells) {
        if (name == "status")
          padded.add(name, outputs[i].summary.cells.empty()
                               ? std::string("error")
                               : outputs[i].summary.cells.front().second);
        else
          padded.add(name, std::string("nan"));
      }
      outputs[i].summary = padded;
    }
    for (const auto& cell : outputs[i].summary.cells) rows[i].cells.push_back(cell);
    if (outputs[i].exit_code != 0) {
      result.exit_code = 2;
      if (result.diagnostic.empty())
        result.diagnostic = "sweep point " + std::to_string(i) + ": " + outputs[i].diagnostic;
    }
  }

  const auto path = dir / "sweep_summary.csv";
  write_file_atomic(path, summary_csv(rows));
  result.files.push_back(path.string());
  return result;
}

}  // namespace cantisim
