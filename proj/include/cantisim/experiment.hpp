#ifndef CANTISIM_EXPERIMENT_HPP
#define CANTISIM_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cantisim/assay.hpp"
#include "cantisim/bridge.hpp"
#include "cantisim/counter.hpp"
#include "cantisim/errors.hpp"
#include "cantisim/mech.hpp"
#include "cantisim/resonant_loop.hpp"
#include "cantisim/static_chain.hpp"

namespace cantisim {

enum class ExperimentMode { Static, Resonant, AssayStatic, AssayResonant, Characterize };

std::string to_string(ExperimentMode mode);
std::optional<ExperimentMode> mode_from_string(const std::string& name);

/// Direct mechanical load applied without running the binding kinetics.
struct LoadSpec {
  double delta_m = 0.0;         // kg of bound analyte (tip-equivalent)
  double surface_stress = 0.0;  // N/m differential surface stress
  double mass_placement_factor = 1.0;  // distributed-binding correction

  void collect_issues(const std::string& path, ValidationIssues& out) const;
};

struct SweepSpec {
  std::string parameter;  // e.g. "load.delta_m_kg"
  std::vector<double> values;

  bool active() const { return !parameter.empty(); }
};

struct OutputSpec {
  int decimate = 1;  // keep every n-th trace sample
};

/// A full experiment description, the in-memory form of one JSON config.
struct ExperimentSpec {
  int schema_version = 1;
  ExperimentMode mode = ExperimentMode::Characterize;

  CantileverDevice device;
  BridgeConfig bridge;
  StaticChainConfig chain;
  bool chain_auto_calibrate = true;
  LoopConfig loop;
  double vga_gain_over_critical = 0.0;  // when > 0, loop.vga_gain must be 0
  CounterConfig counter;
  AssayConfig assay;
  LoadSpec load;

  double duration = 0.3;  // s
  uint64_t seed = 1;
  SweepSpec sweep;
  OutputSpec output;

  /// A runnable reference configuration for the given mode.
  static ExperimentSpec reference(ExperimentMode mode);

  /// Serializes the full schema (every section) as pretty JSON.
  std::string to_json() const;
};

/// Semantic validation of a built spec; returns every violated constraint.
ValidationIssues validate(const ExperimentSpec& spec);

struct SpecParseResult {
  std::optional<ExperimentSpec> spec;
  ValidationIssues issues;

  bool ok() const { return issues.empty() && spec.has_value(); }
};

/// Parses and validates a JSON config. Issues are aggregated, not fail-fast;
/// each one names the field path, the given value, and the constraint.
SpecParseResult validate_spec(const std::string& json_text);

/// Fields addressable by sweep.parameter.
std::vector<std::string> sweep_parameter_names();

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 simulation failure
  std::string diagnostic;
  std::vector<std::string> files;  // paths written
};

/// Runs the experiment and writes CSV outputs into out_dir (created if
/// needed). Identical spec + seed produces byte-identical files. Sweep
/// points run in parallel up to `workers`.
RunResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir,
                         int workers = 1);

}  // namespace cantisim

#endif
