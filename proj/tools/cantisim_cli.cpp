// cantisim command-line runner: parses an experiment config, dispatches the
// requested simulation, and writes CSV outputs.
//
// Exit codes: 0 success, 1 validation failure, 2 simulation failure.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "cantisim/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  int64_t seed = -1;  // < 0 keeps the config's seed
  int workers = 1;
  int decimate = 0;  // 0 keeps the config's decimation
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out = true) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
  if (with_out) {
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--workers", args.workers, "parallel sweep workers");
    cmd->add_option("--decimate", args.decimate, "override trace decimation");
  }
}

int load_spec(const CommonArgs& args, cantisim::ExperimentSpec& spec) {
  std::ifstream in(args.config_path);
  if (!in) {
    std::cerr << "error: cannot read config file " << args.config_path << "\n";
    return 1;
  }
  std::stringstream buf;
  buf << in.rdbuf();

  auto parsed = cantisim::validate_spec(buf.str());
  if (!parsed.ok()) {
    std::cerr << "validation failed (" << parsed.issues.size() << " issue"
              << (parsed.issues.size() == 1 ? "" : "s") << "):\n";
    for (const auto& i : parsed.issues) std::cerr << "  " << i.to_string() << "\n";
    return 1;
  }
  spec = *parsed.spec;
  if (args.seed >= 0) spec.seed = static_cast<uint64_t>(args.seed);
  if (args.decimate > 0) spec.output.decimate = args.decimate;
  return 0;
}

int check_mode(const cantisim::ExperimentSpec& spec,
               std::initializer_list<cantisim::ExperimentMode> allowed,
               const std::string& subcommand) {
  for (auto m : allowed)
    if (spec.mode == m) return 0;
  std::cerr << "validation failed: mode = " << cantisim::to_string(spec.mode)
            << " does not match subcommand " << subcommand << "\n";
  return 1;
}

int run(const cantisim::ExperimentSpec& spec, const CommonArgs& args) {
  try {
    auto result = cantisim::run_experiment(spec, args.out_dir, args.workers);
    for (const auto& f : result.files) std::cout << "wrote " << f << "\n";
    if (result.exit_code != 0) std::cerr << "simulation failed: " << result.diagnostic << "\n";
    return result.exit_code;
  } catch (const cantisim::ValidationError& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "simulation failed: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cantisim: behavioral simulator for CMOS-integrated cantilever biosensors"};
  app.require_subcommand(1);

  CommonArgs args;
  using cantisim::ExperimentMode;

  auto* characterize = app.add_subcommand(
      "characterize", "closed-form device table: stiffness, mass, resonance, responsivities");
  add_common(characterize, args);

  auto* sim_static = app.add_subcommand(
      "simulate-static", "surface-stress readout through the chopper-stabilized chain");
  add_common(sim_static, args);

  auto* sim_resonant = app.add_subcommand(
      "simulate-resonant", "closed-loop Lorentz-force oscillator with counter readout");
  add_common(sim_resonant, args);

  auto* sim_assay = app.add_subcommand(
      "simulate-assay", "binding kinetics driving either sensing mode quasi-statically");
  add_common(sim_assay, args);

  auto* sweep = app.add_subcommand("sweep", "run the config's sweep section point by point");
  add_common(sweep, args);

  auto* validate = app.add_subcommand("validate", "parse and validate a config, then exit");
  add_common(validate, args, /*with_out=*/false);

  CLI11_PARSE(app, argc, argv);

  cantisim::ExperimentSpec spec;
  if (int rc = load_spec(args, spec); rc != 0) return rc;

  if (validate->parsed()) {
    std::cout << "config is valid (mode = " << cantisim::to_string(spec.mode) << ")\n";
    return 0;
  }
  if (characterize->parsed()) {
    if (int rc = check_mode(spec, {ExperimentMode::Characterize}, "characterize"); rc) return rc;
    return run(spec, args);
  }
  if (sim_static->parsed()) {
    if (int rc = check_mode(spec, {ExperimentMode::Static}, "simulate-static"); rc) return rc;
    return run(spec, args);
  }
  if (sim_resonant->parsed()) {
    if (int rc = check_mode(spec, {ExperimentMode::Resonant}, "simulate-resonant"); rc) return rc;
    return run(spec, args);
  }
  if (sim_assay->parsed()) {
    if (int rc = check_mode(spec, {ExperimentMode::AssayStatic, ExperimentMode::AssayResonant},
                            "simulate-assay");
        rc)
      return rc;
    return run(spec, args);
  }
  if (sweep->parsed()) {
    if (!spec.sweep.active()) {
      std::cerr << "validation failed: sweep: section required for the sweep subcommand\n";
      return 1;
    }
    return run(spec, args);
  }
  return 1;
}
