#include "cantisim/assay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cantisim {

namespace {

std::string num(double v) { return std::to_string(v); }

}  // namespace

void AssayConfig::collect_issues(const std::string& path, ValidationIssues& out) const {
  if (!(k_on > 0.0)) out.push_back({path + ".k_on_per_molar_s", num(k_on), "must be > 0"});
  if (!(k_off >= 0.0)) out.push_back({path + ".k_off_per_s", num(k_off), "must be >= 0"});
  if (!(concentration >= 0.0))
    out.push_back({path + ".concentration_molar", num(concentration), "must be >= 0"});
  if (!(site_density > 0.0))
    out.push_back({path + ".site_density_per_m2", num(site_density), "must be > 0"});
  if (!(molecule_mass > 0.0))
    out.push_back({path + ".molecule_mass_kg", num(molecule_mass), "must be > 0"});
  if (!(active_area > 0.0))
    out.push_back({path + ".active_area_m2", num(active_area), "must be > 0"});
  if (!std::isfinite(max_surface_stress))
    out.push_back({path + ".max_surface_stress_n_m", num(max_surface_stress), "must be finite"});
}

void AssayConfig::validate() const {
  ValidationIssues issues;
  collect_issues("assay", issues);
  throw_if_issues(issues);
}

AssayState langmuir_step(const AssayState& state, const AssayConfig& cfg, double dt) {
  cfg.validate();
  if (!(state.coverage >= 0.0 && state.coverage <= 1.0))
    throw ValidationError("coverage = " + num(state.coverage) + ": must be in [0, 1]");
  const double rate = cfg.k_on * cfg.concentration + cfg.k_off;
  if (!(dt > 0.0) || dt * rate > 1e-3 * (1.0 + 1e-12))
    throw ValidationError("dt = " + num(dt) +
                          " s: must satisfy 0 < dt <= 0.001/(k_on C + k_off)");

  const double kc = cfg.k_on * cfg.concentration;
  const auto rhs = [&](double th) { return kc * (1.0 - th) - cfg.k_off * th; };

  const double th = state.coverage;
  const double k1 = rhs(th);
  const double k2 = rhs(th + 0.5 * dt * k1);
  const double k3 = rhs(th + 0.5 * dt * k2);
  const double k4 = rhs(th + dt * k3);

  AssayState next;
  next.coverage = th + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  // The exact solution never leaves [0, 1]; trim integrator round-off.
  next.coverage = std::clamp(next.coverage, 0.0, 1.0);
  next.time = state.time + dt;
  return next;
}

double equilibrium_coverage(const AssayConfig& cfg) {
  cfg.validate();
  const double rate = cfg.k_on * cfg.concentration + cfg.k_off;
  if (!(rate > 0.0))
    throw ValidationError("k_on*C + k_off = 0: equilibrium coverage is undefined");
  return cfg.concentration / (cfg.concentration + cfg.k_off / cfg.k_on);
}

BindingLoad coverage_to_load(double theta, const AssayConfig& cfg) {
  cfg.validate();
  if (!(theta >= 0.0 && theta <= 1.0))
    throw ValidationError("theta = " + num(theta) + ": must be in [0, 1]");
  return BindingLoad{theta * cfg.site_density * cfg.active_area * cfg.molecule_mass,
                     theta * cfg.max_surface_stress};
}

}  // namespace cantisim
