#ifndef CANTISIM_ASSAY_HPP
#define CANTISIM_ASSAY_HPP

#include "cantisim/errors.hpp"

namespace cantisim {

/// Langmuir binding kinetics plus the linear maps from fractional coverage to
/// the mechanical loads (added mass, differential surface stress).
///
/// Defaults are plausible immunoassay values: K_d = 10 nM, a 150 kDa analyte,
/// an antibody monolayer on the reference cantilever's top face.
struct AssayConfig {
  double k_on = 1e5;                 // 1/(M s)
  double k_off = 1e-3;               // 1/s
  double concentration = 1e-8;       // M
  double site_density = 1e16;        // 1/m^2
  double molecule_mass = 2.5e-22;    // kg
  double max_surface_stress = 5e-3;  // N/m at full coverage; may be negative
  double active_area = 5e-8;         // m^2

  void collect_issues(const std::string& path, ValidationIssues& out) const;
  void validate() const;
};

struct AssayState {
  double coverage = 0.0;  // fractional, in [0, 1]
  double time = 0.0;      // s
};

/// One RK4 step of d(theta)/dt = k_on C (1 - theta) - k_off theta.
/// Requires dt <= 0.001 / (k_on C + k_off).
AssayState langmuir_step(const AssayState& state, const AssayConfig& cfg, double dt);

/// theta_eq = C / (C + k_off/k_on). Rejects the all-zero-rate degenerate case.
double equilibrium_coverage(const AssayConfig& cfg);

struct BindingLoad {
  double delta_m = 0.0;   // kg, tip-equivalent before any placement factor
  double dsigma_s = 0.0;  // N/m
};

/// delta_m = theta N_s A m_mol; dsigma_s = theta dsigma_max.
BindingLoad coverage_to_load(double theta, const AssayConfig& cfg);

}  // namespace cantisim

#endif
