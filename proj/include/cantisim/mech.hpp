#ifndef CANTISIM_MECH_HPP
#define CANTISIM_MECH_HPP

#include <cstdint>

#include "cantisim/errors.hpp"

namespace cantisim {

/// Isotropic cantilever material. Single-crystal silicon is the usual choice.
struct Material {
  double youngs_modulus = 169e9;  // Pa
  double density = 2330.0;        // kg/m^3
  double poisson_ratio = 0.25;

  void collect_issues(const std::string& path, ValidationIssues& out) const;
  void validate() const;
};

/// Rectangular cantilever geometry. Thin-beam theory needs t/L <= 0.1.
struct Geometry {
  double length = 500e-6;   // m
  double width = 100e-6;    // m
  double thickness = 5e-6;  // m

  void collect_issues(const std::string& path, ValidationIssues& out) const;
  void validate() const;
};

/// Geometry + material + fluid environment (the quality factor is a direct
/// input; it is the one parameter the surrounding liquid controls).
struct CantileverDevice {
  Geometry geometry;
  Material material;
  double quality_factor = 1000.0;

  void collect_issues(const std::string& path, ValidationIssues& out) const;
  void validate() const;
};

/// k = E w t^3 / (4 L^3), tip stiffness of a clamped rectangular beam.
double spring_constant(const Geometry& geom, const Material& mat);

/// Tip-equivalent mass of the fundamental mode: 0.2427 * rho * L * w * t.
double effective_mass(const Geometry& geom, const Material& mat);

/// First-mode lumped model used by the transient integrator and the loop.
///
/// quality_factor may be +inf, which disables damping in oscillator_step.
struct ModalModel {
  double spring_constant;    // N/m
  double effective_mass;     // kg
  double natural_frequency;  // Hz
  double quality_factor;

  static ModalModel from_device(const CantileverDevice& device);

  /// Same stiffness with tip-equivalent mass added (analyte loading).
  ModalModel with_added_mass(double delta_m) const;

  void validate() const;
};

/// Resonant frequency with tip-equivalent added mass:
/// f = (1/2pi) sqrt(k / (m_eff + delta_m)). Rejects delta_m <= -m_eff.
double mass_loaded_frequency(const ModalModel& model, double delta_m);

/// Stoney tip deflection z = 3 dsigma (1-nu) L^2 / (E t^2).
/// Positive differential surface stress on the functionalized face gives
/// positive z.
double stoney_tip_deflection(const Geometry& geom, const Material& mat, double dsigma_s);

/// Longitudinal strain at the clamped edge under a static surface-stress load:
/// eps = 3 dsigma (1-nu) / (E t).
double clamp_strain_static(const Geometry& geom, const Material& mat, double dsigma_s);

/// Clamp strain for a tip displacement z (tip-load mode shape):
/// eps = 3 t z / (2 L^2).
double clamp_strain_dynamic(const Geometry& geom, double tip_displacement);

/// Transient state of the lumped oscillator.
struct OscState {
  double z = 0.0;    // tip displacement, m
  double v = 0.0;    // tip velocity, m/s
  double tau = 0.0;  // time, s
};

/// One classical RK4 step of m z'' + (m w0/Q) z' + k z = F with the force held
/// constant over the step. dt must satisfy dt <= 1/(50 f0).
OscState oscillator_step(const OscState& state, const ModalModel& model, double external_force,
                         double dt);

}  // namespace cantisim

#endif
