#include "cantisim/mech.hpp"

#include <cmath>
#include <string>

namespace cantisim {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Tip-equivalent fraction of the beam mass for the fundamental flexural mode.
constexpr double kEffectiveMassFraction = 0.2427;

std::string num(double v) { return std::to_string(v); }

}  // namespace

void throw_if_issues(const ValidationIssues& issues) {
  if (issues.empty()) return;
  std::string msg;
  for (const auto& issue : issues) {
    if (!msg.empty()) msg += "; ";
    msg += issue.to_string();
  }
  throw ValidationError(msg);
}

void Material::collect_issues(const std::string& path, ValidationIssues& out) const {
  if (!(youngs_modulus > 0.0))
    out.push_back({path + ".youngs_modulus_pa", num(youngs_modulus), "must be > 0"});
  if (!(density > 0.0)) out.push_back({path + ".density_kg_m3", num(density), "must be > 0"});
  if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5))
    out.push_back({path + ".poisson_ratio", num(poisson_ratio), "must be in [0, 0.5)"});
}

void Material::validate() const {
  ValidationIssues issues;
  collect_issues("material", issues);
  throw_if_issues(issues);
}

void Geometry::collect_issues(const std::string& path, ValidationIssues& out) const {
  if (!(length > 0.0)) out.push_back({path + ".length_m", num(length), "must be > 0"});
  if (!(width > 0.0)) out.push_back({path + ".width_m", num(width), "must be > 0"});
  if (!(thickness > 0.0)) out.push_back({path + ".thickness_m", num(thickness), "must be > 0"});
  if (length > 0.0 && thickness > 0.0 && !(thickness / length <= 0.1))
    out.push_back({path + ".thickness_m", num(thickness),
                   "thin-beam validity requires thickness/length <= 0.1"});
}

void Geometry::validate() const {
  ValidationIssues issues;
  collect_issues("geometry", issues);
  throw_if_issues(issues);
}

void CantileverDevice::collect_issues(const std::string& path, ValidationIssues& out) const {
  geometry.collect_issues(path, out);
  material.collect_issues(path, out);
  if (!(quality_factor > 0.0))
    out.push_back({path + ".quality_factor", num(quality_factor), "must be > 0"});
}

void CantileverDevice::validate() const {
  ValidationIssues issues;
  collect_issues("device", issues);
  throw_if_issues(issues);
}

double spring_constant(const Geometry& geom, const Material& mat) {
  geom.validate();
  mat.validate();
  const double t3 = geom.thickness * geom.thickness * geom.thickness;
  const double l3 = geom.length * geom.length * geom.length;
  return mat.youngs_modulus * geom.width * t3 / (4.0 * l3);
}

double effective_mass(const Geometry& geom, const Material& mat) {
  geom.validate();
  mat.validate();
  return kEffectiveMassFraction * mat.density * geom.length * geom.width * geom.thickness;
}

ModalModel ModalModel::from_device(const CantileverDevice& device) {
  device.validate();
  const double k = cantisim::spring_constant(device.geometry, device.material);
  const double m = cantisim::effective_mass(device.geometry, device.material);
  return ModalModel{k, m, std::sqrt(k / m) / kTwoPi, device.quality_factor};
}

ModalModel ModalModel::with_added_mass(double delta_m) const {
  if (!(effective_mass + delta_m > 0.0))
    throw ValidationError("added mass " + std::to_string(delta_m) +
                          " kg would make the effective mass non-positive");
  const double m = effective_mass + delta_m;
  return ModalModel{spring_constant, m, std::sqrt(spring_constant / m) / kTwoPi, quality_factor};
}

void ModalModel::validate() const {
  ValidationIssues issues;
  if (!(spring_constant > 0.0))
    issues.push_back({"modal.spring_constant", num(spring_constant), "must be > 0"});
  if (!(effective_mass > 0.0))
    issues.push_back({"modal.effective_mass", num(effective_mass), "must be > 0"});
  if (!(natural_frequency > 0.0))
    issues.push_back({"modal.natural_frequency", num(natural_frequency), "must be > 0"});
  if (!(quality_factor > 0.0))
    issues.push_back({"modal.quality_factor", num(quality_factor), "must be > 0"});
  if (issues.empty()) {
    const double f_check = std::sqrt(spring_constant / effective_mass) / kTwoPi;
    if (!(std::abs(f_check - natural_frequency) <= 1e-12 * f_check))
      issues.push_back({"modal.natural_frequency", num(natural_frequency),
                        "must equal (1/2pi) sqrt(k/m_eff) to 1e-12 relative"});
  }
  throw_if_issues(issues);
}

double mass_loaded_frequency(const ModalModel& model, double delta_m) {
  model.validate();
  if (!(model.effective_mass + delta_m > 0.0))
    throw ValidationError("delta_m = " + std::to_string(delta_m) +
                          " kg: must satisfy delta_m > -m_eff");
  return std::sqrt(model.spring_constant / (model.effective_mass + delta_m)) / kTwoPi;
}

double stoney_tip_deflection(const Geometry& geom, const Material& mat, double dsigma_s) {
  geom.validate();
  mat.validate();
  return 3.0 * dsigma_s * (1.0 - mat.poisson_ratio) * geom.length * geom.length /
         (mat.youngs_modulus * geom.thickness * geom.thickness);
}

double clamp_strain_static(const Geometry& geom, const Material& mat, double dsigma_s) {
  geom.validate();
  mat.validate();
  return 3.0 * dsigma_s * (1.0 - mat.poisson_ratio) / (mat.youngs_modulus * geom.thickness);
}

double clamp_strain_dynamic(const Geometry& geom, double tip_displacement) {
  geom.validate();
  return 3.0 * geom.thickness * tip_displacement / (2.0 * geom.length * geom.length);
}

OscState oscillator_step(const OscState& state, const ModalModel& model, double external_force,
                         double dt) {
  const double f0 = model.natural_frequency;
  if (!(dt > 0.0) || dt * 50.0 * f0 > 1.0 + 1e-9)
    throw ValidationError("dt = " + std::to_string(dt) +
                          " s: must satisfy 0 < dt <= 1/(50 f0)");
  if (!std::isfinite(state.z) || !std::isfinite(state.v))
    throw ValidationError("oscillator state is not finite");

  const double m = model.effective_mass;
  const double k = model.spring_constant;
  const double omega0 = kTwoPi * f0;
  // Q = +inf selects the undamped path.
  const double c = std::isinf(model.quality_factor) ? 0.0 : m * omega0 / model.quality_factor;
  const double f = external_force;  // zero-order hold over the step

  const auto accel = [&](double z, double v) { return (f - k * z - c * v) / m; };

  const double k1z = state.v;
  const double k1v = accel(state.z, state.v);
  const double k2z = state.v + 0.5 * dt * k1v;
  const double k2v = accel(state.z + 0.5 * dt * k1z, state.v + 0.5 * dt * k1v);
  const double k3z = state.v + 0.5 * dt * k2v;
  const double k3v = accel(state.z + 0.5 * dt * k2z, state.v + 0.5 * dt * k2v);
  const double k4z = state.v + dt * k3v;
  const double k4v = accel(state.z + dt * k3z, state.v + dt * k3v);

  OscState next;
  next.z = state.z + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
  next.v = state.v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  next.tau = state.tau + dt;
  return next;
}

}  // namespace cantisim
