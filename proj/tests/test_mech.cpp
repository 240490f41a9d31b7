#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "cantisim/mech.hpp"

using namespace cantisim;

namespace {

constexpr double kPi = 3.14159265358979323846;

Geometry ref_geometry() { return {500e-6, 100e-6, 5e-6}; }
Material ref_material() { return {169e9, 2330.0, 0.25}; }

CantileverDevice ref_device(double q = 1000.0) {
  return {ref_geometry(), ref_material(), q};
}

/// Closed-form underdamped free response, the oracle for the integrator:
/// z(t) = e^(-g t) (z0 cos(wd t) + (v0 + g z0)/wd sin(wd t)).
struct FreeDecayOracle {
  double omega0, gamma, omega_d, z0, v0;

  FreeDecayOracle(const ModalModel& m, double z_init, double v_init)
      : omega0(2.0 * kPi * m.natural_frequency),
        gamma(std::isinf(m.quality_factor) ? 0.0 : omega0 / (2.0 * m.quality_factor)),
        omega_d(omega0 *
                std::sqrt(1.0 - (std::isinf(m.quality_factor)
                                     ? 0.0
                                     : 1.0 / (4.0 * m.quality_factor * m.quality_factor)))),
        z0(z_init),
        v0(v_init) {}

  double z(double t) const {
    return std::exp(-gamma * t) *
           (z0 * std::cos(omega_d * t) + (v0 + gamma * z0) / omega_d * std::sin(omega_d * t));
  }
};

}  // namespace

TEST_CASE("spring constant matches the closed-form beam formula") {
  const Geometry g = ref_geometry();
  const Material m = ref_material();
  // Independent evaluation: E w t^3 / (4 L^3) with the raw numbers.
  const double oracle = 169e9 * 100e-6 * (5e-6 * 5e-6 * 5e-6) / (4.0 * 500e-6 * 500e-6 * 500e-6);
  CHECK(spring_constant(g, m) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(spring_constant(g, m) == doctest::Approx(4.225).epsilon(1e-12));
}

TEST_CASE("spring constant scaling laws") {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> uf(0.5, 2.0);
  for (int i = 0; i < 50; ++i) {
    Geometry g{400e-6 * uf(rng), 80e-6 * uf(rng), 3e-6 * uf(rng)};
    Material m{100e9 * uf(rng), 2000.0 * uf(rng), 0.2};
    const double k = spring_constant(g, m);

    Geometry thick = g;
    thick.thickness *= 2.0;
    if (thick.thickness / thick.length <= 0.1)
      CHECK(spring_constant(thick, m) == doctest::Approx(8.0 * k).epsilon(1e-12));

    Geometry longer = g;
    longer.length *= 2.0;
    CHECK(spring_constant(longer, m) == doctest::Approx(k / 8.0).epsilon(1e-12));
  }
}

TEST_CASE("effective mass: reference value, ratio, zero-volume limit") {
  const double oracle = 0.2427 * 2330.0 * 500e-6 * 100e-6 * 5e-6;
  CHECK(effective_mass(ref_geometry(), ref_material()) ==
        doctest::Approx(oracle).epsilon(1e-14));
  CHECK(effective_mass(ref_geometry(), ref_material()) ==
        doctest::Approx(1.4137275e-10).epsilon(1e-9));

  // m_eff / (rho L w t) is the fixed modal fraction for any geometry.
  Geometry g{300e-6, 50e-6, 2e-6};
  Material m{150e9, 2500.0, 0.2};
  const double total = m.density * g.length * g.width * g.thickness;
  CHECK(effective_mass(g, m) / total == doctest::Approx(0.2427).epsilon(1e-14));

  Geometry thin = ref_geometry();
  thin.thickness = 1e-12;
  CHECK(effective_mass(thin, ref_material()) < 1e-16);
}

TEST_CASE("modal model ties f0 to k and m_eff") {
  const ModalModel modal = ModalModel::from_device(ref_device());
  CHECK(modal.natural_frequency ==
        doctest::Approx(std::sqrt(modal.spring_constant / modal.effective_mass) / (2.0 * kPi))
            .epsilon(1e-13));
  CHECK(modal.natural_frequency == doctest::Approx(27513.8).epsilon(1e-4));
  modal.validate();

  ModalModel broken = modal;
  broken.natural_frequency *= 1.001;
  CHECK_THROWS_AS(broken.validate(), ValidationError);
}

TEST_CASE("mass-loaded frequency: identity, quarter-mass symmetry, first order") {
  const ModalModel modal = ModalModel::from_device(ref_device());
  CHECK(mass_loaded_frequency(modal, 0.0) == modal.natural_frequency);
  CHECK(mass_loaded_frequency(modal, 3.0 * modal.effective_mass) ==
        doctest::Approx(modal.natural_frequency / 2.0).epsilon(1e-13));

  const double dm = 1e-13;
  const double exact = mass_loaded_frequency(modal, dm) - modal.natural_frequency;
  const double first_order = -modal.natural_frequency * dm / (2.0 * modal.effective_mass);
  CHECK(exact == doctest::Approx(-9.7258).epsilon(1e-3));
  CHECK(std::abs(exact - first_order) / std::abs(exact) < 1e-3);

  CHECK_THROWS_AS(mass_loaded_frequency(modal, -modal.effective_mass), ValidationError);
}

TEST_CASE("mass-loaded frequency is strictly decreasing in added mass") {
  const ModalModel modal = ModalModel::from_device(ref_device());
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> um(1e-16, 1e-11);
  for (int i = 0; i < 100; ++i) {
    const double a = um(rng), b = um(rng);
    if (a == b) continue;
    const double fa = mass_loaded_frequency(modal, a);
    const double fb = mass_loaded_frequency(modal, b);
    CHECK(((a < b) == (fa > fb)));
  }
  // First-order agreement for small loads.
  for (double ratio : {1e-5, 1e-4, 1e-3}) {
    const double dm = ratio * modal.effective_mass;
    const double df = mass_loaded_frequency(modal, dm) - modal.natural_frequency;
    const double fo = -modal.natural_frequency * dm / (2.0 * modal.effective_mass);
    CHECK(std::abs(df - fo) / std::abs(df) < 1e-3);
  }
}

TEST_CASE("stoney deflection: zero, reference, linearity") {
  const Geometry g = ref_geometry();
  const Material m = ref_material();
  CHECK(stoney_tip_deflection(g, m, 0.0) == 0.0);

  const double oracle = 3.0 * 5e-3 * 0.75 * 500e-6 * 500e-6 / (169e9 * 5e-6 * 5e-6);
  CHECK(stoney_tip_deflection(g, m, 5e-3) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(stoney_tip_deflection(g, m, 5e-3) == doctest::Approx(0.666e-9).epsilon(2e-3));

  std::mt19937 rng(23);
  std::uniform_real_distribution<double> us(-0.05, 0.05);
  for (int i = 0; i < 50; ++i) {
    const double s = us(rng);
    CHECK(stoney_tip_deflection(g, m, 2.0 * s) ==
          doctest::Approx(2.0 * stoney_tip_deflection(g, m, s)).epsilon(1e-13));
  }
}

TEST_CASE("clamp strain: static and dynamic reference values") {
  const Geometry g = ref_geometry();
  const Material m = ref_material();
  CHECK(clamp_strain_static(g, m, 0.0) == 0.0);
  CHECK(clamp_strain_static(g, m, 5e-3) ==
        doctest::Approx(3.0 * 5e-3 * 0.75 / (169e9 * 5e-6)).epsilon(1e-14));
  CHECK(clamp_strain_static(g, m, 5e-3) == doctest::Approx(1.331e-8).epsilon(1e-3));

  CHECK(clamp_strain_dynamic(g, 0.0) == 0.0);
  CHECK(clamp_strain_dynamic(g, 10e-9) == doctest::Approx(3.0e-7).epsilon(1e-12));
}

TEST_CASE("stoney / static-strain round trip recovers the surface stress") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uf(0.5, 2.0);
  std::uniform_real_distribution<double> us(-0.1, 0.1);
  for (int i = 0; i < 100; ++i) {
    Geometry g{400e-6 * uf(rng), 90e-6 * uf(rng), 4e-6 * uf(rng)};
    Material m{120e9 * uf(rng), 2330.0, 0.45 * uf(rng) / 2.0};
    const double dsigma = us(rng);
    const double eps = clamp_strain_static(g, m, dsigma);
    const double recovered =
        eps * m.youngs_modulus * g.thickness / (3.0 * (1.0 - m.poisson_ratio));
    CHECK(recovered == doctest::Approx(dsigma).epsilon(1e-12));
  }
}

TEST_CASE("oscillator step: equilibrium is a fixed point") {
  const ModalModel modal = ModalModel::from_device(ref_device());
  OscState s;
  const double dt = 1.0 / (100.0 * modal.natural_frequency);
  for (int i = 0; i < 1000; ++i) s = oscillator_step(s, modal, 0.0, dt);
  CHECK(s.z == 0.0);
  CHECK(s.v == 0.0);
}

TEST_CASE("oscillator step rejects out-of-range dt") {
  const ModalModel modal = ModalModel::from_device(ref_device());
  OscState s;
  CHECK_THROWS_AS(oscillator_step(s, modal, 0.0, 1.0 / (40.0 * modal.natural_frequency)),
                  ValidationError);
  CHECK_THROWS_AS(oscillator_step(s, modal, 0.0, 0.0), ValidationError);
  CHECK_NOTHROW(oscillator_step(s, modal, 0.0, 1.0 / (50.0 * modal.natural_frequency)));
}

// Energy drift of the undamped integrator. Theory for classical RK4 on a
// linear oscillator: relative energy loss per step is (w0 dt)^6 / 72, i.e.
// 2.67e-6 over 1000 cycles at 200 steps per cycle. The test pins that value
// and the per-step dt^6 scaling (halving dt cuts the total drift 32x).
TEST_CASE("undamped energy drift matches the RK4 dissipation law") {
  CantileverDevice dev = ref_device();
  dev.quality_factor = std::numeric_limits<double>::infinity();
  const ModalModel modal = ModalModel::from_device(dev);
  const double k = modal.spring_constant;
  const double m = modal.effective_mass;

  const auto energy = [&](const OscState& s) {
    return 0.5 * k * s.z * s.z + 0.5 * m * s.v * s.v;
  };

  const auto drift_after = [&](double steps_per_cycle, double cycles) {
    OscState s;
    s.z = 1e-9;
    const double dt = 1.0 / (steps_per_cycle * modal.natural_frequency);
    const double e0 = energy(s);
    const auto n = static_cast<long>(steps_per_cycle * cycles);
    for (long i = 0; i < n; ++i) s = oscillator_step(s, modal, 0.0, dt);
    return std::abs(energy(s) - e0) / e0;
  };

  const double h6 = std::pow(2.0 * kPi / 200.0, 6.0);
  const double predicted = 200.0 * 1000.0 * h6 / 72.0;
  const double drift200 = drift_after(200.0, 1000.0);
  CHECK(drift200 < 3e-6);
  CHECK(drift200 == doctest::Approx(predicted).epsilon(0.05));

  const double drift400 = drift_after(400.0, 1000.0);
  CHECK(drift200 / drift400 == doctest::Approx(32.0).epsilon(0.15));
}

TEST_CASE("damped ring-down decays at omega0/(2Q)") {
  CantileverDevice dev = ref_device(100.0);
  const ModalModel modal = ModalModel::from_device(dev);
  const double f0 = modal.natural_frequency;
  const double dt = 1.0 / (200.0 * f0);

  OscState s;
  s.z = 1e-9;
  std::vector<double> z;
  const int cycles = 60;
  const auto n = static_cast<long>(200.0 * cycles);
  for (long i = 0; i < n; ++i) {
    z.push_back(s.z);
    s = oscillator_step(s, modal, 0.0, dt);
  }

  // Log-linear fit of per-cycle peak amplitudes against time.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int c = 0; c < cycles; ++c) {
    double peak = 0.0;
    for (long i = c * 200; i < (c + 1) * 200; ++i)
      peak = std::max(peak, std::abs(z[static_cast<std::size_t>(i)]));
    const double t = (static_cast<double>(c) + 0.5) / f0;
    sx += t;
    sy += std::log(peak);
    sxx += t * t;
    sxy += t * std::log(peak);
    ++count;
  }
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  const double expected = -2.0 * kPi * f0 / (2.0 * modal.quality_factor);
  CHECK(std::abs(slope - expected) / std::abs(expected) < 0.02);
}

TEST_CASE("oscillator step converges at fourth order") {
  const ModalModel modal = ModalModel::from_device(ref_device(100.0));
  const double f0 = modal.natural_frequency;
  const FreeDecayOracle oracle(modal, 1e-9, 0.0);

  const auto one_period_error = [&](double steps_per_cycle) {
    OscState s;
    s.z = 1e-9;
    const double dt = 1.0 / (steps_per_cycle * f0);
    double worst = 0.0;
    const auto n = static_cast<long>(steps_per_cycle);
    for (long i = 0; i < n; ++i) {
      s = oscillator_step(s, modal, 0.0, dt);
      worst = std::max(worst, std::abs(s.z - oracle.z(s.tau)));
    }
    return worst;
  };

  const double coarse = one_period_error(50.0);
  const double fine = one_period_error(100.0);
  const double ratio = coarse / fine;
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("driven sweep peaks at the modal frequency (Q = 50)") {
  const ModalModel modal = ModalModel::from_device(ref_device(50.0));
  const double f0 = modal.natural_frequency;
  const double fs = 100.0 * f0;
  const double dt = 1.0 / fs;
  const double force = 1e-12;

  double best_f = 0.0, best_amp = 0.0;
  for (int k = -8; k <= 8; ++k) {
    const double f_drive = f0 * (1.0 + 0.0025 * k);
    OscState s;
    const int settle_cycles = 200;
    const int measure_cycles = 40;
    const auto n_settle = static_cast<long>(settle_cycles * fs / f0);
    const auto n_measure = static_cast<long>(measure_cycles * fs / f0);
    for (long i = 0; i < n_settle; ++i)
      s = oscillator_step(s, modal, force * std::sin(2.0 * kPi * f_drive * s.tau), dt);
    double peak = 0.0;
    for (long i = 0; i < n_measure; ++i) {
      s = oscillator_step(s, modal, force * std::sin(2.0 * kPi * f_drive * s.tau), dt);
      peak = std::max(peak, std::abs(s.z));
    }
    if (peak > best_amp) {
      best_amp = peak;
      best_f = f_drive;
    }
  }
  CHECK(std::abs(best_f - f0) / f0 < 0.005);
}

TEST_CASE("type invariants are enforced") {
  Material bad_modulus{-1.0, 2330.0, 0.25};
  CHECK_THROWS_AS(bad_modulus.validate(), ValidationError);
  Material bad_poisson{169e9, 2330.0, 0.5};
  CHECK_THROWS_AS(bad_poisson.validate(), ValidationError);
  Geometry too_thick{500e-6, 100e-6, 60e-6};  // t/L > 0.1
  CHECK_THROWS_AS(too_thick.validate(), ValidationError);
  Geometry no_length{0.0, 100e-6, 5e-6};
  CHECK_THROWS_AS(no_length.validate(), ValidationError);
  CantileverDevice no_damping = ref_device(0.0);
  CHECK_THROWS_AS(no_damping.validate(), ValidationError);
  CHECK_NOTHROW(ref_device().validate());
}
