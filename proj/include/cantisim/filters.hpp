#ifndef CANTISIM_FILTERS_HPP
#define CANTISIM_FILTERS_HPP

#include <cmath>
#include <string>

#include "cantisim/errors.hpp"

namespace cantisim {

/// First-order discrete-time section obtained from the bilinear transform
/// with frequency prewarping, so the analog corner maps exactly onto the
/// digital axis. DC gain is exactly 1 (low-pass), 0 (high-pass) or the shelf
/// floor (low-shelf).
class OnePole {
 public:
  static OnePole low_pass(double cutoff_hz, double sample_rate_hz) {
    const double k = warp(cutoff_hz, sample_rate_hz);
    return OnePole(k / (1.0 + k), k / (1.0 + k), (k - 1.0) / (1.0 + k));
  }

  static OnePole high_pass(double cutoff_hz, double sample_rate_hz) {
    const double k = warp(cutoff_hz, sample_rate_hz);
    return OnePole(1.0 / (1.0 + k), -1.0 / (1.0 + k), (k - 1.0) / (1.0 + k));
  }

  /// Gain dc_gain below the corner, unity above it.
  static OnePole low_shelf(double corner_hz, double sample_rate_hz, double dc_gain) {
    const double k = warp(corner_hz, sample_rate_hz);
    return OnePole((dc_gain * k + 1.0) / (1.0 + k), (dc_gain * k - 1.0) / (1.0 + k),
                   (k - 1.0) / (1.0 + k));
  }

  /// Unity-magnitude all-pass with exactly +90 degrees of phase at center_hz.
  static OnePole quadrature_all_pass(double center_hz, double sample_rate_hz) {
    const double k = warp(center_hz, sample_rate_hz);
    const double c = (1.0 - k) / (1.0 + k);
    return OnePole(c, -1.0, -c);
  }

  double step(double x) {
    const double y = b0_ * x + b1_ * x1_ - a1_ * y1_;
    x1_ = x;
    y1_ = y;
    return y;
  }

  void reset() {
    x1_ = 0.0;
    y1_ = 0.0;
  }

  /// |H(f)| of the discrete section, for gain calculations.
  double magnitude(double f_hz, double sample_rate_hz) const {
    const double w = 2.0 * M_PI * f_hz / sample_rate_hz;
    const double cr = std::cos(w), ci = -std::sin(w);  // e^{-jw}
    const double nr = b0_ + b1_ * cr, ni = b1_ * ci;
    const double dr = 1.0 + a1_ * cr, di = a1_ * ci;
    return std::sqrt((nr * nr + ni * ni) / (dr * dr + di * di));
  }

 private:
  OnePole(double b0, double b1, double a1) : b0_(b0), b1_(b1), a1_(a1) {}

  static double warp(double cutoff_hz, double sample_rate_hz) {
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < 0.5 * sample_rate_hz))
      throw ValidationError("filter cutoff = " + std::to_string(cutoff_hz) +
                            " Hz: must satisfy 0 < cutoff < sample_rate/2");
    return std::tan(M_PI * cutoff_hz / sample_rate_hz);
  }

  double b0_, b1_, a1_;
  double x1_ = 0.0, y1_ = 0.0;
};

}  // namespace cantisim

#endif
