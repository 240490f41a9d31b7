#ifndef CANTISIM_TESTS_SPECTRAL_HPP
#define CANTISIM_TESTS_SPECTRAL_HPP

// Test-side spectral estimation: a small radix-2 FFT, Welch PSD averaging,
// band power integration, and a log-log slope fit. Deliberately independent
// of the library's signal path so it can act as an oracle for it.

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace spectral {

inline void fft_inplace(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of 2");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = x[i + k];
        const auto v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

struct Psd {
  std::vector<double> frequency;  // Hz, bins 1..n/2-1 (DC and Nyquist dropped)
  std::vector<double> density;    // one-sided, V^2/Hz
  double bin_width = 0.0;
};

/// Welch estimate with a Hann window and 50% overlap.
inline Psd welch_psd(std::span<const double> x, double sample_rate, std::size_t segment) {
  if (x.size() < segment) throw std::invalid_argument("series shorter than one segment");
  std::vector<double> window(segment);
  double wsq = 0.0;
  for (std::size_t i = 0; i < segment; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                      static_cast<double>(segment)));
    wsq += window[i] * window[i];
  }

  Psd psd;
  psd.bin_width = sample_rate / static_cast<double>(segment);
  const std::size_t n_bins = segment / 2 - 1;
  psd.frequency.resize(n_bins);
  psd.density.assign(n_bins, 0.0);
  for (std::size_t k = 0; k < n_bins; ++k)
    psd.frequency[k] = static_cast<double>(k + 1) * psd.bin_width;

  const std::size_t hop = segment / 2;
  std::size_t count = 0;
  std::vector<std::complex<double>> buf(segment);
  for (std::size_t start = 0; start + segment <= x.size(); start += hop, ++count) {
    for (std::size_t i = 0; i < segment; ++i) buf[i] = x[start + i] * window[i];
    fft_inplace(buf);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double mag2 = std::norm(buf[k + 1]);
      psd.density[k] += 2.0 * mag2 / (sample_rate * wsq);
    }
  }
  if (count == 0) throw std::invalid_argument("no segments");
  for (auto& d : psd.density) d /= static_cast<double>(count);
  return psd;
}

/// PSD value near f, averaged over the closest bins.
inline double psd_at(const Psd& psd, double f, std::size_t half_width = 1) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < psd.frequency.size(); ++k)
    if (std::abs(psd.frequency[k] - f) < std::abs(psd.frequency[best] - f)) best = k;
  const std::size_t lo = best > half_width ? best - half_width : 0;
  const std::size_t hi = std::min(best + half_width + 1, psd.frequency.size());
  double sum = 0.0;
  for (std::size_t k = lo; k < hi; ++k) sum += psd.density[k];
  return sum / static_cast<double>(hi - lo);
}

/// Integrated power over [f1, f2].
inline double band_power(const Psd& psd, double f1, double f2) {
  double total = 0.0;
  for (std::size_t k = 0; k < psd.frequency.size(); ++k)
    if (psd.frequency[k] >= f1 && psd.frequency[k] <= f2) total += psd.density[k] * psd.bin_width;
  return total;
}

/// Least-squares slope of log10(S) vs log10(f) over [f1, f2], decades/decade.
inline double loglog_slope(const Psd& psd, double f1, double f2) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < psd.frequency.size(); ++k) {
    const double f = psd.frequency[k];
    if (f < f1 || f > f2 || psd.density[k] <= 0.0) continue;
    const double lx = std::log10(f), ly = std::log10(psd.density[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 3) throw std::invalid_argument("too few bins for a slope fit");
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace spectral

#endif
