#pragma once

#include "ontic/field.hpp"

#include <unsupported/Eigen/FFT>

#include <numbers>
#include <vector>

namespace ontic {

/// In-place FFT of every grid line along `axis` (unnormalised forward,
/// 1/n inverse, matching Eigen::FFT).
inline void fft_along(ComplexField& f, std::size_t axis, bool inverse) {
  const Grid& g = f.grid();
  const std::size_t n = g.axis(axis).points;
  const std::size_t s = g.stride(axis);
  Eigen::FFT<double> fft;
  std::vector<Complex> in(n), out(n);
  const std::size_t block = s * n;
  for (std::size_t outer = 0; outer < g.size(); outer += block)
    for (std::size_t inner = 0; inner < s; ++inner) {
      const std::size_t base = outer + inner;
      for (std::size_t i = 0; i < n; ++i) in[i] = f[base + i * s];
      if (inverse)
        fft.inv(out, in);
      else
        fft.fwd(out, in);
      for (std::size_t i = 0; i < n; ++i) f[base + i * s] = out[i];
    }
}

/// Angular wavenumbers in FFT order for an axis of length L with n points.
inline std::vector<double> wavenumbers(const Axis& ax) {
  const std::size_t n = ax.points;
  std::vector<double> k(n);
  const double dk = 2.0 * std::numbers::pi / ax.length();
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<double>(i);
    k[i] = (i <= (n - 1) / 2 ? j : j - static_cast<double>(n)) * dk;
  }
  // the Nyquist mode of an even grid has no definite sign; using 0 keeps
  // real fields real under odd-order operations
  if (n % 2 == 0) k[n / 2] = 0.0;
  return k;
}

/// Multiplies every line along `axis` by fn(k) in Fourier space.
template <typename Fn>
void apply_along(ComplexField& f, std::size_t axis, Fn&& fn) {
  fft_along(f, axis, false);
  const std::vector<double> k = wavenumbers(f.grid().axis(axis));
  const Grid& g = f.grid();
  for (std::size_t idx = 0; idx < g.size(); ++idx) f[idx] *= fn(k[g.index(idx, axis)]);
  fft_along(f, axis, true);
}

/// Translates a periodic field by `shift` along `axis`: f(q - shift).
inline ComplexField translated(ComplexField f, std::size_t axis, double shift) {
  apply_along(f, axis, [shift](double k) { return std::polar(1.0, -k * shift); });
  return f;
}

}  // namespace ontic
