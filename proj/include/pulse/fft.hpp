#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "pulse/error.hpp"

namespace pulse::fft {

using cplx = std::complex<double>;

/// In-place iterative radix-2 FFT. `inverse` applies the 1/N scaling.
inline void transform(std::span<cplx> a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0) return;
  if (!std::has_single_bit(n)) throw Error(ErrorKind::validation, "FFT length must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::size_t half = len / 2;
    // Twiddles computed directly per index; the recurrence w *= wlen drifts.
    std::vector<cplx> tw(half);
    for (std::size_t k = 0; k < half; ++k) tw[k] = std::polar(1.0, ang * static_cast<double>(k));
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + half] * tw[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }

  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= scale;
  }
}

inline std::vector<cplx> forward_real(std::span<const double> x) {
  std::vector<cplx> a(x.begin(), x.end());
  transform(a, false);
  return a;
}

/// Inverse transform, returning the real part.
inline std::vector<double> inverse_real(std::span<const cplx> bins) {
  std::vector<cplx> a(bins.begin(), bins.end());
  transform(a, true);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

}  // namespace pulse::fft
