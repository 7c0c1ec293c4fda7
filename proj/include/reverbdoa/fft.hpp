#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "reverbdoa/errors.hpp"

namespace reverbdoa {

using cd = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative radix-2 Cooley-Tukey transform, in place. Forward uses the
// e^{-j 2 pi k n / N} kernel; inverse conjugates and scales by 1/N.
inline void fft_inplace(std::vector<cd>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) {
    throw dimension_error("fft size must be a power of two, got " +
                          std::to_string(n));
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len);
    if (!inverse) ang = -ang;
    const cd wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        cd u = a[i + k];
        cd v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (cd& x : a) x *= inv;
  }
}

inline std::vector<cd> fft(std::span<const double> x, std::size_t n) {
  std::vector<cd> a(n, cd{});
  const std::size_t m = x.size() < n ? x.size() : n;
  for (std::size_t i = 0; i < m; ++i) a[i] = cd(x[i], 0.0);
  fft_inplace(a, false);
  return a;
}

// Full linear convolution of two real sequences (length na + nb - 1),
// computed by zero-padded FFT.
inline std::vector<double> fft_convolve(std::span<const double> a,
                                        std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw degenerate_input_error("fft_convolve: empty input");
  }
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_power_of_two(out_len);
  std::vector<cd> fa(n, cd{}), fb(n, cd{});
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = cd(a[i], 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = cd(b[i], 0.0);
  fft_inplace(fa, false);
  fft_inplace(fb, false);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  fft_inplace(fa, true);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
  return out;
}

}  // namespace reverbdoa
