#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/fft.hpp"

namespace reverbdoa {

struct StftConfig {
  int nfft = 256;
  int hop = 128;

  // Frequency bins kept per frame: 0 (DC) through nfft/2 - 1.
  int bins() const { return nfft / 2; }

  void validate() const {
    if (nfft < 2 || !is_power_of_two(static_cast<std::size_t>(nfft))) {
      throw config_error("stft: nfft must be a power of two >= 2");
    }
    if (hop < 1 || hop > nfft) {
      throw config_error("stft: hop must be in [1, nfft]");
    }
  }
};

// Periodic Hamming window, w[n] = 0.54 - 0.46 cos(2 pi n / N).
inline std::vector<double> hamming_periodic(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * M_PI * i / n);
  }
  return w;
}

inline long long stft_frame_count(long long samples, const StftConfig& cfg) {
  if (samples < cfg.nfft) return 0;
  return (samples - cfg.nfft) / cfg.hop + 1;
}

struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<cd> data;  // frame-major

  cd& at(int t, int k) {
    return data[static_cast<std::size_t>(t) * bins + k];
  }
  cd at(int t, int k) const {
    return data[static_cast<std::size_t>(t) * bins + k];
  }
};

// Frame t covers samples [t*hop, t*hop + nfft); only whole frames are taken.
inline Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  cfg.validate();
  const long long nf = stft_frame_count(static_cast<long long>(x.size()), cfg);
  Spectrogram s;
  s.frames = static_cast<int>(nf);
  s.bins = cfg.bins();
  s.data.resize(static_cast<std::size_t>(nf) * s.bins);
  const std::vector<double> win = hamming_periodic(cfg.nfft);
  std::vector<cd> buf(static_cast<std::size_t>(cfg.nfft));
  for (long long t = 0; t < nf; ++t) {
    const double* xp = x.data() + t * cfg.hop;
    for (int i = 0; i < cfg.nfft; ++i) {
      buf[static_cast<std::size_t>(i)] =
          cd(xp[i] * win[static_cast<std::size_t>(i)], 0.0);
    }
    fft_inplace(buf, false);
    for (int k = 0; k < s.bins; ++k) {
      s.data[static_cast<std::size_t>(t) * s.bins + k] =
          buf[static_cast<std::size_t>(k)];
    }
  }
  return s;
}

}  // namespace reverbdoa
