#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/room.hpp"
#include "reverbdoa/stft.hpp"

namespace reverbdoa {

// Inter-microphone delay for each candidate direction, in seconds. Positive
// angles lie toward microphone 2, which then receives the wavefront first:
// tau = spacing * sin(theta) / c is how much channel 2 leads channel 1.
struct SteeringTable {
  DoaGrid grid;
  std::vector<double> tau;
};

inline SteeringTable steering_delays(double spacing, double c,
                                     const DoaGrid& grid) {
  if (!(spacing > 0.0) || !(c > 0.0)) {
    throw config_error("steering_delays: need spacing, c > 0");
  }
  SteeringTable t;
  t.grid = grid;
  t.tau.resize(static_cast<std::size_t>(grid.size()));
  for (int i = 0; i < grid.size(); ++i) {
    t.tau[static_cast<std::size_t>(i)] =
        spacing * std::sin(grid.angle_deg(i) * M_PI / 180.0) / c;
  }
  return t;
}

// Steered response power with phase-transform weighting, evaluated on the
// candidate grid. The cross spectrum D2 conj(D1) carries phase +2 pi f tau
// for a source at delay tau, so steering multiplies by e^{-j 2 pi f tau}.
// DC is excluded and bins with cross power below the guard are skipped.
class SrpPhatEngine {
 public:
  SrpPhatEngine(const SteeringTable& table, double fs, int nfft,
                double guard = 1e-30)
      : table_(table), guard_(guard) {
    if (!(fs > 0.0) || nfft < 2) {
      throw config_error("srp: need fs > 0 and nfft >= 2");
    }
    bins_ = nfft / 2;
    const int T = table_.grid.size();
    phasor_.resize(static_cast<std::size_t>(T) * bins_);
    for (int i = 0; i < T; ++i) {
      for (int k = 0; k < bins_; ++k) {
        const double fk = fs * k / nfft;
        const double ang = -2.0 * M_PI * fk * table_.tau[static_cast<std::size_t>(i)];
        phasor_[static_cast<std::size_t>(i) * bins_ + k] =
            cd(std::cos(ang), std::sin(ang));
      }
    }
  }

  const SteeringTable& table() const { return table_; }

  // Response power per candidate angle, accumulated over frames
  // [frame_begin, frame_begin + frame_count) of the two channel STFTs.
  std::vector<double> spectrum(const Spectrogram& d1, const Spectrogram& d2,
                               int frame_begin, int frame_count) const {
    if (d1.frames != d2.frames || d1.bins != d2.bins) {
      throw dimension_error("srp: channel spectrogram shapes differ");
    }
    if (d1.bins != bins_) {
      throw dimension_error("srp: spectrogram bins do not match engine");
    }
    if (frame_begin < 0 || frame_count < 1 ||
        frame_begin + frame_count > d1.frames) {
      throw dimension_error("srp: frame range outside spectrogram");
    }
    const int T = table_.grid.size();
    std::vector<double> p(static_cast<std::size_t>(T), 0.0);
    std::vector<cd> acc(static_cast<std::size_t>(bins_), cd{});
    for (int t = frame_begin; t < frame_begin + frame_count; ++t) {
      for (int k = 1; k < bins_; ++k) {
        const cd cross = d2.at(t, k) * std::conj(d1.at(t, k));
        const double mag = std::abs(cross);
        if (mag <= guard_) continue;
        acc[static_cast<std::size_t>(k)] += cross / mag;
      }
    }
    for (int i = 0; i < T; ++i) {
      const cd* ph = &phasor_[static_cast<std::size_t>(i) * bins_];
      double s = 0.0;
      for (int k = 1; k < bins_; ++k) {
        const cd a = acc[static_cast<std::size_t>(k)];
        s += a.real() * ph[k].real() - a.imag() * ph[k].imag();
      }
      p[static_cast<std::size_t>(i)] = s;
    }
    return p;
  }

  // Argmax over the spectrum; exact ties go to the smaller absolute angle,
  // then to the earlier grid index.
  int estimate_index(const std::vector<double>& power) const {
    if (power.size() != static_cast<std::size_t>(table_.grid.size())) {
      throw dimension_error("srp: power vector size mismatch");
    }
    int best = 0;
    for (int i = 1; i < table_.grid.size(); ++i) {
      const double pi_ = power[static_cast<std::size_t>(i)];
      const double pb = power[static_cast<std::size_t>(best)];
      if (pi_ > pb) {
        best = i;
      } else if (pi_ == pb) {
        const double ai = std::abs(table_.grid.angle_deg(i));
        const double ab = std::abs(table_.grid.angle_deg(best));
        if (ai < ab) best = i;
      }
    }
    return best;
  }

  int estimate_index(const Spectrogram& d1, const Spectrogram& d2,
                     int frame_begin, int frame_count) const {
    return estimate_index(spectrum(d1, d2, frame_begin, frame_count));
  }

 private:
  SteeringTable table_;
  double guard_;
  int bins_ = 0;
  std::vector<cd> phasor_;
};

// One estimate per feature window: window w covers frames
// [w * stride, w * stride + P), matching the classifier input tiling.
inline std::vector<int> srp_estimate_windows(const Spectrogram& d1,
                                             const Spectrogram& d2,
                                             const SrpPhatEngine& engine,
                                             int P, int stride) {
  if (P < 1 || stride < 1) {
    throw config_error("srp_estimate_windows: need P >= 1 and stride >= 1");
  }
  std::vector<int> out;
  if (d1.frames < P) return out;
  const int windows = (d1.frames - P) / stride + 1;
  out.reserve(static_cast<std::size_t>(windows));
  for (int w = 0; w < windows; ++w) {
    out.push_back(engine.estimate_index(d1, d2, w * stride, P));
  }
  return out;
}

}  // namespace reverbdoa
