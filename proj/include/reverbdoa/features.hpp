#pragma once

#include <complex>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/room.hpp"
#include "reverbdoa/stft.hpp"
#include "reverbdoa/tensor.hpp"

namespace reverbdoa {

// Relative transfer function between the two channels, one estimate per STFT
// frame: H(k) = D2(k) conj(D1(k)) / |D1(k)|^2, so that channel 1 is the
// reference and a source arriving at channel 2 delayed by n samples shows
// phase -2 pi k n / nfft. Bins where the reference power falls below the
// guard are marked invalid and carry zero phase.
struct RtfFrames {
  int frames = 0;
  int bins = 0;
  std::vector<cd> h;
  std::vector<std::uint8_t> valid;

  cd at(int t, int k) const {
    return h[static_cast<std::size_t>(t) * bins + k];
  }
  bool valid_at(int t, int k) const {
    return valid[static_cast<std::size_t>(t) * bins + k] != 0;
  }
};

inline RtfFrames estimate_rtf(const Spectrogram& d1, const Spectrogram& d2,
                              double guard = 1e-30) {
  if (d1.frames != d2.frames || d1.bins != d2.bins) {
    throw dimension_error("estimate_rtf: channel spectrogram shapes differ");
  }
  RtfFrames r;
  r.frames = d1.frames;
  r.bins = d1.bins;
  r.h.assign(d1.data.size(), cd{});
  r.valid.assign(d1.data.size(), 0);
  for (std::size_t i = 0; i < d1.data.size(); ++i) {
    const double denom = std::norm(d1.data[i]);
    if (denom <= guard) continue;
    r.h[i] = d2.data[i] * std::conj(d1.data[i]) / denom;
    r.valid[i] = 1;
  }
  return r;
}

// One classifier input: a P x K grid of wrapped RTF phases stored as a
// tensor of shape [1, P, K]. label is the grid index of the active source,
// or -1 when the window mixes frames from different sources.
struct InputSample {
  Tensor x;
  int label = -1;
  bool normalized = false;
};

// Frames for a whole recording stream. Each recording span is framed on its
// own, so no frame mixes two sources and every frame carries its recording's
// direction; the per-recording frame sequences are then concatenated in
// stream order. Windows of consecutive frames may still span a source
// change, which is what leaves some windows unlabeled.
struct FramedStream {
  Spectrogram d1;
  Spectrogram d2;
  std::vector<int> labels;  // one per frame, -1 = no single source
};

inline FramedStream frame_recordings(const MicSignals& sig,
                                     const StftConfig& cfg) {
  cfg.validate();
  if (sig.d1.size() != sig.d2.size()) {
    throw dimension_error("frame_recordings: channel lengths differ");
  }
  std::vector<LabelSpan> spans = sig.spans;
  if (spans.empty()) {
    spans.push_back({0, static_cast<long long>(sig.d1.size()), -1});
  }
  FramedStream out;
  out.d1.bins = cfg.bins();
  out.d2.bins = cfg.bins();
  const long long n = static_cast<long long>(sig.d1.size());
  for (const LabelSpan& span : spans) {
    if (span.begin < 0 || span.end > n || span.begin >= span.end) {
      throw contract_error("frame_recordings: span outside the stream");
    }
    const auto b = static_cast<std::size_t>(span.begin);
    const auto e = static_cast<std::size_t>(span.end);
    const std::vector<double> seg1(sig.d1.begin() + b, sig.d1.begin() + e);
    const std::vector<double> seg2(sig.d2.begin() + b, sig.d2.begin() + e);
    const Spectrogram s1 = stft(seg1, cfg);
    const Spectrogram s2 = stft(seg2, cfg);
    out.d1.data.insert(out.d1.data.end(), s1.data.begin(), s1.data.end());
    out.d2.data.insert(out.d2.data.end(), s2.data.begin(), s2.data.end());
    out.labels.insert(out.labels.end(), static_cast<std::size_t>(s1.frames),
                      span.doa_index);
    out.d1.frames += s1.frames;
    out.d2.frames += s2.frames;
  }
  return out;
}

// Window w covers frames [w * stride, w * stride + P); a window keeps a
// label only when all of its frames agree on one source.
inline std::vector<int> window_labels(const std::vector<int>& frame_lbls,
                                      int P, int stride) {
  if (P < 1 || stride < 1) {
    throw config_error("window_labels: need P >= 1 and stride >= 1");
  }
  std::vector<int> out;
  const long long frames = static_cast<long long>(frame_lbls.size());
  if (frames < P) return out;
  const long long windows = (frames - P) / stride + 1;
  out.reserve(static_cast<std::size_t>(windows));
  for (long long w = 0; w < windows; ++w) {
    const long long f0 = w * stride;
    int label = frame_lbls[static_cast<std::size_t>(f0)];
    for (int p = 1; p < P; ++p) {
      if (frame_lbls[static_cast<std::size_t>(f0 + p)] != label) {
        label = -1;
        break;
      }
    }
    out.push_back(label);
  }
  return out;
}

// Tiles consecutive frames into windows of P frames advanced by stride.
inline std::vector<InputSample> build_input_samples(
    const RtfFrames& rtf, const std::vector<int>& labels, int P, int stride) {
  if (static_cast<long long>(labels.size()) != rtf.frames) {
    throw dimension_error("build_input_samples: label count mismatch");
  }
  const std::vector<int> wlabels = window_labels(labels, P, stride);
  std::vector<InputSample> out;
  out.reserve(wlabels.size());
  for (std::size_t w = 0; w < wlabels.size(); ++w) {
    const int f0 = static_cast<int>(w) * stride;
    InputSample s;
    s.x = Tensor({1, P, rtf.bins});
    for (int p = 0; p < P; ++p) {
      for (int k = 0; k < rtf.bins; ++k) {
        const cd v = rtf.at(f0 + p, k);
        s.x.at(0, p, k) = std::atan2(v.imag(), v.real());
      }
    }
    s.label = wlabels[w];
    out.push_back(std::move(s));
  }
  return out;
}

struct NormStats {
  double lo = 0.0;
  double hi = 1.0;
  bool degenerate = false;
};

inline NormStats compute_normalization(const std::vector<InputSample>& set) {
  if (set.empty()) {
    throw degenerate_input_error("compute_normalization: empty sample set");
  }
  NormStats st;
  st.lo = set[0].x[0];
  st.hi = set[0].x[0];
  for (const InputSample& s : set) {
    for (double v : s.x.values) {
      st.lo = std::min(st.lo, v);
      st.hi = std::max(st.hi, v);
    }
  }
  st.degenerate = !(st.hi > st.lo);
  return st;
}

// Maps values through (x - lo) / (hi - lo). Samples already marked normalized
// are left alone, so applying stored stats repeatedly changes nothing after
// the first application. Degenerate stats (max == min) zero everything out;
// the flag on NormStats is the caller's warning signal.
inline void apply_normalization(std::vector<InputSample>& set,
                                const NormStats& st) {
  for (InputSample& s : set) {
    if (s.normalized) continue;
    if (st.degenerate) {
      s.x.fill(0.0);
    } else {
      const double scale = 1.0 / (st.hi - st.lo);
      for (double& v : s.x.values) v = (v - st.lo) * scale;
    }
    s.normalized = true;
  }
}

// Everything downstream consumers need: normalized windows plus the grid and
// bookkeeping to interpret labels and reproduce the windowing.
struct FeatureSet {
  int P = 32;
  int K = 128;
  int stride = 32;
  DoaGrid grid;
  NormStats norm;
  long long total_frames = 0;
  std::vector<InputSample> samples;

  int labeled_count() const {
    int n = 0;
    for (const auto& s : samples) {
      if (s.label >= 0) ++n;
    }
    return n;
  }
};

struct FeatureConfig {
  StftConfig stft;
  int P = 32;
  int stride = 32;
};

// Full pipeline from a recording stream: per-recording STFTs, RTF phases
// tiled into windows, then normalization stats computed over this set and
// applied. Pass stats from a training run to reuse its scaling instead.
inline FeatureSet extract_features(const MicSignals& sig, const DoaGrid& grid,
                                   const FeatureConfig& cfg,
                                   const NormStats* reuse_stats = nullptr) {
  const FramedStream framed = frame_recordings(sig, cfg.stft);
  const RtfFrames rtf = estimate_rtf(framed.d1, framed.d2);
  const std::vector<int>& labels = framed.labels;
  FeatureSet fs;
  fs.P = cfg.P;
  fs.K = rtf.bins;
  fs.stride = cfg.stride;
  fs.grid = grid;
  fs.total_frames = rtf.frames;
  fs.samples = build_input_samples(rtf, labels, cfg.P, cfg.stride);
  if (fs.samples.empty()) {
    throw insufficient_length_error("extract_features: stream shorter than one window");
  }
  fs.norm = reuse_stats ? *reuse_stats : compute_normalization(fs.samples);
  apply_normalization(fs.samples, fs.norm);
  return fs;
}

}  // namespace reverbdoa
