#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/fft.hpp"
#include "reverbdoa/rng.hpp"

namespace reverbdoa {

using Vec3 = std::array<double, 3>;

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Uniform grid of candidate directions of arrival, in degrees from broadside.
struct DoaGrid {
  double lo_deg = -90.0;
  double step_deg = 5.0;
  int count = 37;

  static DoaGrid uniform(double lo, double hi, double step) {
    if (step <= 0.0 || hi <= lo) {
      throw config_error("doa grid: need hi > lo and step > 0");
    }
    DoaGrid g;
    g.lo_deg = lo;
    g.step_deg = step;
    g.count = static_cast<int>(std::llround((hi - lo) / step)) + 1;
    return g;
  }

  int size() const { return count; }
  double angle_deg(int i) const { return lo_deg + step_deg * i; }

  int index_of(double angle) const {
    const double raw = (angle - lo_deg) / step_deg;
    const int i = static_cast<int>(std::llround(raw));
    if (i < 0 || i >= count || std::abs(angle - angle_deg(i)) > 1e-9) {
      throw domain_error("doa grid: angle " + std::to_string(angle) +
                         " is not a grid point");
    }
    return i;
  }

  int nearest_index(double angle) const {
    const double raw = (angle - lo_deg) / step_deg;
    int i = static_cast<int>(std::llround(raw));
    if (i < 0) i = 0;
    if (i >= count) i = count - 1;
    return i;
  }

  std::vector<double> angles() const {
    std::vector<double> a(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) a[static_cast<std::size_t>(i)] = angle_deg(i);
    return a;
  }

  bool operator==(const DoaGrid&) const = default;
};

// Shoebox room with a two-microphone array. rt60 == 0 means anechoic.
// array_spacing is the nominal inter-mic distance assumed by estimators;
// mic positions may be perturbed away from it to model placement error.
struct RoomConfig {
  std::string name;
  Vec3 dims{6.0, 6.0, 2.4};
  double rt60 = 0.5;
  double c = 343.0;
  double fs = 16000.0;
  Vec3 mic1{2.96, 3.0, 1.2};
  Vec3 mic2{3.04, 3.0, 1.2};
  double array_spacing = 0.08;
  double source_range = 1.5;
  DoaGrid grid;
  double snr_db = 20.0;
  int realizations = 10;
  double seconds = 1.0;

  Vec3 room_center() const {
    return {dims[0] / 2.0, dims[1] / 2.0, dims[2] / 2.0};
  }

  bool anechoic() const { return rt60 == 0.0; }

  long long samples_per_recording() const {
    return static_cast<long long>(std::llround(fs * seconds));
  }

  int recordings() const { return realizations * grid.size(); }

  void validate() const;

  static RoomConfig preset(const std::string& name);
  static std::vector<std::string> preset_names() {
    return {"design",  "validation",      "test1",
            "test2",   "desk",            "desk-validation",
            "desk-anechoic"};
  }
};

// Source positions sit on a horizontal arc of fixed range about the room
// center; zero degrees is broadside (+y), positive angles lean toward mic2.
inline Vec3 source_position(const RoomConfig& room, int doa_index) {
  const double th = room.grid.angle_deg(doa_index) * M_PI / 180.0;
  const Vec3 c = room.room_center();
  return {c[0] + room.source_range * std::sin(th),
          c[1] + room.source_range * std::cos(th), c[2]};
}

inline bool inside_room(const RoomConfig& room, const Vec3& p) {
  for (int i = 0; i < 3; ++i) {
    if (!(p[i] > 0.0 && p[i] < room.dims[i])) return false;
  }
  return true;
}

inline void RoomConfig::validate() const {
  for (double d : dims) {
    if (!(d > 0.0)) throw geometry_error("room: non-positive dimension");
  }
  if (rt60 < 0.0) throw config_error("room: negative rt60");
  if (!(c > 0.0) || !(fs > 0.0)) throw config_error("room: need c, fs > 0");
  if (realizations < 1) throw config_error("room: realizations < 1");
  if (!(seconds > 0.0)) throw config_error("room: non-positive duration");
  if (grid.size() < 2) throw config_error("room: degenerate doa grid");
  if (!inside_room(*this, mic1) || !inside_room(*this, mic2)) {
    throw geometry_error("room: microphone outside room");
  }
  if (distance(mic1, mic2) <= 0.0) {
    throw geometry_error("room: coincident microphones");
  }
  for (int i = 0; i < grid.size(); ++i) {
    if (!inside_room(*this, source_position(*this, i))) {
      throw geometry_error("room: source at " +
                           std::to_string(grid.angle_deg(i)) +
                           " deg falls outside room");
    }
  }
}

inline RoomConfig RoomConfig::preset(const std::string& name) {
  RoomConfig r;
  r.name = name;
  r.grid = DoaGrid::uniform(-90.0, 90.0, 5.0);
  if (name == "design") {
    return r;
  }
  if (name == "validation") {
    r.rt60 = 0.7;
    return r;
  }
  if (name == "test1" || name == "test2") {
    // Same room as design with the microphones displaced along y by +5 mm
    // and -3 mm; estimators keep assuming the nominal array.
    r.mic1 = {2.96, 3.005, 1.2};
    r.mic2 = {3.04, 2.997, 1.2};
    if (name == "test2") r.rt60 = 0.6;
    return r;
  }
  if (name == "desk" || name == "desk-validation" || name == "desk-anechoic") {
    r.grid = DoaGrid::uniform(-90.0, 90.0, 10.0);
    r.realizations = 2;
    if (name == "desk-validation") r.rt60 = 0.7;
    if (name == "desk-anechoic") r.rt60 = 0.0;
    return r;
  }
  throw config_error("unknown room preset '" + name + "'");
}

// Uniform wall reflection coefficient from the Sabine relation run backwards:
// absorption alpha = 24 V ln(10) / (c S rt60), beta = sqrt(1 - alpha).
inline double inverse_sabine_reflection(const RoomConfig& room) {
  if (room.anechoic()) return 0.0;
  const double V = room.dims[0] * room.dims[1] * room.dims[2];
  const double S = 2.0 * (room.dims[0] * room.dims[1] +
                          room.dims[0] * room.dims[2] +
                          room.dims[1] * room.dims[2]);
  const double alpha = 24.0 * V * std::log(10.0) / (room.c * S * room.rt60);
  if (alpha >= 1.0) {
    throw infeasible_room_error(
        "requested rt60 " + std::to_string(room.rt60) +
        " s needs absorption >= 1 for this room volume");
  }
  return std::sqrt(1.0 - alpha);
}

// Image order at which the reflection factor drops below 1e-4, capped so
// pathological betas near 1 stay bounded.
inline int default_max_order(const RoomConfig& room, double beta) {
  if (beta <= 0.0) return 0;
  const double min_dim = std::min({room.dims[0], room.dims[1], room.dims[2]});
  const int cap =
      2 * static_cast<int>(std::ceil(room.rt60 * room.c / min_dim));
  const int by_decay =
      static_cast<int>(std::ceil(std::log(1e-4) / std::log(beta)));
  return std::min(by_decay, cap);
}

inline double calibrated_reflection(const RoomConfig& room);

struct ImpulseResponse {
  std::vector<double> taps;
  double fs = 16000.0;
};

// Half-width of the Hann-windowed sinc that realizes fractional propagation
// delays on the sample grid (4 ms, the window classically used by
// image-source generators). Short windows are cheaper but their phase error
// near Nyquist biases wideband delay estimates outward at steep angles.
inline int fractional_delay_halfwidth(double fs) {
  return std::max(1, static_cast<int>(std::llround(0.004 * fs)));
}

// Image-source room impulse response for a shoebox room with one uniform
// reflection coefficient. Each image contributes beta^(reflection count) /
// (4 pi d) stamped as a Hann-windowed sinc. beta < 0 selects the coefficient
// calibrated to the room's requested decay time.
inline ImpulseResponse image_source_rir(const RoomConfig& room,
                                        const Vec3& src, const Vec3& mic,
                                        int max_order = -1,
                                        double beta = -1.0) {
  if (!inside_room(room, src) || !inside_room(room, mic)) {
    throw geometry_error("image_source_rir: point outside room");
  }
  if (distance(src, mic) <= 1e-9) {
    throw geometry_error("image_source_rir: source on top of microphone");
  }
  if (beta < 0.0) beta = calibrated_reflection(room);
  if (max_order < 0) max_order = default_max_order(room, beta);

  const double cTs = room.c / room.fs;  // meters per sample
  const int W = fractional_delay_halfwidth(room.fs);
  int n_samples;
  if (room.anechoic()) {
    n_samples =
        static_cast<int>(std::ceil(distance(src, mic) / cTs)) + W + 8;
  } else {
    n_samples = static_cast<int>(std::ceil(room.rt60 * room.fs)) + 8;
  }

  ImpulseResponse h;
  h.fs = room.fs;
  h.taps.assign(static_cast<std::size_t>(n_samples), 0.0);

  // Reflection factors looked up by total reflection count.
  const int lat0 = static_cast<int>(
      std::ceil(n_samples / (2.0 * room.dims[0] / cTs)));
  const int lat1 = static_cast<int>(
      std::ceil(n_samples / (2.0 * room.dims[1] / cTs)));
  const int lat2 = static_cast<int>(
      std::ceil(n_samples / (2.0 * room.dims[2] / cTs)));
  const int max_pow = 2 * (lat0 + lat1 + lat2) + 8;
  std::vector<double> beta_pow(static_cast<std::size_t>(max_pow) + 1);
  beta_pow[0] = 1.0;
  for (int i = 1; i <= max_pow; ++i) beta_pow[i] = beta_pow[i - 1] * beta;

  const double fourpi = 4.0 * M_PI;
  for (int mx = -lat0; mx <= lat0; ++mx) {
    const double rx = 2.0 * mx * room.dims[0];
    for (int my = -lat1; my <= lat1; ++my) {
      const double ry = 2.0 * my * room.dims[1];
      for (int mz = -lat2; mz <= lat2; ++mz) {
        const double rz = 2.0 * mz * room.dims[2];
        for (int q = 0; q <= 1; ++q) {
          const double px = (1 - 2 * q) * src[0] - mic[0] + rx;
          const int ox = std::abs(2 * mx - q);
          for (int j = 0; j <= 1; ++j) {
            const double py = (1 - 2 * j) * src[1] - mic[1] + ry;
            const int oy = std::abs(2 * my - j);
            for (int k = 0; k <= 1; ++k) {
              const double pz = (1 - 2 * k) * src[2] - mic[2] + rz;
              if (ox + oy + std::abs(2 * mz - k) > max_order) continue;
              const int n_refl = std::abs(mx - q) + std::abs(mx) +
                                 std::abs(my - j) + std::abs(my) +
                                 std::abs(mz - k) + std::abs(mz);
              const double refl = beta_pow[static_cast<std::size_t>(n_refl)];
              if (refl == 0.0 && n_refl > 0) continue;
              const double dist =
                  std::sqrt(px * px + py * py + pz * pz);
              const double t0 = dist / cTs;
              const int lo = std::max(
                  0, static_cast<int>(std::ceil(t0 - W)));
              const int hi = std::min(
                  n_samples - 1, static_cast<int>(std::floor(t0 + W)));
              if (lo > hi) continue;
              const double gain = refl / (fourpi * dist);
              // sin(pi (n - t0)) alternates sign with n, so one evaluation
              // covers the whole support; the Hann term advances by a fixed
              // rotation per tap.
              const double s0 = std::sin(M_PI * (lo - t0));
              const double a0 = M_PI * (lo - t0) / W;
              const double dc = std::cos(M_PI / W), ds = std::sin(M_PI / W);
              double wc = std::cos(a0), ws = std::sin(a0);
              double sign = 1.0;
              for (int n = lo; n <= hi; ++n) {
                const double d = n - t0;
                const double w = 0.5 * (1.0 + wc);
                const double s = d == 0.0 ? 1.0 : sign * s0 / (M_PI * d);
                h.taps[static_cast<std::size_t>(n)] += gain * w * s;
                const double nc = wc * dc - ws * ds;
                ws = ws * dc + wc * ds;
                wc = nc;
                sign = -sign;
              }
            }
          }
        }
      }
    }
  }
  return h;
}

// RT60 from backward-integrated energy decay: least-squares line through the
// decay curve between -5 dB and -35 dB, extrapolated to -60 dB.
inline double rt60_schroeder(const ImpulseResponse& h) {
  const std::size_t n = h.taps.size();
  if (n < 2) throw insufficient_length_error("rt60_schroeder: empty response");
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    suffix[i] = suffix[i + 1] + h.taps[i] * h.taps[i];
  }
  const double total = suffix[0];
  if (!(total > 0.0)) {
    throw degenerate_input_error("rt60_schroeder: zero-energy response");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  long long m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (suffix[i] <= 0.0) break;
    const double edc = 10.0 * std::log10(suffix[i] / total);
    if (edc > -5.0) continue;
    if (edc < -35.0) break;
    const double t = static_cast<double>(i) / h.fs;
    sx += t;
    sy += edc;
    sxx += t * t;
    sxy += t * edc;
    ++m;
  }
  if (m < 2) {
    throw insufficient_length_error(
        "rt60_schroeder: decay range -5..-35 dB not covered");
  }
  const double denom = m * sxx - sx * sx;
  if (denom <= 0.0) {
    throw degenerate_input_error("rt60_schroeder: degenerate fit");
  }
  const double slope = (m * sxy - sx * sy) / denom;  // dB per second
  if (!(slope < 0.0)) {
    throw degenerate_input_error("rt60_schroeder: non-decaying response");
  }
  return -60.0 / slope;
}

// Wall reflection coefficient tuned so generated rooms measure at the
// requested decay time. The Sabine inversion predicts the average absorption,
// but late decay in a non-cubic room is carried by the longest mean free
// paths, so a room built from the raw Sabine coefficient rings measurably
// longer than requested (the 6 x 6 x 2.4 m room at 0.5 s measures near
// 0.75 s). Starting from the Sabine estimate, iterate on the near-exact
// relation decay_time ~ -1/ln(beta) until a probe response measures on
// target. Depends only on geometry, decay target and sample rate, so one
// coefficient serves every source/microphone placement in the room.
inline double calibrated_reflection(const RoomConfig& room) {
  if (room.anechoic()) return 0.0;
  double beta = inverse_sabine_reflection(room);
  const Vec3 c = room.room_center();
  const Vec3 probe_src{c[0], c[1] + room.dims[1] / 4.0, c[2]};
  const Vec3 probe_mic{c[0], c[1] - room.dims[1] / 4.0, c[2]};
  for (int it = 0; it < 8; ++it) {
    const ImpulseResponse h =
        image_source_rir(room, probe_src, probe_mic, -1, beta);
    const double measured = rt60_schroeder(h);
    if (std::abs(measured - room.rt60) <= 0.01 * room.rt60) break;
    beta = std::exp(std::log(beta) * measured / room.rt60);
    beta = std::min(std::max(beta, 1e-6), 0.999999);
  }
  return beta;
}

// One contiguous stretch of the recording stream with a single active source.
struct LabelSpan {
  long long begin = 0;  // sample index, inclusive
  long long end = 0;    // sample index, exclusive
  int doa_index = -1;
};

struct MicSignals {
  std::vector<double> d1, d2;
  double fs = 16000.0;
  std::vector<LabelSpan> spans;
};

namespace detail {

inline std::uint64_t hash_vec3(const Vec3& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : p) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Cached frequency-domain RIR for repeated convolution against equal-length
// sources.
struct RirSpectrum {
  std::size_t nfft = 0;
  std::vector<cd> spec;
};

inline RirSpectrum plan_rir(const ImpulseResponse& h, std::size_t src_len) {
  RirSpectrum plan;
  plan.nfft = next_power_of_two(src_len + h.taps.size() - 1);
  plan.spec = fft(h.taps, plan.nfft);
  return plan;
}

inline std::vector<double> convolve_planned(const RirSpectrum& plan,
                                            const std::vector<double>& src) {
  std::vector<cd> fs_ = fft(src, plan.nfft);
  for (std::size_t i = 0; i < plan.nfft; ++i) fs_[i] *= plan.spec[i];
  fft_inplace(fs_, true);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = fs_[i].real();
  return out;
}

inline void add_noise(std::vector<double>& y, double snr_db,
                      std::uint64_t noise_seed) {
  if (std::isinf(snr_db)) return;
  double p = 0.0;
  for (double v : y) p += v * v;
  p /= static_cast<double>(y.size());
  if (!(p > 0.0)) {
    throw degenerate_input_error("render: zero-power reverberant signal");
  }
  const double sigma = std::sqrt(p) * std::pow(10.0, -snr_db / 20.0);
  Rng rng(noise_seed);
  std::vector<double> g = rng.gaussian_vector(y.size());
  double gp = 0.0;
  for (double v : g) gp += v * v;
  gp = std::sqrt(gp / static_cast<double>(g.size()));
  // Scale the realized noise to hit the configured SNR exactly.
  const double k = sigma / gp;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += k * g[i];
}

}  // namespace detail

// Convolves one dry source against both microphone RIRs and adds independent
// white Gaussian noise per channel at snr_db relative to that channel's
// reverberant signal power. Noise streams are keyed by the caller. Both
// channels run through the same statements: with aggressive optimization,
// separate call sites can be vectorized differently and round differently,
// which would break the exact channel-swap symmetry.
inline MicSignals render_microphone_signals(const ImpulseResponse& rir1,
                                            const ImpulseResponse& rir2,
                                            const std::vector<double>& src,
                                            double snr_db,
                                            std::uint64_t noise_seed1,
                                            std::uint64_t noise_seed2) {
  if (src.empty()) throw degenerate_input_error("render: empty source");
  MicSignals out;
  out.fs = rir1.fs;
  const std::array<const ImpulseResponse*, 2> rirs{&rir1, &rir2};
  const std::array<std::uint64_t, 2> seeds{noise_seed1, noise_seed2};
  const std::array<std::vector<double>*, 2> chans{&out.d1, &out.d2};
  for (int ch = 0; ch < 2; ++ch) {
    auto full = fft_convolve(src, rirs[static_cast<std::size_t>(ch)]->taps);
    full.resize(src.size());
    detail::add_noise(full, snr_db, seeds[static_cast<std::size_t>(ch)]);
    *chans[static_cast<std::size_t>(ch)] = std::move(full);
  }
  out.spans.push_back({0, static_cast<long long>(src.size()), -1});
  return out;
}

// Full recording stream for a room preset: realizations are laid out
// outermost, directions round-robin inside each realization, one recording
// of room.seconds per (realization, direction). Every random stream is keyed
// off the master seed; channel noise is keyed by microphone position so that
// swapping the microphones swaps the channels exactly.
inline MicSignals generate_room_dataset(const RoomConfig& room,
                                        std::uint64_t seed) {
  room.validate();
  const int T = room.grid.size();
  const long long n = room.samples_per_recording();
  if (n <= 0) throw config_error("generate_room_dataset: empty recording");

  // Every channel-dependent step runs through a single call site indexed by
  // channel. Mirrored call sites are not guaranteed to produce bit-identical
  // floating point under vectorizing optimizers, and swapping the microphones
  // must swap the output channels exactly.
  const double beta = calibrated_reflection(room);
  const std::array<Vec3, 2> mics{room.mic1, room.mic2};
  std::array<std::vector<detail::RirSpectrum>, 2> plans;
  for (int ch = 0; ch < 2; ++ch) {
    auto& plan = plans[static_cast<std::size_t>(ch)];
    plan.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      const Vec3 s = source_position(room, t);
      const auto h =
          image_source_rir(room, s, mics[static_cast<std::size_t>(ch)], -1, beta);
      plan.push_back(detail::plan_rir(h, static_cast<std::size_t>(n)));
    }
  }

  const std::array<std::uint64_t, 2> keys{detail::hash_vec3(room.mic1),
                                          detail::hash_vec3(room.mic2)};

  MicSignals out;
  out.fs = room.fs;
  const long long total = n * room.realizations * T;
  out.d1.reserve(static_cast<std::size_t>(total));
  out.d2.reserve(static_cast<std::size_t>(total));
  const std::array<std::vector<double>*, 2> chans{&out.d1, &out.d2};
  for (int r = 0; r < room.realizations; ++r) {
    for (int t = 0; t < T; ++t) {
      Rng src_rng(derive_seed(seed, "source", static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(r)));
      std::vector<double> src =
          src_rng.gaussian_vector(static_cast<std::size_t>(n));
      const long long begin = static_cast<long long>(out.d1.size());
      for (int ch = 0; ch < 2; ++ch) {
        auto y = detail::convolve_planned(
            plans[static_cast<std::size_t>(ch)][static_cast<std::size_t>(t)],
            src);
        detail::add_noise(y, room.snr_db,
                          derive_seed(seed, "noise", static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(r),
                                      keys[static_cast<std::size_t>(ch)]));
        auto& chan = *chans[static_cast<std::size_t>(ch)];
        chan.insert(chan.end(), y.begin(), y.end());
      }
      out.spans.push_back({begin, begin + n, t});
    }
  }
  return out;
}

}  // namespace reverbdoa
