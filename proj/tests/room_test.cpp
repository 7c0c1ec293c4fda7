#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "reverbdoa/room.hpp"

namespace reverbdoa {
namespace {

TEST(DoaGrid, UniformConstructionAndLookup) {
  const DoaGrid g = DoaGrid::uniform(-90.0, 90.0, 5.0);
  EXPECT_EQ(g.size(), 37);
  EXPECT_DOUBLE_EQ(g.angle_deg(0), -90.0);
  EXPECT_DOUBLE_EQ(g.angle_deg(18), 0.0);
  EXPECT_DOUBLE_EQ(g.angle_deg(36), 90.0);
  EXPECT_EQ(g.index_of(-90.0), 0);
  EXPECT_EQ(g.index_of(35.0), 25);
  EXPECT_THROW(g.index_of(33.0), domain_error);
  EXPECT_EQ(g.nearest_index(33.0), 7 + 18);  // 35 degrees
  EXPECT_EQ(g.nearest_index(-200.0), 0);
  EXPECT_EQ(g.nearest_index(200.0), 36);
  EXPECT_THROW(DoaGrid::uniform(0.0, 0.0, 5.0), config_error);
  EXPECT_THROW(DoaGrid::uniform(0.0, 10.0, -1.0), config_error);

  const DoaGrid desk = DoaGrid::uniform(-90.0, 90.0, 10.0);
  EXPECT_EQ(desk.size(), 19);
}

TEST(RoomConfig, PresetFamilies) {
  const RoomConfig design = RoomConfig::preset("design");
  EXPECT_EQ(design.grid.size(), 37);
  EXPECT_DOUBLE_EQ(design.rt60, 0.5);
  EXPECT_EQ(design.realizations, 10);
  EXPECT_EQ(design.recordings(), 370);
  EXPECT_DOUBLE_EQ(design.array_spacing, 0.08);
  EXPECT_DOUBLE_EQ(design.source_range, 1.5);
  EXPECT_NO_THROW(design.validate());

  EXPECT_DOUBLE_EQ(RoomConfig::preset("validation").rt60, 0.7);

  const RoomConfig t1 = RoomConfig::preset("test1");
  EXPECT_DOUBLE_EQ(t1.mic1[1], 3.005);
  EXPECT_DOUBLE_EQ(t1.mic2[1], 2.997);
  EXPECT_DOUBLE_EQ(t1.mic1[0], design.mic1[0]);
  EXPECT_DOUBLE_EQ(t1.mic2[0], design.mic2[0]);
  EXPECT_DOUBLE_EQ(t1.rt60, 0.5);
  EXPECT_DOUBLE_EQ(RoomConfig::preset("test2").rt60, 0.6);

  const RoomConfig desk = RoomConfig::preset("desk");
  EXPECT_EQ(desk.grid.size(), 19);
  EXPECT_EQ(desk.realizations, 2);
  EXPECT_EQ(desk.recordings(), 38);
  EXPECT_DOUBLE_EQ(desk.rt60, 0.5);
  EXPECT_DOUBLE_EQ(RoomConfig::preset("desk-anechoic").rt60, 0.0);
  EXPECT_THROW(RoomConfig::preset("attic"), config_error);
}

TEST(RoomConfig, ValidationErrors) {
  RoomConfig r = RoomConfig::preset("design");
  r.mic1 = {7.0, 3.0, 1.2};
  EXPECT_THROW(r.validate(), geometry_error);

  r = RoomConfig::preset("design");
  r.mic2 = r.mic1;
  EXPECT_THROW(r.validate(), geometry_error);

  r = RoomConfig::preset("design");
  r.source_range = 5.0;  // arc leaves the room
  EXPECT_THROW(r.validate(), geometry_error);

  r = RoomConfig::preset("design");
  r.rt60 = -1.0;
  EXPECT_THROW(r.validate(), config_error);
}

TEST(SourcePosition, ArcGeometry) {
  const RoomConfig r = RoomConfig::preset("design");
  const Vec3 c = r.room_center();
  // Broadside points along +y, +90 degrees toward mic2 (+x).
  const Vec3 broadside = source_position(r, r.grid.index_of(0.0));
  EXPECT_NEAR(broadside[0], c[0], 1e-12);
  EXPECT_NEAR(broadside[1], c[1] + 1.5, 1e-12);
  const Vec3 right = source_position(r, r.grid.index_of(90.0));
  EXPECT_NEAR(right[0], c[0] + 1.5, 1e-12);
  EXPECT_NEAR(right[1], c[1], 1e-12);
  for (int i = 0; i < r.grid.size(); ++i) {
    EXPECT_NEAR(distance(source_position(r, i), c), 1.5, 1e-12);
  }
}

TEST(InverseSabine, DesignRoomClosedForm) {
  const RoomConfig r = RoomConfig::preset("design");
  const double V = 6.0 * 6.0 * 2.4;
  const double S = 2.0 * (36.0 + 14.4 + 14.4);
  const double alpha = 24.0 * V * std::log(10.0) / (343.0 * S * 0.5);
  EXPECT_NEAR(alpha, 0.21481843433180603, 1e-15);
  EXPECT_NEAR(inverse_sabine_reflection(r), std::sqrt(1.0 - alpha), 1e-15);
  EXPECT_NEAR(inverse_sabine_reflection(r), 0.8861047148436769, 1e-12);
}

TEST(InverseSabine, AlgebraicRoundTrip) {
  RoomConfig r = RoomConfig::preset("design");
  for (double rt : {0.3, 0.5, 0.9, 2.0}) {
    r.rt60 = rt;
    const double beta = inverse_sabine_reflection(r);
    const double alpha = 1.0 - beta * beta;
    const double V = r.dims[0] * r.dims[1] * r.dims[2];
    const double S = 2.0 * (r.dims[0] * r.dims[1] + r.dims[0] * r.dims[2] +
                            r.dims[1] * r.dims[2]);
    const double rt_back = 24.0 * V * std::log(10.0) / (r.c * S * alpha);
    EXPECT_NEAR(rt_back, rt, 1e-9);
  }
}

TEST(InverseSabine, LimitsAndErrors) {
  RoomConfig r = RoomConfig::preset("design");
  r.rt60 = 1e9;
  EXPECT_NEAR(inverse_sabine_reflection(r), 1.0, 1e-9);
  r.rt60 = 0.05;  // would need absorption > 1
  EXPECT_THROW(inverse_sabine_reflection(r), infeasible_room_error);
  r.rt60 = 0.0;
  EXPECT_DOUBLE_EQ(inverse_sabine_reflection(r), 0.0);
}

// Straightforward reference: enumerate every image with reflection budget
// max_order over a generously padded lattice and stamp Hann-windowed sincs
// with directly evaluated transcendentals.
std::vector<double> reference_rir(const RoomConfig& room, const Vec3& src,
                                  const Vec3& mic, int max_order, double beta,
                                  int n_samples) {
  std::vector<double> taps(static_cast<std::size_t>(n_samples), 0.0);
  const double cTs = room.c / room.fs;
  const int W = fractional_delay_halfwidth(room.fs);
  const int pad = 2;
  const int lx = static_cast<int>(std::ceil(
                     n_samples * cTs / (2.0 * room.dims[0]))) + pad;
  const int ly = static_cast<int>(std::ceil(
                     n_samples * cTs / (2.0 * room.dims[1]))) + pad;
  const int lz = static_cast<int>(std::ceil(
                     n_samples * cTs / (2.0 * room.dims[2]))) + pad;
  for (int mx = -lx; mx <= lx; ++mx) {
    for (int my = -ly; my <= ly; ++my) {
      for (int mz = -lz; mz <= lz; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          for (int j = 0; j <= 1; ++j) {
            for (int k = 0; k <= 1; ++k) {
              const int order = std::abs(2 * mx - q) + std::abs(2 * my - j) +
                                std::abs(2 * mz - k);
              if (order > max_order) continue;
              const int count = std::abs(mx - q) + std::abs(mx) +
                                std::abs(my - j) + std::abs(my) +
                                std::abs(mz - k) + std::abs(mz);
              const double px =
                  (1 - 2 * q) * src[0] - mic[0] + 2.0 * mx * room.dims[0];
              const double py =
                  (1 - 2 * j) * src[1] - mic[1] + 2.0 * my * room.dims[1];
              const double pz =
                  (1 - 2 * k) * src[2] - mic[2] + 2.0 * mz * room.dims[2];
              const double dist = std::sqrt(px * px + py * py + pz * pz);
              const double t0 = dist / cTs;
              const double gain =
                  std::pow(beta, count) / (4.0 * M_PI * dist);
              const int lo =
                  std::max(0, static_cast<int>(std::ceil(t0 - W)));
              const int hi = std::min(
                  n_samples - 1, static_cast<int>(std::floor(t0 + W)));
              for (int n = lo; n <= hi; ++n) {
                const double d = n - t0;
                const double sinc =
                    d == 0.0 ? 1.0 : std::sin(M_PI * d) / (M_PI * d);
                const double hann =
                    0.5 * (1.0 + std::cos(M_PI * d / W));
                taps[static_cast<std::size_t>(n)] += gain * hann * sinc;
              }
            }
          }
        }
      }
    }
  }
  return taps;
}

TEST(ImageSourceRir, MatchesBruteForceEnumeration) {
  RoomConfig room = RoomConfig::preset("design");
  room.seconds = 0.1;
  const Vec3 src = source_position(room, room.grid.index_of(25.0));
  const double beta = 0.75;
  const int max_order = 6;
  const ImpulseResponse h =
      image_source_rir(room, src, room.mic1, max_order, beta);
  const std::vector<double> ref = reference_rir(
      room, src, room.mic1, max_order, beta, static_cast<int>(h.taps.size()));
  double peak = 0.0;
  for (double v : ref) peak = std::max(peak, std::abs(v));
  ASSERT_GT(peak, 0.0);
  for (std::size_t i = 0; i < h.taps.size(); ++i) {
    EXPECT_NEAR(h.taps[i], ref[i], 1e-9 * peak) << "tap " << i;
  }
}

TEST(ImageSourceRir, AnechoicIntegerDelayIsSingleTap) {
  RoomConfig room = RoomConfig::preset("design");
  room.rt60 = 0.0;
  // 128 samples of travel: distance = 128 * c / fs = 2.744 m along x.
  const double dist = 128.0 * room.c / room.fs;
  const Vec3 src{1.0, 3.0, 1.2};
  const Vec3 mic{1.0 + dist, 3.0, 1.2};
  const ImpulseResponse h = image_source_rir(room, src, mic);
  const double want = 1.0 / (4.0 * M_PI * dist);
  ASSERT_GT(static_cast<int>(h.taps.size()), 128);
  EXPECT_NEAR(h.taps[128], want, 1e-12);
  for (std::size_t i = 0; i < h.taps.size(); ++i) {
    if (i == 128) continue;
    EXPECT_NEAR(h.taps[i], 0.0, 1e-12) << "tap " << i;
  }
}

TEST(ImageSourceRir, FractionalDelayPeakNearExpectedSample) {
  RoomConfig room = RoomConfig::preset("design");
  room.rt60 = 0.0;
  const Vec3 c = room.room_center();
  const Vec3 src{c[0], c[1] + 1.5, c[2]};
  const Vec3 mic{c[0], c[1], c[2]};
  const ImpulseResponse h = image_source_rir(room, src, mic);
  // 1.5 m at 343 m/s, 16 kHz: delay 69.97 samples.
  int peak = 0;
  for (std::size_t i = 1; i < h.taps.size(); ++i) {
    if (std::abs(h.taps[i]) > std::abs(h.taps[static_cast<std::size_t>(peak)])) {
      peak = static_cast<int>(i);
    }
  }
  EXPECT_EQ(peak, 70);
  // Quadratic interpolation of the energy envelope around the peak recovers
  // the fractional delay.
  const double e0 = h.taps[69] * h.taps[69];
  const double e1 = h.taps[70] * h.taps[70];
  const double e2 = h.taps[71] * h.taps[71];
  const double frac = 0.5 * (e0 - e2) / (e0 - 2.0 * e1 + e2);
  EXPECT_NEAR(70.0 + frac, 1.5 / 343.0 * 16000.0, 0.05);
}

TEST(ImageSourceRir, MirrorSymmetry) {
  RoomConfig room = RoomConfig::preset("design");
  room.seconds = 0.1;
  const Vec3 src = source_position(room, room.grid.index_of(40.0));
  const ImpulseResponse h1 = image_source_rir(room, src, room.mic1, 8, 0.8);
  // Reflect everything through the x = Lx/2 plane.
  const Vec3 src_m{room.dims[0] - src[0], src[1], src[2]};
  const Vec3 mic_m{room.dims[0] - room.mic1[0], room.mic1[1], room.mic1[2]};
  const ImpulseResponse h2 = image_source_rir(room, src_m, mic_m, 8, 0.8);
  ASSERT_EQ(h1.taps.size(), h2.taps.size());
  for (std::size_t i = 0; i < h1.taps.size(); ++i) {
    EXPECT_NEAR(h1.taps[i], h2.taps[i], 1e-12);
  }
}

TEST(ImageSourceRir, GeometryErrors) {
  const RoomConfig room = RoomConfig::preset("design");
  EXPECT_THROW(image_source_rir(room, {7.0, 3.0, 1.2}, room.mic1, 4, 0.8),
               geometry_error);
  EXPECT_THROW(image_source_rir(room, room.mic1, room.mic1, 4, 0.8),
               geometry_error);
}

TEST(ImageSourceRir, ShellEnergyMonotonicallyNonIncreasing) {
  RoomConfig room = RoomConfig::preset("design");
  const Vec3 src = source_position(room, room.grid.index_of(10.0));
  const double beta = calibrated_reflection(room);
  const double cTs = room.c / room.fs;
  const double max_dist = room.rt60 * room.fs * cTs;
  // Independent enumeration: total image energy per reflection-count shell.
  std::map<int, double> shell_energy;
  const int l = 14;
  for (int mx = -l; mx <= l; ++mx) {
    for (int my = -l; my <= l; ++my) {
      for (int mz = -l; mz <= l; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          for (int j = 0; j <= 1; ++j) {
            for (int k = 0; k <= 1; ++k) {
              const int count = std::abs(mx - q) + std::abs(mx) +
                                std::abs(my - j) + std::abs(my) +
                                std::abs(mz - k) + std::abs(mz);
              const double px = (1 - 2 * q) * src[0] - room.mic1[0] +
                                2.0 * mx * room.dims[0];
              const double py = (1 - 2 * j) * src[1] - room.mic1[1] +
                                2.0 * my * room.dims[1];
              const double pz = (1 - 2 * k) * src[2] - room.mic1[2] +
                                2.0 * mz * room.dims[2];
              const double dist = std::sqrt(px * px + py * py + pz * pz);
              if (dist > max_dist) continue;
              const double amp = std::pow(beta, count) / (4.0 * M_PI * dist);
              shell_energy[count] += amp * amp;
            }
          }
        }
      }
    }
  }
  ASSERT_GE(shell_energy.size(), 5u);
  double prev = shell_energy.begin()->second;
  for (auto it = std::next(shell_energy.begin()); it != shell_energy.end();
       ++it) {
    EXPECT_LE(it->second, prev + 1e-15) << "shell " << it->first;
    prev = it->second;
  }
}

TEST(DefaultMaxOrder, DecayThresholdAndCap) {
  RoomConfig room = RoomConfig::preset("design");
  // Cap: 2 * ceil(0.5 * 343 / 2.4) = 2 * 72 = 144.
  EXPECT_EQ(default_max_order(room, 0.99999), 144);
  // Decay rule: smallest R with beta^R < 1e-4.
  EXPECT_EQ(default_max_order(room, 0.5), 14);
  EXPECT_EQ(default_max_order(room, 0.0), 0);
}

TEST(Rt60Schroeder, SyntheticExponentialDecay) {
  // Energy envelope e^{-t/tau} decays 60 dB in 6.9078 tau seconds.
  for (double tau : {0.05, 0.1}) {
    ImpulseResponse h;
    h.fs = 16000.0;
    const int n = static_cast<int>(10.0 * tau * h.fs);
    h.taps.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double t = i / h.fs;
      h.taps[static_cast<std::size_t>(i)] = std::exp(-t / (2.0 * tau));
    }
    const double want = std::log(1e6) * tau;  // 13.8155 tau
    EXPECT_NEAR(rt60_schroeder(h), want, 0.05 * want) << "tau " << tau;
  }
}

TEST(Rt60Schroeder, ErrorsOnDegenerateInput) {
  ImpulseResponse impulse;
  impulse.fs = 16000.0;
  impulse.taps.assign(256, 0.0);
  impulse.taps[10] = 1.0;  // no decay region at all
  EXPECT_THROW(rt60_schroeder(impulse), insufficient_length_error);

  ImpulseResponse empty;
  EXPECT_THROW(rt60_schroeder(empty), insufficient_length_error);

  ImpulseResponse zeros;
  zeros.fs = 16000.0;
  zeros.taps.assign(256, 0.0);
  EXPECT_THROW(rt60_schroeder(zeros), degenerate_input_error);
}

TEST(Rt60Schroeder, AnechoicRirHasNoDecayRange) {
  RoomConfig room = RoomConfig::preset("design");
  room.rt60 = 0.0;
  const Vec3 src = source_position(room, 18);
  const ImpulseResponse h = image_source_rir(room, src, room.mic1);
  EXPECT_THROW(rt60_schroeder(h), insufficient_length_error);
}

TEST(CalibratedReflection, DesignRoomMeasuresOnTarget) {
  const RoomConfig room = RoomConfig::preset("design");
  const double beta = calibrated_reflection(room);
  EXPECT_GT(beta, 0.0);
  EXPECT_LT(beta, 1.0);
  for (double angle : {-60.0, 0.0, 45.0}) {
    const Vec3 src = source_position(room, room.grid.index_of(angle));
    const ImpulseResponse h = image_source_rir(room, src, room.mic1, -1, beta);
    const double rt = rt60_schroeder(h);
    EXPECT_NEAR(rt, 0.5, 0.15 * 0.5) << "angle " << angle;
  }
  EXPECT_DOUBLE_EQ(calibrated_reflection(RoomConfig::preset("desk-anechoic")),
                   0.0);
}

TEST(Render, InfiniteSnrIsExactConvolution) {
  RoomConfig room = RoomConfig::preset("design");
  room.seconds = 0.05;
  const Vec3 src = source_position(room, 18);
  const ImpulseResponse h1 = image_source_rir(room, src, room.mic1, 4, 0.8);
  const ImpulseResponse h2 = image_source_rir(room, src, room.mic2, 4, 0.8);
  Rng rng(5);
  const std::vector<double> s = rng.gaussian_vector(800);
  const double inf = std::numeric_limits<double>::infinity();
  const MicSignals out = render_microphone_signals(h1, h2, s, inf, 1, 2);
  const std::vector<double> want1 = fft_convolve(s, h1.taps);
  const std::vector<double> want2 = fft_convolve(s, h2.taps);
  ASSERT_EQ(out.d1.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.d1[i], want1[i]);
    EXPECT_DOUBLE_EQ(out.d2[i], want2[i]);
  }
  ASSERT_EQ(out.spans.size(), 1u);
  EXPECT_EQ(out.spans[0].end, static_cast<long long>(s.size()));
}

TEST(Render, MeasuredSnrWithinTenthOfADecibel) {
  RoomConfig room = RoomConfig::preset("design");
  room.seconds = 0.05;
  const Vec3 src = source_position(room, 10);
  const ImpulseResponse h1 = image_source_rir(room, src, room.mic1, 6, 0.85);
  const ImpulseResponse h2 = image_source_rir(room, src, room.mic2, 6, 0.85);
  Rng rng(21);
  const std::vector<double> s = rng.gaussian_vector(16000);
  const double inf = std::numeric_limits<double>::infinity();
  const MicSignals clean = render_microphone_signals(h1, h2, s, inf, 7, 8);
  const MicSignals noisy = render_microphone_signals(h1, h2, s, 20.0, 7, 8);
  auto measured_snr = [](const std::vector<double>& sig,
                         const std::vector<double>& mix) {
    double ps = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < sig.size(); ++i) {
      ps += sig[i] * sig[i];
      const double d = mix[i] - sig[i];
      pn += d * d;
    }
    return 10.0 * std::log10(ps / pn);
  };
  EXPECT_NEAR(measured_snr(clean.d1, noisy.d1), 20.0, 0.1);
  EXPECT_NEAR(measured_snr(clean.d2, noisy.d2), 20.0, 0.1);
}

TEST(Render, SilentSourceCannotSetSnr) {
  const RoomConfig room = RoomConfig::preset("design");
  const Vec3 src = source_position(room, 18);
  const ImpulseResponse h1 = image_source_rir(room, src, room.mic1, 2, 0.8);
  const ImpulseResponse h2 = image_source_rir(room, src, room.mic2, 2, 0.8);
  const std::vector<double> silent(512, 0.0);
  EXPECT_THROW(render_microphone_signals(h1, h2, silent, 20.0, 1, 2),
               degenerate_input_error);
  const std::vector<double> empty;
  EXPECT_THROW(render_microphone_signals(h1, h2, empty, 20.0, 1, 2),
               degenerate_input_error);
}

RoomConfig quick_desk() {
  RoomConfig r = RoomConfig::preset("desk");
  r.seconds = 0.2;
  r.realizations = 2;
  return r;
}

TEST(Dataset, DeterministicPerSeed) {
  const RoomConfig room = quick_desk();
  const MicSignals a = generate_room_dataset(room, 42);
  const MicSignals b = generate_room_dataset(room, 42);
  EXPECT_EQ(a.d1, b.d1);
  EXPECT_EQ(a.d2, b.d2);
  const MicSignals c = generate_room_dataset(room, 43);
  EXPECT_NE(a.d1, c.d1);
}

TEST(Dataset, MicSwapSwapsChannelsExactly) {
  const RoomConfig room = quick_desk();
  RoomConfig swapped = room;
  std::swap(swapped.mic1, swapped.mic2);
  const MicSignals a = generate_room_dataset(room, 9);
  const MicSignals b = generate_room_dataset(swapped, 9);
  EXPECT_EQ(a.d1, b.d2);
  EXPECT_EQ(a.d2, b.d1);
}

TEST(Dataset, SpanLayoutIsRoundRobinPartition) {
  const RoomConfig room = quick_desk();
  const MicSignals out = generate_room_dataset(room, 3);
  const long long n = room.samples_per_recording();
  const int T = room.grid.size();
  ASSERT_EQ(out.spans.size(),
            static_cast<std::size_t>(room.realizations) * T);
  ASSERT_EQ(out.d1.size(), static_cast<std::size_t>(n) * out.spans.size());
  ASSERT_EQ(out.d2.size(), out.d1.size());
  long long cursor = 0;
  for (std::size_t i = 0; i < out.spans.size(); ++i) {
    EXPECT_EQ(out.spans[i].begin, cursor);
    EXPECT_EQ(out.spans[i].end, cursor + n);
    EXPECT_EQ(out.spans[i].doa_index, static_cast<int>(i) % T);
    cursor = out.spans[i].end;
  }
}

TEST(Dataset, PerChannelSnrNearConfigured) {
  RoomConfig room = quick_desk();
  RoomConfig clean_cfg = room;
  clean_cfg.snr_db = std::numeric_limits<double>::infinity();
  const MicSignals noisy = generate_room_dataset(room, 77);
  const MicSignals clean = generate_room_dataset(clean_cfg, 77);
  // Per recording: noise was scaled against that recording's power.
  const long long n = room.samples_per_recording();
  for (std::size_t r = 0; r < noisy.spans.size(); ++r) {
    double ps = 0.0, pn = 0.0;
    for (long long i = noisy.spans[r].begin; i < noisy.spans[r].end; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      ps += clean.d1[k] * clean.d1[k];
      const double d = noisy.d1[k] - clean.d1[k];
      pn += d * d;
    }
    EXPECT_NEAR(10.0 * std::log10(ps / pn), room.snr_db, 0.1)
        << "recording " << r;
    EXPECT_EQ(noisy.spans[r].end - noisy.spans[r].begin, n);
  }
}

}  // namespace
}  // namespace reverbdoa
