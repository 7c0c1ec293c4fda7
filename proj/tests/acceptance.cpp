// End-to-end acceptance gate. Runs nine checks against pinned tolerances and
// prints exactly one [PASS]/[FAIL] line per criterion; exits nonzero if any
// fail. The expensive criteria drive the same command front-end as the CLI,
// so a green run certifies the shipped pipeline, not a test-only code path.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gradient_check.hpp"
#include "naive_model.hpp"
#include "reverbdoa/harness.hpp"

namespace fs = std::filesystem;
using namespace reverbdoa;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Shared corpus: one desk training room, a second room for validation, a
// third desk simulation for held-out scoring, and an anechoic variant.
struct Workspace {
  fs::path dir;
  fs::path train_features;  // desk, seed 11
  fs::path val_features;    // desk-validation, seed 21, train stats
  fs::path eval_features;   // desk, seed 99, train stats
  fs::path eval_dataset;    // desk, seed 99
  fs::path anechoic_dataset;
};

Workspace prepare_workspace() {
  Workspace w;
  w.dir = fs::temp_directory_path() / "reverbdoa_acceptance";
  fs::remove_all(w.dir);
  fs::create_directories(w.dir);
  const SimulateOutcome train_sim = cmd_simulate("desk", 11, w.dir);
  const SimulateOutcome val_sim = cmd_simulate("desk-validation", 21, w.dir);
  const SimulateOutcome eval_sim = cmd_simulate("desk", 99, w.dir);
  const SimulateOutcome anech_sim = cmd_simulate("desk-anechoic", 31, w.dir);
  const FeaturesOutcome ft = cmd_features(train_sim.json_path, w.dir);
  const FeaturesOutcome fv = cmd_features(val_sim.json_path, w.dir, ft.json_path);
  const FeaturesOutcome fe = cmd_features(eval_sim.json_path, w.dir, ft.json_path);
  w.train_features = ft.json_path;
  w.val_features = fv.json_path;
  w.eval_features = fe.json_path;
  w.eval_dataset = eval_sim.json_path;
  w.anechoic_dataset = anech_sim.json_path;
  return w;
}

// Matched training budget for the label-efficiency comparisons: both methods
// get the same optimizer, learning rate, batch size and epoch count, and the
// same seeded choice of labeled windows.
constexpr int kBudgetEpochs = 150;
constexpr double kBudgetLr = 1e-3;
constexpr int kBudgetBatch = 16;
constexpr double kBudgetAlpha = 10.0;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

double trained_accuracy(const Workspace& w, const std::string& method, int J,
                        std::uint64_t seed, int epochs, const fs::path& out) {
  TrainSpec ts;
  ts.method = method;
  ts.train_features = w.train_features;
  ts.val_features = w.val_features;
  ts.J = J;
  ts.alpha = kBudgetAlpha;
  ts.train.epochs = epochs;
  ts.train.batch = kBudgetBatch;
  ts.train.lr = kBudgetLr;
  ts.train.seed = seed;
  ts.out_dir = out;
  const TrainOutcome t = cmd_train(ts);

  EvaluateSpec es;
  es.method = method;
  es.checkpoint = t.manifest_path;
  es.features = w.eval_features;
  es.out_dir = out;
  return cmd_evaluate(es).record.accuracy;
}

// 1. Every tape operation and the whole objective on a small model agree
//    with central finite differences.
Outcome criterion1() {
  const auto start = std::chrono::steady_clock::now();
  double worst_op = 0.0;
  std::string worst_name = "-";
  for (const gradcheck::OpCheck& check : gradcheck::op_gradient_checks()) {
    const double err = gradcheck::max_rel_fd_error(check.leaves, check.build);
    if (err > worst_op) {
      worst_op = err;
      worst_name = check.name;
    }
  }
  ArchConfig arch;
  arch.in_h = 4;
  arch.in_w = 8;
  arch.conv_channels = 2;
  arch.hidden = 10;
  arch.T = 3;
  arch.M = 2;
  const gradcheck::ObjectiveCheckResult obj =
      gradcheck::objective_fd_check(arch, 2, 2, 7.5, 12345);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  const bool ok = worst_op < 1e-5 && obj.max_rel_err < 1e-4 && secs < 60.0;
  return {ok, fmt("worst op rel err %.2e (%s), objective rel err %.2e over "
                  "%d params, %.1f s",
                  worst_op, worst_name.c_str(), obj.max_rel_err,
                  obj.params_checked, secs)};
}

// 2. The factored unlabeled objective equals a direct expectation over
//    enumerated labels computed with plain loops.
Outcome criterion2() {
  Rng rng(424242);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ArchConfig arch;
    arch.in_h = trial % 2 == 0 ? 4 : 8;
    arch.in_w = trial % 2 == 0 ? 8 : 4;
    arch.conv_channels = 1 + trial % 3;
    arch.hidden = 5 + trial % 7;
    const int ts[] = {2, 3, 5, 7};
    arch.T = ts[trial % 4];
    arch.M = 1 + trial % 3;
    ModelParams params = ModelParams::init(arch, 1000 + trial);
    if (trial % 4 == 0) {
      for (auto& [name, tensor] : params.named_tensors()) {
        for (double& v : tensor->values) v *= 3.0;
      }
    }
    Tensor x({1, arch.in_h, arch.in_w});
    for (double& v : x.values) v = rng.uniform(-1.0, 1.0);
    std::vector<Tensor> eps;
    const int draws = trial % 2 == 0 ? 1 : arch.T;
    for (int d = 0; d < draws; ++d) {
      Tensor e({arch.M});
      for (double& v : e.values) v = rng.gaussian();
      eps.push_back(std::move(e));
    }

    Tape tape;
    const ModelNodes nodes = add_model(tape, params, false);
    const ObjectiveGraph g = begin_objective(tape, nodes, arch, x);
    const double factored =
        tape.value(unlabeled_bound(tape, nodes, arch, g, eps))[0];
    const double direct = naive::unlabeled_bound(params, x, eps, 1e-12);
    worst = std::max(worst, std::abs(factored - direct) /
                                std::max({std::abs(factored),
                                          std::abs(direct), 1e-30}));
  }
  return {worst <= 1e-10,
          fmt("100 model/draw configurations, worst rel diff %.2e", worst)};
}

// 3. A pure integer delay between analytically generated channels comes back
//    out of the STFT -> RTF pipeline as the matching linear phase.
Outcome criterion3() {
  const StftConfig cfg;
  const int delay = 3;
  const std::vector<int> tone_bins = {5, 17, 40, 77, 103};
  Rng rng(7);
  std::vector<double> amp, pha;
  for (std::size_t i = 0; i < tone_bins.size(); ++i) {
    amp.push_back(rng.uniform(0.5, 2.0));
    pha.push_back(rng.uniform(0.0, 2.0 * M_PI));
  }
  const int n = 16000;
  std::vector<double> d1(n), d2(n);
  for (int t = 0; t < n; ++t) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < tone_bins.size(); ++i) {
      const double w = 2.0 * M_PI * tone_bins[i] / cfg.nfft;
      a += amp[i] * std::sin(w * t + pha[i]);
      b += amp[i] * std::sin(w * (t - delay) + pha[i]);
    }
    d1[static_cast<std::size_t>(t)] = a;
    d2[static_cast<std::size_t>(t)] = b;
  }
  const Spectrogram s1 = stft(d1, cfg);
  const Spectrogram s2 = stft(d2, cfg);
  const RtfFrames rtf = estimate_rtf(s1, s2);
  double worst = 0.0;
  long checked = 0;
  for (int k : tone_bins) {
    const double want = -2.0 * M_PI * k * delay / cfg.nfft;
    for (int t = 0; t < rtf.frames; ++t) {
      if (!rtf.valid_at(t, k)) continue;
      double err = std::arg(rtf.at(t, k)) - want;
      while (err > M_PI) err -= 2.0 * M_PI;
      while (err < -M_PI) err += 2.0 * M_PI;
      worst = std::max(worst, std::abs(err));
      ++checked;
    }
  }
  return {checked > 0 && worst < 1e-2,
          fmt("%ld frame/bin phases checked, worst abs err %.2e rad", checked,
              worst)};
}

// 4. Simulated rooms decay at the requested rate, and an anechoic response
//    places the direct path at the exact propagation delay.
Outcome criterion4() {
  const auto start = std::chrono::steady_clock::now();
  const RoomConfig room = RoomConfig::preset("design");
  double rt_lo = 1e9, rt_hi = 0.0;
  for (double angle : {0.0, 40.0, -65.0}) {
    const Vec3 src = source_position(room, room.grid.index_of(angle));
    const ImpulseResponse h = image_source_rir(room, src, room.mic1);
    const double rt = rt60_schroeder(h);
    rt_lo = std::min(rt_lo, rt);
    rt_hi = std::max(rt_hi, rt);
  }

  RoomConfig anechoic = room;
  anechoic.rt60 = 0.0;
  const Vec3 c = anechoic.room_center();
  const ImpulseResponse h =
      image_source_rir(anechoic, {c[0], c[1] + 1.5, c[2]}, c);
  // A pulse at t0 puts phase -2 pi k t0 / N on bin k; the first few bins of a
  // 512-point transform stay inside (-pi, pi], so they read the delay back at
  // subsample resolution without unwrapping.
  std::vector<cd> spec(512);
  for (std::size_t i = 0; i < h.taps.size(); ++i) spec[i] = h.taps[i];
  fft_inplace(spec, false);
  double delay = 0.0;
  for (int k = 1; k <= 3; ++k) {
    delay += -std::arg(spec[static_cast<std::size_t>(k)]) * 512.0 /
             (2.0 * M_PI * k) / 3.0;
  }
  const double want = 1.5 / room.c * room.fs;  // 69.97 samples

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  const bool ok = rt_lo >= 0.85 * room.rt60 && rt_hi <= 1.15 * room.rt60 &&
                  std::abs(delay - want) < 0.05 && secs < 60.0;
  return {ok, fmt("RT60 in [%.3f, %.3f] s (target 0.500 +-15%%), direct path "
                  "%.3f samples (want %.3f), %.1f s",
                  rt_lo, rt_hi, delay, want, secs)};
}

// 5. SRP-PHAT nails the anechoic room and stays well above chance with
//    reverberation.
Outcome criterion5(const Workspace& w) {
  EvaluateSpec es;
  es.method = kMethodSrp;
  es.dataset = w.anechoic_dataset;
  es.out_dir = w.dir / "srp_anechoic";
  const EvalRecord anech = cmd_evaluate(es).record;

  es.dataset = w.eval_dataset;
  es.out_dir = w.dir / "srp_reverb";
  const EvalRecord reverb = cmd_evaluate(es).record;

  const double chance = 1.0 / 19.0;
  const bool ok = anech.accuracy >= 0.95 && reverb.accuracy >= 3.0 * chance;
  return {ok, fmt("anechoic %.1f%% (need >= 95%%), reverberant %.1f%% over "
                  "%d windows (need >= %.1f%%)",
                  100.0 * anech.accuracy, 100.0 * reverb.accuracy,
                  reverb.windows, 300.0 * chance)};
}

// 6. With one labeled window per direction the semi-supervised model beats
//    the supervised baseline trained on the same labels (median of 3 seeds,
//    identical budgets).
Outcome criterion6(const Workspace& w) {
  std::vector<double> vae, cnn;
  for (std::uint64_t s : kSeeds) {
    vae.push_back(trained_accuracy(w, kMethodVae, 19, s, kBudgetEpochs,
                                   w.dir / fmt("c6_vae_s%llu",
                                               (unsigned long long)s)));
    cnn.push_back(trained_accuracy(w, kMethodCnn, 19, s, kBudgetEpochs,
                                   w.dir / fmt("c6_cnn_s%llu",
                                               (unsigned long long)s)));
  }
  const double mv = median3(vae), mc = median3(cnn);
  return {mv > mc,
          fmt("19 labels: vae-ssl %.1f/%.1f/%.1f%% (median %.1f%%) vs cnn "
              "%.1f/%.1f/%.1f%% (median %.1f%%)",
              100 * vae[0], 100 * vae[1], 100 * vae[2], 100 * mv, 100 * cnn[0],
              100 * cnn[1], 100 * cnn[2], 100 * mc)};
}

// 7. With every window labeled the supervised baseline catches up to within
//    five points.
Outcome criterion7(const Workspace& w) {
  const double vae =
      trained_accuracy(w, kMethodVae, 0, 1, kBudgetEpochs, w.dir / "c7_vae");
  const double cnn =
      trained_accuracy(w, kMethodCnn, 0, 1, kBudgetEpochs, w.dir / "c7_cnn");
  return {cnn >= vae - 0.05,
          fmt("all labels: cnn %.1f%% vs vae-ssl %.1f%% (allowed gap 5 "
              "points)",
              100 * cnn, 100 * vae)};
}

// 8. The whole pipeline is reproducible: identical seeds give byte-identical
//    metrics tables.
Outcome criterion8() {
  PipelineSpec spec;
  spec.train.epochs = 2;
  spec.train.batch = kBudgetBatch;
  spec.train.lr = kBudgetLr;
  auto run = [&spec](const fs::path& dir) {
    spec.out_dir = dir;
    fs::remove_all(dir);
    return cmd_pipeline(spec);
  };
  const fs::path base = fs::temp_directory_path() / "reverbdoa_acceptance";
  const PipelineOutcome a = run(base / "rerun_a");
  const PipelineOutcome b = run(base / "rerun_b");

  std::vector<std::string> mismatched;
  auto compare = [&](const fs::path& pa, const fs::path& pb) {
    if (read_bytes(pa) != read_bytes(pb)) {
      mismatched.push_back(pa.filename().string());
    }
  };
  compare(a.results_csv_path, b.results_csv_path);
  long csvs = 1;
  for (const auto& entry : fs::directory_iterator(base / "rerun_a")) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("hist_", 0) == 0 || name.rfind("losses_", 0) == 0) {
      compare(entry.path(), base / "rerun_b" / name);
      ++csvs;
    }
  }
  return {mismatched.empty(),
          mismatched.empty()
              ? fmt("%ld metrics tables byte-identical across reruns", csvs)
              : "mismatch in " + mismatched.front()};
}

// 9. The zero-initialized labeled objective on a silent input reproduces its
//    closed form (constant Gaussian terms plus the uniform label prior).
Outcome criterion9() {
  ArchConfig arch;  // defaults: 32 x 128 input, 37 classes
  const ModelParams params = ModelParams::zeros(arch);
  Tensor x({1, arch.in_h, arch.in_w});
  Tensor eps({arch.M});
  Tape tape;
  const ModelNodes nodes = add_model(tape, params, false);
  const ObjectiveGraph g = begin_objective(tape, nodes, arch, x);
  const double c = tape.value(labeled_bound(tape, nodes, arch, g, 0, eps))[0];
  const double want =
      2048.0 * 1.8378770664093453 + std::log(37.0);  // 3767.582...
  return {std::abs(c - 3767.6) <= 0.1,
          fmt("objective %.4f, closed form %.4f, pinned window 3767.6 +- 0.1",
              c, want)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int number;
    const char* label;
    std::function<Outcome()> run;
  };

  // Optional arguments select a subset of criteria, e.g. `acceptance 1 4 9`.
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  auto selected = [&wanted](int n) {
    return wanted.empty() ||
           std::find(wanted.begin(), wanted.end(), n) != wanted.end();
  };

  Workspace w;
  try {
    w = prepare_workspace();
  } catch (const std::exception& e) {
    std::printf("[FAIL] workspace setup: %s\n", e.what());
    return 1;
  }

  const std::vector<Entry> entries = {
      {1, "autodiff matches finite differences", criterion1},
      {2, "factored unlabeled objective equals direct expectation",
       criterion2},
      {3, "RTF phase recovers a pure delay", criterion3},
      {4, "image-source RIRs hit the target decay and delay", criterion4},
      {5, "SRP-PHAT sanity on anechoic and reverberant rooms",
       [&w] { return criterion5(w); }},
      {6, "semi-supervised model wins the scarce-label comparison",
       [&w] { return criterion6(w); }},
      {7, "supervised baseline catches up with abundant labels",
       [&w] { return criterion7(w); }},
      {8, "end-to-end reruns are byte-identical", criterion8},
      {9, "zero-initialized objective matches its closed form", criterion9},
  };

  int failures = 0;
  int ran = 0;
  for (const Entry& entry : entries) {
    if (!selected(entry.number)) continue;
    ++ran;
    Outcome outcome;
    try {
      outcome = entry.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d: %s (%s)\n", outcome.ok ? "PASS" : "FAIL",
                entry.number, entry.label, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.ok) ++failures;
  }
  if (failures == 0) {
    std::printf("all %d criteria passed\n", ran);
  } else {
    std::printf("%d of %d criteria failed\n", failures, ran);
  }
  return failures == 0 ? 0 : 1;
}
