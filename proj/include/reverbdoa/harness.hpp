#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "reverbdoa/io.hpp"
#include "reverbdoa/metrics.hpp"
#include "reverbdoa/srp_phat.hpp"
#include "reverbdoa/training.hpp"

namespace reverbdoa {

// File-oriented pipeline stages shared by the command-line tool and the
// end-to-end tests. Every stage is a pure function of its inputs and writes
// deterministic bytes, so rerunning a stage with the same arguments
// reproduces its outputs exactly.

inline const char* kMethodVae = "vae-ssl";
inline const char* kMethodCnn = "cnn";
inline const char* kMethodSrp = "srp-phat";

// Default classifier-penalty weight by labeled budget; values outside the
// table fall back to 10.
inline double default_alpha(int J) {
  switch (J) {
    case 37:
      return 10.0;
    case 74:
      return 50.0;
    case 148:
      return 70.0;
    case 481:
      return 20.0;
    case 999:
      return 80.0;
    default:
      return 10.0;
  }
}

struct SimulateOutcome {
  fs::path sig_path, json_path;
};

inline SimulateOutcome cmd_simulate(const std::string& preset,
                                    std::uint64_t seed,
                                    const fs::path& out_dir) {
  const RoomConfig room = RoomConfig::preset(preset);
  const MicSignals sig = generate_room_dataset(room, seed);
  auto [sig_path, json_path] = save_dataset(out_dir, room, seed, sig);
  return {sig_path, json_path};
}

struct FeaturesOutcome {
  fs::path feat_path, json_path;
};

// Extracts windows from a stored dataset. stats_from names another feature
// sidecar whose normalization should be reused (evaluation data is scaled
// with training statistics).
inline FeaturesOutcome cmd_features(const fs::path& dataset_path,
                                    const fs::path& out_dir,
                                    const std::optional<fs::path>& stats_from =
                                        std::nullopt,
                                    int P = 32, int stride = 32) {
  const StoredDataset data = load_dataset(dataset_path);
  FeatureConfig cfg;
  cfg.P = P;
  cfg.stride = stride;
  std::optional<NormStats> reuse;
  if (stats_from) {
    reuse = load_features(*stats_from).set.norm;
  }
  const FeatureSet set = extract_features(data.signals, data.room.grid, cfg,
                                          reuse ? &*reuse : nullptr);
  auto [feat_path, json_path] =
      feature_paths(out_dir, data.room.name, data.seed);
  save_features(feat_path, json_path, set, data.room.name, data.seed);
  return {feat_path, json_path};
}

namespace detail {

inline std::vector<const InputSample*> pointers_to(
    const std::vector<InputSample>& v) {
  std::vector<const InputSample*> out;
  out.reserve(v.size());
  for (const InputSample& s : v) out.push_back(&s);
  return out;
}

inline std::vector<const InputSample*> labeled_pointers(
    const std::vector<InputSample>& v) {
  std::vector<const InputSample*> out;
  for (const InputSample& s : v) {
    if (s.label >= 0) out.push_back(&s);
  }
  return out;
}

// Splits a feature set into the J-window labeled subset and everything else.
// J == 0 selects every labeled window (the rest is then the mixed windows).
inline void split_features(const FeatureSet& set, int J, std::uint64_t seed,
                           std::vector<const InputSample*>& labeled,
                           std::vector<const InputSample*>& rest) {
  labeled.clear();
  rest.clear();
  if (J == 0) {
    for (const InputSample& s : set.samples) {
      (s.label >= 0 ? labeled : rest).push_back(&s);
    }
    return;
  }
  const std::vector<int> chosen = select_labeled_windows(set, J, seed);
  std::vector<std::uint8_t> is_chosen(set.samples.size(), 0);
  for (int i : chosen) is_chosen[static_cast<std::size_t>(i)] = 1;
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    (is_chosen[i] ? labeled : rest).push_back(&set.samples[i]);
  }
}

inline std::string losses_csv(const TrainReport& report) {
  std::string out =
      "epoch,labeled_sum,unlabeled_sum,classifier_sum,objective,"
      "objective_alpha,train_accuracy,val_accuracy\n";
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const EpochStats& s = report.epochs[e];
    out += std::to_string(e) + ',' + format_g17(s.labeled_sum) + ',' +
           format_g17(s.unlabeled_sum) + ',' + format_g17(s.classifier_sum) +
           ',' + format_g17(s.objective) + ',' +
           format_g17(s.objective_alpha) + ',' +
           format_g17(s.train_accuracy) + ',' + format_g17(s.val_accuracy) +
           '\n';
  }
  return out;
}

}  // namespace detail

struct TrainSpec {
  std::string method = kMethodVae;  // vae-ssl | cnn
  fs::path train_features;
  fs::path val_features;  // optional; empty keeps final-epoch parameters
  int J = 0;              // 0 = all labeled windows
  std::optional<double> alpha;
  TrainConfig train;
  fs::path out_dir;
};

struct TrainOutcome {
  fs::path params_path, manifest_path, losses_path;
  CheckpointMeta meta;
  TrainReport report;
};

inline TrainOutcome cmd_train(const TrainSpec& spec) {
  if (spec.method != kMethodVae && spec.method != kMethodCnn) {
    throw config_error("train: unknown method '" + spec.method + "'");
  }
  const StoredFeatures train_file = load_features(spec.train_features);
  const FeatureSet& set = train_file.set;

  ArchConfig arch;
  arch.in_h = set.P;
  arch.in_w = set.K;
  arch.T = set.grid.size();

  std::vector<const InputSample*> labeled, rest;
  detail::split_features(set, spec.J, spec.train.seed, labeled, rest);

  std::vector<InputSample> val_storage;
  std::vector<const InputSample*> validation;
  if (!spec.val_features.empty()) {
    StoredFeatures val_file = load_features(spec.val_features);
    if (val_file.set.grid != set.grid) {
      throw config_error("train: validation grid differs from training grid");
    }
    val_storage = std::move(val_file.set.samples);
    validation = detail::labeled_pointers(val_storage);
  }

  TrainConfig cfg = spec.train;
  const int J_effective = static_cast<int>(labeled.size());
  cfg.alpha = spec.alpha.value_or(default_alpha(J_effective));

  TrainResult result;
  if (spec.method == kMethodVae) {
    result = train_vae_ssl(labeled, rest, validation, arch, cfg);
  } else {
    result = train_classifier(labeled, validation, arch, cfg);
  }

  CheckpointMeta meta;
  meta.method = spec.method;
  meta.J = spec.J;
  meta.alpha = cfg.alpha;
  meta.seed = cfg.seed;
  meta.best_epoch = result.report.best_epoch;
  meta.best_val_accuracy = result.report.best_val_accuracy;
  meta.norm = set.norm;
  meta.train_features_digest = train_file.digest;

  const std::string stem = spec.method + "_" + train_file.preset + "_J" +
                           std::to_string(spec.J) + "_s" +
                           std::to_string(cfg.seed);
  auto [params_path, manifest_path] = checkpoint_paths(spec.out_dir, stem);
  save_checkpoint(params_path, manifest_path, result.params, meta);
  const fs::path losses_path = spec.out_dir / ("losses_" + stem + ".csv");
  write_text(losses_path, detail::losses_csv(result.report));
  return {params_path, manifest_path, losses_path, meta,
          std::move(result.report)};
}

struct AlphaSearchOutcome {
  double best_alpha = 0.0;
  fs::path summary_path;
  std::vector<std::pair<double, double>> val_accuracy_by_alpha;
};

// Trains once per candidate weight and keeps the one with the best validation
// accuracy (ties to the smaller weight).
inline AlphaSearchOutcome cmd_alpha_search(const TrainSpec& base,
                                           std::vector<double> alphas) {
  if (alphas.empty()) {
    for (int a = 10; a <= 100; a += 10) alphas.push_back(a);
  }
  if (base.val_features.empty()) {
    throw config_error("alpha-search: needs validation features");
  }
  AlphaSearchOutcome out;
  double best_acc = -1.0;
  for (double a : alphas) {
    TrainSpec spec = base;
    spec.alpha = a;
    spec.out_dir = base.out_dir / ("alpha_" + format_g17(a));
    const TrainOutcome t = cmd_train(spec);
    out.val_accuracy_by_alpha.emplace_back(a, t.meta.best_val_accuracy);
    if (t.meta.best_val_accuracy > best_acc) {
      best_acc = t.meta.best_val_accuracy;
      out.best_alpha = a;
    }
  }
  std::string csv = "alpha,best_val_accuracy\n";
  for (auto& [a, acc] : out.val_accuracy_by_alpha) {
    csv += format_g17(a) + ',' + format_g17(acc) + '\n';
  }
  fs::create_directories(base.out_dir);
  out.summary_path = base.out_dir / "alpha_search.csv";
  write_text(out.summary_path, csv);
  return out;
}

struct EvaluateSpec {
  std::string method = kMethodSrp;  // vae-ssl | cnn | srp-phat
  fs::path checkpoint;              // learned methods
  fs::path features;                // learned methods: evaluation windows
  fs::path dataset;                 // srp-phat: raw signals; also truth source
  fs::path out_dir;
  int P = 32, stride = 32;          // srp-phat windowing
};

struct EvaluateOutcome {
  EvalRecord record;
  fs::path record_path, hist_path;
};

inline EvaluateOutcome cmd_evaluate(const EvaluateSpec& spec) {
  EvalRecord rec;
  rec.method = spec.method;
  std::vector<int> est, truth;
  DoaGrid grid;

  if (spec.method == kMethodSrp) {
    const StoredDataset data = load_dataset(spec.dataset);
    grid = data.room.grid;
    rec.preset = data.room.name;
    StftConfig stft_cfg;
    const FramedStream framed = frame_recordings(data.signals, stft_cfg);
    const SteeringTable table =
        steering_delays(data.room.array_spacing, data.room.c, grid);
    const SrpPhatEngine engine(table, data.room.fs, stft_cfg.nfft);
    const std::vector<int> wins =
        srp_estimate_windows(framed.d1, framed.d2, engine, spec.P, spec.stride);
    const std::vector<int> wlabels =
        window_labels(framed.labels, spec.P, spec.stride);
    for (std::size_t w = 0; w < wins.size(); ++w) {
      if (wlabels[w] < 0) continue;
      est.push_back(wins[w]);
      truth.push_back(wlabels[w]);
    }
  } else if (spec.method == kMethodVae || spec.method == kMethodCnn) {
    auto [params, meta] = load_checkpoint(spec.checkpoint);
    if (meta.method != spec.method) {
      throw config_error("evaluate: checkpoint holds method '" + meta.method +
                         "', requested '" + spec.method + "'");
    }
    const StoredFeatures file = load_features(spec.features);
    grid = file.set.grid;
    rec.preset = file.preset;
    rec.J = meta.J;
    rec.alpha = meta.alpha;
    if (grid.size() != params.arch.T) {
      throw config_error("evaluate: grid size does not match model");
    }
    // When evaluating on the very features the model was trained from, hold
    // out the windows whose labels were used in training.
    std::vector<const InputSample*> eval_set;
    if (meta.train_features_digest == file.digest && meta.J > 0) {
      std::vector<const InputSample*> labeled, rest;
      detail::split_features(file.set, meta.J, meta.seed, labeled, rest);
      for (const InputSample* s : rest) {
        if (s->label >= 0) eval_set.push_back(s);
      }
    } else {
      eval_set = detail::labeled_pointers(file.set.samples);
    }
    if (eval_set.empty()) {
      throw degenerate_input_error("evaluate: no labeled evaluation windows");
    }
    detail::ClassifierEvaluator ev(params);
    for (const InputSample* s : eval_set) {
      est.push_back(ev.predict(s->x));
      truth.push_back(s->label);
    }
  } else {
    throw config_error("evaluate: unknown method '" + spec.method + "'");
  }

  rec.windows = static_cast<long long>(est.size());
  rec.mae_deg = mae_degrees(est, truth, grid);
  rec.accuracy = accuracy_fraction(est, truth);
  const DoaHistogram hist = estimate_histogram(est, truth, grid);

  fs::create_directories(spec.out_dir);
  const std::string stem =
      rec.method + "_" + rec.preset + "_" + std::to_string(rec.J);
  EvaluateOutcome out;
  out.record = rec;
  out.hist_path = spec.out_dir / ("hist_" + stem + ".csv");
  write_text(out.hist_path, histogram_csv(hist));
  out.record_path = spec.out_dir / ("eval_" + stem + ".json");
  write_json_file(out.record_path, json{{"format", "reverb-doa-eval"},
                                        {"method", rec.method},
                                        {"preset", rec.preset},
                                        {"J", rec.J},
                                        {"alpha", rec.alpha},
                                        {"windows", rec.windows},
                                        {"mae_deg", rec.mae_deg},
                                        {"accuracy", rec.accuracy}});
  return out;
}

struct ReportOutcome {
  fs::path csv_path, text_path;
  std::vector<EvalRecord> records;
};

// Collects eval_*.json records for one preset from a directory into the
// results table, ordered by labeled budget then method name.
inline ReportOutcome cmd_report(const fs::path& dir,
                                const std::string& preset) {
  std::vector<EvalRecord> records;
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  for (const fs::path& p : entries) {
    if (p.extension() != ".json" ||
        p.filename().string().rfind("eval_", 0) != 0) {
      continue;
    }
    const json j = parse_json_file(p);
    if (j.value("format", "") != "reverb-doa-eval") continue;
    if (j.at("preset").get<std::string>() != preset) continue;
    EvalRecord r;
    r.method = j.at("method").get<std::string>();
    r.preset = preset;
    r.J = j.at("J").get<int>();
    r.alpha = j.at("alpha").get<double>();
    r.windows = j.at("windows").get<long long>();
    r.mae_deg = j.at("mae_deg").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    records.push_back(r);
  }
  if (records.empty()) {
    throw io_error("report: no evaluation records for preset '" + preset +
                   "' in " + dir.string());
  }
  std::sort(records.begin(), records.end(),
            [](const EvalRecord& a, const EvalRecord& b) {
              if (a.J != b.J) return a.J < b.J;
              return a.method < b.method;
            });
  ReportOutcome out;
  out.records = records;
  out.csv_path = dir / ("results_" + preset + ".csv");
  out.text_path = dir / ("results_" + preset + ".txt");
  write_text(out.csv_path, results_csv(records));
  write_text(out.text_path, results_text(records));
  return out;
}

struct PipelineSpec {
  std::string preset = "desk";
  std::string val_preset = "desk-validation";
  std::uint64_t train_seed = 11;
  std::uint64_t val_seed = 12;
  std::uint64_t eval_seed = 13;
  int J = 19;  // 0 = all labeled windows
  std::optional<double> alpha;
  TrainConfig train;
  bool run_vae = true;
  bool run_cnn = true;
  bool run_srp = true;
  fs::path out_dir;
};

struct PipelineOutcome {
  std::vector<EvalRecord> records;
  fs::path results_csv_path;
};

// simulate -> features -> train -> evaluate -> report, end to end. The
// evaluation set is a fresh simulation of the same room (eval_seed), scaled
// with the training normalization.
inline PipelineOutcome cmd_pipeline(const PipelineSpec& spec) {
  const fs::path dir = spec.out_dir;
  const SimulateOutcome train_sim =
      cmd_simulate(spec.preset, spec.train_seed, dir);
  const SimulateOutcome val_sim =
      cmd_simulate(spec.val_preset, spec.val_seed, dir);
  const SimulateOutcome eval_sim =
      cmd_simulate(spec.preset, spec.eval_seed, dir);
  if (spec.eval_seed == spec.train_seed) {
    throw config_error("pipeline: evaluation seed must differ from training");
  }

  const FeaturesOutcome train_feat = cmd_features(train_sim.json_path, dir);
  const FeaturesOutcome val_feat =
      cmd_features(val_sim.json_path, dir, train_feat.json_path);
  // Distinct stems (seeds differ), so this cannot clobber the training file.
  const FeaturesOutcome eval_feat =
      cmd_features(eval_sim.json_path, dir, train_feat.json_path);

  std::vector<EvalRecord> records;
  auto run_learned = [&](const std::string& method) {
    TrainSpec ts;
    ts.method = method;
    ts.train_features = train_feat.json_path;
    ts.val_features = val_feat.json_path;
    ts.J = spec.J;
    ts.alpha = spec.alpha;
    ts.train = spec.train;
    ts.out_dir = dir;
    const TrainOutcome t = cmd_train(ts);
    EvaluateSpec es;
    es.method = method;
    es.checkpoint = t.manifest_path;
    es.features = eval_feat.json_path;
    es.out_dir = dir;
    records.push_back(cmd_evaluate(es).record);
  };
  if (spec.run_vae) run_learned(kMethodVae);
  if (spec.run_cnn) run_learned(kMethodCnn);
  if (spec.run_srp) {
    EvaluateSpec es;
    es.method = kMethodSrp;
    es.dataset = eval_sim.json_path;
    es.out_dir = dir;
    records.push_back(cmd_evaluate(es).record);
  }

  const ReportOutcome rep = cmd_report(dir, spec.preset);
  return {records, rep.csv_path};
}

}  // namespace reverbdoa
