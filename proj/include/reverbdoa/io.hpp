#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "reverbdoa/errors.hpp"
#include "reverbdoa/features.hpp"
#include "reverbdoa/networks.hpp"
#include "reverbdoa/room.hpp"

namespace reverbdoa {

namespace fs = std::filesystem;
using nlohmann::json;

// Raw sample containers are little-endian float32 (signals, features) or
// float64 (parameters); everything structured lives in JSON sidecars.

inline void write_bytes(const fs::path& path, const void* data,
                        std::size_t n) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open for writing: " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw io_error("write failed: " + path.string());
}

inline std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw io_error("cannot open: " + path.string());
  const std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(n));
  f.read(buf.data(), n);
  if (!f) throw io_error("read failed: " + path.string());
  return buf;
}

inline void write_f32(const fs::path& path, const std::vector<double>& v) {
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  write_bytes(path, f.data(), f.size() * sizeof(float));
}

inline void append_f32(std::vector<float>& out, const std::vector<double>& v) {
  out.reserve(out.size() + v.size());
  for (double x : v) out.push_back(static_cast<float>(x));
}

inline std::vector<double> read_f32(const fs::path& path) {
  const std::vector<char> raw = read_bytes(path);
  if (raw.size() % sizeof(float) != 0) {
    throw io_error("file size not a multiple of 4: " + path.string());
  }
  const std::size_t n = raw.size() / sizeof(float);
  std::vector<double> out(n);
  const float* p = reinterpret_cast<const float*>(raw.data());
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(p[i]);
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw io_error("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
  const std::vector<char> raw = read_bytes(path);
  return std::string(raw.begin(), raw.end());
}

inline json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw io_error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline std::string digest_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

// ---- room config and dataset ----

inline json to_json(const DoaGrid& g) {
  return json{{"lo_deg", g.lo_deg}, {"step_deg", g.step_deg}, {"count", g.count}};
}

inline DoaGrid grid_from_json(const json& j) {
  DoaGrid g;
  g.lo_deg = j.at("lo_deg").get<double>();
  g.step_deg = j.at("step_deg").get<double>();
  g.count = j.at("count").get<int>();
  if (g.count < 2 || !(g.step_deg > 0.0)) {
    throw io_error("stored doa grid is malformed");
  }
  return g;
}

inline json to_json(const RoomConfig& r) {
  return json{{"name", r.name},
              {"dims", r.dims},
              {"rt60", r.rt60},
              {"c", r.c},
              {"fs", r.fs},
              {"mic1", r.mic1},
              {"mic2", r.mic2},
              {"array_spacing", r.array_spacing},
              {"source_range", r.source_range},
              {"grid", to_json(r.grid)},
              {"snr_db", r.snr_db},
              {"realizations", r.realizations},
              {"seconds", r.seconds}};
}

inline RoomConfig room_from_json(const json& j) {
  RoomConfig r;
  r.name = j.at("name").get<std::string>();
  r.dims = j.at("dims").get<Vec3>();
  r.rt60 = j.at("rt60").get<double>();
  r.c = j.at("c").get<double>();
  r.fs = j.at("fs").get<double>();
  r.mic1 = j.at("mic1").get<Vec3>();
  r.mic2 = j.at("mic2").get<Vec3>();
  r.array_spacing = j.at("array_spacing").get<double>();
  r.source_range = j.at("source_range").get<double>();
  r.grid = grid_from_json(j.at("grid"));
  r.snr_db = j.at("snr_db").get<double>();
  r.realizations = j.at("realizations").get<int>();
  r.seconds = j.at("seconds").get<double>();
  return r;
}

struct StoredDataset {
  RoomConfig room;
  std::uint64_t seed = 0;
  MicSignals signals;
  fs::path sig_path;
};

// <name>_<seed>.sig holds channel 1 then channel 2 as float32; the JSON
// sidecar of the same stem carries the room settings and the label spans.
inline std::pair<fs::path, fs::path> dataset_paths(const fs::path& dir,
                                                   const std::string& name,
                                                   std::uint64_t seed) {
  const std::string stem = name + "_" + std::to_string(seed);
  return {dir / (stem + ".sig"), dir / (stem + ".json")};
}

inline std::pair<fs::path, fs::path> save_dataset(const fs::path& dir,
                                                  const RoomConfig& room,
                                                  std::uint64_t seed,
                                                  const MicSignals& sig) {
  fs::create_directories(dir);
  auto [sig_path, json_path] = dataset_paths(dir, room.name, seed);
  std::vector<float> raw;
  append_f32(raw, sig.d1);
  append_f32(raw, sig.d2);
  write_bytes(sig_path, raw.data(), raw.size() * sizeof(float));

  json spans = json::array();
  for (const LabelSpan& s : sig.spans) {
    spans.push_back({{"begin", s.begin}, {"end", s.end}, {"doa", s.doa_index}});
  }
  json j = {{"format", "reverb-doa-dataset"},
            {"version", 1},
            {"seed", seed},
            {"samples_per_channel", sig.d1.size()},
            {"channels", 2},
            {"room", to_json(room)},
            {"spans", spans}};
  write_json_file(json_path, j);
  return {sig_path, json_path};
}

inline StoredDataset load_dataset(const fs::path& path) {
  fs::path json_path = path;
  if (json_path.extension() == ".sig") json_path.replace_extension(".json");
  const json j = parse_json_file(json_path);
  if (j.value("format", "") != "reverb-doa-dataset") {
    throw io_error("not a dataset sidecar: " + json_path.string());
  }
  StoredDataset d;
  d.room = room_from_json(j.at("room"));
  d.seed = j.at("seed").get<std::uint64_t>();
  d.sig_path = json_path;
  d.sig_path.replace_extension(".sig");
  const auto n = j.at("samples_per_channel").get<std::size_t>();
  std::vector<double> raw = read_f32(d.sig_path);
  if (raw.size() != 2 * n) {
    throw io_error("signal file length does not match sidecar: " +
                   d.sig_path.string());
  }
  d.signals.fs = d.room.fs;
  d.signals.d1.assign(raw.begin(), raw.begin() + static_cast<long>(n));
  d.signals.d2.assign(raw.begin() + static_cast<long>(n), raw.end());
  for (const json& s : j.at("spans")) {
    d.signals.spans.push_back({s.at("begin").get<long long>(),
                               s.at("end").get<long long>(),
                               s.at("doa").get<int>()});
  }
  return d;
}

// ---- feature files ----

struct StoredFeatures {
  FeatureSet set;
  std::string preset;
  std::uint64_t seed = 0;
  std::string digest;  // digest of the raw phase grid bytes
};

inline std::pair<fs::path, fs::path> feature_paths(const fs::path& dir,
                                                   const std::string& name,
                                                   std::uint64_t seed) {
  const std::string stem = name + "_" + std::to_string(seed) + "_features";
  return {dir / (stem + ".feat"), dir / (stem + ".json")};
}

inline std::pair<fs::path, fs::path> save_features(const fs::path& feat_path,
                                                   const fs::path& json_path,
                                                   const FeatureSet& set,
                                                   const std::string& preset,
                                                   std::uint64_t seed) {
  fs::create_directories(feat_path.parent_path());
  std::vector<float> raw;
  json labels = json::array();
  for (const InputSample& s : set.samples) {
    append_f32(raw, s.x.values);
    labels.push_back(s.label);
  }
  write_bytes(feat_path, raw.data(), raw.size() * sizeof(float));
  const std::string digest = digest_hex(
      std::string(reinterpret_cast<const char*>(raw.data()),
                  raw.size() * sizeof(float)));
  json j = {{"format", "reverb-doa-features"},
            {"version", 1},
            {"preset", preset},
            {"seed", seed},
            {"P", set.P},
            {"K", set.K},
            {"stride", set.stride},
            {"total_frames", set.total_frames},
            {"grid", to_json(set.grid)},
            {"norm", {{"lo", set.norm.lo},
                      {"hi", set.norm.hi},
                      {"degenerate", set.norm.degenerate}}},
            {"count", set.samples.size()},
            {"labels", labels},
            {"digest", digest}};
  write_json_file(json_path, j);
  return {feat_path, json_path};
}

inline StoredFeatures load_features(const fs::path& path) {
  fs::path json_path = path;
  if (json_path.extension() == ".feat") json_path.replace_extension(".json");
  const json j = parse_json_file(json_path);
  if (j.value("format", "") != "reverb-doa-features") {
    throw io_error("not a feature sidecar: " + json_path.string());
  }
  StoredFeatures f;
  f.preset = j.at("preset").get<std::string>();
  f.seed = j.at("seed").get<std::uint64_t>();
  f.digest = j.at("digest").get<std::string>();
  f.set.P = j.at("P").get<int>();
  f.set.K = j.at("K").get<int>();
  f.set.stride = j.at("stride").get<int>();
  f.set.total_frames = j.at("total_frames").get<long long>();
  f.set.grid = grid_from_json(j.at("grid"));
  f.set.norm.lo = j.at("norm").at("lo").get<double>();
  f.set.norm.hi = j.at("norm").at("hi").get<double>();
  f.set.norm.degenerate = j.at("norm").at("degenerate").get<bool>();
  const auto count = j.at("count").get<std::size_t>();
  const auto labels = j.at("labels").get<std::vector<int>>();
  if (labels.size() != count) {
    throw io_error("feature sidecar label count mismatch: " +
                   json_path.string());
  }
  fs::path feat_path = json_path;
  feat_path.replace_extension(".feat");
  std::vector<double> raw = read_f32(feat_path);
  const std::size_t per = static_cast<std::size_t>(f.set.P) *
                          static_cast<std::size_t>(f.set.K);
  if (raw.size() != per * count) {
    throw io_error("feature file length does not match sidecar: " +
                   feat_path.string());
  }
  f.set.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    InputSample& s = f.set.samples[i];
    s.x = Tensor({1, f.set.P, f.set.K});
    std::copy(raw.begin() + static_cast<long>(i * per),
              raw.begin() + static_cast<long>((i + 1) * per),
              s.x.values.begin());
    s.label = labels[i];
    s.normalized = true;  // feature files always store normalized grids
  }
  return f;
}

// ---- checkpoints ----

struct CheckpointMeta {
  std::string method;  // "vae-ssl" or "cnn"
  int J = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  NormStats norm;
  std::string train_features_digest;
};

inline std::pair<fs::path, fs::path> checkpoint_paths(const fs::path& dir,
                                                      const std::string& stem) {
  return {dir / (stem + ".params"), dir / (stem + ".json")};
}

inline void save_checkpoint(const fs::path& params_path,
                            const fs::path& json_path,
                            const ModelParams& params,
                            const CheckpointMeta& meta) {
  fs::create_directories(params_path.parent_path());
  std::vector<double> raw;
  raw.reserve(static_cast<std::size_t>(params.parameter_count()));
  json tensors = json::array();
  for (auto& [name, t] : params.named_tensors()) {
    tensors.push_back({{"name", name},
                       {"shape", t->shape},
                       {"offset", raw.size()},
                       {"numel", t->numel()}});
    raw.insert(raw.end(), t->values.begin(), t->values.end());
  }
  write_bytes(params_path, raw.data(), raw.size() * sizeof(double));
  const json arch = {{"in_h", params.arch.in_h},
                     {"in_w", params.arch.in_w},
                     {"conv_channels", params.arch.conv_channels},
                     {"hidden", params.arch.hidden},
                     {"T", params.arch.T},
                     {"M", params.arch.M}};
  json j = {{"format", "reverb-doa-checkpoint"},
            {"version", 1},
            {"arch", arch},
            {"arch_digest", params.arch.digest()},
            {"tensors", tensors},
            {"method", meta.method},
            {"J", meta.J},
            {"alpha", meta.alpha},
            {"seed", meta.seed},
            {"best_epoch", meta.best_epoch},
            {"best_val_accuracy", meta.best_val_accuracy},
            {"norm", {{"lo", meta.norm.lo},
                      {"hi", meta.norm.hi},
                      {"degenerate", meta.norm.degenerate}}},
            {"train_features_digest", meta.train_features_digest}};
  write_json_file(json_path, j);
}

inline std::pair<ModelParams, CheckpointMeta> load_checkpoint(
    const fs::path& path) {
  fs::path json_path = path;
  if (json_path.extension() == ".params") json_path.replace_extension(".json");
  const json j = parse_json_file(json_path);
  if (j.value("format", "") != "reverb-doa-checkpoint") {
    throw io_error("not a checkpoint manifest: " + json_path.string());
  }
  ArchConfig arch;
  arch.in_h = j.at("arch").at("in_h").get<int>();
  arch.in_w = j.at("arch").at("in_w").get<int>();
  arch.conv_channels = j.at("arch").at("conv_channels").get<int>();
  arch.hidden = j.at("arch").at("hidden").get<int>();
  arch.T = j.at("arch").at("T").get<int>();
  arch.M = j.at("arch").at("M").get<int>();
  ModelParams params = ModelParams::zeros(arch);

  fs::path params_path = json_path;
  params_path.replace_extension(".params");
  const std::vector<char> raw = read_bytes(params_path);
  if (raw.size() % sizeof(double) != 0) {
    throw io_error("parameter file size not a multiple of 8: " +
                   params_path.string());
  }
  const double* data = reinterpret_cast<const double*>(raw.data());
  const std::size_t total = raw.size() / sizeof(double);

  auto named = params.named_tensors();
  const json& tensors = j.at("tensors");
  if (tensors.size() != named.size()) {
    throw io_error("checkpoint tensor count mismatch: " + json_path.string());
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const json& tj = tensors[i];
    auto& [name, t] = named[i];
    if (tj.at("name").get<std::string>() != name ||
        tj.at("shape").get<std::vector<int>>() != t->shape) {
      throw io_error("checkpoint tensor '" + name +
                     "' does not match architecture");
    }
    const auto offset = tj.at("offset").get<std::size_t>();
    const auto numel = tj.at("numel").get<std::size_t>();
    if (numel != static_cast<std::size_t>(t->numel()) ||
        offset + numel > total) {
      throw io_error("checkpoint tensor '" + name + "' out of bounds");
    }
    std::copy(data + offset, data + offset + numel, t->values.begin());
  }

  CheckpointMeta meta;
  meta.method = j.at("method").get<std::string>();
  meta.J = j.at("J").get<int>();
  meta.alpha = j.at("alpha").get<double>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.best_epoch = j.at("best_epoch").get<int>();
  meta.best_val_accuracy = j.at("best_val_accuracy").get<double>();
  meta.norm.lo = j.at("norm").at("lo").get<double>();
  meta.norm.hi = j.at("norm").at("hi").get<double>();
  meta.norm.degenerate = j.at("norm").at("degenerate").get<bool>();
  meta.train_features_digest = j.at("train_features_digest").get<std::string>();
  return {std::move(params), meta};
}

}  // namespace reverbdoa
