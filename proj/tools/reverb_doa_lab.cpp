// Command-line front end for the localization toolkit. Subcommands mirror the
// pipeline stages: simulate -> features -> train/alpha-search -> evaluate ->
// report. Exit codes: 0 success, 2 configuration problem, 3 file problem,
// 4 numerical problem.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "reverbdoa/reverbdoa.hpp"

namespace {

using namespace reverbdoa;

// Flat or nested JSON config file support for --config: top-level keys apply
// to the app, one level of nesting addresses a subcommand by name.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool,
                        std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::FileError(std::string("config is not valid JSON: ") +
                           e.what());
    }
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }

  static void collect(const json& j, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& items) {
    if (!j.is_object()) {
      throw CLI::FileError("config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        collect(value, sub, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const json& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

bool is_full_scale(const std::string& preset) {
  return preset == "design" || preset == "validation" || preset == "test1" ||
         preset == "test2";
}

void require_scale_opt_in(const std::string& preset, bool full) {
  if (is_full_scale(preset) && !full) {
    throw config_error("preset '" + preset +
                       "' is a full-scale run; pass --full to confirm");
  }
}

std::string preset_of_features(const fs::path& p) {
  return load_features(p).preset;
}

std::string preset_of_dataset(const fs::path& p) {
  return load_dataset(p).room.name;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-microphone reverberant source localization lab"};
  app.require_subcommand(1);
  app.set_config("--config", "", "JSON file with defaults for any option");
  app.config_formatter(std::make_shared<JsonConfig>());

  bool full = false;
  int jobs = 1;
  app.add_flag("--full", full,
               "allow full-scale presets (design/validation/test1/test2)");
  app.add_option("--jobs", jobs, "worker threads (reserved; runs use 1)")
      ->check(CLI::PositiveNumber);

  // simulate
  auto* sim = app.add_subcommand("simulate", "render a room recording stream");
  std::string sim_preset = "desk";
  std::uint64_t sim_seed = 1;
  std::string sim_out = "runs";
  sim->add_option("--preset", sim_preset, "room preset")
      ->check(CLI::IsMember(RoomConfig::preset_names()));
  sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--out", sim_out, "output directory");

  // features
  auto* fea = app.add_subcommand("features", "extract phase-grid windows");
  std::string fea_dataset, fea_out = "runs", fea_stats;
  int fea_P = 32, fea_stride = 32;
  fea->add_option("--dataset", fea_dataset, "dataset .json or .sig path")
      ->required();
  fea->add_option("--out", fea_out, "output directory");
  fea->add_option("--stats", fea_stats,
                  "feature .json whose normalization should be reused");
  fea->add_option("--frames", fea_P, "frames per window");
  fea->add_option("--stride", fea_stride, "frames between window starts");

  // train
  auto* tra = app.add_subcommand("train", "fit a model on feature windows");
  TrainSpec train_spec;
  std::string tra_method = kMethodVae, tra_features, tra_val, tra_out = "runs";
  double tra_alpha = -1.0;
  tra->add_option("--method", tra_method, "vae-ssl or cnn")
      ->check(CLI::IsMember({kMethodVae, kMethodCnn}));
  tra->add_option("--features", tra_features, "training feature .json")
      ->required();
  tra->add_option("--val-features", tra_val, "validation feature .json");
  tra->add_option("--J", train_spec.J,
                  "labeled windows (multiple of grid size; 0 = all)");
  tra->add_option("--alpha", tra_alpha,
                  "classifier penalty weight (default depends on J)");
  tra->add_option("--seed", train_spec.train.seed, "training seed");
  tra->add_option("--epochs", train_spec.train.epochs, "training epochs");
  tra->add_option("--batch", train_spec.train.batch, "batch size");
  tra->add_option("--lr", train_spec.train.lr, "Adam learning rate");
  tra->add_option("--out", tra_out, "output directory");

  // alpha-search
  auto* als = app.add_subcommand(
      "alpha-search", "train over a set of penalty weights, keep the best");
  std::vector<double> als_alphas;
  std::string als_method = kMethodVae, als_features, als_val,
              als_out = "runs";
  TrainSpec als_spec;
  als->add_option("--alphas", als_alphas,
                  "candidate weights (default 10,20,...,100)")
      ->delimiter(',');
  als->add_option("--method", als_method, "vae-ssl or cnn")
      ->check(CLI::IsMember({kMethodVae, kMethodCnn}));
  als->add_option("--features", als_features, "training feature .json")
      ->required();
  als->add_option("--val-features", als_val, "validation feature .json")
      ->required();
  als->add_option("--J", als_spec.J, "labeled windows (0 = all)");
  als->add_option("--seed", als_spec.train.seed, "training seed");
  als->add_option("--epochs", als_spec.train.epochs, "training epochs");
  als->add_option("--batch", als_spec.train.batch, "batch size");
  als->add_option("--lr", als_spec.train.lr, "Adam learning rate");
  als->add_option("--out", als_out, "output directory");

  // evaluate
  auto* eva = app.add_subcommand("evaluate", "score a method on held-out data");
  std::string eva_method = kMethodSrp, eva_checkpoint, eva_features,
              eva_dataset, eva_out = "runs";
  int eva_P = 32, eva_stride = 32;
  eva->add_option("--method", eva_method, "vae-ssl, cnn or srp-phat")
      ->check(CLI::IsMember({kMethodVae, kMethodCnn, kMethodSrp}));
  eva->add_option("--checkpoint", eva_checkpoint,
                  "model manifest .json (learned methods)");
  eva->add_option("--features", eva_features,
                  "evaluation feature .json (learned methods)");
  eva->add_option("--dataset", eva_dataset, "dataset .json (srp-phat)");
  eva->add_option("--frames", eva_P, "frames per window (srp-phat)");
  eva->add_option("--stride", eva_stride, "window stride (srp-phat)");
  eva->add_option("--out", eva_out, "output directory");

  // report
  auto* rep = app.add_subcommand("report", "assemble the results table");
  std::string rep_dir = "runs", rep_preset = "desk";
  rep->add_option("--dir", rep_dir, "directory with eval_*.json records");
  rep->add_option("--preset", rep_preset, "preset to report on");

  // pipeline
  auto* pip = app.add_subcommand(
      "pipeline", "simulate, extract, train, evaluate and report in one go");
  PipelineSpec pip_spec;
  std::string pip_out = "runs";
  double pip_alpha = -1.0;
  pip->add_option("--preset", pip_spec.preset, "room preset")
      ->check(CLI::IsMember(RoomConfig::preset_names()));
  pip->add_option("--val-preset", pip_spec.val_preset,
                  "room preset for model selection");
  pip->add_option("--train-seed", pip_spec.train_seed, "training room seed");
  pip->add_option("--val-seed", pip_spec.val_seed, "validation room seed");
  pip->add_option("--eval-seed", pip_spec.eval_seed,
                  "held-out evaluation room seed");
  pip->add_option("--J", pip_spec.J,
                  "labeled windows (multiple of grid size; 0 = all)");
  pip->add_option("--alpha", pip_alpha,
                  "classifier penalty weight (default depends on J)");
  pip->add_option("--seed", pip_spec.train.seed, "training seed");
  pip->add_option("--epochs", pip_spec.train.epochs, "training epochs");
  pip->add_option("--batch", pip_spec.train.batch, "batch size");
  pip->add_option("--lr", pip_spec.train.lr, "Adam learning rate");
  pip->add_option("--out", pip_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      require_scale_opt_in(sim_preset, full);
      const SimulateOutcome out = cmd_simulate(sim_preset, sim_seed, sim_out);
      std::printf("wrote %s\n", out.sig_path.string().c_str());
      std::printf("wrote %s\n", out.json_path.string().c_str());
    } else if (*fea) {
      require_scale_opt_in(preset_of_dataset(fea_dataset), full);
      std::optional<fs::path> stats;
      if (!fea_stats.empty()) stats = fea_stats;
      const FeaturesOutcome out =
          cmd_features(fea_dataset, fea_out, stats, fea_P, fea_stride);
      std::printf("wrote %s\n", out.feat_path.string().c_str());
      std::printf("wrote %s\n", out.json_path.string().c_str());
    } else if (*tra) {
      require_scale_opt_in(preset_of_features(tra_features), full);
      train_spec.method = tra_method;
      train_spec.train_features = tra_features;
      if (!tra_val.empty()) train_spec.val_features = tra_val;
      if (tra_alpha >= 0.0) train_spec.alpha = tra_alpha;
      train_spec.out_dir = tra_out;
      const TrainOutcome out = cmd_train(train_spec);
      std::printf("wrote %s\n", out.params_path.string().c_str());
      std::printf("wrote %s\n", out.manifest_path.string().c_str());
      std::printf("wrote %s\n", out.losses_path.string().c_str());
      std::printf("best epoch %d, validation accuracy %.4f\n",
                  out.meta.best_epoch, out.meta.best_val_accuracy);
    } else if (*als) {
      require_scale_opt_in(preset_of_features(als_features), full);
      als_spec.method = als_method;
      als_spec.train_features = als_features;
      als_spec.val_features = als_val;
      als_spec.out_dir = als_out;
      const AlphaSearchOutcome out = cmd_alpha_search(als_spec, als_alphas);
      std::printf("wrote %s\n", out.summary_path.string().c_str());
      std::printf("best alpha %g\n", out.best_alpha);
    } else if (*eva) {
      EvaluateSpec spec;
      spec.method = eva_method;
      spec.out_dir = eva_out;
      spec.P = eva_P;
      spec.stride = eva_stride;
      if (eva_method == kMethodSrp) {
        if (eva_dataset.empty()) {
          throw config_error("evaluate: srp-phat needs --dataset");
        }
        require_scale_opt_in(preset_of_dataset(eva_dataset), full);
        spec.dataset = eva_dataset;
      } else {
        if (eva_checkpoint.empty() || eva_features.empty()) {
          throw config_error(
              "evaluate: learned methods need --checkpoint and --features");
        }
        require_scale_opt_in(preset_of_features(eva_features), full);
        spec.checkpoint = eva_checkpoint;
        spec.features = eva_features;
      }
      const EvaluateOutcome out = cmd_evaluate(spec);
      std::printf("wrote %s\n", out.record_path.string().c_str());
      std::printf("wrote %s\n", out.hist_path.string().c_str());
      std::printf("%s on %s: windows %lld, mae %.3f deg, accuracy %.2f%%\n",
                  out.record.method.c_str(), out.record.preset.c_str(),
                  out.record.windows, out.record.mae_deg,
                  100.0 * out.record.accuracy);
    } else if (*rep) {
      const ReportOutcome out = cmd_report(rep_dir, rep_preset);
      std::printf("%s", results_text(out.records).c_str());
      std::printf("wrote %s\n", out.csv_path.string().c_str());
      std::printf("wrote %s\n", out.text_path.string().c_str());
    } else if (*pip) {
      require_scale_opt_in(pip_spec.preset, full);
      require_scale_opt_in(pip_spec.val_preset, full);
      if (pip_alpha >= 0.0) pip_spec.alpha = pip_alpha;
      pip_spec.out_dir = pip_out;
      const PipelineOutcome out = cmd_pipeline(pip_spec);
      std::printf("%s", results_text(out.records).c_str());
      std::printf("wrote %s\n", out.results_csv_path.string().c_str());
    }
  } catch (const config_error& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const io_error& e) {
    std::fprintf(stderr, "file error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "file error: %s\n", e.what());
    return 3;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  }
  return 0;
}
