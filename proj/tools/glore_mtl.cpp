/*
 * Copyright 2026 The glore-mtl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "gmtl/commands.hpp"
#include "gmtl/error.hpp"
#include "gmtl/log.hpp"

namespace {

using namespace gmtl;

// Flag -> config key for every train option that maps onto RunConfig.
const std::vector<std::pair<std::string, std::string>> kTrainFlags = {
    {"--regime", "regime"},
    {"--variant", "variant"},
    {"--edge-mode", "edge_mode"},
    {"--alpha", "alpha"},
    {"--epochs", "epochs"},
    {"--stage-b-epochs", "stage_b_epochs"},
    {"--teacher-epochs", "teacher_epochs"},
    {"--batch", "batch"},
    {"--lr", "lr"},
    {"--seed", "seed"},
    {"--data", "data"},
    {"--out", "out"},
    {"--precision", "precision"},
    {"--height", "height"},
    {"--width", "width"},
    {"--train-split", "train_split"},
    {"--val-split", "val_split"},
    {"--fold", "fold"},
    {"--eval-every", "eval_every"},
    {"--patience", "patience"},
    {"--target-p-acc", "target_p_acc"},
    {"--target-acc", "target_acc"},
    {"--checkpoint-every", "checkpoint_every"},
    {"--encoder-weights", "encoder_weights"},
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint instrument segmentation and tool-tissue interaction detection"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "Only print errors");
  app.add_flag("-v,--verbose", verbose, "Print per-epoch progress");

  // train
  auto* train = app.add_subcommand("train", "Train a model under the V, KD or S regime");
  std::string config_path, resume;
  std::map<std::string, std::string> values;
  std::vector<std::string> overrides;
  bool sgfseg = false;
  train->add_option("--config", config_path, "key = value config file (lowest precedence)")
      ->check(CLI::ExistingFile);
  for (const auto& [flag, key] : kTrainFlags) {
    train->add_option(flag, values[key], "config key '" + key + "'");
  }
  train->add_flag("--sgfseg", sgfseg, "Inject scene-graph edge features into the c5 GloRe unit");
  train->add_option("--set", overrides, "Any config key as KEY=VALUE (repeatable)");
  train->add_option("--resume", resume, "Checkpoint to continue from");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  EvalRequest eval_req;
  std::string eval_out;
  eval->add_option("--checkpoint", eval_req.checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", eval_req.data, "Dataset root")->required();
  eval->add_option("--split", eval_req.split, "train, test or all")->capture_default_str();
  eval->add_option("--fold", eval_req.fold, "-1 for the standard split, else 0..3")->capture_default_str();
  eval->add_option("--batch", eval_req.batch, "Evaluation batch size")->capture_default_str();
  eval->add_option("--out", eval_out, "Also write the metrics JSON here");

  // infer
  auto* infer = app.add_subcommand("infer", "Segment one image and score its interactions");
  InferRequest infer_req;
  infer_req.out_dir = ".";
  infer->add_option("--checkpoint", infer_req.checkpoint, "Model checkpoint")->required();
  infer->add_option("--image", infer_req.image, "RGB PNG")->required();
  infer->add_option("--annotation", infer_req.annotation, "Scene annotation JSON")->required();
  infer->add_option("--out", infer_req.out_dir, "Output directory")->capture_default_str();
  infer->add_option("--frame-id", infer_req.frame_id, "Identifier written to the prediction");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  SynthConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Dataset root to create")->required();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();
  synth->add_option("--frames", synth_cfg.n_frames)->capture_default_str();
  synth->add_option("--height", synth_cfg.height)->capture_default_str();
  synth->add_option("--width", synth_cfg.width)->capture_default_str();
  synth->add_option("--sequences", synth_cfg.sequences, "Sequence numbers to fill")->capture_default_str();

  // selftest
  auto* selftest = app.add_subcommand("selftest", "Run the built-in verification suites");
  SelftestOptions st_opts;
  bool skip_training = false;
  selftest->add_option("--inject-fault", st_opts.fault_kernel,
                       "Perturb one kernel's analytic gradient (glore, glore_injection, "
                       "attention, edge_readout)");
  selftest->add_flag("--skip-training", skip_training, "Skip the short training run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::kUsage);
  }
  set_log_level(quiet ? LogLevel::kQuiet : (verbose ? LogLevel::kInfo : LogLevel::kWarn));

  try {
    if (*train) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
      cfg.precision = precision_from_env(cfg.precision);
      for (const auto& [flag, key] : kTrainFlags) {
        if (train->count(flag) > 0) cfg.set(key, values[key]);
      }
      if (sgfseg) cfg.set("sgfseg", "true");
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      const TrainResult r = cmd_train(cfg, resume.empty() ? std::nullopt
                                                          : std::optional<std::filesystem::path>(resume));
      if (!quiet) std::cout << metrics_json(r.final_eval) << "\n";
    } else if (*eval) {
      apply_precision(precision_from_env(Precision::kFixed));
      const std::string json = metrics_json(cmd_eval(eval_req));
      if (!eval_out.empty()) write_text(eval_out, json + "\n");
      std::cout << json << "\n";
    } else if (*infer) {
      apply_precision(precision_from_env(Precision::kFixed));
      const InferOutput out = cmd_infer(infer_req);
      if (!quiet) std::cout << out.overlay.string() << "\n" << out.prediction.string() << "\n";
    } else if (*synth) {
      const auto frames = cmd_synth(synth_out, synth_cfg);
      if (!quiet) std::cout << "wrote " << frames.size() << " frames to " << synth_out << "\n";
    } else if (*selftest) {
      apply_precision(precision_from_env(Precision::kFixed));
      st_opts.include_training = !skip_training;
      const int failures = cmd_selftest(st_opts, std::cout);
      std::cout << (failures ? std::to_string(failures) + " check(s) failed" : "all checks passed")
                << "\n";
      return failures ? static_cast<int>(ErrorKind::kNumerical) : 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  }
  return 0;
}
