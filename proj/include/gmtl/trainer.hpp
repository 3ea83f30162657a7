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

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gmtl/datakit.hpp"
#include "gmtl/model.hpp"
#include "gmtl/mtlopt.hpp"

namespace gmtl {

struct TrainConfig {
  Regime regime = Regime::kS;
  ModelConfig model;
  LrSchedule schedule;
  AdamConfig adam;
  int epochs = 130;           // joint run (V, KD) and S stage A
  int stage_b_epochs = -1;    // S stage B; -1 uses `epochs`
  int teacher_epochs = -1;    // KD teacher; -1 uses `epochs`
  int batch = 4;
  double alpha = 0.4;
  uint64_t seed = 0;
  int eval_every = 0;         // 0: evaluate only when a stage ends
  int patience = 0;           // stop after this many evals without a lower val loss; 0 disables
  double target_p_acc = 0;    // stop a segmentation stage once reached; 0 disables
  double target_acc = 0;      // stop a scene-graph stage once reached; 0 disables
  int checkpoint_every = 10;  // plus every stage end

  void validate() const;
};

// One preprocessed, channel-normalized training frame.
struct Example {
  std::string id;
  SceneSample sample;
  std::vector<int32_t> mask;
};

std::vector<Example> make_examples(const std::vector<Frame>& frames, const ChannelStats& stats);

struct EvalResult {
  SegMetrics seg;
  SgMetrics sg;
  double l_seg = 0;
  double l_sg = 0;
  int64_t edges = 0;
};

// Eval-mode forward over every example; no gradients.
EvalResult evaluate(MultiTaskModel& model, const std::vector<Example>& examples, int batch);

// {miou, per_class_iou, p_acc, acc, map, recall}
std::string metrics_json(const EvalResult& r);

struct EpochRecord {
  std::string stage;  // teacher, joint, A or B
  int epoch = 0;
  double lr = 0;
  double l_seg = 0;
  double l_sg = 0;
  double l_kld = 0;
  double total = 0;
  std::optional<EvalResult> val;

  std::string to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  EvalResult final_eval;
  std::string digest_before_b;  // S only: hash of w_sh ‖ w_seg when stage B starts
  std::string digest_after_b;
};

// Runs the configured regime, writing log.jsonl, checkpoints and
// metrics.json into out_dir. A resume checkpoint continues the recorded
// stage; a completed stage-A checkpoint skips straight to stage B.
class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<Example> train, std::vector<Example> val,
          ChannelStats stats, std::filesystem::path out_dir);

  TrainResult run(const std::optional<std::filesystem::path>& resume = std::nullopt);

  MultiTaskModel& model() { return *model_; }
  const TrainConfig& config() const { return config_; }

  // Called after every epoch, mainly for progress output.
  std::function<void(const EpochRecord&)> on_epoch;

 private:
  void run_teacher(int start_epoch, TrainResult& result);
  void run_joint(int start_epoch, TrainResult& result);
  void run_stage_a(int start_epoch, TrainResult& result);
  void run_stage_b(int start_epoch, TrainResult& result);

  // Returns true when the stage should stop early.
  bool finish_epoch(EpochRecord& rec, const std::function<EvalResult()>& eval, int budget,
                    bool seg_stage, bool sg_stage, const std::string& stage,
                    TrainResult& result);
  void save(const std::string& stage, int epochs_done, bool complete,
            const std::filesystem::path& path) const;
  std::vector<std::vector<size_t>> batches(uint64_t stream) const;
  std::vector<int32_t> batch_mask(const std::vector<size_t>& idx) const;
  std::vector<const SceneSample*> batch_samples(const std::vector<size_t>& idx) const;

  TrainConfig config_;
  std::vector<Example> train_;
  std::vector<Example> val_;
  ChannelStats stats_;
  std::filesystem::path out_dir_;
  std::unique_ptr<MultiTaskModel> model_;
  std::unique_ptr<MultiTaskModel> teacher_;
  Adam adam_;
  double best_val_loss_ = 0;
  int evals_since_best_ = -1;  // -1 until the first evaluation of a stage
};

// Checkpoint helpers shared with the CLI.
// height/width record the training input size when positive.
void save_model(const MultiTaskModel& model, const ChannelStats& stats,
                const std::filesystem::path& path, int64_t height = 0, int64_t width = 0);
// Rebuilds a model from a checkpoint written by the trainer.
struct LoadedModel {
  std::unique_ptr<MultiTaskModel> model;
  ChannelStats stats;
  Checkpoint checkpoint;
};
LoadedModel load_model(const std::filesystem::path& path);

void put_model_meta(Checkpoint& ck, const ModelConfig& config, const ChannelStats& stats);
ModelConfig model_config_from(const Checkpoint& ck);
ChannelStats stats_from(const Checkpoint& ck);

}  // namespace gmtl
