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
#include <optional>
#include <ostream>
#include <string>

#include "gmtl/config.hpp"
#include "gmtl/selftest.hpp"
#include "gmtl/trainer.hpp"

namespace gmtl {

// Trains per `config`, writing config.txt, log.jsonl, checkpoints and
// metrics.json under config.out.
TrainResult cmd_train(const RunConfig& config,
                      const std::optional<std::filesystem::path>& resume = std::nullopt);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string split = "test";  // train, test or all
  int fold = -1;
  int batch = 4;
};

// Frames are resized to the checkpoint's training size and normalized with
// its stored statistics.
EvalResult cmd_eval(const EvalRequest& request);

struct InferRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::filesystem::path annotation;
  std::filesystem::path out_dir;
  std::string frame_id;  // defaults to the image file stem
};

struct InferOutput {
  std::filesystem::path overlay;     // same size as the input image
  std::filesystem::path prediction;  // {frame_id, edges: [{instrument_id, class_scores}]}
};

InferOutput cmd_infer(const InferRequest& request);

std::vector<SynthFrame> cmd_synth(const std::filesystem::path& root, const SynthConfig& config);

// Prints one line per check; returns the number of failures.
int cmd_selftest(const SelftestOptions& options, std::ostream& out);

}  // namespace gmtl
