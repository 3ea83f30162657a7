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
#include <string>
#include <vector>

#include "gmtl/trainer.hpp"

namespace gmtl {

enum class Precision { kFixed, kFast };

Precision parse_precision(const std::string& s);
std::string to_string(Precision p);
// Reads GLORE_MTL_PRECISION; `fallback` when unset.
Precision precision_from_env(Precision fallback);
// fixed pins BLAS to one thread so reductions keep their order.
void apply_precision(Precision p);

// Everything a train run needs. Serialized as flat `key = value` lines;
// `#` starts a comment.
struct RunConfig {
  TrainConfig train;
  std::string data;
  std::string out = "runs/latest";
  Precision precision = Precision::kFixed;
  int64_t height = kModelHeight;
  int64_t width = kModelWidth;
  bool strict_size = false;
  std::string train_split = "train";  // train or all
  std::string val_split = "test";    // train, test, all or none
  int fold = -1;                   // -1: standard split, 0..3: cross-validation fold
  std::string encoder_weights;     // optional pretrained encoder checkpoint
  bool allow_random_encoder = true;

  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;
  std::string get(const std::string& key) const;

  std::string to_text() const;
  static RunConfig parse(const std::string& text, const std::string& origin);
  static RunConfig load(const std::filesystem::path& path);

  SplitSpec split_spec() const;
  void validate() const;
};

}  // namespace gmtl
