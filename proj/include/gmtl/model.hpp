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

#include <memory>
#include <optional>
#include <vector>

#include "gmtl/backbone.hpp"
#include "gmtl/glore.hpp"
#include "gmtl/mtlopt.hpp"
#include "gmtl/scenegraph.hpp"
#include "gmtl/seghead.hpp"

namespace gmtl {

struct ModelConfig {
  SegVariant variant = SegVariant::kMSLRGR;
  EdgeMode edge_mode = EdgeMode::kGisf;
  bool sgfseg = false;  // scene-graph edge features injected into the c5 GloRe unit
  uint64_t seed = 0;
  double dropout = 0.1;
  bool semantic_trainable = false;
};

// Per-frame inputs of the scene-graph head that stay fixed once the encoder
// and segmentation head are frozen.
struct FrozenFrameFeatures {
  Tensor box_features;  // M×512
  Tensor c5;            // 1×512×h×w, input of the c5 GloRe unit
  Tensor penultimate;   // 1×64 pooled decoder features
};

class MultiTaskModel : public nn::Module {
 public:
  explicit MultiTaskModel(const ModelConfig& config);

  struct Pass {
    bool seg = true;
    bool sg = true;
  };

  struct Output {
    Var seg_logits;   // B×8×H×W
    Var c5;           // B×512×h×w
    Var gisf;         // B×64
    Var penultimate;  // decoder map before the classifier
    std::vector<EdgeReadout> edges;  // one per sample
    Var sg_logits;    // ΣE×13 over the batch, undefined when no edges
    Tensor sg_targets;
  };

  // Samples must share one image size.
  Output forward(const std::vector<const SceneSample*>& batch, Rng& rng, Pass pass);

  FrozenFrameFeatures frozen_features(const SceneSample& sample);
  // Scene-graph readout from cached features; only w_sg takes gradients.
  EdgeReadout forward_cached(const SceneSample& sample, const FrozenFrameFeatures& cached);

  // The encoder and segmentation head in eval mode (frozen stage), the scene
  // graph head left as is.
  void set_shared_training(bool training);

  const ModelConfig& config() const { return config_; }
  ModelPartition& partition() { return partition_; }
  const ModelPartition& partition() const { return partition_; }

  ResNet18Encoder encoder;
  SegmentationHead seg;
  SceneGraphHead sg;
  std::unique_ptr<SceneGraphSummary> summary;

 private:
  MultiTaskModel(const ModelConfig& config, Rng&& rng);
  std::optional<Var> edge_extra(int64_t sample, const Var& gisf, const Var& pooled) const;

  ModelConfig config_;
  ModelPartition partition_;
};

// Concatenated E×13 targets of a batch.
Tensor batch_targets(const std::vector<const SceneSample*>& batch);
Tensor stack_images(const std::vector<const SceneSample*>& batch);

}  // namespace gmtl
