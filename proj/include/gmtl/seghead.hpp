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

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmtl/backbone.hpp"
#include "gmtl/glore.hpp"

namespace gmtl {

inline constexpr int64_t kSegClasses = 8;

enum class SegVariant { kGR, kMSGR, kMSLRGR };

std::string to_string(SegVariant v);
SegVariant parse_seg_variant(const std::string& s);

struct SegHeadConfig {
  SegVariant variant = SegVariant::kMSLRGR;
  int64_t decoder_width = 64;
  double dropout = 0.1;
  int64_t glore_nodes = 16;
  int64_t glore_latent_c5 = 128;  // other scales use channels / 4
  int64_t injection_dim = 0;      // scene-graph injection into the c5 unit
  bool gisf_after_reasoning = true;
};

// conv3×3-BN-ReLU, dropout, conv3×3. Spatial size is preserved.
class DecoderBlock : public nn::Module {
 public:
  DecoderBlock(int64_t in_channels, int64_t hidden, int64_t out_channels, double dropout,
               Rng& rng);

  // `penultimate` receives the post-dropout hidden map when non-null.
  Var forward(const Var& x, Rng& rng, Var* penultimate = nullptr);

 private:
  nn::Conv2d conv_;
  nn::BatchNorm2d bn_;
  nn::Conv2d out_;
  double dropout_;
};

// 3×3 conv-BN-ReLU keeping the channel count (multi-scale local reasoning).
class LocalReasoningBlock : public nn::Module {
 public:
  LocalReasoningBlock(int64_t channels, Rng& rng);
  Var forward(const Var& x);

 private:
  nn::Conv2d conv_;
  nn::BatchNorm2d bn_;
};

struct SegOutput {
  Var logits;       // B×8×H×W
  Var gisf;         // B×64 from the c5 GloRe unit
  Var penultimate;  // B×decoder_width×h×w, input of the final classifier conv
};

class SegmentationHead : public nn::Module {
 public:
  SegmentationHead(const SegHeadConfig& config, Rng& rng);

  struct Options {
    std::optional<Var> injection;     // B×injection_dim
    bool bypass_global_reasoning = false;  // skip every GloRe unit (ablation/testing)
  };

  // out_h/out_w is the input image size.
  SegOutput forward(const FeaturePyramid& pyramid, int64_t out_h, int64_t out_w, Rng& rng,
                    const Options& options);
  SegOutput forward(const FeaturePyramid& pyramid, int64_t out_h, int64_t out_w, Rng& rng) {
    return forward(pyramid, out_h, out_w, rng, Options{});
  }

  const SegHeadConfig& config() const { return config_; }
  // The unit whose gisf is exported (c5 scale for every variant).
  GloReUnit& c5_unit() { return *glore_.back(); }
  std::vector<GloReUnit*> glore_units();

 private:
  SegHeadConfig config_;
  std::vector<std::unique_ptr<GloReUnit>> glore_;  // MSGR: c2..c5, else c5 only
  std::vector<std::unique_ptr<LocalReasoningBlock>> local_;  // MSLRGR: c2..c4
  std::vector<std::unique_ptr<DecoderBlock>> decoders_;
  std::unique_ptr<nn::Conv2d> classifier_;  // MSGR/MSLRGR aggregate conv
};

// Mean pixel-wise cross-entropy. mask holds B·H·W labels in 0..7.
Var seg_loss(const Var& logits, std::span<const int32_t> mask);

struct SegMetrics {
  double miou = 0;                      // over classes present in gt ∪ pred
  std::array<double, kSegClasses> per_class_iou{};  // 0 for absent classes
  std::array<bool, kSegClasses> present{};
  double miou_all_classes = 0;          // over all eight classes
  double pixel_acc = 0;
};

// Accumulates a dataset-level confusion matrix.
class SegConfusion {
 public:
  void add(std::span<const int32_t> pred, std::span<const int32_t> gt);
  SegMetrics metrics() const;
  uint64_t at(int gt, int pred) const { return m_[static_cast<size_t>(gt)][static_cast<size_t>(pred)]; }

 private:
  std::array<std::array<uint64_t, kSegClasses>, kSegClasses> m_{};
};

SegMetrics seg_metrics(std::span<const int32_t> pred, std::span<const int32_t> gt);

// Per-pixel argmax of B×K×H×W logits.
std::vector<int32_t> argmax_labels(const Tensor& logits);

}  // namespace gmtl
