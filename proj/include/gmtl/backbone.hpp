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
#include <memory>
#include <span>
#include <vector>

#include "gmtl/image.hpp"
#include "gmtl/nn.hpp"

namespace gmtl {

// Encoder outputs of one batch at strides 4, 8, 16 and 32.
struct FeaturePyramid {
  Var c2;  // B×64×H/4×W/4
  Var c3;  // B×128×H/8×W/8
  Var c4;  // B×256×H/16×W/16
  Var c5;  // B×512×H/32×W/32

  const Var& level(int k) const;  // k in 2..5
};

inline constexpr std::array<int64_t, 4> kPyramidChannels{64, 128, 256, 512};
inline constexpr int64_t kBoxFeatureDim = 512;
inline constexpr int64_t kBoxCropSize = 96;
inline constexpr int64_t kMinEncoderInput = 32;

class BasicBlock : public nn::Module {
 public:
  BasicBlock(int64_t in_channels, int64_t out_channels, int stride, Rng& rng);
  Var forward(const Var& x);

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm2d bn2_;
  std::unique_ptr<nn::Conv2d> down_conv_;
  std::unique_ptr<nn::BatchNorm2d> down_bn_;
};

// 18-layer residual encoder (two basic blocks per stage). Parameter names
// follow the common torchvision layout (conv1, bn1, layer1.0.conv1, ...).
class ResNet18Encoder : public nn::Module {
 public:
  explicit ResNet18Encoder(Rng& rng);

  // images: B×3×H×W, channel-normalized. H and W must be at least 32.
  FeaturePyramid encode(const Var& images);

  // Crops each box from `image` (3×H×W), resizes to 96×96, encodes and
  // average-pools c5. Returns M×512.
  Var extract_box_features(const Tensor& image, std::span<const Box> boxes);

  // Replaces all encoder parameters from a checkpoint. Names may carry an
  // "encoder." prefix or none. A missing file is tolerated when
  // allow_random is set (random init retained, warning logged).
  void load_weights(const std::filesystem::path& path, bool allow_random = false);

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  std::vector<std::unique_ptr<BasicBlock>> blocks_;  // 8 blocks, layer1..layer4
};

}  // namespace gmtl
