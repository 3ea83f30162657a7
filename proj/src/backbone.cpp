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

#include "gmtl/backbone.hpp"

#include "gmtl/checkpoint.hpp"
#include "gmtl/error.hpp"
#include "gmtl/log.hpp"

namespace gmtl {

const Var& FeaturePyramid::level(int k) const {
  switch (k) {
    case 2: return c2;
    case 3: return c3;
    case 4: return c4;
    case 5: return c5;
    default: throw UsageError("pyramid level must be 2..5");
  }
}

BasicBlock::BasicBlock(int64_t in_channels, int64_t out_channels, int stride, Rng& rng)
    : conv1_(in_channels, out_channels, 3, stride, 1, false, rng),
      bn1_(out_channels),
      conv2_(out_channels, out_channels, 3, 1, 1, false, rng),
      bn2_(out_channels) {
  register_module("conv1", conv1_);
  register_module("bn1", bn1_);
  register_module("conv2", conv2_);
  register_module("bn2", bn2_);
  if (stride != 1 || in_channels != out_channels) {
    down_conv_ = std::make_unique<nn::Conv2d>(in_channels, out_channels, 1, stride, 0, false, rng);
    down_bn_ = std::make_unique<nn::BatchNorm2d>(out_channels);
    register_module("downsample.0", *down_conv_);
    register_module("downsample.1", *down_bn_);
  }
}

Var BasicBlock::forward(const Var& x) {
  Var out = ops::relu(bn1_.forward(conv1_.forward(x)));
  out = bn2_.forward(conv2_.forward(out));
  Var shortcut = down_conv_ ? down_bn_->forward(down_conv_->forward(x)) : x;
  return ops::relu(ops::add(out, shortcut));
}

ResNet18Encoder::ResNet18Encoder(Rng& rng) : conv1_(3, 64, 7, 2, 3, false, rng), bn1_(64) {
  register_module("conv1", conv1_);
  register_module("bn1", bn1_);
  int64_t in = 64;
  for (int stage = 0; stage < 4; ++stage) {
    const int64_t out = kPyramidChannels[static_cast<size_t>(stage)];
    for (int b = 0; b < 2; ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      blocks_.push_back(std::make_unique<BasicBlock>(in, out, stride, rng));
      register_module("layer" + std::to_string(stage + 1) + "." + std::to_string(b),
                      *blocks_.back());
      in = out;
    }
  }
}

FeaturePyramid ResNet18Encoder::encode(const Var& images) {
  const Tensor& x = images.value();
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw UsageError("encode expects B×3×H×W images, got " + shape_str(x.shape()));
  }
  if (x.dim(0) < 1) throw UsageError("encode needs at least one image");
  if (x.dim(2) < kMinEncoderInput || x.dim(3) < kMinEncoderInput) {
    throw UsageError("encode needs H, W >= 32, got " + shape_str(x.shape()));
  }
  if (!x.all_finite()) throw NumericalError("encode: input contains non-finite values");

  Var h = ops::relu(bn1_.forward(conv1_.forward(images)));
  h = ops::max_pool2d(h, 3, 2, 1);
  std::array<Var, 4> levels;
  for (size_t stage = 0; stage < 4; ++stage) {
    h = blocks_[2 * stage]->forward(h);
    h = blocks_[2 * stage + 1]->forward(h);
    levels[stage] = h;
  }
  return {levels[0], levels[1], levels[2], levels[3]};
}

Var ResNet18Encoder::extract_box_features(const Tensor& image, std::span<const Box> boxes) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw UsageError("extract_box_features expects a 3×H×W image");
  }
  if (boxes.empty()) return Var(Tensor({0, kBoxFeatureDim}));
  const int64_t h = image.dim(1), w = image.dim(2);
  std::vector<Tensor> crops;
  crops.reserve(boxes.size());
  for (size_t i = 0; i < boxes.size(); ++i) {
    const Box& b = boxes[i];
    if (!b.valid()) {
      throw DataError("box " + std::to_string(i) + " is not a valid normalized [x1,y1,x2,y2]");
    }
    const PixelRect r = to_pixels(b, h, w);
    if (r.empty()) {
      throw DataError("box " + std::to_string(i) + " has zero area after pixel rounding");
    }
    crops.push_back(resize_bilinear(crop(image, r), kBoxCropSize, kBoxCropSize));
  }
  FeaturePyramid p = encode(Var(stack(crops)));
  return ops::global_avg_pool(p.c5);
}

void ResNet18Encoder::load_weights(const std::filesystem::path& path, bool allow_random) {
  if (!std::filesystem::exists(path)) {
    if (allow_random) {
      log_warn("encoder weights " + path.string() + " not found; keeping random initialization");
      return;
    }
    throw DataError("encoder weights not found: " + path.string());
  }
  Checkpoint src = Checkpoint::load(path);
  // Accept both prefixed and bare (torchvision-style) names.
  Checkpoint view;
  for (const auto& name : src.names()) {
    const std::string bare = name.rfind("encoder.", 0) == 0 ? name.substr(8) : name;
    view.put(bare, src.get(name));
  }
  view.restore_state(named_state());
}

}  // namespace gmtl
