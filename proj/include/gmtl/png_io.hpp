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
#include <cstdint>
#include <filesystem>
#include <vector>

namespace gmtl {

struct RgbImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;  // interleaved RGB, row-major

  bool operator==(const RgbImage&) const = default;
};

struct LabelImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> labels;

  bool operator==(const LabelImage&) const = default;
};

using Palette = std::vector<std::array<uint8_t, 3>>;

// Fixed palette for segmentation labels 0..7.
const Palette& label_palette();

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);
// Grey, palette and alpha inputs are expanded to RGB.
RgbImage read_png_rgb(const std::filesystem::path& path);

// 8-bit palette-indexed PNG whose pixel values are the labels.
void write_png_labels(const std::filesystem::path& path, const LabelImage& image,
                      const Palette& palette = label_palette());
// Raw indices of a palette PNG, or the grey values of an 8-bit grey PNG.
LabelImage read_png_labels(const std::filesystem::path& path);

}  // namespace gmtl
