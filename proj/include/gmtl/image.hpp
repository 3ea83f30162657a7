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
#include <vector>

#include "gmtl/tensor.hpp"

namespace gmtl {

// Normalized [x1, y1, x2, y2] box, coordinates in [0, 1].
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const { return 0 <= x1 && x1 < x2 && x2 <= 1 && 0 <= y1 && y1 < y2 && y2 <= 1; }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  bool operator==(const Box&) const = default;
};

// Integer pixel rectangle [x0, x1) × [y0, y1).
struct PixelRect {
  int64_t x0, y0, x1, y1;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

// Rounds a normalized box onto a w×h pixel grid.
PixelRect to_pixels(const Box& box, int64_t h, int64_t w);

// Bilinear resize (half-pixel centers) of a C×H×W tensor.
Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w);
// Nearest-neighbour resize of an h×w label map; introduces no new labels.
std::vector<int32_t> resize_nearest(const std::vector<int32_t>& labels, int64_t h, int64_t w,
                                    int64_t out_h, int64_t out_w);
// Copies the pixel rectangle out of a C×H×W tensor.
Tensor crop(const Tensor& image, const PixelRect& rect);

// Per-channel (x - mean) / std on a 3×H×W tensor.
Tensor normalize_channels(const Tensor& image, const std::array<double, 3>& mean,
                          const std::array<double, 3>& stddev);

}  // namespace gmtl
