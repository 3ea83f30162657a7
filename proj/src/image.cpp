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

#include "gmtl/image.hpp"

#include <algorithm>
#include <cmath>

#include "gmtl/error.hpp"

namespace gmtl {

PixelRect to_pixels(const Box& box, int64_t h, int64_t w) {
  auto px = [](double v, int64_t n) {
    return std::clamp<int64_t>(static_cast<int64_t>(std::llround(v * static_cast<double>(n))), 0, n);
  };
  return {px(box.x1, w), px(box.y1, h), px(box.x2, w), px(box.y2, h)};
}

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w) {
  if (image.rank() != 3) throw UsageError("resize_bilinear expects C×H×W");
  const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image;
  auto axis = [](int64_t in, int64_t out, std::vector<int64_t>& i0, std::vector<int64_t>& i1,
                 std::vector<double>& l1) {
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
      double src = std::max(0.0, (static_cast<double>(o) + 0.5) * ratio - 0.5);
      int64_t lo = std::min<int64_t>(static_cast<int64_t>(src), in - 1);
      i0.push_back(lo);
      i1.push_back(std::min(lo + 1, in - 1));
      l1.push_back(src - static_cast<double>(lo));
    }
  };
  std::vector<int64_t> y0, y1, x0, x1;
  std::vector<double> ly, lx;
  axis(h, out_h, y0, y1, ly);
  axis(w, out_w, x0, x1, lx);
  Tensor out({c, out_h, out_w});
  for (int64_t ch = 0; ch < c; ++ch) {
    const double* src = image.data() + ch * h * w;
    for (int64_t i = 0; i < out_h; ++i) {
      const size_t si = static_cast<size_t>(i);
      for (int64_t j = 0; j < out_w; ++j) {
        const size_t sj = static_cast<size_t>(j);
        const double a = src[y0[si] * w + x0[sj]], b = src[y0[si] * w + x1[sj]];
        const double cc = src[y1[si] * w + x0[sj]], d = src[y1[si] * w + x1[sj]];
        out[(ch * out_h + i) * out_w + j] = (1 - ly[si]) * ((1 - lx[sj]) * a + lx[sj] * b) +
                                            ly[si] * ((1 - lx[sj]) * cc + lx[sj] * d);
      }
    }
  }
  return out;
}

std::vector<int32_t> resize_nearest(const std::vector<int32_t>& labels, int64_t h, int64_t w,
                                    int64_t out_h, int64_t out_w) {
  if (static_cast<int64_t>(labels.size()) != h * w) throw UsageError("label map size mismatch");
  std::vector<int32_t> out(static_cast<size_t>(out_h * out_w));
  for (int64_t i = 0; i < out_h; ++i) {
    const int64_t sy = std::min(h - 1, (i * h) / out_h);
    for (int64_t j = 0; j < out_w; ++j) {
      const int64_t sx = std::min(w - 1, (j * w) / out_w);
      out[static_cast<size_t>(i * out_w + j)] = labels[static_cast<size_t>(sy * w + sx)];
    }
  }
  return out;
}

Tensor crop(const Tensor& image, const PixelRect& r) {
  if (image.rank() != 3) throw UsageError("crop expects C×H×W");
  const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (r.empty() || r.x0 < 0 || r.y0 < 0 || r.x1 > w || r.y1 > h) {
    throw UsageError("crop rectangle outside the image");
  }
  const int64_t ch_ = r.y1 - r.y0, cw = r.x1 - r.x0;
  Tensor out({c, ch_, cw});
  for (int64_t k = 0; k < c; ++k)
    for (int64_t i = 0; i < ch_; ++i)
      std::copy_n(image.data() + (k * h + r.y0 + i) * w + r.x0, cw,
                  out.data() + (k * ch_ + i) * cw);
  return out;
}

Tensor normalize_channels(const Tensor& image, const std::array<double, 3>& mean,
                          const std::array<double, 3>& stddev) {
  if (image.rank() != 3 || image.dim(0) != 3) throw UsageError("normalize expects 3×H×W");
  Tensor out = image;
  const int64_t hw = image.dim(1) * image.dim(2);
  for (int64_t c = 0; c < 3; ++c) {
    const double m = mean[static_cast<size_t>(c)], s = stddev[static_cast<size_t>(c)];
    for (int64_t i = 0; i < hw; ++i) out[c * hw + i] = (out[c * hw + i] - m) / s;
  }
  return out;
}

}  // namespace gmtl
