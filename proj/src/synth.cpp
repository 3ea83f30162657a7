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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <numbers>

#include "gmtl/datakit.hpp"
#include "gmtl/error.hpp"

namespace gmtl {
namespace fs = std::filesystem;

namespace {

constexpr int kMaxLayoutAttempts = 500;
constexpr int kMaxPlacementAttempts = 200;

struct Rgb {
  double r, g, b;
};

const std::array<Rgb, kSegClasses> kInstrumentColors = {{{0, 0, 0},
                                                         {40, 200, 230},
                                                         {240, 220, 40},
                                                         {60, 220, 80},
                                                         {250, 140, 20},
                                                         {160, 80, 230},
                                                         {235, 235, 235},
                                                         {40, 90, 250}}};

struct Shape {
  int cls = 1;
  double cx = 0, cy = 0, size = 0, angle = 0;

  // Point test in the shape's rotated frame.
  bool contains(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = c * dx + s * dy, v = -s * dx + c * dy;
    const double L = size;
    switch (cls) {
      case 1: return std::abs(u) <= 0.8 * L && std::abs(v) <= 0.15 * L;
      case 2: return (u * u) / (0.49 * L * L) + (v * v) / (0.1225 * L * L) <= 1.0;
      case 3: {
        // Equilateral triangle with circumradius 0.6 L.
        const double r = 0.6 * L;
        for (int k = 0; k < 3; ++k) {
          const double a = std::numbers::pi / 2 + k * 2 * std::numbers::pi / 3;
          if (u * std::cos(a) + v * std::sin(a) > 0.5 * r) return false;
        }
        return true;
      }
      case 4: {
        const double d2 = u * u + v * v;
        return d2 <= 0.25 * L * L && d2 >= 0.0784 * L * L;
      }
      case 5: return std::abs(u) + std::abs(v) <= 0.5 * L;
      case 6: return u * u + v * v <= 0.16 * L * L;
      case 7:
        return (std::abs(u) <= 0.55 * L && std::abs(v) <= 0.14 * L) ||
               (std::abs(v) <= 0.55 * L && std::abs(u) <= 0.14 * L);
    }
    return false;
  }

  double extent() const { return 0.85 * size; }
};

struct Canvas {
  int64_t h, w;
  size_t at(int64_t y, int64_t x) const { return static_cast<size_t>(y * w + x); }
};

// Chebyshev distance to the nearest tissue pixel, capped at `cap`.
std::vector<int64_t> tissue_distance(const Canvas& cv, const std::vector<uint8_t>& tissue,
                                     int64_t cap) {
  std::vector<int64_t> dist(tissue.size(), cap);
  std::deque<std::pair<int64_t, int64_t>> queue;
  for (int64_t y = 0; y < cv.h; ++y) {
    for (int64_t x = 0; x < cv.w; ++x) {
      if (tissue[cv.at(y, x)]) {
        dist[cv.at(y, x)] = 0;
        queue.emplace_back(y, x);
      }
    }
  }
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    const int64_t d = dist[cv.at(y, x)] + 1;
    if (d >= cap) continue;
    for (int64_t dy = -1; dy <= 1; ++dy) {
      for (int64_t dx = -1; dx <= 1; ++dx) {
        const int64_t ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= cv.h || nx < 0 || nx >= cv.w) continue;
        if (dist[cv.at(ny, nx)] > d) {
          dist[cv.at(ny, nx)] = d;
          queue.emplace_back(ny, nx);
        }
      }
    }
  }
  return dist;
}

std::vector<size_t> rasterize(const Canvas& cv, const Shape& s) {
  std::vector<size_t> px;
  const double e = s.extent();
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(s.cy - e)));
  const int64_t y1 = std::min<int64_t>(cv.h - 1, static_cast<int64_t>(std::ceil(s.cy + e)));
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(s.cx - e)));
  const int64_t x1 = std::min<int64_t>(cv.w - 1, static_cast<int64_t>(std::ceil(s.cx + e)));
  for (int64_t y = y0; y <= y1; ++y) {
    for (int64_t x = x0; x <= x1; ++x) {
      if (s.contains(x + 0.5, y + 0.5)) px.push_back(cv.at(y, x));
    }
  }
  return px;
}

int classify(const std::vector<size_t>& pixels, const std::vector<uint8_t>& tissue,
             const std::vector<int64_t>& dist, int64_t margin) {
  int64_t overlap = 0, gap = std::numeric_limits<int64_t>::max();
  for (size_t p : pixels) {
    overlap += tissue[p];
    gap = std::min(gap, dist[p]);
  }
  return interaction_rule(overlap, static_cast<int64_t>(pixels.size()), gap, margin);
}

Box pixel_box(const Canvas& cv, const std::vector<size_t>& pixels) {
  int64_t x0 = cv.w, y0 = cv.h, x1 = -1, y1 = -1;
  for (size_t p : pixels) {
    const int64_t y = static_cast<int64_t>(p) / cv.w, x = static_cast<int64_t>(p) % cv.w;
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }
  const double w = static_cast<double>(cv.w), h = static_cast<double>(cv.h);
  return {x0 / w, y0 / h, (x1 + 1) / w, (y1 + 1) / h};
}

uint8_t to_byte(double v) { return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

SynthFrame make_frame(const SynthConfig& cfg, int index) {
  Rng rng(Rng::derive(cfg.seed, static_cast<uint64_t>(index)));
  const Canvas cv{cfg.height, cfg.width};
  const double s = static_cast<double>(std::min(cv.h, cv.w));
  const int64_t margin = std::max<int64_t>(3, std::lround(0.03 * s));
  const size_t npx = static_cast<size_t>(cv.h * cv.w);

  // Background texture and tissue blob.
  const double f1 = rng.uniform(0.02, 0.06), f2 = rng.uniform(0.02, 0.06);
  const double ph1 = rng.uniform(0, 6.28), ph2 = rng.uniform(0, 6.28);
  const double bcx = rng.uniform(0.3, 0.7) * cv.w, bcy = rng.uniform(0.3, 0.7) * cv.h;
  const double radius = rng.uniform(0.18, 0.26) * s;
  std::array<double, 3> amp{}, phase{};
  for (size_t k = 0; k < 3; ++k) {
    amp[k] = rng.uniform(0.0, 0.08);
    phase[k] = rng.uniform(0, 6.28);
  }
  std::vector<uint8_t> tissue(npx, 0);
  std::vector<double> rgb(npx * 3);
  for (int64_t y = 0; y < cv.h; ++y) {
    for (int64_t x = 0; x < cv.w; ++x) {
      const double dx = x + 0.5 - bcx, dy = y + 0.5 - bcy;
      const double th = std::atan2(dy, dx);
      double r = radius;
      for (size_t k = 0; k < 3; ++k) r *= 1.0 + amp[k] * std::sin((k + 2) * th + phase[k]);
      const bool in = dx * dx + dy * dy <= r * r;
      const double tex = 14 * std::sin(f1 * x + ph1) * std::cos(f2 * y + ph2);
      const double n = rng.uniform(-6, 6);
      const size_t p = cv.at(y, x);
      tissue[p] = in ? 1 : 0;
      if (in) {
        rgb[p * 3 + 0] = 195 + tex + n;
        rgb[p * 3 + 1] = 105 + 0.5 * tex + n;
        rgb[p * 3 + 2] = 110 + n;
      } else {
        rgb[p * 3 + 0] = 90 + tex + n;
        rgb[p * 3 + 1] = 35 + 0.4 * tex + n;
        rgb[p * 3 + 2] = 30 + n;
      }
    }
  }
  const std::vector<int64_t> dist = tissue_distance(cv, tissue, 4 * margin + 1);

  for (int attempt = 0; attempt < kMaxLayoutAttempts; ++attempt) {
    const int n_inst = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<int> classes = {1, 2, 3, 4, 5, 6, 7};
    for (size_t i = classes.size() - 1; i > 0; --i) {
      std::swap(classes[i], classes[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i) + 1))]);
    }
    std::vector<Shape> shapes;
    std::vector<int> labels;
    bool placed_all = true;
    for (int k = 0; k < n_inst && placed_all; ++k) {
      static constexpr std::array<int, 3> kCategories = {kIdle, kRetraction, kTissueManipulation};
      const int want = kCategories[static_cast<size_t>(rng.uniform_int(3))];
      bool placed = false;
      for (int t = 0; t < kMaxPlacementAttempts && !placed; ++t) {
        Shape sh;
        sh.cls = classes[static_cast<size_t>(k)];
        sh.size = rng.uniform(0.24, 0.34) * s;
        sh.angle = rng.uniform(0, std::numbers::pi);
        const double dir = rng.uniform(0, 2 * std::numbers::pi);
        double d = 0;
        if (want == kTissueManipulation) d = rng.uniform(0, 0.8 * radius);
        else if (want == kRetraction) d = radius + rng.uniform(0, 1.5 * sh.size);
        else d = rng.uniform(radius, 0.8 * s);
        sh.cx = bcx + d * std::cos(dir);
        sh.cy = bcy + d * std::sin(dir);
        const double e = sh.extent();
        if (sh.cx - e < 0 || sh.cy - e < 0 || sh.cx + e > cv.w || sh.cy + e > cv.h) continue;
        const auto px = rasterize(cv, sh);
        if (px.size() < 30) continue;
        if (classify(px, tissue, dist, margin) != want) continue;
        shapes.push_back(sh);
        labels.push_back(want);
        placed = true;
      }
      placed_all = placed;
    }
    if (!placed_all) continue;

    std::vector<uint8_t> mask(npx, 0);
    std::vector<std::vector<size_t>> full;
    for (const Shape& sh : shapes) {
      full.push_back(rasterize(cv, sh));
      for (size_t p : full.back()) mask[p] = static_cast<uint8_t>(sh.cls);
    }
    std::vector<std::vector<size_t>> visible(shapes.size());
    for (size_t p = 0; p < npx; ++p) {
      for (size_t k = 0; k < shapes.size(); ++k) {
        if (mask[p] == shapes[k].cls) visible[k].push_back(p);
      }
    }
    bool ok = true;
    for (size_t k = 0; k < shapes.size() && ok; ++k) {
      if (visible[k].size() * 10 < full[k].size() * 6) ok = false;
      else if (classify(visible[k], tissue, dist, margin) != labels[k]) ok = false;
    }
    if (!ok) continue;

    SynthFrame f;
    f.image.height = f.mask.height = cv.h;
    f.image.width = f.mask.width = cv.w;
    f.image.pixels.resize(npx * 3);
    for (size_t k = 0; k < shapes.size(); ++k) {
      const Shape& sh = shapes[k];
      const Rgb c = kInstrumentColors[static_cast<size_t>(sh.cls)];
      for (size_t p : visible[k]) {
        const double y = static_cast<double>(p / static_cast<size_t>(cv.w));
        const double shade = 0.85 + 0.15 * std::clamp((y - sh.cy) / sh.size + 0.5, 0.0, 1.0);
        const double n = rng.uniform(-5, 5);
        rgb[p * 3 + 0] = c.r * shade + n;
        rgb[p * 3 + 1] = c.g * shade + n;
        rgb[p * 3 + 2] = c.b * shade + n;
      }
    }
    for (size_t i = 0; i < npx * 3; ++i) f.image.pixels[i] = to_byte(rgb[i]);
    f.mask.labels = mask;
    f.tissue = tissue;

    std::vector<size_t> tissue_px;
    for (size_t p = 0; p < npx; ++p) {
      if (tissue[p]) tissue_px.push_back(p);
    }
    Annotation& ann = f.annotation;
    ann.boxes.push_back(pixel_box(cv, tissue_px));
    ann.semantics.push_back(kTissueSemantic);
    for (size_t k = 0; k < shapes.size(); ++k) {
      ann.boxes.push_back(pixel_box(cv, visible[k]));
      ann.semantics.push_back(shapes[k].cls);
      ann.edges.push_back({0, static_cast<int64_t>(k + 1)});
      std::array<uint8_t, kInteractionClasses> row{};
      row[static_cast<size_t>(labels[k])] = 1;
      ann.targets.push_back(row);
    }
    validate_annotation(ann);
    return f;
  }
  throw NumericalError("synthetic layout search did not converge for frame " + std::to_string(index));
}

}  // namespace

int interaction_rule(int64_t overlap_pixels, int64_t instrument_pixels, int64_t gap,
                     int64_t margin) {
  if (overlap_pixels > 0) {
    return overlap_pixels * 20 >= instrument_pixels ? kTissueManipulation : -1;
  }
  if (gap <= margin) return kRetraction;
  if (gap >= 2 * margin) return kIdle;
  return -1;
}

std::vector<SynthFrame> synth_frames(const SynthConfig& config) {
  if (config.n_frames <= 0) throw UsageError("n_frames must be positive");
  if (config.height < 32 || config.width < 32) throw UsageError("synthetic canvas must be at least 32x32");
  if (config.sequences.empty()) throw UsageError("at least one sequence id is required");
  for (int s : config.sequences) {
    if (s < 0 || s > 99 || s == kExcludedSequence) {
      throw UsageError("synthetic sequence ids must lie in 0..99 and skip 13");
    }
  }
  std::vector<SynthFrame> frames;
  std::vector<int> counters(100, 0);
  const auto nseq = static_cast<int64_t>(config.sequences.size());
  for (int i = 0; i < config.n_frames; ++i) {
    SynthFrame f = make_frame(config, i);
    f.sequence = config.sequences[static_cast<size_t>(i * nseq / config.n_frames)];
    char stem[16];
    std::snprintf(stem, sizeof stem, "%05d", counters[static_cast<size_t>(f.sequence)]++);
    f.stem = stem;
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_dataset(const fs::path& root, const std::vector<SynthFrame>& frames) {
  for (const SynthFrame& f : frames) {
    char seq[16];
    std::snprintf(seq, sizeof seq, "seq_%02d", f.sequence);
    const fs::path dir = root / seq;
    for (const char* sub : {"images", "masks", "annotations"}) fs::create_directories(dir / sub);
    write_png_rgb(dir / "images" / (f.stem + ".png"), f.image);
    write_png_labels(dir / "masks" / (f.stem + ".png"), f.mask);
    write_annotation(dir / "annotations" / (f.stem + ".json"), f.annotation);
  }
}

std::vector<SynthFrame> synth_generate(const fs::path& root, const SynthConfig& config) {
  auto frames = synth_frames(config);
  write_dataset(root, frames);
  return frames;
}

}  // namespace gmtl
