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

#include "gmtl/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "gmtl/error.hpp"
#include "gmtl/log.hpp"

namespace gmtl {
namespace fs = std::filesystem;
using nlohmann::json;

const std::array<std::string_view, kSegClasses>& seg_class_names() {
  static const std::array<std::string_view, kSegClasses> kNames = {
      "background",           "bipolar forceps",  "prograsp forceps", "large needle driver",
      "monopolar curved scissors", "ultrasound probe", "suction tool",     "clip applier"};
  return kNames;
}

const std::array<std::string_view, kInteractionClasses>& interaction_names() {
  static const std::array<std::string_view, kInteractionClasses> kNames = {
      "Idle",         "grasping", "retraction", "tissue manipulation", "tool manipulation",
      "cutting",      "cauterization", "suction", "looping",           "suturing",
      "clipping",     "staple",   "ultrasound sensing"};
  return kNames;
}

const std::array<std::string_view, kNodeVocabulary>& node_vocabulary() {
  static const std::array<std::string_view, kNodeVocabulary> kNames = {
      "defective tissue", "bipolar forceps", "prograsp forceps", "large needle driver",
      "monopolar curved scissors", "ultrasound probe", "suction tool", "clip applier"};
  return kNames;
}

void validate_annotation(const Annotation& ann) {
  if (ann.targets.size() != ann.edges.size()) {
    throw DataError("annotation: " + std::to_string(ann.edges.size()) + " edges but " +
                    std::to_string(ann.targets.size()) + " target rows");
  }
  SceneSample s;
  s.boxes = ann.boxes;
  s.semantics = ann.semantics;
  s.edges = ann.edges;
  if (!ann.edges.empty()) s.targets = targets_tensor(ann);
  validate_scene(s);
}

Tensor targets_tensor(const Annotation& ann) {
  const auto e = static_cast<int64_t>(ann.targets.size());
  Tensor t({e, kInteractionClasses});
  for (int64_t i = 0; i < e; ++i) {
    for (int64_t k = 0; k < kInteractionClasses; ++k) {
      t[i * kInteractionClasses + k] = ann.targets[static_cast<size_t>(i)][static_cast<size_t>(k)];
    }
  }
  return t;
}

std::string annotation_to_json(const Annotation& ann) {
  json j;
  j["boxes"] = json::array();
  for (const Box& b : ann.boxes) j["boxes"].push_back({b.x1, b.y1, b.x2, b.y2});
  j["semantics"] = ann.semantics;
  j["edges"] = json::array();
  for (const Edge& e : ann.edges) j["edges"].push_back({e.tissue, e.instrument});
  j["targets"] = json::array();
  for (const auto& row : ann.targets) {
    json r = json::array();
    for (uint8_t v : row) r.push_back(static_cast<int>(v));
    j["targets"].push_back(r);
  }
  return j.dump(1) + "\n";
}

Annotation annotation_from_json(const std::string& text, const std::string& origin) {
  Annotation ann;
  try {
    const json j = json::parse(text);
    for (const char* key : {"boxes", "semantics", "edges", "targets"}) {
      if (!j.contains(key) || !j[key].is_array()) {
        throw DataError(origin + ": field '" + key + "' missing or not an array");
      }
    }
    for (const auto& b : j["boxes"]) {
      if (!b.is_array() || b.size() != 4) throw DataError(origin + ": box needs 4 numbers");
      ann.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>()});
    }
    for (const auto& s : j["semantics"]) ann.semantics.push_back(s.get<int>());
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2) throw DataError(origin + ": edge needs 2 indices");
      ann.edges.push_back({e[0].get<int64_t>(), e[1].get<int64_t>()});
    }
    for (const auto& r : j["targets"]) {
      if (!r.is_array() || static_cast<int64_t>(r.size()) != kInteractionClasses) {
        throw DataError(origin + ": target row needs 13 entries");
      }
      std::array<uint8_t, kInteractionClasses> row{};
      for (size_t k = 0; k < row.size(); ++k) {
        const int v = r[k].get<int>();
        if (v != 0 && v != 1) throw DataError(origin + ": target value not in {0,1}");
        row[k] = static_cast<uint8_t>(v);
      }
      ann.targets.push_back(row);
    }
  } catch (const json::exception& e) {
    throw DataError(origin + ": malformed annotation (" + e.what() + ")");
  }
  try {
    validate_annotation(ann);
  } catch (const DataError& e) {
    throw DataError(origin + ": " + e.what());
  }
  return ann;
}

Annotation read_annotation(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return annotation_from_json(ss.str(), path.string());
}

void write_annotation(const fs::path& path, const Annotation& ann) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write annotation " + path.string());
  out << annotation_to_json(ann);
}

std::string FrameRecord::frame_id() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "seq_%02d", sequence);
  return std::string(buf) + "/" + stem;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kAll: return "all";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "all") return Split::kAll;
  throw UsageError("unknown split '" + s + "' (expected train, test or all)");
}

SplitSpec SplitSpec::standard() { return {{2, 3, 4, 6, 7, 9, 10, 11, 12, 14, 15}, {1, 5, 16}}; }

SplitSpec SplitSpec::fold(int index) {
  static const std::vector<std::vector<int>> kTests = {
      {1, 5, 16}, {2, 3, 15}, {4, 6, 14}, {4, 11, 12}};
  if (index < 0 || index >= static_cast<int>(kTests.size())) {
    throw UsageError("fold index must be 0..3");
  }
  SplitSpec spec;
  spec.test = kTests[static_cast<size_t>(index)];
  for (int s = 1; s <= 16; ++s) {
    if (s == 8 || s == kExcludedSequence) continue;
    if (std::find(spec.test.begin(), spec.test.end(), s) == spec.test.end()) {
      spec.train.push_back(s);
    }
  }
  return spec;
}

namespace {

// Parses "seq_XX"; -1 otherwise.
int sequence_number(const std::string& name) {
  if (name.rfind("seq_", 0) != 0 || name.size() <= 4) return -1;
  int v = 0;
  for (size_t i = 4; i < name.size(); ++i) {
    if (name[i] < '0' || name[i] > '9') return -1;
    v = v * 10 + (name[i] - '0');
  }
  return v;
}

}  // namespace

std::vector<FrameRecord> load_dataset(const fs::path& root, Split split, const SplitSpec& spec,
                                      const LoadOptions& options) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  std::vector<std::pair<int, fs::path>> seqs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const int n = sequence_number(entry.path().filename().string());
    if (n >= 0) seqs.emplace_back(n, entry.path());
  }
  if (seqs.empty()) throw DataError("no seq_XX directories under " + root.string());
  std::sort(seqs.begin(), seqs.end());

  std::set<int> wanted;
  if (split == Split::kTrain) wanted.insert(spec.train.begin(), spec.train.end());
  if (split == Split::kTest) wanted.insert(spec.test.begin(), spec.test.end());

  std::vector<FrameRecord> records;
  for (const auto& [seq, dir] : seqs) {
    if (seq == kExcludedSequence) {
      log_warn("skipping seq_13: it has no tool-tissue interaction");
      continue;
    }
    if (split != Split::kAll && !wanted.count(seq)) continue;
    const fs::path images = dir / "images";
    if (!fs::is_directory(images)) throw DataError(dir.string() + " has no images/ directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(images)) {
      if (entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& img : files) {
      FrameRecord r;
      r.sequence = seq;
      r.stem = img.stem().string();
      r.image = img;
      r.mask = dir / "masks" / (r.stem + ".png");
      r.annotation_path = dir / "annotations" / (r.stem + ".json");
      if (!fs::exists(r.mask)) throw DataError("missing mask for " + img.string());
      if (!fs::exists(r.annotation_path)) throw DataError("missing annotation for " + img.string());
      r.annotation = read_annotation(r.annotation_path);
      if (options.verify_masks) checked_labels(read_png_labels(r.mask), r.mask.string());
      records.push_back(std::move(r));
    }
  }
  if (records.empty()) {
    throw DataError("split '" + to_string(split) + "' selects no frames under " + root.string());
  }
  return records;
}

Tensor rgb_to_tensor(const RgbImage& image) {
  const int64_t h = image.height, w = image.width, hw = h * w;
  Tensor t({3, h, w});
  for (int64_t p = 0; p < hw; ++p) {
    for (int64_t c = 0; c < 3; ++c) {
      t[c * hw + p] = image.pixels[static_cast<size_t>(p * 3 + c)] / 255.0;
    }
  }
  return t;
}

std::vector<int32_t> checked_labels(const LabelImage& mask, const std::string& origin) {
  std::vector<int32_t> out(mask.labels.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const int v = mask.labels[i];
    if (v >= kSegClasses) {
      throw DataError(origin + ": unknown label " + std::to_string(v) + " at pixel (" +
                      std::to_string(static_cast<int64_t>(i) / mask.width) + ", " +
                      std::to_string(static_cast<int64_t>(i) % mask.width) + ")");
    }
    out[i] = v;
  }
  return out;
}

Frame load_frame(const FrameRecord& record) {
  const RgbImage rgb = read_png_rgb(record.image);
  const LabelImage mask = read_png_labels(record.mask);
  if (rgb.height != mask.height || rgb.width != mask.width) {
    throw DataError("image and mask sizes differ for " + record.frame_id());
  }
  Frame f;
  f.id = record.frame_id();
  f.image = rgb_to_tensor(rgb);
  f.mask = checked_labels(mask, record.mask.string());
  f.height = rgb.height;
  f.width = rgb.width;
  f.annotation = record.annotation;
  return f;
}

Frame to_frame(const SynthFrame& synth) {
  FrameRecord record;
  record.sequence = synth.sequence;
  record.stem = synth.stem;
  Frame f;
  f.id = record.frame_id();
  f.image = rgb_to_tensor(synth.image);
  f.mask = checked_labels(synth.mask, f.id);
  f.height = synth.image.height;
  f.width = synth.image.width;
  f.annotation = synth.annotation;
  return f;
}

Frame preprocess(const Frame& frame, const PreprocessConfig& config) {
  if (config.strict && (frame.height != kNativeHeight || frame.width != kNativeWidth)) {
    throw DataError(frame.id + ": expected " + std::to_string(kNativeHeight) + "x" +
                    std::to_string(kNativeWidth) + " input, got " + std::to_string(frame.height) +
                    "x" + std::to_string(frame.width));
  }
  Frame out;
  out.id = frame.id;
  out.height = config.height;
  out.width = config.width;
  out.image = resize_bilinear(frame.image, config.height, config.width);
  out.mask = resize_nearest(frame.mask, frame.height, frame.width, config.height, config.width);
  out.annotation = frame.annotation;
  return out;
}

ChannelStats channel_stats(const std::vector<Frame>& frames) {
  if (frames.empty()) throw DataError("channel statistics need at least one frame");
  ChannelStats st;
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    int64_t n = 0;
    for (const Frame& f : frames) {
      const int64_t hw = f.height * f.width;
      const double* p = f.image.data() + c * hw;
      for (int64_t i = 0; i < hw; ++i) {
        sum += p[i];
        sq += p[i] * p[i];
      }
      n += hw;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(sq / static_cast<double>(n) - mean * mean, 0.0);
    st.mean[static_cast<size_t>(c)] = mean;
    st.stddev[static_cast<size_t>(c)] = std::max(std::sqrt(var), 1e-3);
  }
  return st;
}

SceneSample to_scene_sample(const Frame& frame, const ChannelStats& stats) {
  SceneSample s;
  s.image = normalize_channels(frame.image, stats.mean, stats.stddev);
  s.boxes = frame.annotation.boxes;
  s.semantics = frame.annotation.semantics;
  s.edges = frame.annotation.edges;
  s.targets = targets_tensor(frame.annotation);
  return s;
}

}  // namespace gmtl
