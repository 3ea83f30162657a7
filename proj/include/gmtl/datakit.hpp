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
#include <string>
#include <string_view>
#include <vector>

#include "gmtl/image.hpp"
#include "gmtl/png_io.hpp"
#include "gmtl/scenegraph.hpp"
#include "gmtl/seghead.hpp"

namespace gmtl {

inline constexpr int64_t kNativeHeight = 1024;
inline constexpr int64_t kNativeWidth = 1280;
inline constexpr int64_t kModelHeight = 320;
inline constexpr int64_t kModelWidth = 400;

// Interaction indices used by the synthetic label rule.
inline constexpr int kIdle = 0;
inline constexpr int kRetraction = 2;
inline constexpr int kTissueManipulation = 3;

const std::array<std::string_view, kSegClasses>& seg_class_names();
const std::array<std::string_view, kInteractionClasses>& interaction_names();
const std::array<std::string_view, kNodeVocabulary>& node_vocabulary();

// Per-frame annotation. Node 0..M-1 carry a box and a semantic id; each edge
// joins the tissue node to one instrument and owns a 13-way target row.
struct Annotation {
  std::vector<Box> boxes;
  std::vector<int> semantics;
  std::vector<Edge> edges;
  std::vector<std::array<uint8_t, kInteractionClasses>> targets;

  bool operator==(const Annotation&) const = default;
};

// Throws DataError naming the offending field.
void validate_annotation(const Annotation& ann);
Annotation read_annotation(const std::filesystem::path& path);
void write_annotation(const std::filesystem::path& path, const Annotation& ann);
std::string annotation_to_json(const Annotation& ann);
Annotation annotation_from_json(const std::string& text, const std::string& origin);

Tensor targets_tensor(const Annotation& ann);

struct FrameRecord {
  int sequence = 0;
  std::string stem;  // NNNNN
  std::filesystem::path image;
  std::filesystem::path mask;
  std::filesystem::path annotation_path;
  Annotation annotation;

  std::string frame_id() const;
};

enum class Split { kTrain, kTest, kAll };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SplitSpec {
  std::vector<int> train;
  std::vector<int> test;

  // train = {2,3,4,6,7,9,10,11,12,14,15}, test = {1,5,16}
  static SplitSpec standard();
  // Cross-validation folds 0..3 with test sets {1,5,16}, {2,3,15}, {4,6,14},
  // {4,11,12}; training takes every other usable sequence.
  static SplitSpec fold(int index);
};

// Sequence 13 has no tool-tissue interaction and is never loaded.
inline constexpr int kExcludedSequence = 13;

struct LoadOptions {
  bool verify_masks = true;  // decode every mask and check its labels
};

// Reads root/seq_XX/{images,masks,annotations}. kAll takes every sequence
// on disk except 13.
std::vector<FrameRecord> load_dataset(const std::filesystem::path& root, Split split,
                                      const SplitSpec& spec = SplitSpec::standard(),
                                      const LoadOptions& options = {});

struct Frame {
  std::string id;
  Tensor image;                // 3×H×W in [0, 1]
  std::vector<int32_t> mask;   // H·W labels
  int64_t height = 0;
  int64_t width = 0;
  Annotation annotation;
};

Frame load_frame(const FrameRecord& record);
Tensor rgb_to_tensor(const RgbImage& image);
std::vector<int32_t> checked_labels(const LabelImage& mask, const std::string& origin);

struct PreprocessConfig {
  int64_t height = kModelHeight;
  int64_t width = kModelWidth;
  bool strict = false;  // reject inputs that are not 1024×1280
};

// Bilinear image resize, nearest-neighbour mask resize. Boxes are normalized
// and carry over unchanged.
Frame preprocess(const Frame& frame, const PreprocessConfig& config = {});

struct ChannelStats {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

ChannelStats channel_stats(const std::vector<Frame>& frames);

SceneSample to_scene_sample(const Frame& frame, const ChannelStats& stats);

struct SynthConfig {
  uint64_t seed = 0;
  int n_frames = 16;
  int64_t height = kModelHeight;
  int64_t width = kModelWidth;
  std::vector<int> sequences{2};  // frames are dealt out in contiguous runs
};

struct SynthFrame {
  int sequence = 0;
  std::string stem;
  RgbImage image;
  LabelImage mask;
  std::vector<uint8_t> tissue;  // H·W footprint of the tissue blob
  Annotation annotation;
};

// Deterministic in-memory scenes.
std::vector<SynthFrame> synth_frames(const SynthConfig& config);
// The frame load_frame would return after a write_dataset round trip.
Frame to_frame(const SynthFrame& synth);
// Writes the frames in the on-disk dataset layout.
void write_dataset(const std::filesystem::path& root, const std::vector<SynthFrame>& frames);
std::vector<SynthFrame> synth_generate(const std::filesystem::path& root,
                                       const SynthConfig& config);

// Label rule shared by the generator and its tests: visible instrument
// pixels touching the tissue footprint mean manipulation, a gap of at most
// `margin` pixels means retraction, anything farther is idle. Returns -1 for
// the ambiguous band (margin, 2·margin) and for contact below min_overlap.
int interaction_rule(int64_t overlap_pixels, int64_t instrument_pixels, int64_t gap,
                     int64_t margin);

}  // namespace gmtl
