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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmtl/backbone.hpp"
#include "gmtl/glore.hpp"
#include "gmtl/nn.hpp"

namespace gmtl {

inline constexpr int64_t kInteractionClasses = 13;
inline constexpr int64_t kNodeVocabulary = 8;  // defective tissue + T1..T7
inline constexpr int kTissueSemantic = 0;
inline constexpr int64_t kSemanticDim = 64;
inline constexpr int64_t kFusedDim = 256;
inline constexpr int64_t kSpatialDim = 12;
inline constexpr int64_t kReadoutHidden = 256;
inline constexpr int64_t kEdgeExtraDim = 64;

enum class EdgeMode { kNone, kGisf, kPf };

std::string to_string(EdgeMode m);
EdgeMode parse_edge_mode(const std::string& s);

struct Edge {
  int64_t tissue;
  int64_t instrument;
  bool operator==(const Edge&) const = default;
};

struct SceneSample {
  Tensor image;  // 3×H×W, channel-normalized
  std::vector<Box> boxes;
  std::vector<int> semantics;  // 0 = defective tissue, 1..7 = T1..T7
  std::vector<Edge> edges;
  Tensor targets;  // E×13 of {0,1}
};

// Index of the single tissue node; throws DataError otherwise.
int64_t find_tissue_node(std::span<const int> semantics);
// Checks boxes, semantics, topology and target values.
void validate_scene(const SceneSample& sample);

// [tissue box, instrument box, Δcx, Δcy, log(w_j / w_i), log(h_j / h_i)]
std::array<double, kSpatialDim> spatial_feature(const Box& tissue, const Box& instrument);
Tensor spatial_features(std::span<const Box> boxes, std::span<const Edge> edges);

// Undirected edge list plus self loops, as a row-major M×M mask.
std::vector<uint8_t> attention_mask(int64_t nodes, std::span<const Edge> edges);

// Single-head graph attention with self loops:
//   e_ij = leaky_relu(a_dstᵀ W h_i + a_srcᵀ W h_j), j ∈ N(i) ∪ {i}
//   α_ij = softmax_j(e_ij),  h'_i = elu(Σ_j α_ij W h_j)
class GraphAttention : public nn::Module {
 public:
  GraphAttention(int64_t dim, Rng& rng, double negative_slope = 0.2);

  struct Output {
    Var features;     // M×D
    Var coefficients;  // M×M, zero outside the neighbourhood
  };
  Output forward(const Var& features, std::span<const Edge> edges) const;

  nn::Linear proj;
  Var att_dst;  // D
  Var att_src;  // D

 private:
  int64_t dim_;
  double slope_;
};

struct GraphBundle {
  Var visual_in;    // M×512 (F_vf)
  Var semantic_in;  // M×64 (F_semf)
  Var visual;       // after one attention round on G_v
  Var semantic;     // after one attention round on G_s
  Var fused;        // M×256, G_c node features
  std::vector<Edge> edges;
};

struct EdgeReadout {
  Var logits;  // E×13, sigmoid applied downstream
  Var hidden;  // E×256 interaction features (SGFSEG source)
};

struct SceneGraphConfig {
  EdgeMode edge_mode = EdgeMode::kNone;
  int64_t penultimate_width = 64;  // decoder width feeding PF compression
  bool semantic_trainable = false;
  uint64_t semantic_seed = 0x5EED5EED;
};

class SceneGraphHead : public nn::Module {
 public:
  SceneGraphHead(const SceneGraphConfig& config, Rng& rng);

  // Visual features through the shared encoder.
  GraphBundle build_graphs(const SceneSample& sample, ResNet18Encoder& encoder) const;
  // Same, from precomputed M×512 box features.
  GraphBundle build_graphs(const Var& box_features, std::span<const int> semantics,
                           std::span<const Edge> edges) const;

  // extra: 1×64 in GISF / PF mode, absent in NONE mode.
  EdgeReadout edge_readout(const GraphBundle& bundle, const Tensor& spatial,
                           const std::optional<Var>& extra) const;

  // B×penultimate_width pooled decoder features -> B×64.
  Var compress_penultimate(const Var& pooled) const;

  EdgeMode edge_mode() const { return config_.edge_mode; }
  const SceneGraphConfig& config() const { return config_; }

  GraphAttention visual_gat;
  GraphAttention semantic_gat;
  nn::Linear fuse;
  nn::Linear fc1;        // [h_t ‖ h_i ‖ F_sf] -> hidden
  nn::Linear fc1_extra;  // extra slice -> hidden, no bias
  nn::Linear fc2;
  nn::Linear pf_compress;
  Var semantic_table;  // 8×64

 private:
  SceneGraphConfig config_;
};

// Mean BCE-with-logits over all E×13 entries; 0 (with a warning) for E = 0.
Var sg_loss(const Var& logits, const Tensor& targets);

struct SgMetrics {
  double acc = 0;          // argmax class is a positive
  double map = 0;          // mean AP over classes with positives
  double recall = 0;       // macro recall at 0.5 over classes with positives
  double exact_match = 0;  // all 13 decisions at 0.5 correct
  std::array<double, kInteractionClasses> class_ap{};
  std::array<bool, kInteractionClasses> class_has_positive{};
};

// scores: E×13 probabilities; targets: E×13 of {0,1}.
SgMetrics sg_metrics(const Tensor& scores, const Tensor& targets);
// Average precision of one ranked column; ties keep the lower row first.
double average_precision(std::span<const double> scores, std::span<const double> targets);

Tensor sigmoid(const Tensor& logits);

}  // namespace gmtl
