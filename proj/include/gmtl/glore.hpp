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

#include <optional>

#include "gmtl/nn.hpp"

namespace gmtl {

inline constexpr int64_t kGisfDim = 64;

struct GloReConfig {
  int64_t channels = 512;   // C of the input map
  int64_t nodes = 16;       // N latent nodes
  int64_t latent = 128;     // Cr latent state width
  int64_t gisf_dim = kGisfDim;
  int64_t injection_dim = 0;  // 0 disables the scene-graph injection port
  // Summarize reasoned nodes Z (true) or projected nodes V (false).
  bool gisf_after_reasoning = true;
};

// Global reasoning in a latent interaction space:
//   B = softmax_nodes(theta(x))            N×hw per sample
//   V = B · phi(x)ᵀ  (+ inj(v) per node)   N×Cr
//   Z = ((I - A) V) W
//   y = x + psi(Bᵀ Z)                       psi has no bias
//   gisf = compress(mean_nodes(Z))
class GloReUnit : public nn::Module {
 public:
  GloReUnit(const GloReConfig& config, Rng& rng);

  struct Output {
    Var y;           // B×C×h×w
    Var gisf;        // B×gisf_dim
    Var assignment;  // B×N×hw, columns sum to one
  };

  // injection (B×injection_dim) is only accepted when the port is enabled.
  Output forward(const Var& x, const std::optional<Var>& injection = std::nullopt) const;

  const GloReConfig& config() const { return config_; }

  nn::Conv2d theta;
  nn::Conv2d phi;
  nn::Conv2d psi;
  Var adjacency;     // N×N
  Var state_update;  // Cr×Cr
  nn::Linear gisf_compress;
  std::unique_ptr<nn::Linear> injection_proj;  // zero-initialized

 private:
  GloReConfig config_;
  Var identity_;  // constant N×N
};

// Pools scene-graph edge features into the per-sample injection vector:
// mean over edges (zeros for an edgeless graph), then a linear map.
class SceneGraphSummary : public nn::Module {
 public:
  SceneGraphSummary(int64_t edge_dim, int64_t injection_dim, Rng& rng);

  // edge_features: E×edge_dim. Returns 1×injection_dim.
  Var forward(const Var& edge_features) const;

  nn::Linear map;

 private:
  int64_t edge_dim_;
};

}  // namespace gmtl
