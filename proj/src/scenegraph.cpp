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

#include "gmtl/scenegraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmtl/error.hpp"
#include "gmtl/log.hpp"

namespace gmtl {

std::string to_string(EdgeMode m) {
  switch (m) {
    case EdgeMode::kNone: return "NONE";
    case EdgeMode::kGisf: return "GISF";
    case EdgeMode::kPf: return "PF";
  }
  return "?";
}

EdgeMode parse_edge_mode(const std::string& s) {
  if (s == "NONE") return EdgeMode::kNone;
  if (s == "GISF") return EdgeMode::kGisf;
  if (s == "PF") return EdgeMode::kPf;
  throw UsageError("unknown edge mode '" + s + "' (expected NONE, GISF or PF)");
}

int64_t find_tissue_node(std::span<const int> semantics) {
  int64_t found = -1;
  for (size_t i = 0; i < semantics.size(); ++i) {
    if (semantics[i] != kTissueSemantic) continue;
    if (found >= 0) throw DataError("scene has more than one defective-tissue node");
    found = static_cast<int64_t>(i);
  }
  if (found < 0) throw DataError("scene has no defective-tissue node");
  return found;
}

void validate_scene(const SceneSample& s) {
  const int64_t m = static_cast<int64_t>(s.boxes.size());
  if (m < 1) throw DataError("scene has no nodes");
  if (static_cast<int64_t>(s.semantics.size()) != m) {
    throw DataError("scene: box and semantic counts differ");
  }
  for (size_t i = 0; i < s.boxes.size(); ++i) {
    if (!s.boxes[i].valid()) throw DataError("scene: box " + std::to_string(i) + " is invalid");
    if (s.semantics[i] < 0 || s.semantics[i] >= kNodeVocabulary) {
      throw DataError("scene: semantic id out of range at node " + std::to_string(i));
    }
  }
  const int64_t tissue = find_tissue_node(s.semantics);
  std::vector<bool> used(static_cast<size_t>(m), false);
  for (const Edge& e : s.edges) {
    if (e.tissue != tissue) throw DataError("scene: edge does not start at the tissue node");
    if (e.instrument < 0 || e.instrument >= m || e.instrument == tissue) {
      throw DataError("scene: edge instrument index invalid");
    }
    if (used[static_cast<size_t>(e.instrument)]) {
      throw DataError("scene: instrument joined by more than one edge");
    }
    used[static_cast<size_t>(e.instrument)] = true;
  }
  const int64_t ne = static_cast<int64_t>(s.edges.size());
  if (ne > 0 || !s.targets.empty()) {
    if (s.targets.rank() != 2 || s.targets.dim(0) != ne || s.targets.dim(1) != kInteractionClasses) {
      throw DataError("scene: targets must be E×13");
    }
    for (double t : s.targets.values()) {
      if (t != 0.0 && t != 1.0) throw DataError("scene: interaction target not in {0,1}");
    }
  }
}

std::array<double, kSpatialDim> spatial_feature(const Box& a, const Box& b) {
  const double dcx = 0.5 * (b.x1 + b.x2) - 0.5 * (a.x1 + a.x2);
  const double dcy = 0.5 * (b.y1 + b.y2) - 0.5 * (a.y1 + a.y2);
  return {a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2, dcx, dcy,
          std::log(b.width() / a.width()), std::log(b.height() / a.height())};
}

Tensor spatial_features(std::span<const Box> boxes, std::span<const Edge> edges) {
  Tensor out({static_cast<int64_t>(edges.size()), kSpatialDim});
  for (size_t e = 0; e < edges.size(); ++e) {
    const auto f = spatial_feature(boxes[static_cast<size_t>(edges[e].tissue)],
                                   boxes[static_cast<size_t>(edges[e].instrument)]);
    std::copy(f.begin(), f.end(), out.data() + static_cast<int64_t>(e) * kSpatialDim);
  }
  return out;
}

std::vector<uint8_t> attention_mask(int64_t m, std::span<const Edge> edges) {
  std::vector<uint8_t> mask(static_cast<size_t>(m * m), 0);
  for (int64_t i = 0; i < m; ++i) mask[static_cast<size_t>(i * m + i)] = 1;
  for (const Edge& e : edges) {
    if (e.tissue < 0 || e.tissue >= m || e.instrument < 0 || e.instrument >= m) {
      throw DataError("edge endpoint out of range");
    }
    mask[static_cast<size_t>(e.tissue * m + e.instrument)] = 1;
    mask[static_cast<size_t>(e.instrument * m + e.tissue)] = 1;
  }
  return mask;
}

GraphAttention::GraphAttention(int64_t dim, Rng& rng, double negative_slope)
    : proj(dim, dim, false, rng), dim_(dim), slope_(negative_slope) {
  register_module("proj", proj);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  register_parameter("att_dst", att_dst, Tensor::uniform({dim, 1}, rng, -s, s));
  register_parameter("att_src", att_src, Tensor::uniform({dim, 1}, rng, -s, s));
}

GraphAttention::Output GraphAttention::forward(const Var& features,
                                               std::span<const Edge> edges) const {
  const Tensor& h = features.value();
  if (h.rank() != 2 || h.dim(1) != dim_) {
    throw UsageError("graph attention expects M×" + std::to_string(dim_) + ", got " +
                     shape_str(h.shape()));
  }
  const int64_t m = h.dim(0);
  if (m < 1) throw UsageError("graph attention needs at least one node");
  Var wh = proj.forward(features);
  Var s_dst = ops::reshape(ops::matmul(wh, att_dst), {m});
  Var s_src = ops::reshape(ops::matmul(wh, att_src), {m});
  Var scores = ops::leaky_relu(ops::outer_add(s_dst, s_src), slope_);
  Var alpha = ops::masked_softmax_rows(scores, attention_mask(m, edges));
  return {ops::elu(ops::matmul(alpha, wh)), alpha};
}

SceneGraphHead::SceneGraphHead(const SceneGraphConfig& config, Rng& rng)
    : visual_gat(kBoxFeatureDim, rng),
      semantic_gat(kSemanticDim, rng),
      fuse(kBoxFeatureDim + kSemanticDim, kFusedDim, true, rng),
      fc1(2 * kFusedDim + kSpatialDim, kReadoutHidden, true, rng),
      fc1_extra(kEdgeExtraDim, kReadoutHidden, false, rng),
      fc2(kReadoutHidden, kInteractionClasses, true, rng),
      pf_compress(config.penultimate_width, kEdgeExtraDim, true, rng),
      config_(config) {
  register_module("visual_gat", visual_gat);
  register_module("semantic_gat", semantic_gat);
  register_module("fuse", fuse);
  register_module("readout.fc1", fc1);
  register_module("readout.fc1_extra", fc1_extra);
  register_module("readout.fc2", fc2);
  register_module("pf_compress", pf_compress);
  Rng table_rng(config.semantic_seed);
  Tensor table = Tensor::randn({kNodeVocabulary, kSemanticDim}, table_rng, 1.0);
  if (config.semantic_trainable) {
    register_parameter("semantic_table", semantic_table, std::move(table));
  } else {
    semantic_table = Var(std::move(table), false);
    register_buffer("semantic_table", semantic_table.mutable_value());
  }
}

GraphBundle SceneGraphHead::build_graphs(const SceneSample& sample,
                                         ResNet18Encoder& encoder) const {
  if (sample.boxes.empty()) throw DataError("scene graph needs at least one node");
  find_tissue_node(sample.semantics);
  Var feats = encoder.extract_box_features(sample.image, sample.boxes);
  return build_graphs(feats, sample.semantics, sample.edges);
}

GraphBundle SceneGraphHead::build_graphs(const Var& box_features, std::span<const int> semantics,
                                         std::span<const Edge> edges) const {
  const int64_t m = static_cast<int64_t>(semantics.size());
  if (m < 1) throw DataError("scene graph needs at least one node");
  find_tissue_node(semantics);
  if (box_features.value().rank() != 2 || box_features.dim(0) != m ||
      box_features.dim(1) != kBoxFeatureDim) {
    throw UsageError("box features must be M×512, got " + shape_str(box_features.shape()));
  }
  std::vector<int64_t> ids;
  for (int s : semantics) {
    if (s < 0 || s >= kNodeVocabulary) throw DataError("semantic id out of range");
    ids.push_back(s);
  }
  GraphBundle g;
  g.edges.assign(edges.begin(), edges.end());
  g.visual_in = box_features;
  g.semantic_in = ops::gather_rows(semantic_table, ids);
  g.visual = visual_gat.forward(g.visual_in, edges).features;
  g.semantic = semantic_gat.forward(g.semantic_in, edges).features;
  const Var parts[] = {g.visual, g.semantic};
  g.fused = fuse.forward(ops::concat(parts, 1));
  return g;
}

EdgeReadout SceneGraphHead::edge_readout(const GraphBundle& bundle, const Tensor& spatial,
                                         const std::optional<Var>& extra) const {
  const int64_t ne = static_cast<int64_t>(bundle.edges.size());
  if (config_.edge_mode == EdgeMode::kNone && extra) {
    throw UsageError("edge mode NONE takes no extra edge feature");
  }
  if (config_.edge_mode != EdgeMode::kNone) {
    if (!extra) throw UsageError("edge mode " + to_string(config_.edge_mode) + " needs an extra feature");
    if (extra->value().numel() != kEdgeExtraDim) {
      throw UsageError("extra edge feature must have width 64, got " + shape_str(extra->shape()));
    }
  }
  if (spatial.rank() != 2 || spatial.dim(0) != ne || spatial.dim(1) != kSpatialDim) {
    throw UsageError("spatial features must be E×12, got " + shape_str(spatial.shape()));
  }
  if (ne == 0) {
    return {Var(Tensor({0, kInteractionClasses})), Var(Tensor({0, kReadoutHidden}))};
  }
  std::vector<int64_t> t_idx, i_idx;
  for (const Edge& e : bundle.edges) {
    t_idx.push_back(e.tissue);
    i_idx.push_back(e.instrument);
  }
  const Var parts[] = {ops::gather_rows(bundle.fused, t_idx), ops::gather_rows(bundle.fused, i_idx),
                       Var(spatial)};
  Var pre = fc1.forward(ops::concat(parts, 1));
  if (extra) {
    Var row = ops::reshape(*extra, {1, kEdgeExtraDim});
    std::vector<int64_t> zeros(static_cast<size_t>(ne), 0);
    pre = ops::add(pre, fc1_extra.forward(ops::gather_rows(row, zeros)));
  }
  Var hidden = ops::relu(pre);
  return {fc2.forward(hidden), hidden};
}

Var SceneGraphHead::compress_penultimate(const Var& pooled) const {
  return pf_compress.forward(pooled);
}

Var sg_loss(const Var& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw UsageError("sg_loss: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  if (targets.numel() == 0) {
    log_warn("sg_loss on a graph without edges; defined as 0");
    return Var(Tensor({1}, 0.0));
  }
  return ops::bce_with_logits(logits, targets);
}

double average_precision(std::span<const double> scores, std::span<const double> targets) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double hits = 0, sum = 0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (targets[order[r]] > 0.5) {
      hits += 1;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return hits > 0 ? sum / hits : 0.0;
}

SgMetrics sg_metrics(const Tensor& scores, const Tensor& targets) {
  if (scores.shape() != targets.shape() ||
      (scores.numel() > 0 && (scores.rank() != 2 || scores.dim(1) != kInteractionClasses))) {
    throw UsageError("sg_metrics: scores and targets must both be E×13");
  }
  SgMetrics out;
  const int64_t ne = scores.numel() == 0 ? 0 : scores.dim(0);
  if (ne == 0) return out;
  for (double s : scores.values()) {
    if (!(s >= 0.0 && s <= 1.0)) throw UsageError("sg_metrics: scores must be probabilities");
  }
  int64_t correct = 0, exact = 0;
  for (int64_t e = 0; e < ne; ++e) {
    const double* row = scores.data() + e * kInteractionClasses;
    const double* tgt = targets.data() + e * kInteractionClasses;
    const int64_t best = std::max_element(row, row + kInteractionClasses) - row;
    if (tgt[best] > 0.5) ++correct;
    bool all = true;
    for (int64_t c = 0; c < kInteractionClasses; ++c) all = all && ((row[c] >= 0.5) == (tgt[c] > 0.5));
    if (all) ++exact;
  }
  out.acc = static_cast<double>(correct) / static_cast<double>(ne);
  out.exact_match = static_cast<double>(exact) / static_cast<double>(ne);

  double ap_sum = 0, rec_sum = 0;
  int n_cls = 0;
  std::vector<double> col_s(static_cast<size_t>(ne)), col_t(static_cast<size_t>(ne));
  for (int64_t c = 0; c < kInteractionClasses; ++c) {
    double positives = 0, tp = 0;
    for (int64_t e = 0; e < ne; ++e) {
      col_s[static_cast<size_t>(e)] = scores[e * kInteractionClasses + c];
      col_t[static_cast<size_t>(e)] = targets[e * kInteractionClasses + c];
      if (col_t[static_cast<size_t>(e)] > 0.5) {
        positives += 1;
        if (col_s[static_cast<size_t>(e)] >= 0.5) tp += 1;
      }
    }
    if (positives == 0) continue;
    const size_t ci = static_cast<size_t>(c);
    out.class_has_positive[ci] = true;
    out.class_ap[ci] = average_precision(col_s, col_t);
    ap_sum += out.class_ap[ci];
    rec_sum += tp / positives;
    ++n_cls;
  }
  if (n_cls > 0) {
    out.map = ap_sum / n_cls;
    out.recall = rec_sum / n_cls;
  }
  return out;
}

Tensor sigmoid(const Tensor& logits) {
  Tensor out(logits.shape());
  for (int64_t i = 0; i < logits.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return out;
}

}  // namespace gmtl
