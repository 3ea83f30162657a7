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

#include "gmtl/model.hpp"

#include "gmtl/error.hpp"

namespace gmtl {
namespace {

SegHeadConfig seg_config(const ModelConfig& c) {
  SegHeadConfig s;
  s.variant = c.variant;
  s.dropout = c.dropout;
  s.injection_dim = c.sgfseg ? kEdgeExtraDim : 0;
  return s;
}

SceneGraphConfig sg_config(const ModelConfig& c) {
  SceneGraphConfig s;
  s.edge_mode = c.edge_mode;
  s.semantic_trainable = c.semantic_trainable;
  return s;
}

const ModelConfig& checked(const ModelConfig& c) {
  if (c.sgfseg && c.edge_mode != EdgeMode::kNone) {
    throw UsageError("scene-graph injection into segmentation requires edge mode NONE");
  }
  return c;
}

struct InitRng {
  explicit InitRng(uint64_t seed) : rng(Rng::derive(seed, 0)) {}
  Rng rng;
};

}  // namespace

MultiTaskModel::MultiTaskModel(const ModelConfig& config)
    : MultiTaskModel(checked(config), std::move(InitRng(config.seed).rng)) {}

MultiTaskModel::MultiTaskModel(const ModelConfig& config, Rng&& rng)
    : encoder(rng), seg(seg_config(config), rng), sg(sg_config(config), rng), config_(config) {
  if (config.sgfseg) summary = std::make_unique<SceneGraphSummary>(kReadoutHidden, kEdgeExtraDim, rng);
  register_module("encoder", encoder);
  register_module("seg", seg);
  register_module("sg", sg);
  if (summary) register_module("summary", *summary);

  std::vector<nn::NamedParam> seg_params, sg_params;
  for (const auto& p : seg.named_parameters("seg.")) {
    (p.name.find(".gisf_compress.") != std::string::npos ? sg_params : seg_params).push_back(p);
  }
  if (summary) {
    for (const auto& p : summary->named_parameters("summary.")) seg_params.push_back(p);
  }
  for (const auto& p : sg.named_parameters("sg.")) sg_params.push_back(p);
  partition_.add(ParamGroup::kShared, encoder.named_parameters("encoder."));
  partition_.add(ParamGroup::kSegmentation, seg_params);
  partition_.add(ParamGroup::kSceneGraph, sg_params);
}

Tensor stack_images(const std::vector<const SceneSample*>& batch) {
  if (batch.empty()) throw UsageError("empty batch");
  std::vector<Tensor> images;
  for (const SceneSample* s : batch) {
    if (s->image.shape() != batch.front()->image.shape()) {
      throw UsageError("batch images differ in size");
    }
    images.push_back(s->image);
  }
  return stack(images);
}

Tensor batch_targets(const std::vector<const SceneSample*>& batch) {
  int64_t total = 0;
  for (const SceneSample* s : batch) total += static_cast<int64_t>(s->edges.size());
  Tensor t({total, kInteractionClasses});
  int64_t off = 0;
  for (const SceneSample* s : batch) {
    for (int64_t i = 0; i < s->targets.numel(); ++i) t[off + i] = s->targets[i];
    off += s->targets.numel();
  }
  return t;
}

void MultiTaskModel::set_shared_training(bool training) {
  encoder.set_training(training);
  seg.set_training(training);
  if (summary) summary->set_training(training);
}

std::optional<Var> MultiTaskModel::edge_extra(int64_t sample, const Var& gisf,
                                              const Var& pooled) const {
  const int64_t row[] = {sample};
  switch (config_.edge_mode) {
    case EdgeMode::kNone: return std::nullopt;
    case EdgeMode::kGisf: return ops::gather_rows(gisf, row);
    case EdgeMode::kPf: return ops::gather_rows(pooled, row);
  }
  return std::nullopt;
}

MultiTaskModel::Output MultiTaskModel::forward(const std::vector<const SceneSample*>& batch,
                                               Rng& rng, Pass pass) {
  if (config_.sgfseg && pass.seg) pass.sg = true;
  const bool need_seg = pass.seg || (pass.sg && config_.edge_mode != EdgeMode::kNone);
  const auto nb = static_cast<int64_t>(batch.size());
  Output out;

  std::vector<GraphBundle> bundles;
  std::vector<Tensor> spatial;
  if (pass.sg) {
    for (const SceneSample* s : batch) {
      validate_scene(*s);
      Var boxes = encoder.extract_box_features(s->image, s->boxes);
      bundles.push_back(sg.build_graphs(boxes, s->semantics, s->edges));
      spatial.push_back(spatial_features(s->boxes, s->edges));
    }
  }

  std::optional<Var> injection;
  if (pass.sg && config_.sgfseg) {
    std::vector<Var> rows;
    for (int64_t b = 0; b < nb; ++b) {
      out.edges.push_back(sg.edge_readout(bundles[b], spatial[b], std::nullopt));
      rows.push_back(summary->forward(out.edges.back().hidden));
    }
    injection = ops::concat(rows, 0);
  }

  if (need_seg) {
    const Tensor images = stack_images(batch);
    FeaturePyramid pyr = encoder.encode(Var(images));
    SegmentationHead::Options opts;
    opts.injection = injection;
    SegOutput so = seg.forward(pyr, images.dim(2), images.dim(3), rng, opts);
    out.seg_logits = so.logits;
    out.gisf = so.gisf;
    out.penultimate = so.penultimate;
    out.c5 = pyr.c5;
  }

  if (pass.sg && !config_.sgfseg) {
    Var pooled;
    if (config_.edge_mode == EdgeMode::kPf) {
      pooled = sg.compress_penultimate(ops::global_avg_pool(out.penultimate));
    }
    for (int64_t b = 0; b < nb; ++b) {
      out.edges.push_back(sg.edge_readout(bundles[b], spatial[b], edge_extra(b, out.gisf, pooled)));
    }
  }

  if (pass.sg) {
    std::vector<Var> parts;
    for (const EdgeReadout& r : out.edges) {
      if (r.logits.dim(0) > 0) parts.push_back(r.logits);
    }
    if (!parts.empty()) out.sg_logits = parts.size() == 1 ? parts[0] : ops::concat(parts, 0);
    out.sg_targets = batch_targets(batch);
  }
  return out;
}

FrozenFrameFeatures MultiTaskModel::frozen_features(const SceneSample& sample) {
  NoGradGuard guard;
  FrozenFrameFeatures f;
  f.box_features = encoder.extract_box_features(sample.image, sample.boxes).value();
  const Tensor image = stack_images({&sample});
  FeaturePyramid pyr = encoder.encode(Var(image));
  f.c5 = pyr.c5.value();
  if (config_.edge_mode == EdgeMode::kPf) {
    Rng unused(0);
    SegOutput so = seg.forward(pyr, image.dim(2), image.dim(3), unused);
    f.penultimate = ops::global_avg_pool(so.penultimate).value();
  }
  return f;
}

EdgeReadout MultiTaskModel::forward_cached(const SceneSample& sample,
                                           const FrozenFrameFeatures& cached) {
  GraphBundle bundle = sg.build_graphs(Var(cached.box_features), sample.semantics, sample.edges);
  const Tensor spatial = spatial_features(sample.boxes, sample.edges);
  std::optional<Var> extra;
  if (config_.edge_mode == EdgeMode::kGisf) extra = seg.c5_unit().forward(Var(cached.c5)).gisf;
  if (config_.edge_mode == EdgeMode::kPf) extra = sg.compress_penultimate(Var(cached.penultimate));
  return sg.edge_readout(bundle, spatial, extra);
}

}  // namespace gmtl
