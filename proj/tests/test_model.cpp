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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gmtl/error.hpp"
#include "gmtl/model.hpp"
#include "gmtl/selftest.hpp"

namespace gmtl {
namespace {

void expect_all_pass(const std::vector<CheckResult>& results) {
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.suite << "/" << r.name << ": " << r.detail;
}

SceneSample scene(int64_t h, int64_t w, int instruments, Rng& rng) {
  SceneSample s;
  s.image = Tensor::randn({3, h, w}, rng);
  s.boxes.push_back({0.2, 0.2, 0.7, 0.7});
  s.semantics.push_back(kTissueSemantic);
  for (int k = 0; k < instruments; ++k) {
    const double x = 0.1 * k;
    s.boxes.push_back({x, 0.1, x + 0.3, 0.5});
    s.semantics.push_back(1 + k);
    s.edges.push_back({0, 1 + k});
  }
  s.targets = Tensor({static_cast<int64_t>(instruments), kInteractionClasses}, 0.0);
  return s;
}

TEST(Backbone, PyramidAt320x400) {
  Rng rng(1);
  ResNet18Encoder enc(rng);
  enc.set_training(false);
  NoGradGuard guard;
  const FeaturePyramid p = enc.encode(Var(Tensor::randn({1, 3, 320, 400}, rng)));
  EXPECT_EQ(p.c2.shape(), (Shape{1, 64, 80, 100}));
  EXPECT_EQ(p.c3.shape(), (Shape{1, 128, 40, 50}));
  EXPECT_EQ(p.c4.shape(), (Shape{1, 256, 20, 25}));
  EXPECT_EQ(p.c5.shape(), (Shape{1, 512, 10, 13}));
}

TEST(Backbone, RejectsTinyInput) {
  Rng rng(2);
  ResNet18Encoder enc(rng);
  NoGradGuard guard;
  EXPECT_THROW(enc.encode(Var(Tensor::randn({1, 3, 16, 64}, rng))), Error);
}

TEST(Backbone, BoxFeaturesAre512PerBox) {
  Rng rng(3);
  ResNet18Encoder enc(rng);
  enc.set_training(false);
  NoGradGuard guard;
  const std::vector<Box> boxes{{0, 0, 1, 1}, {0.1, 0.2, 0.3, 0.4}};
  EXPECT_EQ(enc.extract_box_features(Tensor::randn({3, 64, 80}, rng), boxes).shape(),
            (Shape{2, kBoxFeatureDim}));
}

TEST(Backbone, MissingWeightsFileIsDataError) {
  Rng rng(4);
  ResNet18Encoder enc(rng);
  EXPECT_THROW(enc.load_weights("/nonexistent/encoder.ckpt"), DataError);
}

TEST(SegHead, LogitShapesForEveryVariant) { expect_all_pass(shape_suite()); }

TEST(SceneGraph, RelabelingNodesKeepsEdgeLogits) { expect_all_pass(permutation_suite()); }

TEST(SceneGraph, SpatialFeatureOfIdenticalBoxes) {
  const Box b{0.1, 0.2, 0.5, 0.6};
  const auto f = spatial_feature(b, b);
  EXPECT_DOUBLE_EQ(f[0], 0.1);
  EXPECT_DOUBLE_EQ(f[7], 0.6);
  for (size_t i = 8; i < f.size(); ++i) EXPECT_DOUBLE_EQ(f[i], 0.0);
}

TEST(SceneGraph, AttentionMaskIsSymmetricWithSelfLoops) {
  const std::vector<Edge> edges{{0, 1}, {0, 3}};
  const auto m = attention_mask(4, edges);
  for (int64_t i = 0; i < 4; ++i) {
    EXPECT_EQ(m[static_cast<size_t>(i * 4 + i)], 1);
    for (int64_t j = 0; j < 4; ++j) {
      EXPECT_EQ(m[static_cast<size_t>(i * 4 + j)], m[static_cast<size_t>(j * 4 + i)]);
    }
  }
  EXPECT_EQ(m[1], 1);
  EXPECT_EQ(m[3], 1);
  EXPECT_EQ(m[1 * 4 + 3], 0);
}

TEST(SceneGraph, AttentionCoefficientsAreRowStochastic) {
  Rng rng(5);
  GraphAttention att(6, rng);
  NoGradGuard guard;
  const std::vector<Edge> edges{{0, 1}, {0, 2}};
  const Tensor a = att.forward(Var(Tensor::randn({3, 6}, rng)), edges).coefficients.value();
  for (int64_t i = 0; i < 3; ++i) {
    double s = 0;
    for (int64_t j = 0; j < 3; ++j) s += a.at({i, j});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_EQ(a.at({1, 2}), 0.0);
}

TEST(SceneGraph, ApWorkedExample) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6}, t{1, 0, 1, 0};
  EXPECT_NEAR(average_precision(s, t), 0.8333, 5e-5);
}

TEST(SceneGraph, LossAndMetricOracles) {
  expect_all_pass(metric_suite());
}

TEST(SceneGraph, PerfectScoresGiveUnitMetrics) {
  Tensor t({3, kInteractionClasses}, 0.0);
  t.at({0, 0}) = t.at({1, 2}) = t.at({2, 3}) = 1.0;
  const SgMetrics m = sg_metrics(t, t);
  EXPECT_DOUBLE_EQ(m.acc, 1.0);
  EXPECT_DOUBLE_EQ(m.map, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.exact_match, 1.0);
}

struct ModeCase {
  SegVariant variant;
  EdgeMode mode;
  bool sgfseg;
};

class ModelModes : public ::testing::TestWithParam<ModeCase> {};

TEST_P(ModelModes, ForwardProducesOneLogitRowPerEdge) {
  ModelConfig mc;
  mc.variant = GetParam().variant;
  mc.edge_mode = GetParam().mode;
  mc.sgfseg = GetParam().sgfseg;
  MultiTaskModel model(mc);
  model.set_training(false);
  Rng rng(6);
  const SceneSample a = scene(64, 96, 2, rng), b = scene(64, 96, 3, rng);
  NoGradGuard guard;
  const auto o = model.forward({&a, &b}, rng, {});
  EXPECT_EQ(o.seg_logits.shape(), (Shape{2, kSegClasses, 64, 96}));
  EXPECT_EQ(o.sg_logits.shape(), (Shape{5, kInteractionClasses}));
  EXPECT_EQ(o.sg_targets.shape(), (Shape{5, kInteractionClasses}));
  EXPECT_TRUE(o.sg_logits.value().all_finite());
}

INSTANTIATE_TEST_SUITE_P(
    Variants, ModelModes,
    ::testing::Values(ModeCase{SegVariant::kGR, EdgeMode::kGisf, false},
                      ModeCase{SegVariant::kMSGR, EdgeMode::kNone, false},
                      ModeCase{SegVariant::kMSLRGR, EdgeMode::kGisf, false},
                      ModeCase{SegVariant::kMSLRGR, EdgeMode::kPf, false},
                      ModeCase{SegVariant::kMSLRGR, EdgeMode::kNone, true}),
    [](const auto& info) {
      return to_string(info.param.variant) + "_" + to_string(info.param.mode) +
             (info.param.sgfseg ? "_sgfseg" : "");
    });

TEST(Model, EdgeModeChangesEdgeLogits) {
  Rng rng(7);
  const SceneSample s = scene(64, 64, 2, rng);
  ModelConfig none;
  none.edge_mode = EdgeMode::kNone;
  ModelConfig gisf = none;
  gisf.edge_mode = EdgeMode::kGisf;
  MultiTaskModel a(none), b(gisf);
  a.set_training(false);
  b.set_training(false);
  NoGradGuard guard;
  const Tensor la = a.forward({&s}, rng, {}).sg_logits.value();
  const Tensor lb = b.forward({&s}, rng, {}).sg_logits.value();
  double diff = 0;
  for (int64_t i = 0; i < la.numel(); ++i) diff = std::max(diff, std::abs(la[i] - lb[i]));
  EXPECT_GT(diff, 1e-9);
}

TEST(Model, CachedReadoutMatchesFullForward) {
  Rng rng(8);
  const SceneSample s = scene(64, 64, 2, rng);
  MultiTaskModel model(ModelConfig{});
  model.set_training(false);
  NoGradGuard guard;
  const Tensor full = model.forward({&s}, rng, {}).sg_logits.value();
  const Tensor cached = model.forward_cached(s, model.frozen_features(s)).logits.value();
  ASSERT_EQ(full.shape(), cached.shape());
  for (int64_t i = 0; i < full.numel(); ++i) EXPECT_NEAR(full[i], cached[i], 1e-10);
}

TEST(Model, PartitionIsDisjointAndExhaustive) {
  MultiTaskModel model(ModelConfig{});
  const auto all = model.named_parameters();
  const auto part = model.partition().all();
  EXPECT_EQ(all.size(), part.size());
  std::set<const void*> seen;
  for (const auto& p : part) EXPECT_TRUE(seen.insert(p.var->node().get()).second) << p.name;
  for (const auto& p : all) EXPECT_TRUE(seen.count(p.var->node().get())) << p.name;
  for (const auto& p : model.partition().params(ParamGroup::kShared)) {
    EXPECT_EQ(p.name.rfind("encoder.", 0), 0u) << p.name;
  }
  bool compress_in_sg = false;
  for (const auto& p : model.partition().params(ParamGroup::kSceneGraph)) {
    compress_in_sg = compress_in_sg || p.name.find("gisf_compress") != std::string::npos;
  }
  EXPECT_TRUE(compress_in_sg);
}

TEST(Model, FreezingClearsRequiresGrad) {
  MultiTaskModel model(ModelConfig{});
  model.partition().set_frozen(ParamGroup::kShared, true);
  for (const auto& p : model.partition().params(ParamGroup::kShared)) EXPECT_FALSE(p.var->requires_grad());
  for (const auto& p : model.partition().params(ParamGroup::kSceneGraph)) {
    EXPECT_TRUE(p.var->requires_grad()) << p.name;
  }
}

}  // namespace
}  // namespace gmtl
