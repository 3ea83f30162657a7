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

#include "gmtl/error.hpp"
#include "gmtl/scenegraph.hpp"
#include "gmtl/seghead.hpp"

namespace gmtl {
namespace {

TEST(SegMetrics, HandWorkedExample) {
  // gt:   0 0 1 1     pred: 0 1 1 1
  const std::vector<int32_t> gt{0, 0, 1, 1}, pred{0, 1, 1, 1};
  const SegMetrics m = seg_metrics(pred, gt);
  EXPECT_DOUBLE_EQ(m.pixel_acc, 0.75);
  EXPECT_DOUBLE_EQ(m.per_class_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(m.per_class_iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.miou, (0.5 + 2.0 / 3.0) / 2.0);
  EXPECT_TRUE(m.present[0] && m.present[1] && !m.present[2]);
  EXPECT_DOUBLE_EQ(m.miou_all_classes, (0.5 + 2.0 / 3.0) / kSegClasses);
}

TEST(SegMetrics, ConfusionAccumulatesAcrossFrames) {
  const std::vector<int32_t> a{0, 1, 2, 2}, b{0, 1, 3, 3};
  SegConfusion c;
  c.add(a, a);
  c.add(b, a);
  EXPECT_EQ(c.at(2, 2), 2u);
  EXPECT_EQ(c.at(2, 3), 2u);
  EXPECT_DOUBLE_EQ(c.metrics().pixel_acc, 6.0 / 8.0);
}

TEST(SegMetrics, MismatchedSizesRejected) {
  const std::vector<int32_t> a{0, 1}, b{0};
  EXPECT_THROW(seg_metrics(a, b), Error);
}

TEST(SegMetrics, ArgmaxLabelsPerPixel) {
  Tensor logits({1, kSegClasses, 1, 2}, 0.0);
  logits.at({0, 3, 0, 0}) = 1.0;
  logits.at({0, 7, 0, 1}) = 2.0;
  EXPECT_EQ(argmax_labels(logits), (std::vector<int32_t>{3, 7}));
}

TEST(SgMetrics, ApOfPerfectAndReversedRankings) {
  const std::vector<double> t{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(average_precision(std::vector<double>{0.9, 0.8, 0.2, 0.1}, t), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(std::vector<double>{0.1, 0.2, 0.8, 0.9}, t),
                   (1.0 / 3.0 + 2.0 / 4.0) / 2.0);
}

TEST(SgMetrics, ClassesWithoutPositivesAreSkipped) {
  Tensor scores({2, kInteractionClasses}, 0.1), targets({2, kInteractionClasses}, 0.0);
  targets.at({0, 2}) = targets.at({1, 2}) = 1.0;
  scores.at({0, 2}) = 0.9;
  scores.at({1, 2}) = 0.4;
  const SgMetrics m = sg_metrics(scores, targets);
  EXPECT_DOUBLE_EQ(m.map, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.acc, 1.0);
  EXPECT_TRUE(m.class_has_positive[2]);
  EXPECT_FALSE(m.class_has_positive[0]);
}

TEST(SgMetrics, SigmoidIsStable) {
  const Tensor s = sigmoid(Tensor({3}, std::vector<double>{-800.0, 0.0, 800.0}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 0.5);
  EXPECT_EQ(s[2], 1.0);
}

}  // namespace
}  // namespace gmtl
