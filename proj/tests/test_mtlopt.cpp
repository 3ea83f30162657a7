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

#include "gmtl/error.hpp"
#include "gmtl/mtlopt.hpp"
#include "gmtl/selftest.hpp"

namespace gmtl {
namespace {

void expect_all_pass(const std::vector<CheckResult>& results) {
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.suite << "/" << r.name << ": " << r.detail;
}

TEST(Losses, ClosedFormsAndKldProperties) { expect_all_pass(loss_suite()); }

TEST(Losses, VanillaWeightsAtDefaultAlpha) {
  EXPECT_DOUBLE_EQ(compose_vmtl(1.0, 0.0, 0.4), 0.4);
  EXPECT_DOUBLE_EQ(compose_vmtl(0.0, 1.0, 0.4), 0.6);
  EXPECT_DOUBLE_EQ(compose_kdmtl(1.0, 1.0, 1.0), 2.4);
}

TEST(Losses, UndefinedTermsCountAsZero) {
  const Var seg(Tensor({1}, 2.0));
  EXPECT_DOUBLE_EQ(compose_vmtl(Var(), seg, 0.4).value()[0], 1.2);
  EXPECT_DOUBLE_EQ(compose_kdmtl(Var(), seg, Var(), 0.4).value()[0], 2.0);
}

TEST(Losses, KldGradientFlowsOnlyToStudent) {
  Rng rng(1);
  Var student(Tensor::randn({1, 4, 2, 2}, rng), true);
  const Tensor teacher = Tensor::randn({1, 4, 2, 2}, rng);
  const Var kld = encoder_kld(student, teacher);
  EXPECT_NEAR(kld.value()[0], encoder_kld(student.value(), teacher), 1e-14);
  kld.backward();
  EXPECT_TRUE(student.has_grad());
}

TEST(Schedule, ReferenceValuesAndMonotone) { expect_all_pass(schedule_suite()); }

TEST(Schedule, StepsEveryPeriod) {
  const LrSchedule s{1e-3, 0.5, 4};
  EXPECT_DOUBLE_EQ(s.lr_at(3), 1e-3);
  EXPECT_DOUBLE_EQ(s.lr_at(4), 5e-4);
  EXPECT_DOUBLE_EQ(s.lr_at(9), 2.5e-4);
}

TEST(Regime, ParseRoundTrip) {
  for (const Regime r : {Regime::kV, Regime::kKD, Regime::kS}) EXPECT_EQ(parse_regime(to_string(r)), r);
  EXPECT_THROW(parse_regime("X"), UsageError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Var w(Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}), true);
  w.node()->accumulate(Tensor({3}, std::vector<double>{0.3, -4.0, 1e-3}));
  Adam adam;
  adam.step({{"w", &w}}, 0.01);
  EXPECT_NEAR(w.value()[0], 0.99, 1e-6);
  EXPECT_NEAR(w.value()[1], -1.99, 1e-6);
  EXPECT_NEAR(w.value()[2], 0.49, 1e-4);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MinimizesQuadratic) {
  Var w(Tensor({2}, std::vector<double>{3.0, -1.0}), true);
  Adam adam;
  for (int i = 0; i < 2000; ++i) {
    w.zero_grad();
    const Var loss = ops::sum_all(ops::mul(w, w));
    loss.backward();
    adam.step({{"w", &w}}, 0.01);
  }
  EXPECT_LT(std::abs(w.value()[0]), 1e-2);
  EXPECT_LT(std::abs(w.value()[1]), 1e-2);
}

TEST(Adam, SkipsFrozenParameters) {
  Var w(Tensor({1}, 1.0), true);
  w.node()->accumulate(Tensor({1}, 1.0));
  w.set_requires_grad(false);
  Adam adam;
  adam.step({{"w", &w}}, 0.1);
  EXPECT_EQ(w.value()[0], 1.0);
}

TEST(Partition, DigestTracksValues) {
  Var a(Tensor({2}, 1.0), true), b(Tensor({2}, 2.0), true);
  ModelPartition p;
  p.add(ParamGroup::kShared, {{"a", &a}});
  p.add(ParamGroup::kSceneGraph, {{"b", &b}});
  const std::string before = p.digest(ParamGroup::kShared);
  EXPECT_EQ(before.size(), 64u);
  b.mutable_value()[0] = 5.0;
  EXPECT_EQ(p.digest(ParamGroup::kShared), before);
  a.mutable_value()[1] = 1.0 + 1e-15;
  EXPECT_NE(p.digest(ParamGroup::kShared), before);
}

TEST(Partition, RejectsDuplicateNames) {
  Var a(Tensor({1}, 1.0), true);
  ModelPartition p;
  p.add(ParamGroup::kShared, {{"a", &a}});
  EXPECT_ANY_THROW(p.add(ParamGroup::kSegmentation, {{"a", &a}}));
}

}  // namespace
}  // namespace gmtl
