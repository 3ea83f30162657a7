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
#include "gmtl/glore.hpp"
#include "gmtl/selftest.hpp"

namespace gmtl {
namespace {

void expect_all_pass(const std::vector<CheckResult>& results) {
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.suite << "/" << r.name << ": " << r.detail;
}

GloReConfig small_config() {
  GloReConfig c;
  c.channels = 8;
  c.nodes = 3;
  c.latent = 5;
  return c;
}

TEST(GloRe, GradientSuitePasses) { expect_all_pass(gradient_suite()); }

TEST(GloRe, GradientSuiteDetectsInjectedFault) {
  for (const std::string kernel : {"glore", "glore_injection", "attention", "edge_readout"}) {
    int failed = 0;
    for (const auto& r : gradient_suite(kernel)) failed += !r.passed && r.name == kernel;
    EXPECT_EQ(failed, 1) << kernel;
  }
}

TEST(GloRe, ZeroStateUpdateIsIdentityAndAssignmentIsStochastic) { expect_all_pass(glore_suite()); }

TEST(GloRe, OutputShapes) {
  Rng rng(1);
  GloReUnit unit(small_config(), rng);
  NoGradGuard guard;
  const auto out = unit.forward(Var(Tensor::randn({2, 8, 4, 6}, rng)));
  EXPECT_EQ(out.y.shape(), (Shape{2, 8, 4, 6}));
  EXPECT_EQ(out.gisf.shape(), (Shape{2, kGisfDim}));
  EXPECT_EQ(out.assignment.shape(), (Shape{2, 3, 24}));
}

TEST(GloRe, GisfWidthIndependentOfInputSize) {
  Rng rng(2);
  GloReUnit unit(small_config(), rng);
  NoGradGuard guard;
  for (const auto& [h, w] : {std::pair<int64_t, int64_t>{1, 1}, {3, 9}, {10, 13}}) {
    EXPECT_EQ(unit.forward(Var(Tensor::randn({1, 8, h, w}, rng))).gisf.shape(), (Shape{1, kGisfDim}));
  }
}

TEST(GloRe, ZeroInitializedInjectionLeavesOutputUnchanged) {
  Rng rng(3);
  GloReConfig c = small_config();
  c.injection_dim = 4;
  GloReUnit unit(c, rng);
  const Tensor x = Tensor::randn({2, 8, 3, 3}, rng);
  NoGradGuard guard;
  const auto plain = unit.forward(Var(x));
  const auto injected = unit.forward(Var(x), Var(Tensor::randn({2, 4}, rng)));
  EXPECT_TRUE(plain.y.value() == injected.y.value());
  EXPECT_TRUE(plain.gisf.value() == injected.gisf.value());
}

TEST(GloRe, InjectionRejectedWhenPortDisabled) {
  Rng rng(4);
  GloReUnit unit(small_config(), rng);
  NoGradGuard guard;
  EXPECT_THROW(unit.forward(Var(Tensor::randn({1, 8, 2, 2}, rng)), Var(Tensor({1, 4}, 0.0))), Error);
}

TEST(GloRe, SamplesInBatchAreIndependent) {
  Rng rng(5);
  GloReUnit unit(small_config(), rng);
  const Tensor a = Tensor::randn({8, 3, 4}, rng), b = Tensor::randn({8, 3, 4}, rng);
  std::vector<Tensor> parts{a, b};
  NoGradGuard guard;
  const Tensor joint = unit.forward(Var(stack(parts))).y.value();
  const Tensor alone = unit.forward(Var(b.reshaped({1, 8, 3, 4}))).y.value();
  for (int64_t i = 0; i < alone.numel(); ++i) EXPECT_NEAR(joint[alone.numel() + i], alone[i], 1e-12);
}

}  // namespace
}  // namespace gmtl
