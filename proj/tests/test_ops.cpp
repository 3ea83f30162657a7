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

#include <functional>

#include "gmtl/gradcheck.hpp"
#include "gmtl/ops.hpp"

namespace gmtl {
namespace {

using Inputs = std::vector<Var>;

struct OpCase {
  std::string name;
  std::vector<Shape> shapes;
  std::function<Var(const Inputs&)> f;
};

std::vector<int32_t> random_labels(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<int32_t> out(n);
  for (auto& v : out) v = static_cast<int32_t>(rng.uniform_int(8));
  return out;
}

Tensor& running_mean() {
  static Tensor t({4}, 0.0);
  return t;
}
Tensor& running_var() {
  static Tensor t({4}, 1.0);
  return t;
}

std::vector<OpCase> op_cases() {
  static const std::vector<int32_t> labels = random_labels(2 * 5 * 6, 3);
  static const std::vector<uint8_t> mask{1, 0, 1, 1, 1, 0, 0, 1, 1};
  static const Tensor bce_targets = [] {
    Rng rng(4);
    Tensor t({3, 4});
    for (auto& x : t.storage()) x = rng.uniform() < 0.5 ? 1.0 : 0.0;
    return t;
  }();
  static const Tensor teacher = [] {
    Rng rng(5);
    return Tensor::randn({2, 4, 3, 3}, rng);
  }();
  return {
      {"conv_s1p1", {{2, 3, 6, 7}, {4, 3, 3, 3}, {4}},
       [](const Inputs& v) { return ops::conv2d(v[0], v[1], v[2], 1, 1); }},
      {"conv_s2p1", {{2, 3, 7, 6}, {4, 3, 3, 3}, {4}},
       [](const Inputs& v) { return ops::conv2d(v[0], v[1], v[2], 2, 1); }},
      {"conv_7x7_s2p3", {{1, 3, 12, 10}, {4, 3, 7, 7}},
       [](const Inputs& v) { return ops::conv2d(v[0], v[1], Var(), 2, 3); }},
      {"conv_1x1_s2", {{2, 3, 7, 6}, {4, 3, 1, 1}},
       [](const Inputs& v) { return ops::conv2d(v[0], v[1], Var(), 2, 0); }},
      {"batch_norm_train", {{3, 4, 5, 5}, {4}, {4}},
       [](const Inputs& v) {
         return ops::batch_norm2d(v[0], v[1], v[2], {&running_mean(), &running_var()}, true);
       }},
      {"batch_norm_eval", {{3, 4, 5, 5}, {4}, {4}},
       [](const Inputs& v) {
         return ops::batch_norm2d(v[0], v[1], v[2], {&running_mean(), &running_var()}, false);
       }},
      {"upsample_up", {{2, 3, 4, 5}},
       [](const Inputs& v) { return ops::upsample_bilinear(v[0], 9, 13); }},
      {"upsample_down", {{2, 3, 8, 9}},
       [](const Inputs& v) { return ops::upsample_bilinear(v[0], 3, 4); }},
      {"max_pool", {{2, 3, 8, 9}}, [](const Inputs& v) { return ops::max_pool2d(v[0], 3, 2, 1); }},
      {"relu", {{30}}, [](const Inputs& v) { return ops::relu(v[0]); }},
      {"elu", {{30}}, [](const Inputs& v) { return ops::elu(v[0]); }},
      {"leaky_relu", {{30}}, [](const Inputs& v) { return ops::leaky_relu(v[0], 0.2); }},
      {"cross_entropy2d", {{2, 8, 5, 6}},
       [](const Inputs& v) { return ops::cross_entropy2d(v[0], labels); }},
      {"softmax_axis1", {{2, 4, 5}}, [](const Inputs& v) { return ops::softmax(v[0], 1); }},
      {"softmax_axis2", {{2, 4, 5}}, [](const Inputs& v) { return ops::softmax(v[0], 2); }},
      {"matmul_tb", {{3, 4}, {5, 4}},
       [](const Inputs& v) { return ops::matmul(v[0], v[1], false, true); }},
      {"matmul_ta", {{4, 3}, {4, 5}},
       [](const Inputs& v) { return ops::matmul(v[0], v[1], true, false); }},
      {"bmm", {{2, 3, 4}, {2, 4, 5}}, [](const Inputs& v) { return ops::bmm(v[0], v[1]); }},
      {"bmm_shared_b", {{2, 3, 4}, {5, 4}},
       [](const Inputs& v) { return ops::bmm(v[0], v[1], false, true); }},
      {"bmm_shared_a", {{4, 3}, {2, 4, 5}},
       [](const Inputs& v) { return ops::bmm(v[0], v[1], true, false); }},
      {"linear", {{3, 4}, {5, 4}, {5}},
       [](const Inputs& v) { return ops::linear(v[0], v[1], v[2]); }},
      {"global_avg_pool", {{2, 3, 4, 5}},
       [](const Inputs& v) { return ops::global_avg_pool(v[0]); }},
      {"mean_axis", {{2, 3, 4}}, [](const Inputs& v) { return ops::mean_axis(v[0], 1); }},
      {"concat", {{2, 3}, {2, 4}},
       [](const Inputs& v) {
         std::vector<Var> parts{v[0], v[1]};
         return ops::concat(parts, 1);
       }},
      {"gather_rows", {{4, 3}},
       [](const Inputs& v) {
         const std::vector<int64_t> rows{2, 0, 2};
         return ops::gather_rows(v[0], rows);
       }},
      {"masked_softmax", {{3, 3}},
       [](const Inputs& v) { return ops::masked_softmax_rows(v[0], mask); }},
      {"outer_add", {{3}, {4}}, [](const Inputs& v) { return ops::outer_add(v[0], v[1]); }},
      {"add_per_sample", {{2, 3, 4}, {2, 4}},
       [](const Inputs& v) { return ops::add_per_sample(v[0], v[1]); }},
      {"bce_with_logits", {{3, 4}},
       [](const Inputs& v) { return ops::bce_with_logits(v[0], bce_targets); }},
      {"channel_kld", {{2, 4, 3, 3}},
       [](const Inputs& v) { return ops::channel_kld(v[0], teacher); }},
      {"elementwise", {{5}, {5}},
       [](const Inputs& v) { return ops::scale(ops::sub(ops::mul(v[0], v[1]), v[1]), 0.3); }},
      {"reshape_sum", {{2, 3}},
       [](const Inputs& v) { return ops::sum_all(ops::reshape(v[0], {3, 2})); }},
  };
}

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase& c = GetParam();
  Rng rng(1);
  Inputs inputs;
  for (const Shape& s : c.shapes) inputs.emplace_back(Tensor::randn(s, rng));
  const GradCheckResult r = gradcheck(c.name, inputs, c.f);
  EXPECT_TRUE(r.passed) << r.worst << " rel " << r.max_rel_error;
  EXPECT_GT(r.checked, 0);
}

INSTANTIATE_TEST_SUITE_P(Ops, OpGradient, ::testing::ValuesIn(op_cases()),
                         [](const auto& info) { return info.param.name; });

// Reference product with explicit loops.
Tensor naive_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const int64_t m = ta ? a.dim(1) : a.dim(0), k = ta ? a.dim(0) : a.dim(1);
  const int64_t n = tb ? b.dim(0) : b.dim(1);
  Tensor out({m, n}, 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (int64_t p = 0; p < k; ++p) {
        s += (ta ? a.at({p, i}) : a.at({i, p})) * (tb ? b.at({j, p}) : b.at({p, j}));
      }
      out.at({i, j}) = s;
    }
  }
  return out;
}

TEST(Matmul, MatchesNaiveLoopsForAllTransposeCases) {
  Rng rng(9);
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      for (const auto& [m, k, n] : {std::tuple<int64_t, int64_t, int64_t>{1, 1, 1}, {7, 5, 3},
                                    {33, 65, 17}, {128, 96, 130}}) {
        const Tensor a = Tensor::randn(ta ? Shape{k, m} : Shape{m, k}, rng);
        const Tensor b = Tensor::randn(tb ? Shape{n, k} : Shape{k, n}, rng);
        const Tensor got = ops::matmul(Var(a), Var(b), ta, tb).value();
        const Tensor want = naive_matmul(a, b, ta, tb);
        ASSERT_EQ(got.shape(), want.shape());
        for (int64_t i = 0; i < got.numel(); ++i) {
          ASSERT_NEAR(got[i], want[i], 1e-10 * (1.0 + std::abs(want[i])))
              << "ta=" << ta << " tb=" << tb << " m=" << m << " k=" << k << " n=" << n;
        }
      }
    }
  }
}

TEST(Matmul, BatchedProductMatchesPerSampleProduct) {
  Rng rng(10);
  const Tensor a = Tensor::randn({3, 4, 6}, rng), b = Tensor::randn({3, 6, 5}, rng);
  const Tensor got = ops::bmm(Var(a), Var(b)).value();
  for (int64_t s = 0; s < 3; ++s) {
    const Tensor want = naive_matmul(a.slice0(s), b.slice0(s), false, false);
    for (int64_t i = 0; i < want.numel(); ++i) EXPECT_NEAR(got[s * 20 + i], want[i], 1e-12);
  }
}

TEST(Conv, OutputSizeFormula) {
  EXPECT_EQ(ops::conv_out_size(320, 7, 2, 3), 160);
  EXPECT_EQ(ops::conv_out_size(400, 7, 2, 3), 200);
  EXPECT_EQ(ops::conv_out_size(20, 3, 2, 1), 10);
  EXPECT_EQ(ops::conv_out_size(25, 3, 2, 1), 13);
}

TEST(Conv, IdentityKernelCopiesInput) {
  Rng rng(2);
  const Tensor x = Tensor::randn({1, 2, 5, 6}, rng);
  Tensor w({2, 2, 3, 3}, 0.0);
  w.at({0, 0, 1, 1}) = 1.0;
  w.at({1, 1, 1, 1}) = 1.0;
  const Tensor y = ops::conv2d(Var(x), Var(w), Var(), 1, 1).value();
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  const Tensor s = ops::softmax(Var(Tensor::randn({4, 7}, rng, 30.0)), 1).value();
  for (int64_t r = 0; r < 4; ++r) {
    double sum = 0;
    for (int64_t c = 0; c < 7; ++c) sum += s.at({r, c});
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Autograd, NoGradGuardBuildsNoGraph) {
  Var x(Tensor({3}, 1.0), true);
  NoGradGuard guard;
  const Var y = ops::scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace gmtl
