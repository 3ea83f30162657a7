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

#include <cstdint>
#include <span>
#include <vector>

#include "gmtl/autograd.hpp"

namespace gmtl::ops {

// Elementwise and shape ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var reshape(const Var& a, Shape shape);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double negative_slope);
Var elu(const Var& a, double alpha = 1.0);

// Concatenates along `axis`; every other dimension must agree.
Var concat(std::span<const Var> parts, int axis);
// Rows of a 2-D tensor, in the given order (repeats allowed).
Var gather_rows(const Var& a, std::span<const int64_t> rows);

Var sum_all(const Var& a);
Var mean_all(const Var& a);
// Mean over one axis; the axis is removed from the result.
Var mean_axis(const Var& a, int axis);

// Softmax along `axis` of an arbitrary-rank tensor.
Var softmax(const Var& a, int axis);
// Row softmax of a square M×M score matrix restricted to mask(i,j) != 0.
// Every row must have at least one allowed entry.
Var masked_softmax_rows(const Var& scores, const std::vector<uint8_t>& mask);
// out(i,j) = a(i) + b(j) for vectors a (M) and b (N).
Var outer_add(const Var& a, const Var& b);

// 2-D product with optional transposes: op(a) · op(b).
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
// Batched product on rank-3 operands; a rank-2 operand is shared across the
// batch.
Var bmm(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
// x (N×in) · wᵀ (in×out) + bias (out). Bias may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
// Adds rows (B×D) to every node of a B×N×D tensor.
Var add_per_sample(const Var& nodes, const Var& rows);

// Convolution on B×C×H×W with weight O×C×k×k (square kernels).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);
Var max_pool2d(const Var& x, int kernel, int stride, int padding);
Var global_avg_pool(const Var& x);
// Bilinear resize with half-pixel centers (align_corners = false).
Var upsample_bilinear(const Var& x, int64_t out_h, int64_t out_w);

struct BatchNormState {
  Tensor* running_mean;
  Tensor* running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
// Per-channel normalization of B×C×H×W. In training mode batch statistics
// are used and the running estimates updated.
Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState state,
                 bool training);

// Inverted dropout with keep-mask drawn from rng. Identity when !training.
Var dropout(const Var& x, double p, bool training, Rng& rng);

// Mean categorical cross-entropy over all pixels of B×K×H×W logits.
Var cross_entropy2d(const Var& logits, std::span<const int32_t> labels);
// Mean binary cross-entropy with logits over all entries.
Var bce_with_logits(const Var& logits, const Tensor& targets);
// Mean over B×H×W locations of KL(softmax_c(teacher) || softmax_c(student)).
// The teacher is treated as a constant.
Var channel_kld(const Var& student, const Tensor& teacher);

// Spatial output size of a strided window: floor((n + 2p - k) / s) + 1.
// Thread count of the matrix-product backend; 1 gives run-to-run identical sums.
void set_blas_threads(int n);

int64_t conv_out_size(int64_t n, int kernel, int stride, int padding);

}  // namespace gmtl::ops
