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

#include "gmtl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gmtl/error.hpp"
#include "gmtl/ops.hpp"

namespace gmtl {
namespace {

double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (int64_t i = 0; i < y.numel(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace

GradCheckResult gradcheck(const std::string& name, std::vector<Var> inputs,
                          const std::function<Var(const std::vector<Var>&)>& f,
                          const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;
  Rng rng(options.seed);
  for (auto& v : inputs) {
    if (!v.defined()) throw UsageError("gradcheck " + name + ": undefined input");
    v.set_requires_grad(true);
    v.zero_grad();
  }

  Var y = f(inputs);
  const Tensor weights =
      options.random_weights ? Tensor::uniform(y.shape(), rng, -1.0, 1.0) : Tensor::ones(y.shape());
  y.backward(weights);

  for (size_t k = 0; k < inputs.size(); ++k) {
    Var& x = inputs[k];
    const int64_t n = x.value().numel();
    const Tensor analytic = x.has_grad() ? x.grad() : Tensor::zeros(x.shape());
    std::vector<int64_t> coords;
    if (n <= options.samples_per_input) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < options.samples_per_input; ++i) coords.push_back(rng.uniform_int(n));
    }
    for (const int64_t i : coords) {
      double& slot = x.mutable_value()[i];
      const double saved = slot;
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        slot = saved + options.step;
        plus = weighted_sum(f(inputs).value(), weights);
        slot = saved - options.step;
        minus = weighted_sum(f(inputs).value(), weights);
      }
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[i] * (1.0 + options.analytic_fault);
      const double scale = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / scale;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        char buf[160];
        std::snprintf(buf, sizeof buf, "input[%zu] @ %lld: analytic %.9g vs numeric %.9g", k,
                      static_cast<long long>(i), a, numeric);
        result.worst = buf;
      }
    }
  }
  result.passed = result.max_rel_error <= options.tolerance;
  return result;
}

}  // namespace gmtl
