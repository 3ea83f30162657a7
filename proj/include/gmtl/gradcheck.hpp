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
#include <functional>
#include <string>
#include <vector>

#include "gmtl/autograd.hpp"

namespace gmtl {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-4;
  // Gradients whose magnitudes are both below this are compared absolutely.
  double floor = 1e-8;
  int samples_per_input = 20;
  uint64_t seed = 7;
  // false: loss = Σ f(inputs).
  bool random_weights = true;
  // Scales every analytic gradient by (1 + analytic_fault); mutation testing.
  double analytic_fault = 0.0;
};

struct GradCheckResult {
  std::string name;
  int checked = 0;
  double max_rel_error = 0;
  std::string worst;  // "input[i] @ j: analytic a vs numeric n"
  bool passed = true;
};

// Compares analytic gradients of loss = Σ w ⊙ f(inputs), with fixed random
// (or unit) weights w, against central finite differences on sampled coordinates of
// every input. Inputs are perturbed in place and restored.
GradCheckResult gradcheck(const std::string& name, std::vector<Var> inputs,
                          const std::function<Var(const std::vector<Var>&)>& f,
                          const GradCheckOptions& options = {});

}  // namespace gmtl
