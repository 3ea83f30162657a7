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

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace gmtl {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  // Name of a gradient-checked kernel (glore, glore_injection, attention,
  // edge_readout) whose analytic gradient is perturbed by 1%.
  std::string fault_kernel;
  // Include the short S-MTL training run behind the freeze check.
  bool include_training = true;
};

// Gradient checks of the GloRe unit, graph attention and edge readout.
std::vector<CheckResult> gradient_suite(const std::string& fault_kernel = "");
// compose_vmtl / compose_kdmtl against their closed forms; KLD properties.
std::vector<CheckResult> loss_suite();
// seg_metrics and sg_metrics against brute-force oracles.
std::vector<CheckResult> metric_suite();
// Zero state update gives the identity; assignment columns sum to one.
std::vector<CheckResult> glore_suite();
// Node relabeling leaves every edge's logits unchanged.
std::vector<CheckResult> permutation_suite();
// lr_at values and monotonicity.
std::vector<CheckResult> schedule_suite();
// Segmentation logits at 320×400 for every variant; GISF width.
std::vector<CheckResult> shape_suite();
// Shared and segmentation weights are bit-identical across stage B of a
// short S-MTL run on synthetic frames.
std::vector<CheckResult> freeze_suite();

std::vector<CheckResult> run_selftest(const SelftestOptions& options);

// One "PASS|FAIL suite/name: detail" line per check; returns failure count.
int report(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace gmtl
