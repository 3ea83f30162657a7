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

#include "gmtl/glore.hpp"

#include <cmath>

#include "gmtl/error.hpp"

namespace gmtl {
namespace {

void check_finite(const Var& v, const char* stage) {
  if (!v.value().all_finite()) {
    throw NumericalError(std::string("GloRe: non-finite values after ") + stage);
  }
}

}  // namespace

GloReUnit::GloReUnit(const GloReConfig& config, Rng& rng)
    : theta(config.channels, config.nodes, 1, 1, 0, true, rng),
      phi(config.channels, config.latent, 1, 1, 0, true, rng),
      psi(config.latent, config.channels, 1, 1, 0, false, rng),
      gisf_compress(config.latent, config.gisf_dim, true, rng),
      config_(config),
      identity_(Tensor::eye(config.nodes)) {
  if (config.nodes < 1 || config.latent < 1 || config.channels < 1) {
    throw UsageError("GloRe needs at least one node, one latent channel and one input channel");
  }
  register_module("theta", theta);
  register_module("phi", phi);
  register_module("psi", psi);
  register_parameter("adjacency", adjacency,
                     Tensor::randn({config.nodes, config.nodes}, rng,
                                   0.1 / std::sqrt(static_cast<double>(config.nodes))));
  register_parameter("state_update", state_update,
                     Tensor::randn({config.latent, config.latent}, rng,
                                   1.0 / std::sqrt(static_cast<double>(config.latent))));
  register_module("gisf_compress", gisf_compress);
  if (config.injection_dim > 0) {
    injection_proj = std::make_unique<nn::Linear>(config.injection_dim, config.latent, false, rng,
                                                  nn::Linear::Init::kZero);
    register_module("injection_proj", *injection_proj);
  }
}

GloReUnit::Output GloReUnit::forward(const Var& x, const std::optional<Var>& injection) const {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || xv.dim(1) != config_.channels) {
    throw UsageError("GloRe expects B×" + std::to_string(config_.channels) + "×h×w, got " +
                     shape_str(xv.shape()));
  }
  const int64_t b = xv.dim(0), h = xv.dim(2), w = xv.dim(3), hw = h * w;
  const int64_t n = config_.nodes, cr = config_.latent;

  Var assign = ops::softmax(ops::reshape(theta.forward(x), {b, n, hw}), 1);
  Var proj = ops::reshape(phi.forward(x), {b, cr, hw});
  Var nodes = ops::bmm(assign, proj, false, true);  // B×N×Cr
  check_finite(nodes, "projection");

  if (injection.has_value()) {
    if (!injection_proj) throw UsageError("GloRe unit was built without an injection port");
    const Var& inj = *injection;
    if (inj.value().rank() != 2 || inj.dim(0) != b || inj.dim(1) != config_.injection_dim) {
      throw UsageError("GloRe injection must be " + std::to_string(b) + "×" +
                       std::to_string(config_.injection_dim) + ", got " + shape_str(inj.shape()));
    }
    nodes = ops::add_per_sample(nodes, injection_proj->forward(inj));
  }

  Var laplace = ops::sub(identity_, adjacency);
  Var reasoned = ops::bmm(ops::bmm(laplace, nodes), state_update);  // B×N×Cr
  check_finite(reasoned, "latent reasoning");

  Var back = ops::reshape(ops::bmm(reasoned, assign, true, false), {b, cr, h, w});
  Var y = ops::add(x, psi.forward(back));
  check_finite(y, "reprojection");

  const Var& summary_src = config_.gisf_after_reasoning ? reasoned : nodes;
  Var gisf = gisf_compress.forward(ops::mean_axis(summary_src, 1));
  return {y, gisf, assign};
}

SceneGraphSummary::SceneGraphSummary(int64_t edge_dim, int64_t injection_dim, Rng& rng)
    : map(edge_dim, injection_dim, true, rng), edge_dim_(edge_dim) {
  register_module("map", map);
}

Var SceneGraphSummary::forward(const Var& edge_features) const {
  const Tensor& e = edge_features.value();
  if (e.rank() != 2 || e.dim(1) != edge_dim_) {
    throw UsageError("scene-graph summary expects E×" + std::to_string(edge_dim_) +
                     " edge features, got " + shape_str(e.shape()));
  }
  Var pooled = e.dim(0) == 0 ? Var(Tensor({1, edge_dim_}, 0.0))
                             : ops::reshape(ops::mean_axis(edge_features, 0), {1, edge_dim_});
  return map.forward(pooled);
}

}  // namespace gmtl
