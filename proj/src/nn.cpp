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

#include "gmtl/nn.hpp"

#include <cmath>

#include "gmtl/error.hpp"

namespace gmtl::nn {
namespace {

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

std::vector<NamedParam> Module::named_parameters(const std::string& prefix) const {
  std::vector<NamedParam> out;
  collect_params(prefix, out);
  return out;
}

std::vector<NamedBuffer> Module::named_state(const std::string& prefix) const {
  std::vector<NamedBuffer> out;
  collect_state(prefix, out);
  return out;
}

void Module::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
  for (const auto& p : params_) out.push_back({join(prefix, p.name), p.var});
  for (const auto& c : children_) c.module->collect_params(join(prefix, c.name), out);
}

void Module::collect_state(const std::string& prefix, std::vector<NamedBuffer>& out) const {
  for (const auto& p : params_) out.push_back({join(prefix, p.name), &p.var->mutable_value()});
  for (const auto& b : buffers_) out.push_back({join(prefix, b.name), b.tensor});
  for (const auto& c : children_) c.module->collect_state(join(prefix, c.name), out);
}

void Module::set_training(bool training) {
  training_ = training;
  for (auto& c : children_) c.module->set_training(training);
}

void Module::set_requires_grad(bool on) {
  for (auto& p : named_parameters()) p.var->set_requires_grad(on);
}

void Module::zero_grad() {
  for (auto& p : named_parameters()) p.var->zero_grad();
}

Var& Module::register_parameter(const std::string& name, Var& slot, Tensor init) {
  slot = Var(std::move(init), true);
  params_.push_back({name, &slot});
  return slot;
}

void Module::register_buffer(const std::string& name, Tensor& slot) {
  buffers_.push_back({name, &slot});
}

void Module::register_module(const std::string& name, Module& child) {
  children_.push_back({name, &child});
}

Conv2d::Conv2d(int64_t in_channels, int64_t out_channels, int kernel, int stride, int padding,
               bool with_bias, Rng& rng)
    : in_(in_channels), out_(out_channels), stride_(stride), padding_(padding) {
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  register_parameter("weight", weight,
                     Tensor::randn({out_channels, in_channels, kernel, kernel}, rng,
                                   std::sqrt(2.0 / fan_in)));
  if (with_bias) register_parameter("bias", bias, Tensor({out_channels}, 0.0));
}

Var Conv2d::forward(const Var& x) const {
  return ops::conv2d(x, weight, bias, stride_, padding_);
}

BatchNorm2d::BatchNorm2d(int64_t channels, double momentum, double eps)
    : running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      momentum_(momentum),
      eps_(eps) {
  register_parameter("weight", gamma, Tensor({channels}, 1.0));
  register_parameter("bias", beta, Tensor({channels}, 0.0));
  register_buffer("running_mean", running_mean);
  register_buffer("running_var", running_var);
}

Var BatchNorm2d::forward(const Var& x) {
  return ops::batch_norm2d(x, gamma, beta, {&running_mean, &running_var, momentum_, eps_},
                           training());
}

Linear::Linear(int64_t in_features, int64_t out_features, bool with_bias, Rng& rng, Init init)
    : in_(in_features), out_(out_features) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(in_features, 1)));
  Tensor w = init == Init::kZero ? Tensor({out_features, in_features}, 0.0)
                                 : Tensor::uniform({out_features, in_features}, rng, -bound, bound);
  register_parameter("weight", weight, std::move(w));
  if (with_bias) {
    Tensor b = init == Init::kZero ? Tensor({out_features}, 0.0)
                                   : Tensor::uniform({out_features}, rng, -bound, bound);
    register_parameter("bias", bias, std::move(b));
  }
}

Var Linear::forward(const Var& x) const {
  if (x.value().rank() != 2 || x.dim(1) != in_) {
    throw UsageError("linear layer expects N×" + std::to_string(in_) + ", got " +
                     shape_str(x.shape()));
  }
  return ops::linear(x, weight, bias);
}

}  // namespace gmtl::nn
