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
#include <string>
#include <vector>

#include "gmtl/autograd.hpp"
#include "gmtl/ops.hpp"

namespace gmtl::nn {

struct NamedParam {
  std::string name;
  Var* var;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

// Base for anything that owns parameters. Members register themselves by
// address, so modules are neither copyable nor movable.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  // Fully qualified ("a.b.weight") parameters in registration order.
  std::vector<NamedParam> named_parameters(const std::string& prefix = "") const;
  // Parameters plus non-trainable state such as running statistics.
  std::vector<NamedBuffer> named_state(const std::string& prefix = "") const;

  void set_training(bool training);
  bool training() const { return training_; }
  void set_requires_grad(bool on);
  void zero_grad();

 protected:
  Var& register_parameter(const std::string& name, Var& slot, Tensor init);
  void register_buffer(const std::string& name, Tensor& slot);
  void register_module(const std::string& name, Module& child);

 private:
  struct ParamSlot {
    std::string name;
    Var* var;
  };
  struct BufferSlot {
    std::string name;
    Tensor* tensor;
  };
  struct ChildSlot {
    std::string name;
    Module* module;
  };

  void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const;
  void collect_state(const std::string& prefix, std::vector<NamedBuffer>& out) const;

  std::vector<ParamSlot> params_;
  std::vector<BufferSlot> buffers_;
  std::vector<ChildSlot> children_;
  bool training_ = true;
};

// Kaiming-normal (fan-in, gain √2) convolution weights.
class Conv2d : public Module {
 public:
  Conv2d(int64_t in_channels, int64_t out_channels, int kernel, int stride, int padding,
         bool bias, Rng& rng);

  Var forward(const Var& x) const;

  Var weight;
  Var bias;  // undefined when constructed without bias

  int64_t in_channels() const { return in_; }
  int64_t out_channels() const { return out_; }

 private:
  int64_t in_, out_;
  int stride_, padding_;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int64_t channels, double momentum = 0.1, double eps = 1e-5);

  Var forward(const Var& x);

  Var gamma;
  Var beta;
  Tensor running_mean;
  Tensor running_var;

 private:
  double momentum_, eps_;
};

class Linear : public Module {
 public:
  enum class Init { kDefault, kZero };
  Linear(int64_t in_features, int64_t out_features, bool bias, Rng& rng,
         Init init = Init::kDefault);

  // x is N×in.
  Var forward(const Var& x) const;

  Var weight;  // out×in
  Var bias;

  int64_t in_features() const { return in_; }
  int64_t out_features() const { return out_; }

 private:
  int64_t in_, out_;
};

}  // namespace gmtl::nn
