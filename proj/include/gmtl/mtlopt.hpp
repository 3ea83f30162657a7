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

#include <map>
#include <string>
#include <vector>

#include "gmtl/checkpoint.hpp"
#include "gmtl/nn.hpp"

namespace gmtl {

enum class Regime { kV, kKD, kS };

std::string to_string(Regime r);
Regime parse_regime(const std::string& s);

struct LossBundle {
  double l_seg = 0;
  double l_sg = 0;
  double l_kld = 0;
  double alpha = 0.4;
  double total = 0;
};

// alpha·l_sg + (1 - alpha)·l_seg
double compose_vmtl(double l_sg, double l_seg, double alpha);
// alpha·l_sg + l_seg + l_kld
double compose_kdmtl(double l_sg, double l_seg, double l_kld, double alpha = 0.4);

// Differentiable counterparts used by the trainers. Undefined terms count
// as zero.
Var compose_vmtl(const Var& l_sg, const Var& l_seg, double alpha);
Var compose_kdmtl(const Var& l_sg, const Var& l_seg, const Var& l_kld, double alpha);

// KL(teacher || student) of channel softmax distributions, averaged over
// all B×h×w locations of the c5 maps.
Var encoder_kld(const Var& student_c5, const Tensor& teacher_c5);
double encoder_kld(const Tensor& student_c5, const Tensor& teacher_c5);

struct LrSchedule {
  double base_lr = 1e-5;
  double decay = 0.98;
  int period = 10;

  // base_lr · decay^floor(epoch / period)
  double lr_at(int epoch) const;
};

double lr_at(int epoch);

enum class ParamGroup { kShared, kSegmentation, kSceneGraph };

std::string to_string(ParamGroup g);

// Disjoint, exhaustive assignment of trainable parameters to W_sh, W_seg and
// W_sg with a frozen flag per group.
class ModelPartition {
 public:
  void add(ParamGroup group, const std::vector<nn::NamedParam>& params);

  std::vector<nn::NamedParam> params(ParamGroup group) const;
  std::vector<nn::NamedParam> all() const;

  // Freezing clears requires_grad, so frozen groups build no graph.
  void set_frozen(ParamGroup group, bool frozen);
  bool frozen(ParamGroup group) const;

  // SHA-256 over the names and values of the group's parameters.
  std::string digest(ParamGroup group) const;

 private:
  struct Entry {
    ParamGroup group;
    nn::NamedParam param;
  };
  std::vector<Entry> entries_;
  std::map<ParamGroup, bool> frozen_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Updates every parameter that requires grad and has a gradient.
  void step(const std::vector<nn::NamedParam>& params, double lr);

  int64_t steps() const { return t_; }

  void save(Checkpoint& ck, const std::string& prefix) const;
  void load(const Checkpoint& ck, const std::string& prefix);

 private:
  struct Moments {
    Tensor m, v;
    int64_t t = 0;
  };
  AdamConfig config_;
  std::map<std::string, Moments> state_;
  int64_t t_ = 0;
};

}  // namespace gmtl
