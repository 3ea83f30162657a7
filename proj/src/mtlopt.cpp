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

#include "gmtl/mtlopt.hpp"

#include <cmath>
#include <set>

#include "gmtl/error.hpp"

namespace gmtl {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kV: return "V";
    case Regime::kKD: return "KD";
    case Regime::kS: return "S";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  if (s == "V") return Regime::kV;
  if (s == "KD") return Regime::kKD;
  if (s == "S") return Regime::kS;
  throw UsageError("unknown regime '" + s + "' (expected V, KD or S)");
}

double compose_vmtl(double l_sg, double l_seg, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  if (l_sg < 0 || l_seg < 0) throw NumericalError("task losses must be nonnegative");
  return alpha * l_sg + (1.0 - alpha) * l_seg;
}

double compose_kdmtl(double l_sg, double l_seg, double l_kld, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  if (l_kld < 0) throw NumericalError("KLD term is negative");
  if (l_sg < 0 || l_seg < 0) throw NumericalError("task losses must be nonnegative");
  return alpha * l_sg + l_seg + l_kld;
}

Var compose_vmtl(const Var& l_sg, const Var& l_seg, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  if (!l_sg.defined()) return ops::scale(l_seg, 1.0 - alpha);
  if (!l_seg.defined()) return ops::scale(l_sg, alpha);
  return ops::add(ops::scale(l_sg, alpha), ops::scale(l_seg, 1.0 - alpha));
}

Var compose_kdmtl(const Var& l_sg, const Var& l_seg, const Var& l_kld, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  Var total = l_seg;
  if (l_sg.defined()) total = total.defined() ? ops::add(ops::scale(l_sg, alpha), total)
                                              : ops::scale(l_sg, alpha);
  if (l_kld.defined()) total = total.defined() ? ops::add(total, l_kld) : l_kld;
  return total;
}

Var encoder_kld(const Var& student_c5, const Tensor& teacher_c5) {
  return ops::channel_kld(student_c5, teacher_c5);
}

double encoder_kld(const Tensor& student_c5, const Tensor& teacher_c5) {
  NoGradGuard guard;
  return ops::channel_kld(Var(student_c5), teacher_c5).value()[0];
}

double LrSchedule::lr_at(int epoch) const {
  if (epoch < 0) throw UsageError("epoch must be nonnegative");
  return base_lr * std::pow(decay, epoch / period);
}

double lr_at(int epoch) { return LrSchedule{}.lr_at(epoch); }

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kShared: return "w_sh";
    case ParamGroup::kSegmentation: return "w_seg";
    case ParamGroup::kSceneGraph: return "w_sg";
  }
  return "?";
}

void ModelPartition::add(ParamGroup group, const std::vector<nn::NamedParam>& params) {
  for (const auto& p : params) {
    for (const auto& e : entries_) {
      if (e.param.var->node() == p.var->node()) {
        throw UsageError("parameter " + p.name + " assigned to more than one group");
      }
    }
    entries_.push_back({group, p});
  }
  frozen_.try_emplace(group, false);
}

std::vector<nn::NamedParam> ModelPartition::params(ParamGroup group) const {
  std::vector<nn::NamedParam> out;
  for (const auto& e : entries_) {
    if (e.group == group) out.push_back(e.param);
  }
  return out;
}

std::vector<nn::NamedParam> ModelPartition::all() const {
  std::vector<nn::NamedParam> out;
  for (const auto& e : entries_) out.push_back(e.param);
  return out;
}

void ModelPartition::set_frozen(ParamGroup group, bool frozen) {
  frozen_[group] = frozen;
  for (auto& e : entries_) {
    if (e.group == group) {
      e.param.var->set_requires_grad(!frozen);
      e.param.var->zero_grad();
    }
  }
}

bool ModelPartition::frozen(ParamGroup group) const {
  auto it = frozen_.find(group);
  return it != frozen_.end() && it->second;
}

std::string ModelPartition::digest(ParamGroup group) const {
  std::vector<nn::NamedBuffer> state;
  for (const auto& p : params(group)) state.push_back({p.name, &p.var->mutable_value()});
  return state_digest(state);
}

void Adam::step(const std::vector<nn::NamedParam>& params, double lr) {
  ++t_;
  for (const auto& p : params) {
    Var& v = *p.var;
    if (!v.requires_grad() || !v.has_grad()) continue;
    Moments& s = state_[p.name];
    Tensor& w = v.mutable_value();
    if (s.m.empty()) {
      s.m = Tensor(w.shape(), 0.0);
      s.v = Tensor(w.shape(), 0.0);
    }
    ++s.t;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    const Tensor& g = v.grad();
    for (int64_t i = 0; i < w.numel(); ++i) {
      s.m[i] = b1 * s.m[i] + (1 - b1) * g[i];
      s.v[i] = b2 * s.v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.eps);
    }
  }
}

void Adam::save(Checkpoint& ck, const std::string& prefix) const {
  ck.set_meta(prefix + "steps", std::to_string(t_));
  for (const auto& [name, s] : state_) {
    ck.put(prefix + name + ".m", s.m);
    ck.put(prefix + name + ".v", s.v);
    ck.put(prefix + name + ".t", Tensor({1}, static_cast<double>(s.t)));
  }
}

void Adam::load(const Checkpoint& ck, const std::string& prefix) {
  state_.clear();
  const std::string steps = ck.meta(prefix + "steps");
  t_ = steps.empty() ? 0 : std::stoll(steps);
  for (const auto& name : ck.names()) {
    if (name.rfind(prefix, 0) != 0 || name.size() < prefix.size() + 2) continue;
    if (name.compare(name.size() - 2, 2, ".m") != 0) continue;
    const std::string pname = name.substr(prefix.size(), name.size() - prefix.size() - 2);
    Moments s;
    s.m = ck.get(name);
    s.v = ck.get(prefix + pname + ".v");
    s.t = static_cast<int64_t>(ck.get(prefix + pname + ".t")[0]);
    state_[pname] = std::move(s);
  }
}

}  // namespace gmtl
