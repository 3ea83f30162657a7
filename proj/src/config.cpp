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

#include "gmtl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "gmtl/error.hpp"
#include "gmtl/ops.hpp"

namespace gmtl {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw UsageError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, Field>& fields() {
  using C = RunConfig;
  using S = const std::string&;
  static const std::map<std::string, Field> kFields = {
      {"regime", {[](C& c, S, S v) { c.train.regime = parse_regime(v); },
                  [](const C& c) { return to_string(c.train.regime); }}},
      {"variant", {[](C& c, S, S v) { c.train.model.variant = parse_seg_variant(v); },
                   [](const C& c) { return to_string(c.train.model.variant); }}},
      {"edge_mode", {[](C& c, S, S v) { c.train.model.edge_mode = parse_edge_mode(v); },
                     [](const C& c) { return to_string(c.train.model.edge_mode); }}},
      {"sgfseg", {[](C& c, S k, S v) { c.train.model.sgfseg = parse_bool(k, v); },
                  [](const C& c) { return std::string(c.train.model.sgfseg ? "true" : "false"); }}},
      {"alpha", {[](C& c, S k, S v) { c.train.alpha = parse_number<double>(k, v); },
                 [](const C& c) { return fmt(c.train.alpha); }}},
      {"epochs", {[](C& c, S k, S v) { c.train.epochs = parse_number<int>(k, v); },
                  [](const C& c) { return std::to_string(c.train.epochs); }}},
      {"stage_b_epochs", {[](C& c, S k, S v) { c.train.stage_b_epochs = parse_number<int>(k, v); },
                          [](const C& c) { return std::to_string(c.train.stage_b_epochs); }}},
      {"teacher_epochs", {[](C& c, S k, S v) { c.train.teacher_epochs = parse_number<int>(k, v); },
                          [](const C& c) { return std::to_string(c.train.teacher_epochs); }}},
      {"batch", {[](C& c, S k, S v) { c.train.batch = parse_number<int>(k, v); },
                 [](const C& c) { return std::to_string(c.train.batch); }}},
      {"lr", {[](C& c, S k, S v) { c.train.schedule.base_lr = parse_number<double>(k, v); },
              [](const C& c) { return fmt(c.train.schedule.base_lr); }}},
      {"lr_decay", {[](C& c, S k, S v) { c.train.schedule.decay = parse_number<double>(k, v); },
                    [](const C& c) { return fmt(c.train.schedule.decay); }}},
      {"lr_period", {[](C& c, S k, S v) { c.train.schedule.period = parse_number<int>(k, v); },
                     [](const C& c) { return std::to_string(c.train.schedule.period); }}},
      {"adam_beta1", {[](C& c, S k, S v) { c.train.adam.beta1 = parse_number<double>(k, v); },
                      [](const C& c) { return fmt(c.train.adam.beta1); }}},
      {"adam_beta2", {[](C& c, S k, S v) { c.train.adam.beta2 = parse_number<double>(k, v); },
                      [](const C& c) { return fmt(c.train.adam.beta2); }}},
      {"adam_eps", {[](C& c, S k, S v) { c.train.adam.eps = parse_number<double>(k, v); },
                    [](const C& c) { return fmt(c.train.adam.eps); }}},
      {"seed", {[](C& c, S k, S v) {
                  c.train.seed = parse_number<uint64_t>(k, v);
                  c.train.model.seed = c.train.seed;
                },
                [](const C& c) { return std::to_string(c.train.seed); }}},
      {"dropout", {[](C& c, S k, S v) { c.train.model.dropout = parse_number<double>(k, v); },
                   [](const C& c) { return fmt(c.train.model.dropout); }}},
      {"semantic_trainable",
       {[](C& c, S k, S v) { c.train.model.semantic_trainable = parse_bool(k, v); },
        [](const C& c) { return std::string(c.train.model.semantic_trainable ? "true" : "false"); }}},
      {"eval_every", {[](C& c, S k, S v) { c.train.eval_every = parse_number<int>(k, v); },
                      [](const C& c) { return std::to_string(c.train.eval_every); }}},
      {"patience", {[](C& c, S k, S v) { c.train.patience = parse_number<int>(k, v); },
                    [](const C& c) { return std::to_string(c.train.patience); }}},
      {"target_p_acc", {[](C& c, S k, S v) { c.train.target_p_acc = parse_number<double>(k, v); },
                        [](const C& c) { return fmt(c.train.target_p_acc); }}},
      {"target_acc", {[](C& c, S k, S v) { c.train.target_acc = parse_number<double>(k, v); },
                      [](const C& c) { return fmt(c.train.target_acc); }}},
      {"checkpoint_every",
       {[](C& c, S k, S v) { c.train.checkpoint_every = parse_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.train.checkpoint_every); }}},
      {"data", {[](C& c, S, S v) { c.data = v; }, [](const C& c) { return c.data; }}},
      {"out", {[](C& c, S, S v) { c.out = v; }, [](const C& c) { return c.out; }}},
      {"precision", {[](C& c, S, S v) { c.precision = parse_precision(v); },
                     [](const C& c) { return to_string(c.precision); }}},
      {"height", {[](C& c, S k, S v) { c.height = parse_number<int64_t>(k, v); },
                  [](const C& c) { return std::to_string(c.height); }}},
      {"width", {[](C& c, S k, S v) { c.width = parse_number<int64_t>(k, v); },
                 [](const C& c) { return std::to_string(c.width); }}},
      {"strict_size", {[](C& c, S k, S v) { c.strict_size = parse_bool(k, v); },
                       [](const C& c) { return std::string(c.strict_size ? "true" : "false"); }}},
      {"train_split", {[](C& c, S, S v) {
                         if (parse_split(v) == Split::kTest) {
                           throw UsageError("train_split must be 'train' or 'all'");
                         }
                         c.train_split = v;
                       },
                       [](const C& c) { return c.train_split; }}},
      {"val_split", {[](C& c, S, S v) {
                       if (v != "none") parse_split(v);
                       c.val_split = v;
                     },
                     [](const C& c) { return c.val_split; }}},
      {"fold", {[](C& c, S k, S v) { c.fold = parse_number<int>(k, v); },
                [](const C& c) { return std::to_string(c.fold); }}},
      {"encoder_weights", {[](C& c, S, S v) { c.encoder_weights = v; },
                           [](const C& c) { return c.encoder_weights; }}},
      {"allow_random_encoder",
       {[](C& c, S k, S v) { c.allow_random_encoder = parse_bool(k, v); },
        [](const C& c) { return std::string(c.allow_random_encoder ? "true" : "false"); }}},
  };
  return kFields;
}

}  // namespace

Precision parse_precision(const std::string& s) {
  if (s == "fixed") return Precision::kFixed;
  if (s == "fast") return Precision::kFast;
  throw UsageError("precision must be 'fixed' or 'fast', got '" + s + "'");
}

std::string to_string(Precision p) { return p == Precision::kFixed ? "fixed" : "fast"; }

Precision precision_from_env(Precision fallback) {
  const char* v = std::getenv("GLORE_MTL_PRECISION");
  if (!v || !*v) return fallback;
  return parse_precision(v);
}

void apply_precision(Precision p) {
  if (p == Precision::kFixed) {
    ops::set_blas_threads(1);
  } else {
    ops::set_blas_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw UsageError("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
}

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) throw UsageError("unknown config key '" + key + "'");
  return it->second.get(*this);
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [k, f] : fields()) out << k << " = " << f.get(*this) << "\n";
  return out.str();
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

SplitSpec RunConfig::split_spec() const {
  return fold < 0 ? SplitSpec::standard() : SplitSpec::fold(fold);
}

void RunConfig::validate() const {
  train.validate();
  if (height < 32 || width < 32) throw UsageError("height and width must be at least 32");
  if (fold < -1 || fold > 3) throw UsageError("fold must be -1 (standard split) or 0..3");
}

}  // namespace gmtl
