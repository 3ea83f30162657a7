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

#include "gmtl/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "gmtl/error.hpp"
#include "gmtl/log.hpp"

namespace gmtl {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kTeacherStream = 1;
constexpr uint64_t kJointStream = 2;
constexpr uint64_t kStageAStream = 3;
constexpr uint64_t kStageBStream = 4;

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double value_or_zero(const Var& v) { return v.defined() ? v.value()[0] : 0.0; }

json val_json(const EvalResult& r) {
  return {{"miou", r.seg.miou},     {"p_acc", r.seg.pixel_acc}, {"acc", r.sg.acc},
          {"map", r.sg.map},        {"recall", r.sg.recall},    {"l_seg", r.l_seg},
          {"l_sg", r.l_sg}};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(schedule.base_lr > 0)) throw UsageError("learning rate must be positive");
  if (!(schedule.decay > 0 && schedule.decay <= 1)) throw UsageError("lr decay must lie in (0, 1]");
  if (schedule.period < 1) throw UsageError("lr decay period must be at least 1");
  if (!(alpha > 0 && alpha < 1)) throw UsageError("alpha must lie in (0, 1)");
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch < 1) throw UsageError("batch must be at least 1");
  if (model.sgfseg && regime == Regime::kS) {
    throw UsageError("--sgfseg needs a joint multi-task regime (V or KD); S trains the tasks apart");
  }
  if (model.sgfseg && model.edge_mode != EdgeMode::kNone) {
    throw UsageError("--sgfseg feeds scene-graph edges into segmentation and cannot be combined "
                     "with edge mode " + to_string(model.edge_mode));
  }
}

std::vector<Example> make_examples(const std::vector<Frame>& frames, const ChannelStats& stats) {
  std::vector<Example> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back({f.id, to_scene_sample(f, stats), f.mask});
  return out;
}

EvalResult evaluate(MultiTaskModel& model, const std::vector<Example>& examples, int batch) {
  if (examples.empty()) throw UsageError("evaluation needs at least one example");
  NoGradGuard guard;
  model.set_training(false);
  SegConfusion confusion;
  std::vector<double> scores, targets;
  double seg_sum = 0, sg_sum = 0;
  int64_t pixels = 0, entries = 0;
  Rng unused(0);
  for (size_t start = 0; start < examples.size(); start += static_cast<size_t>(batch)) {
    const size_t end = std::min(examples.size(), start + static_cast<size_t>(batch));
    std::vector<const SceneSample*> samples;
    std::vector<int32_t> mask;
    for (size_t i = start; i < end; ++i) {
      samples.push_back(&examples[i].sample);
      mask.insert(mask.end(), examples[i].mask.begin(), examples[i].mask.end());
    }
    auto out = model.forward(samples, unused, {true, true});
    confusion.add(argmax_labels(out.seg_logits.value()), mask);
    seg_sum += seg_loss(out.seg_logits, mask).value()[0] * static_cast<double>(mask.size());
    pixels += static_cast<int64_t>(mask.size());
    if (out.sg_logits.defined()) {
      const int64_t n = out.sg_targets.numel();
      sg_sum += sg_loss(out.sg_logits, out.sg_targets).value()[0] * static_cast<double>(n);
      entries += n;
      const Tensor p = sigmoid(out.sg_logits.value());
      scores.insert(scores.end(), p.values().begin(), p.values().end());
      targets.insert(targets.end(), out.sg_targets.values().begin(), out.sg_targets.values().end());
    }
  }
  EvalResult r;
  r.seg = confusion.metrics();
  r.l_seg = seg_sum / static_cast<double>(pixels);
  r.edges = entries / kInteractionClasses;
  if (entries > 0) {
    const Shape shape{r.edges, kInteractionClasses};
    r.sg = sg_metrics(Tensor(shape, scores), Tensor(shape, targets));
    r.l_sg = sg_sum / static_cast<double>(entries);
  }
  return r;
}

std::string metrics_json(const EvalResult& r) {
  json j;
  j["miou"] = r.seg.miou;
  j["per_class_iou"] = r.seg.per_class_iou;
  j["p_acc"] = r.seg.pixel_acc;
  j["acc"] = r.sg.acc;
  j["map"] = r.sg.map;
  j["recall"] = r.sg.recall;
  return j.dump(2) + "\n";
}

std::string EpochRecord::to_json() const {
  json j;
  j["stage"] = stage;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["l_seg"] = l_seg;
  j["l_sg"] = l_sg;
  j["l_kld"] = l_kld;
  j["total"] = total;
  j["val"] = val ? val_json(*val) : json(nullptr);
  return j.dump();
}

void put_model_meta(Checkpoint& ck, const ModelConfig& c, const ChannelStats& stats) {
  ck.set_meta("model.variant", to_string(c.variant));
  ck.set_meta("model.edge_mode", to_string(c.edge_mode));
  ck.set_meta("model.sgfseg", c.sgfseg ? "1" : "0");
  ck.set_meta("model.seed", std::to_string(c.seed));
  ck.set_meta("model.dropout", fmt_double(c.dropout));
  ck.set_meta("model.semantic_trainable", c.semantic_trainable ? "1" : "0");
  for (size_t i = 0; i < 3; ++i) {
    ck.set_meta("norm.mean." + std::to_string(i), fmt_double(stats.mean[i]));
    ck.set_meta("norm.std." + std::to_string(i), fmt_double(stats.stddev[i]));
  }
}

ModelConfig model_config_from(const Checkpoint& ck) {
  if (ck.meta("model.variant").empty()) throw DataError("checkpoint carries no model description");
  ModelConfig c;
  c.variant = parse_seg_variant(ck.meta("model.variant"));
  c.edge_mode = parse_edge_mode(ck.meta("model.edge_mode"));
  c.sgfseg = ck.meta("model.sgfseg") == "1";
  c.seed = std::stoull(ck.meta("model.seed"));
  c.dropout = std::stod(ck.meta("model.dropout"));
  c.semantic_trainable = ck.meta("model.semantic_trainable") == "1";
  return c;
}

ChannelStats stats_from(const Checkpoint& ck) {
  ChannelStats s;
  for (size_t i = 0; i < 3; ++i) {
    const std::string m = ck.meta("norm.mean." + std::to_string(i));
    const std::string d = ck.meta("norm.std." + std::to_string(i));
    if (m.empty() || d.empty()) throw DataError("checkpoint carries no normalization statistics");
    s.mean[i] = std::stod(m);
    s.stddev[i] = std::stod(d);
  }
  return s;
}

void save_model(const MultiTaskModel& model, const ChannelStats& stats, const fs::path& path,
                int64_t height, int64_t width) {
  Checkpoint ck;
  put_model_meta(ck, model.config(), stats);
  if (height > 0 && width > 0) {
    ck.set_meta("input.height", std::to_string(height));
    ck.set_meta("input.width", std::to_string(width));
  }
  ck.put_state(model.named_state("model."));
  ck.save(path);
}

LoadedModel load_model(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  LoadedModel out;
  out.checkpoint = Checkpoint::load(path);
  out.model = std::make_unique<MultiTaskModel>(model_config_from(out.checkpoint));
  out.checkpoint.restore_state(out.model->named_state("model."));
  out.stats = stats_from(out.checkpoint);
  return out;
}

Trainer::Trainer(TrainConfig config, std::vector<Example> train, std::vector<Example> val,
                 ChannelStats stats, fs::path out_dir)
    : config_(std::move(config)),
      train_(std::move(train)),
      val_(std::move(val)),
      stats_(stats),
      out_dir_(std::move(out_dir)),
      adam_(config_.adam) {
  config_.validate();
  if (train_.empty()) throw DataError("training split is empty");
  model_ = std::make_unique<MultiTaskModel>(config_.model);
  if (config_.regime == Regime::kKD) {
    ModelConfig tc = config_.model;
    tc.edge_mode = EdgeMode::kNone;
    tc.sgfseg = false;
    tc.seed = Rng::derive(config_.model.seed, 77);
    teacher_ = std::make_unique<MultiTaskModel>(tc);
  }
}

std::vector<std::vector<size_t>> Trainer::batches(uint64_t stream) const {
  std::vector<size_t> order(train_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::derive(config_.seed, stream));
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
  }
  std::vector<std::vector<size_t>> out;
  for (size_t s = 0; s < order.size(); s += static_cast<size_t>(config_.batch)) {
    const size_t e = std::min(order.size(), s + static_cast<size_t>(config_.batch));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

std::vector<int32_t> Trainer::batch_mask(const std::vector<size_t>& idx) const {
  std::vector<int32_t> mask;
  for (size_t i : idx) mask.insert(mask.end(), train_[i].mask.begin(), train_[i].mask.end());
  return mask;
}

std::vector<const SceneSample*> Trainer::batch_samples(const std::vector<size_t>& idx) const {
  std::vector<const SceneSample*> out;
  for (size_t i : idx) out.push_back(&train_[i].sample);
  return out;
}

void Trainer::save(const std::string& stage, int epochs_done, bool complete,
                   const fs::path& path) const {
  Checkpoint ck;
  put_model_meta(ck, config_.model, stats_);
  ck.set_meta("input.height", std::to_string(train_.front().sample.image.dim(1)));
  ck.set_meta("input.width", std::to_string(train_.front().sample.image.dim(2)));
  ck.set_meta("train.regime", to_string(config_.regime));
  ck.set_meta("train.stage", stage);
  ck.set_meta("train.epoch", std::to_string(epochs_done));
  ck.set_meta("train.complete", complete ? "1" : "0");
  ck.set_meta("train.seed", std::to_string(config_.seed));
  ck.set_meta("train.best_val_loss", fmt_double(best_val_loss_));
  ck.set_meta("train.evals_since_best", std::to_string(evals_since_best_));
  ck.put_state(model_->named_state("model."));
  if (teacher_) ck.put_state(teacher_->named_state("teacher."));
  adam_.save(ck, "adam.");
  ck.save(path);
}

bool Trainer::finish_epoch(EpochRecord& rec, const std::function<EvalResult()>& eval, int budget,
                           bool seg_stage, bool sg_stage, const std::string& stage,
                           TrainResult& result) {
  const bool last = rec.epoch + 1 >= budget;
  const bool do_eval =
      last || (config_.eval_every > 0 && (rec.epoch + 1) % config_.eval_every == 0);
  bool stop = false;
  if (do_eval) {
    EvalResult ev = eval();
    rec.val = ev;
    bool any_target = false, reached = true;
    if (seg_stage && config_.target_p_acc > 0) {
      any_target = true;
      reached = reached && ev.seg.pixel_acc >= config_.target_p_acc;
    }
    if (sg_stage && config_.target_acc > 0) {
      any_target = true;
      reached = reached && ev.edges > 0 && ev.sg.acc >= config_.target_acc;
    }
    if (any_target && reached) {
      log_info(stage + ": target reached after epoch " + std::to_string(rec.epoch));
      stop = true;
    }
    if (config_.patience > 0) {
      double loss = 0;
      if (seg_stage) loss += sg_stage ? (1 - config_.alpha) * ev.l_seg : ev.l_seg;
      if (sg_stage) loss += seg_stage ? config_.alpha * ev.l_sg : ev.l_sg;
      if (evals_since_best_ < 0 || loss < best_val_loss_) {
        best_val_loss_ = loss;
        evals_since_best_ = 0;
      } else if (++evals_since_best_ >= config_.patience) {
        log_info(stage + ": validation loss stalled; stopping early");
        stop = true;
      }
    }
  }
  std::ofstream(out_dir_ / "log.jsonl", std::ios::app) << rec.to_json() << "\n";
  result.log.push_back(rec);
  if (on_epoch) on_epoch(rec);
  const bool complete = stop || last;
  if (complete || (config_.checkpoint_every > 0 && (rec.epoch + 1) % config_.checkpoint_every == 0)) {
    save(stage, rec.epoch + 1, complete, out_dir_ / "checkpoint.ckpt");
  }
  return stop;
}

void Trainer::run_teacher(int start, TrainResult& result) {
  MultiTaskModel& t = *teacher_;
  const int budget = config_.teacher_epochs < 0 ? config_.epochs : config_.teacher_epochs;
  t.partition().set_frozen(ParamGroup::kSceneGraph, true);
  const auto params = t.partition().all();
  for (int epoch = start; epoch < budget; ++epoch) {
    const double lr = config_.schedule.lr_at(epoch);
    const uint64_t stream = kTeacherStream * 100000 + static_cast<uint64_t>(epoch);
    double sum = 0;
    int steps = 0;
    t.set_training(true);
    for (const auto& idx : batches(stream)) {
      Rng rng(Rng::derive(Rng::derive(config_.seed, stream), static_cast<uint64_t>(steps) + 1));
      auto out = t.forward(batch_samples(idx), rng, {true, false});
      Var loss = seg_loss(out.seg_logits, batch_mask(idx));
      loss.backward();
      adam_.step(params, lr);
      t.zero_grad();
      sum += loss.value()[0];
      ++steps;
    }
    EpochRecord rec{"teacher", epoch, lr, sum / steps, 0, 0, sum / steps, std::nullopt};
    const bool last = epoch + 1 >= budget;
    bool stop = false;
    if (last || (config_.eval_every > 0 && (epoch + 1) % config_.eval_every == 0)) {
      NoGradGuard guard;
      t.set_training(false);
      SegConfusion confusion;
      Rng unused(0);
      for (size_t i = 0; i < train_.size(); ++i) {
        auto out = t.forward({&train_[i].sample}, unused, {true, false});
        confusion.add(argmax_labels(out.seg_logits.value()), train_[i].mask);
      }
      EvalResult ev;
      ev.seg = confusion.metrics();
      rec.val = ev;
      stop = config_.target_p_acc > 0 && ev.seg.pixel_acc >= config_.target_p_acc;
    }
    std::ofstream(out_dir_ / "log.jsonl", std::ios::app) << rec.to_json() << "\n";
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const bool complete = stop || last;
    if (complete || (config_.checkpoint_every > 0 && (epoch + 1) % config_.checkpoint_every == 0)) {
      save("teacher", epoch + 1, complete, out_dir_ / "checkpoint.ckpt");
    }
    if (stop) break;
  }
  t.set_training(false);
  t.set_requires_grad(false);
}

void Trainer::run_joint(int start, TrainResult& result) {
  MultiTaskModel& m = *model_;
  const auto params = m.partition().all();
  const bool kd = config_.regime == Regime::kKD;
  if (kd) {
    teacher_->set_training(false);
    teacher_->set_requires_grad(false);
  }
  auto full_eval = [&] {
    EvalResult ev = evaluate(m, val_.empty() ? train_ : val_, config_.batch);
    m.set_training(true);
    return ev;
  };
  for (int epoch = start; epoch < config_.epochs; ++epoch) {
    const double lr = config_.schedule.lr_at(epoch);
    const uint64_t stream = kJointStream * 100000 + static_cast<uint64_t>(epoch);
    double s_seg = 0, s_sg = 0, s_kld = 0;
    int steps = 0;
    m.set_training(true);
    for (const auto& idx : batches(stream)) {
      Rng rng(Rng::derive(Rng::derive(config_.seed, stream), static_cast<uint64_t>(steps) + 1));
      const auto samples = batch_samples(idx);
      auto out = m.forward(samples, rng, {true, true});
      Var l_seg = seg_loss(out.seg_logits, batch_mask(idx));
      Var l_sg = out.sg_logits.defined() ? sg_loss(out.sg_logits, out.sg_targets) : Var();
      Var total, l_kld;
      if (kd) {
        Tensor teacher_c5;
        {
          NoGradGuard guard;
          teacher_c5 = teacher_->encoder.encode(Var(stack_images(samples))).c5.value();
        }
        l_kld = encoder_kld(out.c5, teacher_c5);
        compose_kdmtl(value_or_zero(l_sg), l_seg.value()[0], l_kld.value()[0], config_.alpha);
        total = compose_kdmtl(l_sg, l_seg, l_kld, config_.alpha);
      } else {
        compose_vmtl(value_or_zero(l_sg), l_seg.value()[0], config_.alpha);
        total = compose_vmtl(l_sg, l_seg, config_.alpha);
      }
      if (!std::isfinite(total.value()[0])) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
      }
      total.backward();
      adam_.step(params, lr);
      m.zero_grad();
      s_seg += l_seg.value()[0];
      s_sg += value_or_zero(l_sg);
      s_kld += value_or_zero(l_kld);
      ++steps;
    }
    EpochRecord rec{"joint", epoch, lr, s_seg / steps, s_sg / steps, s_kld / steps, 0, std::nullopt};
    rec.total = kd ? compose_kdmtl(rec.l_sg, rec.l_seg, rec.l_kld, config_.alpha)
                   : compose_vmtl(rec.l_sg, rec.l_seg, config_.alpha);
    if (finish_epoch(rec, full_eval, config_.epochs, true, true, "joint", result)) break;
  }
}

void Trainer::run_stage_a(int start, TrainResult& result) {
  MultiTaskModel& m = *model_;
  m.partition().set_frozen(ParamGroup::kSceneGraph, true);
  std::vector<nn::NamedParam> params = m.partition().params(ParamGroup::kShared);
  for (const auto& p : m.partition().params(ParamGroup::kSegmentation)) params.push_back(p);
  auto full_eval = [&] {
    EvalResult ev = evaluate(m, val_.empty() ? train_ : val_, config_.batch);
    m.set_training(true);
    return ev;
  };
  for (int epoch = start; epoch < config_.epochs; ++epoch) {
    const double lr = config_.schedule.lr_at(epoch);
    const uint64_t stream = kStageAStream * 100000 + static_cast<uint64_t>(epoch);
    double sum = 0;
    int steps = 0;
    m.set_training(true);
    for (const auto& idx : batches(stream)) {
      Rng rng(Rng::derive(Rng::derive(config_.seed, stream), static_cast<uint64_t>(steps) + 1));
      auto out = m.forward(batch_samples(idx), rng, {true, false});
      Var loss = seg_loss(out.seg_logits, batch_mask(idx));
      if (!std::isfinite(loss.value()[0])) {
        throw NumericalError("non-finite segmentation loss at epoch " + std::to_string(epoch));
      }
      loss.backward();
      adam_.step(params, lr);
      m.zero_grad();
      sum += loss.value()[0];
      ++steps;
    }
    EpochRecord rec{"A", epoch, lr, sum / steps, 0, 0, sum / steps, std::nullopt};
    if (finish_epoch(rec, full_eval, config_.epochs, true, false, "A", result)) break;
  }
}

void Trainer::run_stage_b(int start, TrainResult& result) {
  MultiTaskModel& m = *model_;
  ModelPartition& part = m.partition();
  result.digest_before_b = part.digest(ParamGroup::kShared) + part.digest(ParamGroup::kSegmentation);
  part.set_frozen(ParamGroup::kShared, true);
  part.set_frozen(ParamGroup::kSegmentation, true);
  part.set_frozen(ParamGroup::kSceneGraph, false);
  m.set_training(true);
  m.set_shared_training(false);
  std::vector<FrozenFrameFeatures> cache;
  cache.reserve(train_.size());
  for (const Example& ex : train_) cache.push_back(m.frozen_features(ex.sample));

  // Segmentation is frozen, so its metrics are computed once; interaction
  // metrics reuse the frozen per-frame features.
  const std::vector<Example>& eval_set = val_.empty() ? train_ : val_;
  std::vector<FrozenFrameFeatures> eval_cache_storage;
  if (!val_.empty()) {
    for (const Example& ex : val_) eval_cache_storage.push_back(m.frozen_features(ex.sample));
  }
  const std::vector<FrozenFrameFeatures>& eval_cache = val_.empty() ? cache : eval_cache_storage;
  const EvalResult seg_eval = evaluate(m, eval_set, config_.batch);
  m.set_training(true);
  m.set_shared_training(false);
  auto cached_eval = [&] {
    EvalResult ev = seg_eval;
    ev.sg = {};
    ev.l_sg = 0;
    ev.edges = 0;
    NoGradGuard guard;
    m.sg.set_training(false);
    std::vector<Var> logits;
    std::vector<const SceneSample*> with_edges;
    for (size_t i = 0; i < eval_set.size(); ++i) {
      if (eval_set[i].sample.edges.empty()) continue;
      logits.push_back(m.forward_cached(eval_set[i].sample, eval_cache[i]).logits);
      with_edges.push_back(&eval_set[i].sample);
    }
    m.sg.set_training(true);
    if (logits.empty()) return ev;
    const Var all = ops::concat(logits, 0);
    const Tensor targets = batch_targets(with_edges);
    ev.sg = sg_metrics(sigmoid(all.value()), targets);
    ev.l_sg = sg_loss(all, targets).value()[0];
    ev.edges = targets.dim(0);
    return ev;
  };
  const auto params = part.params(ParamGroup::kSceneGraph);
  const int budget = config_.stage_b_epochs < 0 ? config_.epochs : config_.stage_b_epochs;

  for (int epoch = start; epoch < budget; ++epoch) {
    const double lr = config_.schedule.lr_at(epoch);
    const uint64_t stream = kStageBStream * 100000 + static_cast<uint64_t>(epoch);
    double sum = 0;
    int steps = 0;
    for (const auto& idx : batches(stream)) {
      std::vector<Var> logits;
      std::vector<const SceneSample*> with_edges;
      for (size_t i : idx) {
        if (train_[i].sample.edges.empty()) continue;
        logits.push_back(m.forward_cached(train_[i].sample, cache[i]).logits);
        with_edges.push_back(&train_[i].sample);
      }
      if (logits.empty()) continue;
      Var loss = sg_loss(ops::concat(logits, 0), batch_targets(with_edges));
      if (!std::isfinite(loss.value()[0])) {
        throw NumericalError("non-finite interaction loss at epoch " + std::to_string(epoch));
      }
      loss.backward();
      adam_.step(params, lr);
      m.zero_grad();
      sum += loss.value()[0];
      ++steps;
    }
    const double mean = steps ? sum / steps : 0.0;
    EpochRecord rec{"B", epoch, lr, 0, mean, 0, mean, std::nullopt};
    if (finish_epoch(rec, cached_eval, budget, false, true, "B", result)) break;
  }
  result.digest_after_b = part.digest(ParamGroup::kShared) + part.digest(ParamGroup::kSegmentation);
}

TrainResult Trainer::run(const std::optional<fs::path>& resume) {
  fs::create_directories(out_dir_);
  std::string stage;
  int done = 0;
  bool complete = false;
  if (resume) {
    if (!fs::exists(*resume)) throw DataError("resume checkpoint not found: " + resume->string());
    const Checkpoint ck = Checkpoint::load(*resume);
    const ModelConfig mc = model_config_from(ck);
    const ModelConfig& want = config_.model;
    if (mc.variant != want.variant || mc.edge_mode != want.edge_mode || mc.sgfseg != want.sgfseg) {
      throw UsageError("resume checkpoint was trained as " + to_string(mc.variant) + "/" +
                       to_string(mc.edge_mode) + (mc.sgfseg ? "/sgfseg" : "") +
                       ", which differs from the requested configuration");
    }
    stage = ck.meta("train.stage");
    const std::string regime = ck.meta("train.regime");
    const bool ok = (config_.regime == Regime::kV && stage == "joint") ||
                    (config_.regime == Regime::kKD && (stage == "teacher" || stage == "joint")) ||
                    (config_.regime == Regime::kS && (stage == "A" || stage == "B"));
    if (!ok || regime != to_string(config_.regime)) {
      throw DataError("resume checkpoint has stage marker '" + stage + "' from regime '" + regime +
                      "', inconsistent with regime " + to_string(config_.regime));
    }
    done = std::stoi(ck.meta("train.epoch"));
    complete = ck.meta("train.complete") == "1";
    ck.restore_state(model_->named_state("model."));
    if (teacher_) ck.restore_state(teacher_->named_state("teacher."));
    if (!complete) {
      adam_.load(ck, "adam.");
      best_val_loss_ = std::stod(ck.meta("train.best_val_loss"));
      evals_since_best_ = std::stoi(ck.meta("train.evals_since_best"));
    }
    stats_ = stats_from(ck);
  } else {
    std::ofstream(out_dir_ / "log.jsonl", std::ios::trunc);
  }

  // Per-stage bookkeeping resets whenever a new stage begins.
  auto begin_stage = [&] {
    adam_ = Adam(config_.adam);
    best_val_loss_ = 0;
    evals_since_best_ = -1;
  };
  auto resume_or_begin = [&](const std::string& s) -> int {
    if (stage == s && !complete) return done;
    begin_stage();
    return 0;
  };

  TrainResult result;
  switch (config_.regime) {
    case Regime::kV:
      if (!(stage == "joint" && complete)) run_joint(resume_or_begin("joint"), result);
      break;
    case Regime::kKD:
      if (stage.empty() || (stage == "teacher" && !complete)) {
        run_teacher(resume_or_begin("teacher"), result);
        save("teacher", 0, true, out_dir_ / "teacher.ckpt");
      }
      if (!(stage == "joint" && complete)) run_joint(resume_or_begin("joint"), result);
      break;
    case Regime::kS:
      if (stage.empty() || (stage == "A" && !complete)) {
        run_stage_a(resume_or_begin("A"), result);
        save("A", config_.epochs, true, out_dir_ / "stage_a.ckpt");
      }
      if (!(stage == "B" && complete)) run_stage_b(resume_or_begin("B"), result);
      break;
  }

  result.final_eval = evaluate(*model_, val_.empty() ? train_ : val_, config_.batch);
  std::ofstream(out_dir_ / "metrics.json") << metrics_json(result.final_eval);
  save_model(*model_, stats_, out_dir_ / "model.ckpt", train_.front().sample.image.dim(1),
             train_.front().sample.image.dim(2));
  return result;
}

}  // namespace gmtl
