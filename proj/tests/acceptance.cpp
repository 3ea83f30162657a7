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

// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "gmtl/commands.hpp"
#include "gmtl/log.hpp"
#include "gmtl/selftest.hpp"

namespace fs = std::filesystem;
using namespace gmtl;

namespace {

// Tolerances and budgets.
constexpr double kGradientCpuSeconds = 60.0;
constexpr double kOverfitPixelAcc = 0.95;
constexpr double kOverfitInteractionAcc = 0.90;
constexpr int kOverfitEpochBudget = 200;
constexpr double kOverfitWallSeconds = 15.0 * 60.0;
constexpr double kAblationMinLogitDiff = 1e-6;

std::map<int, std::pair<bool, std::string>> results;

void emit(int id, bool passed, const std::string& detail) {
  auto [it, fresh] = results.try_emplace(id, passed, detail);
  if (!fresh) {
    it->second.first = it->second.first && passed;
    it->second.second += "; " + detail;
  }
  std::cerr << "criterion " << id << (passed ? " passed" : " failed") << std::endl;
}

bool all_passed(const std::vector<CheckResult>& r) {
  for (const auto& c : r) {
    if (!c.passed) return false;
  }
  return !r.empty();
}

std::string summary(const std::vector<CheckResult>& r) {
  std::string s;
  for (const auto& c : r) {
    if (!s.empty()) s += "; ";
    s += (c.passed ? "" : "FAILED ") + c.name + " " + c.detail;
  }
  return s;
}

std::vector<CheckResult> pick(const std::vector<CheckResult>& r,
                              const std::vector<std::string>& names) {
  std::vector<CheckResult> out;
  for (const auto& c : r) {
    for (const auto& n : names) {
      if (c.name == n) out.push_back(c);
    }
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Edge logits of a trained model on every training frame, concatenated.
std::vector<double> edge_logits(const fs::path& checkpoint, const fs::path& data, int64_t h,
                                int64_t w) {
  LoadedModel loaded = load_model(checkpoint);
  loaded.model->set_training(false);
  std::vector<Frame> frames;
  for (const auto& rec : load_dataset(data, Split::kTrain)) {
    frames.push_back(preprocess(load_frame(rec), PreprocessConfig{h, w, false}));
  }
  std::vector<double> out;
  NoGradGuard guard;
  Rng rng(0);
  for (const auto& ex : make_examples(frames, loaded.stats)) {
    const auto o = loaded.model->forward({&ex.sample}, rng, {true, true});
    const Tensor& l = o.sg_logits.value();
    out.insert(out.end(), l.data(), l.data() + l.numel());
  }
  return out;
}

RunConfig overfit_config(const fs::path& data, const fs::path& out, EdgeMode mode) {
  RunConfig c;
  c.data = data.string();
  c.out = out.string();
  c.height = 160;
  c.width = 224;
  c.val_split = "train";
  c.train.regime = Regime::kS;
  c.train.model.variant = SegVariant::kMSLRGR;
  c.train.model.edge_mode = mode;
  c.train.epochs = kOverfitEpochBudget;
  c.train.stage_b_epochs = kOverfitEpochBudget;
  c.train.batch = 4;
  c.train.schedule.base_lr = 1e-3;
  c.train.eval_every = 5;
  c.train.target_p_acc = kOverfitPixelAcc;
  c.train.target_acc = kOverfitInteractionAcc;
  c.train.checkpoint_every = 0;
  return c;
}

int stage_epochs(const TrainResult& r, const std::string& stage) {
  int n = 0;
  for (const auto& rec : r.log) n += rec.stage == stage;
  return n;
}

void overfit(const fs::path& root) {
  SynthConfig sc;
  sc.seed = 0;
  sc.n_frames = 16;
  sc.height = 160;
  sc.width = 224;
  const fs::path data = root / "synth16";
  synth_generate(data, sc);

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult gisf = cmd_train(overfit_config(data, root / "gisf", EdgeMode::kGisf));
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  EvalRequest req;
  req.checkpoint = root / "gisf" / "model.ckpt";
  req.data = data;
  req.split = "train";
  const EvalResult ev = cmd_eval(req);
  const int a = stage_epochs(gisf, "A"), b = stage_epochs(gisf, "B");
  const bool fit = ev.seg.pixel_acc >= kOverfitPixelAcc && ev.sg.acc >= kOverfitInteractionAcc &&
                   a <= kOverfitEpochBudget && b <= kOverfitEpochBudget &&
                   seconds < kOverfitWallSeconds;

  cmd_train(overfit_config(data, root / "none", EdgeMode::kNone));
  const auto lg = edge_logits(root / "gisf" / "model.ckpt", data, 160, 224);
  const auto ln = edge_logits(root / "none" / "model.ckpt", data, 160, 224);
  double diff = lg.size() == ln.size() ? 0.0 : INFINITY;
  for (size_t i = 0; i < lg.size() && i < ln.size(); ++i) {
    diff = std::max(diff, std::abs(lg[i] - ln[i]));
  }
  const bool ablation = !lg.empty() && diff > kAblationMinLogitDiff;

  emit(7, fit && ablation,
       "P-Acc " + fmt("%.4f", ev.seg.pixel_acc) + ", Acc " + fmt("%.4f", ev.sg.acc) + " after " +
           std::to_string(a) + " stage-A + " + std::to_string(b) + " stage-B epochs in " +
           fmt("%.0f", seconds) + " s; GISF vs NONE max edge-logit diff " + fmt("%.3g", diff));

  const std::string& before = gisf.digest_before_b;
  const std::string& after = gisf.digest_after_b;
  const bool frozen = !before.empty() && before == after;
  emit(5, frozen,
       "overfit run: sha256(w_sh, w_seg) " + before.substr(0, 16) +
           (frozen ? " unchanged across stage B" : " changed to " + after.substr(0, 16)));
}

void determinism(const fs::path& root) {
  SynthConfig sc;
  sc.seed = 3;
  sc.n_frames = 6;
  sc.height = 64;
  sc.width = 80;
  const fs::path data = root / "synth6";
  synth_generate(data, sc);
  RunConfig c;
  c.data = data.string();
  c.height = 64;
  c.width = 80;
  c.precision = Precision::kFixed;
  c.val_split = "none";
  c.train.regime = Regime::kS;
  c.train.epochs = 2;
  c.train.stage_b_epochs = 2;
  c.train.batch = 2;
  c.train.seed = 17;
  c.train.model.seed = 17;
  c.train.schedule.base_lr = 1e-3;
  c.out = (root / "det1").string();
  cmd_train(c);
  c.out = (root / "det2").string();
  cmd_train(c);
  const std::string l1 = read_file(root / "det1" / "log.jsonl");
  const std::string l2 = read_file(root / "det2" / "log.jsonl");
  // The echoed config re-runs to the same log.
  RunConfig echoed = RunConfig::load(root / "det1" / "config.txt");
  echoed.out = (root / "det3").string();
  cmd_train(echoed);
  const std::string l3 = read_file(root / "det3" / "log.jsonl");
  emit(10, !l1.empty() && l1 == l2 && l1 == l3,
       std::to_string(std::count(l1.begin(), l1.end(), '\n')) + " epoch records, " +
           (l1 == l2 ? "identical" : "different") + " across runs, " +
           (l1 == l3 ? "identical" : "different") + " from echoed config");
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  set_log_level(LogLevel::kWarn);
  apply_precision(Precision::kFixed);
  const fs::path root =
      fs::temp_directory_path() / ("gmtl-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  try {
    const std::clock_t c0 = std::clock();
    const auto grad = gradient_suite();
    const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
    emit(1, all_passed(grad) && grad.size() == 4 && cpu < kGradientCpuSeconds,
         summary(grad) + "; " + fmt("%.1f", cpu) + " s CPU");

    const auto loss = loss_suite();
    const auto compose =
        pick(loss, {"vmtl_closed_form", "kdmtl_closed_form", "graph_matches_scalar"});
    emit(2, all_passed(compose) && compose.size() == 3, summary(compose));
    const auto kld = pick(loss, {"kld_self_zero", "kld_nonnegative", "kld_two_point"});
    emit(3, all_passed(kld) && kld.size() == 3, summary(kld));

    const auto metric = metric_suite();
    emit(4, all_passed(metric) && metric.size() == 3, summary(metric));

    const auto freeze = freeze_suite();
    emit(5, all_passed(freeze), summary(freeze));

    const auto glore = glore_suite();
    emit(6, all_passed(glore) && glore.size() == 2, summary(glore));

    if (!quick) overfit(root);

    const auto shape = shape_suite();
    emit(8, all_passed(shape) && shape.size() == 3, summary(shape));

    const auto schedule = schedule_suite();
    emit(9, all_passed(schedule) && schedule.size() == 2, summary(schedule));

    determinism(root);
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << std::endl;
  }
  fs::remove_all(root);
  int failures = 0;
  for (int id = 1; id <= 10; ++id) {
    if (quick && id == 7) continue;
    const auto it = results.find(id);
    const bool passed = it != results.end() && it->second.first;
    failures += !passed;
    std::cout << (passed ? "PASS" : "FAIL") << " criterion " << id << ": "
              << (it == results.end() ? "not reached" : it->second.second) << "\n";
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " failing criteria"
            << std::endl;
  return failures ? 1 : 0;
}
