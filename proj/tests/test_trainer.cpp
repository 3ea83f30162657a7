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

#include <gtest/gtest.h>

#include "gmtl/commands.hpp"
#include "gmtl/error.hpp"
#include "gmtl/log.hpp"
#include "gmtl/selftest.hpp"
#include "test_support.hpp"

namespace gmtl {
namespace {

using testing::read_text;
using testing::small_synth;
using testing::TempDir;

class TrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    set_log_level(LogLevel::kWarn);
    apply_precision(Precision::kFixed);
    for (const auto& f : synth_frames(small_synth(21, 4))) frames_.push_back(to_frame(f));
    stats_ = channel_stats(frames_);
  }

  TrainConfig config(Regime r) const {
    TrainConfig c;
    c.regime = r;
    c.epochs = 2;
    c.stage_b_epochs = 2;
    c.teacher_epochs = 1;
    c.batch = 2;
    c.checkpoint_every = 1;
    c.schedule.base_lr = 1e-3;
    c.seed = 3;
    c.model.seed = 3;
    return c;
  }

  Trainer trainer(const TrainConfig& c, const std::filesystem::path& dir) const {
    return Trainer(c, make_examples(frames_, stats_), {}, stats_, dir);
  }

  static std::vector<std::string> digests(Trainer& t) {
    std::vector<std::string> out;
    for (const ParamGroup g : {ParamGroup::kShared, ParamGroup::kSegmentation, ParamGroup::kSceneGraph}) {
      out.push_back(t.model().partition().digest(g));
    }
    return out;
  }

  std::vector<Frame> frames_;
  ChannelStats stats_;
};

TEST_F(TrainerTest, FreezeSuitePasses) {
  for (const auto& r : freeze_suite()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST_F(TrainerTest, StageBLeavesSharedAndSegmentationWeightsUntouched) {
  TempDir dir("train");
  Trainer t = trainer(config(Regime::kS), dir.path());
  const TrainResult r = t.run();
  EXPECT_FALSE(r.digest_before_b.empty());
  EXPECT_EQ(r.digest_before_b, r.digest_after_b);
  EXPECT_TRUE(std::filesystem::exists(dir / "stage_a.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "model.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "metrics.json"));
  int a = 0, b = 0;
  for (const auto& rec : r.log) {
    a += rec.stage == "A";
    b += rec.stage == "B";
    EXPECT_TRUE(std::isfinite(rec.total));
    if (rec.stage == "A") EXPECT_EQ(rec.l_sg, 0.0);
    if (rec.stage == "B") EXPECT_EQ(rec.l_seg, 0.0);
  }
  EXPECT_EQ(a, 2);
  EXPECT_EQ(b, 2);
}

TEST_F(TrainerTest, ResumeMidStageReproducesUninterruptedRun) {
  TempDir dir("train");
  Trainer full = trainer(config(Regime::kS), dir / "full");
  full.on_epoch = [&](const EpochRecord& rec) {
    // The checkpoint on disk holds the state after the previous epoch.
    if (rec.stage == "A" && rec.epoch == 1) {
      std::filesystem::copy_file(dir / "full" / "checkpoint.ckpt", dir.path() / "mid.ckpt");
    }
  };
  const TrainResult whole = full.run();

  Trainer resumed = trainer(config(Regime::kS), dir / "resumed");
  const TrainResult tail = resumed.run(dir.path() / "mid.ckpt");
  EXPECT_EQ(digests(resumed), digests(full));
  ASSERT_EQ(tail.log.size() + 1, whole.log.size());
  for (size_t i = 0; i < tail.log.size(); ++i) {
    EXPECT_EQ(tail.log[i].to_json(), whole.log[i + 1].to_json());
  }
}

TEST_F(TrainerTest, CompletedStageACheckpointSkipsToStageB) {
  TempDir dir("train");
  Trainer full = trainer(config(Regime::kS), dir / "full");
  full.run();
  Trainer skip = trainer(config(Regime::kS), dir / "skip");
  const TrainResult r = skip.run(dir / "full" / "stage_a.ckpt");
  for (const auto& rec : r.log) EXPECT_EQ(rec.stage, "B");
  EXPECT_EQ(digests(skip), digests(full));
}

TEST_F(TrainerTest, ResumeRejectsForeignRegimeAndVariant) {
  TempDir dir("train");
  Trainer s = trainer(config(Regime::kS), dir / "s");
  s.run();
  Trainer v = trainer(config(Regime::kV), dir / "v");
  EXPECT_THROW(v.run(dir / "s" / "checkpoint.ckpt"), DataError);
  TrainConfig other = config(Regime::kS);
  other.model.variant = SegVariant::kGR;
  Trainer g = trainer(other, dir / "g");
  EXPECT_THROW(g.run(dir / "s" / "checkpoint.ckpt"), UsageError);
  EXPECT_THROW(g.run(dir / "missing.ckpt"), DataError);
}

TEST_F(TrainerTest, VanillaAndDistillationRegimesRun) {
  TempDir dir("train");
  Trainer v = trainer(config(Regime::kV), dir / "v");
  for (const auto& rec : v.run().log) {
    EXPECT_EQ(rec.stage, "joint");
    EXPECT_NEAR(rec.total, compose_vmtl(rec.l_sg, rec.l_seg, 0.4), 1e-12);
  }
  Trainer kd = trainer(config(Regime::kKD), dir / "kd");
  const TrainResult r = kd.run();
  EXPECT_TRUE(std::filesystem::exists(dir / "kd" / "teacher.ckpt"));
  bool saw_kld = false;
  for (const auto& rec : r.log) {
    if (rec.stage != "joint") continue;
    saw_kld = saw_kld || rec.l_kld > 0;
    EXPECT_NEAR(rec.total, compose_kdmtl(rec.l_sg, rec.l_seg, rec.l_kld, 0.4), 1e-12);
  }
  EXPECT_TRUE(saw_kld);
}

TEST_F(TrainerTest, CommandRunsAreDeterministic) {
  TempDir dir("train");
  RunConfig c;
  c.train = config(Regime::kS);
  c.height = 64;
  c.width = 80;
  c.val_split = "none";
  c.data = (dir / "data").string();
  synth_generate(dir / "data", small_synth(22, 3));
  c.out = (dir / "one").string();
  cmd_train(c);
  c.out = (dir / "two").string();
  cmd_train(c);
  const std::string a = read_text(dir / "one" / "log.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read_text(dir / "two" / "log.jsonl"));
  EXPECT_EQ(read_text(dir / "one" / "metrics.json"), read_text(dir / "two" / "metrics.json"));
}

TEST_F(TrainerTest, EarlyStopOnTargets) {
  TempDir dir("train");
  TrainConfig c = config(Regime::kS);
  c.epochs = 5;
  c.eval_every = 1;
  c.target_p_acc = 1e-9;
  Trainer t(c, make_examples(frames_, stats_), make_examples(frames_, stats_), stats_, dir.path());
  int a = 0;
  for (const auto& rec : t.run().log) a += rec.stage == "A";
  EXPECT_EQ(a, 1);
}

}  // namespace
}  // namespace gmtl
