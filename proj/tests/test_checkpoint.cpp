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

#include <cmath>
#include <fstream>

#include "gmtl/checkpoint.hpp"
#include "gmtl/error.hpp"
#include "gmtl/trainer.hpp"
#include "test_support.hpp"

namespace gmtl {
namespace {

using testing::TempDir;

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  Rng rng(1);
  ck.put("a", Tensor::randn({2, 3}, rng));
  ck.put("b.c", Tensor({4}, std::vector<double>{1, -0.0, 1e-300, 3.5}));
  ck.set_meta("stage", "A");
  ck.set_meta("note", "two words");
  return ck;
}

void flip_byte(const std::filesystem::path& p, std::streamoff from_end) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(-from_end, std::ios::end);
  char c;
  f.read(&c, 1);
  c ^= 0x40;
  f.seekp(-from_end, std::ios::end);
  f.write(&c, 1);
}

TEST(Sha256, KnownVectors) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::span<const uint8_t>{}),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  const Checkpoint ck = sample_checkpoint();
  ck.save(dir / "x.ckpt");
  const Checkpoint back = Checkpoint::load(dir / "x.ckpt");
  EXPECT_EQ(back.names(), ck.names());
  for (const auto& n : ck.names()) EXPECT_TRUE(back.get(n) == ck.get(n)) << n;
  EXPECT_EQ(back.all_meta(), ck.all_meta());
  EXPECT_EQ(back.meta("absent"), "");
  EXPECT_TRUE(std::signbit(back.get("b.c")[1]));
}

TEST(Checkpoint, PayloadCorruptionDetected) {
  TempDir dir("ckpt");
  sample_checkpoint().save(dir / "x.ckpt");
  flip_byte(dir / "x.ckpt", 3);
  EXPECT_THROW(Checkpoint::load(dir / "x.ckpt"), DataError);
}

TEST(Checkpoint, TruncationDetected) {
  TempDir dir("ckpt");
  sample_checkpoint().save(dir / "x.ckpt");
  const auto size = std::filesystem::file_size(dir / "x.ckpt");
  std::filesystem::resize_file(dir / "x.ckpt", size - 9);
  EXPECT_THROW(Checkpoint::load(dir / "x.ckpt"), DataError);
}

TEST(Checkpoint, ForeignFileRejected) {
  TempDir dir("ckpt");
  std::ofstream(dir / "junk.ckpt") << "definitely not a checkpoint";
  EXPECT_THROW(Checkpoint::load(dir / "junk.ckpt"), DataError);
  EXPECT_THROW(Checkpoint::load(dir / "missing.ckpt"), DataError);
}

TEST(Checkpoint, RestoreReportsEveryProblem) {
  Checkpoint ck;
  ck.put("w", Tensor({2}, 0.0));
  Tensor w({3}, 0.0), v({1}, 0.0);
  try {
    ck.restore_state({{"w", &w}, {"v", &v}});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("missing v"), std::string::npos) << msg;
    EXPECT_NE(msg.find("shape mismatch w"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, ModelRoundTripKeepsConfigStatsAndWeights) {
  TempDir dir("ckpt");
  ModelConfig mc;
  mc.variant = SegVariant::kMSGR;
  mc.edge_mode = EdgeMode::kPf;
  mc.seed = 9;
  MultiTaskModel model(mc);
  ChannelStats stats;
  stats.mean = {0.1, 0.2, 0.3};
  stats.stddev = {0.4, 0.5, 0.6};
  save_model(model, stats, dir / "m.ckpt", 96, 128);

  const LoadedModel loaded = load_model(dir / "m.ckpt");
  EXPECT_EQ(loaded.model->config().variant, SegVariant::kMSGR);
  EXPECT_EQ(loaded.model->config().edge_mode, EdgeMode::kPf);
  EXPECT_EQ(loaded.stats.mean, stats.mean);
  EXPECT_EQ(loaded.stats.stddev, stats.stddev);
  EXPECT_EQ(loaded.checkpoint.meta("input.height"), "96");
  EXPECT_EQ(loaded.checkpoint.meta("input.width"), "128");
  for (const ParamGroup g : {ParamGroup::kShared, ParamGroup::kSegmentation, ParamGroup::kSceneGraph}) {
    EXPECT_EQ(loaded.model->partition().digest(g), model.partition().digest(g)) << to_string(g);
  }
  EXPECT_EQ(state_digest(loaded.model->named_state()), state_digest(model.named_state()));
}

}  // namespace
}  // namespace gmtl
