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

#include <cstdlib>
#include <sys/wait.h>

#include "gmtl/png_io.hpp"
#include "test_support.hpp"

namespace gmtl {
namespace {

using testing::read_text;
using testing::TempDir;

int run(const std::string& args) {
  const std::string cmd = std::string(GLORE_MTL_BIN) + " -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, UsageErrorsExitWith2) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("train --regime Q --data /tmp"), 2);
  EXPECT_EQ(run("train --regime S --sgfseg --edge-mode NONE --data /tmp"), 2);
  EXPECT_EQ(run("train --variant GR --edge-mode GISF --alpha 2 --data /tmp"), 2);
  EXPECT_EQ(run("train --epochs 1"), 2);
  EXPECT_EQ(run("train --set nonsense=1 --data /tmp"), 2);
}

TEST(Cli, DataErrorsExitWith3) {
  TempDir dir("cli");
  EXPECT_EQ(run("train --data " + (dir / "missing").string() + " --out " + (dir / "o").string()), 3);
  EXPECT_EQ(run("eval --checkpoint " + (dir / "none.ckpt").string() + " --data " + dir.path().string()), 3);
}

TEST(Cli, SelftestPassesAndFaultExitsWith4) {
  EXPECT_EQ(run("selftest --skip-training"), 0);
  EXPECT_EQ(run("selftest --skip-training --inject-fault attention"), 4);
}

TEST(Cli, SynthTrainEvalInfer) {
  TempDir dir("cli");
  const std::string data = (dir / "data").string(), out = (dir / "run").string();
  ASSERT_EQ(run("synth --out " + data + " --frames 3 --height 64 --width 80 --seed 2"), 0);
  ASSERT_EQ(run("train --data " + data + " --out " + out +
                " --regime S --epochs 1 --stage-b-epochs 1 --batch 2 --lr 1e-3 --height 64 --width 80"
                " --val-split none"),
            0);
  for (const char* f : {"config.txt", "log.jsonl", "metrics.json", "model.ckpt", "stage_a.ckpt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  }
  EXPECT_NE(read_text(dir / "run" / "config.txt").find("regime = S"), std::string::npos);
  EXPECT_EQ(run("eval --checkpoint " + out + "/model.ckpt --data " + data + " --split train --out " +
                (dir / "eval.json").string()),
            0);
  EXPECT_NE(read_text(dir / "eval.json").find("\"p_acc\""), std::string::npos);

  const std::string img = data + "/seq_02/images/00000.png";
  const std::string ann = data + "/seq_02/annotations/00000.json";
  const std::string infer = "infer --checkpoint " + out + "/model.ckpt --image " + img +
                            " --annotation " + ann + " --out ";
  ASSERT_EQ(run(infer + (dir / "i1").string()), 0);
  ASSERT_EQ(run(infer + (dir / "i2").string()), 0);
  const RgbImage overlay = read_png_rgb(dir / "i1" / "00000_overlay.png");
  EXPECT_EQ(overlay.height, 64);
  EXPECT_EQ(overlay.width, 80);
  EXPECT_EQ(read_text(dir / "i1" / "00000_overlay.png"), read_text(dir / "i2" / "00000_overlay.png"));
  const std::string pred = read_text(dir / "i1" / "00000_prediction.json");
  EXPECT_EQ(pred, read_text(dir / "i2" / "00000_prediction.json"));
  EXPECT_NE(pred.find("\"instrument_id\""), std::string::npos);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir("cli");
  const std::string data = (dir / "data").string();
  ASSERT_EQ(run("synth --out " + data + " --frames 2 --height 48 --width 48 --seed 4"), 0);
  std::ofstream(dir / "run.cfg") << "regime = V\nepochs = 3\nbatch = 2\nheight = 48\nwidth = 48\n"
                                    "val_split = none\n";
  ASSERT_EQ(run("train --config " + (dir / "run.cfg").string() + " --epochs 1 --data " + data +
                " --out " + (dir / "run").string()),
            0);
  const std::string echoed = read_text(dir / "run" / "config.txt");
  EXPECT_NE(echoed.find("regime = V"), std::string::npos);
  EXPECT_NE(echoed.find("epochs = 1"), std::string::npos);
}

}  // namespace
}  // namespace gmtl
