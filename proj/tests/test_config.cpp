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

#include "gmtl/config.hpp"
#include "gmtl/error.hpp"
#include "test_support.hpp"

namespace gmtl {
namespace {

TEST(Config, TextRoundTripPreservesEveryKey) {
  RunConfig c;
  c.set("regime", "KD");
  c.set("variant", "GR");
  c.set("edge_mode", "PF");
  c.set("alpha", "0.3");
  c.set("lr", "0.0001");
  c.set("seed", "42");
  c.set("data", "/data/root");
  c.set("fold", "2");
  c.set("train_split", "all");
  const RunConfig back = RunConfig::parse(c.to_text(), "mem");
  EXPECT_EQ(back.to_text(), c.to_text());
  for (const auto& k : c.keys()) EXPECT_EQ(back.get(k), c.get(k)) << k;
  EXPECT_EQ(back.train.model.seed, 42u);
  EXPECT_EQ(back.get("alpha"), "0.3");
}

TEST(Config, CommentsAndWhitespace) {
  const RunConfig c = RunConfig::parse("# header\n  epochs =  7  # trailing\n\nbatch=3\n", "mem");
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.train.batch, 3);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    RunConfig::parse("epochs = 2\nbogus = 1\n", "run.cfg");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::parse("epochs\n", "x"), UsageError);
  EXPECT_THROW(RunConfig::parse("epochs = two\n", "x"), UsageError);
  EXPECT_THROW(RunConfig::parse("sgfseg = maybe\n", "x"), UsageError);
  EXPECT_THROW(RunConfig::parse("train_split = test\n", "x"), UsageError);
}

TEST(Config, ValidationRejectsIncompatibleOptions) {
  RunConfig c;
  c.set("sgfseg", "true");
  c.set("edge_mode", "NONE");
  c.set("regime", "S");
  EXPECT_THROW(c.validate(), UsageError);
  c.set("regime", "V");
  EXPECT_NO_THROW(c.validate());
  c.set("edge_mode", "GISF");
  EXPECT_THROW(c.validate(), UsageError);

  RunConfig d;
  d.set("variant", "GR");
  d.set("edge_mode", "GISF");
  EXPECT_NO_THROW(d.validate());
  d.set("alpha", "1.5");
  EXPECT_THROW(d.validate(), UsageError);
  RunConfig e;
  e.set("height", "16");
  EXPECT_THROW(e.validate(), UsageError);
}

TEST(Config, PrecisionFromEnvironment) {
  ::setenv("GLORE_MTL_PRECISION", "fast", 1);
  EXPECT_EQ(precision_from_env(Precision::kFixed), Precision::kFast);
  ::setenv("GLORE_MTL_PRECISION", "sloppy", 1);
  EXPECT_THROW(precision_from_env(Precision::kFixed), UsageError);
  ::unsetenv("GLORE_MTL_PRECISION");
  EXPECT_EQ(precision_from_env(Precision::kFixed), Precision::kFixed);
}

TEST(Config, LoadMissingFileIsUsageError) {
  EXPECT_THROW(RunConfig::load("/nonexistent/run.cfg"), UsageError);
}

}  // namespace
}  // namespace gmtl
