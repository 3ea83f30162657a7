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

#include "gmtl/log.hpp"

#include <atomic>

namespace gmtl {
namespace {

std::atomic<LogLevel> g_level{LogLevel::kWarn};

}  // namespace

LogLevel log_level() { return g_level.load(); }
void set_log_level(LogLevel level) { g_level.store(level); }

void log_info(std::string_view msg) {
  if (g_level.load() >= LogLevel::kInfo) std::clog << "[info] " << msg << '\n';
}

void log_warn(std::string_view msg) {
  if (g_level.load() >= LogLevel::kWarn) std::clog << "[warn] " << msg << '\n';
}

}  // namespace gmtl
