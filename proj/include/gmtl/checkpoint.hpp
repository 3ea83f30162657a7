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

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gmtl/nn.hpp"
#include "gmtl/tensor.hpp"

namespace gmtl {

std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(const Tensor& t);
// Digest over names, shapes and raw values of the given state, in order.
std::string state_digest(const std::vector<nn::NamedBuffer>& state);

// Named-array container: magic, manifest (name -> dtype, shape, offset,
// sha256) and a raw little-endian payload. See docs/checkpoint.md.
class Checkpoint {
 public:
  static constexpr uint32_t kVersion = 1;

  void put(const std::string& name, const Tensor& t);
  bool contains(const std::string& name) const { return arrays_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  std::vector<std::string> names() const;

  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
  // Empty string when absent.
  std::string meta(const std::string& key) const;
  const std::map<std::string, std::string>& all_meta() const { return meta_; }

  void save(const std::filesystem::path& path) const;
  // Verifies the manifest and every per-array checksum.
  static Checkpoint load(const std::filesystem::path& path);

  // Captures every state tensor of `state`.
  void put_state(const std::vector<nn::NamedBuffer>& state);

  // Copies matching arrays into `state`. All problems (missing names, shape
  // mismatches) are collected and reported in one DataError.
  void restore_state(const std::vector<nn::NamedBuffer>& state) const;

 private:
  std::map<std::string, Tensor> arrays_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> meta_;
};

}  // namespace gmtl
