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

#include "gmtl/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gmtl/error.hpp"

namespace gmtl {
namespace {

constexpr char kMagic[8] = {'G', 'M', 'T', 'L', 'C', 'K', 'P', 'T'};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[md[i] >> 4]);
      out.push_back(kHex[md[i] & 15]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

template <typename T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated checkpoint header");
  return v;
}

}  // namespace

std::string sha256_hex(std::span<const uint8_t> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_hex(const Tensor& t) {
  Sha256 h;
  h.update(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
  return h.hex();
}

std::string state_digest(const std::vector<nn::NamedBuffer>& state) {
  Sha256 h;
  for (const auto& s : state) {
    h.update(s.name.data(), s.name.size() + 1);
    for (int64_t d : s.tensor->shape()) h.update(&d, sizeof(d));
    h.update(s.tensor->data(), static_cast<size_t>(s.tensor->numel()) * sizeof(double));
  }
  return h.hex();
}

void Checkpoint::put(const std::string& name, const Tensor& t) {
  if (!arrays_.count(name)) order_.push_back(name);
  arrays_[name] = t;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw DataError("checkpoint has no array '" + name + "'");
  return it->second;
}

std::vector<std::string> Checkpoint::names() const { return order_; }

std::string Checkpoint::meta(const std::string& key) const {
  auto it = meta_.find(key);
  return it == meta_.end() ? std::string() : it->second;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json manifest;
  manifest["format"] = "gmtl-checkpoint";
  manifest["version"] = kVersion;
  manifest["meta"] = meta_;
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const auto& name : order_) {
    const Tensor& t = arrays_.at(name);
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * sizeof(double);
    arrays.push_back({{"name", name},
                      {"dtype", "f64"},
                      {"shape", t.shape()},
                      {"offset", offset},
                      {"nbytes", nbytes},
                      {"sha256", sha256_hex(t)}});
    offset += nbytes;
  }
  manifest["arrays"] = std::move(arrays);
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_le<uint32_t>(os, kVersion);
    write_le<uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& name : order_) {
      const Tensor& t = arrays_.at(name);
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint not found: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a gmtl checkpoint: " + path.string());
  }
  const auto version = read_le<uint32_t>(is);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto mlen = read_le<uint64_t>(is);
  std::string text(mlen, '\0');
  is.read(text.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw DataError("truncated checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  std::vector<char> blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    const nlohmann::json meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& [k, v] : meta.items()) ck.meta_[k] = v.get<std::string>();
    for (const auto& a : manifest.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto dtype = a.at("dtype").get<std::string>();
      const Shape shape = a.at("shape").get<Shape>();
      const auto offset = a.at("offset").get<uint64_t>();
      const auto nbytes = a.at("nbytes").get<uint64_t>();
      if (offset + nbytes > blob.size()) throw DataError("checkpoint array '" + name + "' truncated");
      const auto* raw = reinterpret_cast<const uint8_t*>(blob.data() + offset);
      if (sha256_hex({raw, nbytes}) != a.at("sha256").get<std::string>()) {
        throw DataError("checksum failure for checkpoint array '" + name + "'");
      }
      const int64_t n = shape_numel(shape);
      std::vector<double> values(static_cast<size_t>(n));
      if (dtype == "f64" && nbytes == static_cast<uint64_t>(n) * 8) {
        std::memcpy(values.data(), raw, nbytes);
      } else if (dtype == "f32" && nbytes == static_cast<uint64_t>(n) * 4) {
        for (int64_t i = 0; i < n; ++i) {
          float f;
          std::memcpy(&f, raw + i * 4, 4);
          values[static_cast<size_t>(i)] = f;
        }
      } else {
        throw DataError("checkpoint array '" + name + "' has dtype " + dtype +
                        " inconsistent with its size");
      }
      ck.put(name, Tensor(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint manifest in " + path.string() + ": " + e.what());
  }
  return ck;
}

void Checkpoint::put_state(const std::vector<nn::NamedBuffer>& state) {
  for (const auto& s : state) put(s.name, *s.tensor);
}

void Checkpoint::restore_state(const std::vector<nn::NamedBuffer>& state) const {
  std::vector<std::string> missing, mismatched;
  for (const auto& s : state) {
    auto it = arrays_.find(s.name);
    if (it == arrays_.end()) {
      missing.push_back(s.name);
    } else if (it->second.shape() != s.tensor->shape()) {
      mismatched.push_back(s.name + " (expected " + shape_str(s.tensor->shape()) + ", found " +
                           shape_str(it->second.shape()) + ")");
    }
  }
  if (!missing.empty() || !mismatched.empty()) {
    std::ostringstream os;
    os << "checkpoint does not match model:";
    for (const auto& m : missing) os << "\n  missing " << m;
    for (const auto& m : mismatched) os << "\n  shape mismatch " << m;
    throw DataError(os.str());
  }
  for (const auto& s : state) *s.tensor = arrays_.at(s.name);
}

}  // namespace gmtl
