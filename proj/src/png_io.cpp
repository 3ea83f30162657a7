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

#include "gmtl/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <string>
#include <memory>

#include "gmtl/error.hpp"

namespace gmtl {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

thread_local std::string g_png_message;

// libpng is C; errors leave through its jump buffer and are rethrown by the
// caller once control is back in C++ frames.
[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  g_png_message = msg ? msg : "unknown error";
  png_longjmp(png, 1);
}
void png_warn(png_structp, png_const_charp) {}

class Writer {
 public:
  explicit Writer(std::FILE* f) {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    info_ = png_create_info_struct(png_);
    png_init_io(png_, f);
    png_set_compression_level(png_, 6);
  }
  ~Writer() { png_destroy_write_struct(&png_, &info_); }
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class Reader {
 public:
  explicit Reader(std::FILE* f) {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    info_ = png_create_info_struct(png_);
    png_init_io(png_, f);
  }
  ~Reader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  void read_rows(std::vector<uint8_t>& out, std::vector<png_bytep>& rows, int64_t height,
                 size_t rowbytes) {
    out.resize(static_cast<size_t>(height) * rowbytes);
    rows.assign(static_cast<size_t>(height), nullptr);
    for (int64_t y = 0; y < height; ++y) rows[static_cast<size_t>(y)] = out.data() + y * rowbytes;
    png_read_image(png_, rows.data());
    png_read_end(png_, nullptr);
  }

  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

const Palette& label_palette() {
  static const Palette kPalette = {{0, 0, 0},     {230, 25, 75},  {60, 180, 75},
                                   {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
                                   {145, 30, 180}, {70, 240, 240}};
  return kPalette;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  if (static_cast<int64_t>(image.pixels.size()) != image.height * image.width * 3) {
    throw UsageError("RGB buffer size does not match image dimensions");
  }
  FilePtr f = open_file(path, "wb");
  Writer w(f.get());
  if (setjmp(png_jmpbuf(w.png_))) throw DataError("libpng: " + g_png_message + " writing " + path.string());
  png_set_IHDR(w.png_, w.info_, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png_, w.info_);
  for (int64_t y = 0; y < image.height; ++y) {
    png_write_row(w.png_, const_cast<png_bytep>(image.pixels.data() + y * image.width * 3));
  }
  png_write_end(w.png_, nullptr);
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  Reader r(f.get());
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(r.png_))) throw DataError("libpng: " + g_png_message + " reading " + path.string());
  png_read_info(r.png_, r.info_);
  const png_byte color = png_get_color_type(r.png_, r.info_);
  if (png_get_bit_depth(r.png_, r.info_) == 16) png_set_strip_16(r.png_);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png_);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_expand_gray_1_2_4_to_8(r.png_);
    png_set_gray_to_rgb(r.png_);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png_);
  if (png_get_valid(r.png_, r.info_, PNG_INFO_tRNS)) png_set_strip_alpha(r.png_);
  png_read_update_info(r.png_, r.info_);
  RgbImage img;
  img.width = png_get_image_width(r.png_, r.info_);
  img.height = png_get_image_height(r.png_, r.info_);
  const size_t rowbytes = png_get_rowbytes(r.png_, r.info_);
  if (rowbytes != static_cast<size_t>(img.width * 3)) {
    throw DataError("unsupported PNG layout in " + path.string());
  }
  r.read_rows(img.pixels, rows, img.height, rowbytes);
  return img;
}

void write_png_labels(const std::filesystem::path& path, const LabelImage& image,
                      const Palette& palette) {
  if (static_cast<int64_t>(image.labels.size()) != image.height * image.width) {
    throw UsageError("label buffer size does not match image dimensions");
  }
  for (uint8_t l : image.labels) {
    if (l >= palette.size()) throw UsageError("label exceeds palette size");
  }
  FilePtr f = open_file(path, "wb");
  Writer w(f.get());
  if (setjmp(png_jmpbuf(w.png_))) throw DataError("libpng: " + g_png_message + " writing " + path.string());
  png_set_IHDR(w.png_, w.info_, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_PALETTE,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> colors;
  for (const auto& c : palette) colors.push_back({c[0], c[1], c[2]});
  png_set_PLTE(w.png_, w.info_, colors.data(), static_cast<int>(colors.size()));
  png_write_info(w.png_, w.info_);
  for (int64_t y = 0; y < image.height; ++y) {
    png_write_row(w.png_, const_cast<png_bytep>(image.labels.data() + y * image.width));
  }
  png_write_end(w.png_, nullptr);
}

LabelImage read_png_labels(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  Reader r(f.get());
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(r.png_))) throw DataError("libpng: " + g_png_message + " reading " + path.string());
  png_read_info(r.png_, r.info_);
  const png_byte color = png_get_color_type(r.png_, r.info_);
  const png_byte depth = png_get_bit_depth(r.png_, r.info_);
  if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
    throw DataError("mask " + path.string() + " must be a palette or 8-bit grey PNG");
  }
  if (depth < 8) png_set_packing(r.png_);
  if (depth == 16) throw DataError("16-bit masks are not supported: " + path.string());
  png_read_update_info(r.png_, r.info_);
  LabelImage img;
  img.width = png_get_image_width(r.png_, r.info_);
  img.height = png_get_image_height(r.png_, r.info_);
  const size_t rowbytes = png_get_rowbytes(r.png_, r.info_);
  if (rowbytes != static_cast<size_t>(img.width)) {
    throw DataError("unsupported mask layout in " + path.string());
  }
  r.read_rows(img.labels, rows, img.height, rowbytes);
  return img;
}

}  // namespace gmtl
