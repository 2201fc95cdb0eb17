// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/image_io.hpp"

#include <png.h>

#include <csetjmp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "semedit/errors.hpp"

namespace semedit {

namespace {

std::uint8_t to_u8(float v) {
  const float c = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

float from_u8(std::uint8_t b) { return static_cast<float>(b) / 255.0f * 2.0f - 1.0f; }

struct ReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<ReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, st->bytes->data() + st->pos, n);
  st->pos += n;
}

void write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void flush_cb(png_structp) {}

void warning_cb(png_structp, png_const_charp) {}

}  // namespace

Vector<float> quantize_u8(const Vector<float>& image) {
  Vector<float> q(image.size());
  for (Eigen::Index i = 0; i < image.size(); ++i) q(i) = from_u8(to_u8(image(i)));
  return q;
}

std::vector<std::uint8_t> encode_png(const Vector<float>& image, const ImageShape& shape) {
  if (image.size() != shape.size()) throw ArgumentError("encode_png: image size does not match shape");
  if (shape.channels != 3) throw ArgumentError("encode_png: only 3-channel images are supported");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warning_cb);
  if (!png) throw IoError("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  {
    png_set_write_fn(png, &out, write_cb, flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(shape.width), static_cast<png_uint_32>(shape.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(shape.width * 3));
    for (int y = 0; y < shape.height; ++y) {
      for (int i = 0; i < shape.width * 3; ++i) row[static_cast<std::size_t>(i)] = to_u8(image(y * shape.width * 3 + i));
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Vector<float> decode_png(const std::vector<std::uint8_t>& bytes, const ImageShape& shape) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG image");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warning_cb);
  if (!png) throw IoError("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  ReadState st{&bytes, 0};
  Vector<float> image(shape.size());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: malformed image data");
  }
  {
    png_set_read_fn(png, &st, read_cb);
    png_read_info(png, info);
    const auto width = static_cast<int>(png_get_image_width(png, info));
    const auto height = static_cast<int>(png_get_image_height(png, info));
    if (width != shape.width || height != shape.height) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw IoError("PNG is " + std::to_string(width) + "x" + std::to_string(height) + ", expected " +
                    std::to_string(shape.width) + "x" + std::to_string(shape.height));
    }
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    const auto rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<png_size_t>(width * 3)) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw IoError("PNG could not be converted to RGB8");
    }
    std::vector<std::uint8_t> buf(rowbytes * static_cast<std::size_t>(height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + rowbytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    for (std::size_t i = 0; i < buf.size(); ++i) image(static_cast<Eigen::Index>(i)) = from_u8(buf[i]);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << contents;
  if (!f) throw IoError("write failed for " + path.string());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(contents.data()), static_cast<std::streamsize>(contents.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

void write_png(const std::filesystem::path& path, const Vector<float>& image, const ImageShape& shape) {
  write_file(path, encode_png(image, shape));
}

Vector<float> read_png(const std::filesystem::path& path, const ImageShape& shape) {
  return decode_png(read_file(path), shape);
}

}  // namespace semedit
