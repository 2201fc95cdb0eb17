// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semedit/autodiff.hpp"

namespace semedit {

/// Interleaved HWC image geometry.
struct ImageShape {
  int height = 32;
  int width = 32;
  int channels = 3;

  int size() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

/// Encodes one image (HWC, values in [-1, 1]) as 8-bit PNG bytes.
std::vector<std::uint8_t> encode_png(const Vector<float>& image, const ImageShape& shape);

/// Decodes PNG bytes into [-1, 1] HWC floats. Gray and alpha inputs are
/// converted to RGB; the decoded size must equal `shape`.
Vector<float> decode_png(const std::vector<std::uint8_t>& bytes, const ImageShape& shape);

void write_png(const std::filesystem::path& path, const Vector<float>& image, const ImageShape& shape);
Vector<float> read_png(const std::filesystem::path& path, const ImageShape& shape);

/// Quantizes to the 8-bit grid PNG stores, so round trips are exact.
Vector<float> quantize_u8(const Vector<float>& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& contents);
std::string read_text(const std::filesystem::path& path);

}  // namespace semedit
