// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "semedit/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace semedit {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'T', 'N', 'S', 'R', '1'};

template <typename T>
void write_le(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T read_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string read_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("tensor container truncated");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorContainer::put(const std::string& name, Tensor t) {
  std::uint64_t n = 1;
  for (auto d : t.dims) n *= d;
  if (n != t.data.size()) throw ArgumentError("tensor '" + name + "': dims do not match data size");
  entries_[name] = std::move(t);
}

const Tensor& TensorContainer::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IoError("tensor container has no entry '" + name + "'");
  return it->second;
}

std::vector<std::string> TensorContainer::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::vector<std::uint8_t> TensorContainer::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) write_le<std::uint64_t>(out, d);
    for (float f : t.data) write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

TensorContainer TensorContainer::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a tensor container (bad magic)");
  std::vector<std::uint8_t> body(bytes.begin() + sizeof(kMagic), bytes.end());
  Reader r(body);
  TensorContainer c;
  const auto count = r.read_le<std::uint32_t>();
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.read_le<std::uint32_t>();
    std::string name = r.read_string(name_len);
    Tensor t;
    const auto ndims = r.read_le<std::uint32_t>();
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      t.dims.push_back(r.read_le<std::uint64_t>());
      n *= t.dims.back();
    }
    t.data.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(r.read_le<std::uint32_t>());
    c.put(name, std::move(t));
  }
  if (!r.done()) throw IoError("tensor container has trailing bytes");
  return c;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace semedit
