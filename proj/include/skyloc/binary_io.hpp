#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skyloc {

/// Raised for unreadable, truncated or malformed files. `file()` names the
/// offending file so callers can report which part of a dataset is broken.
class CorruptFileError : public std::runtime_error {
 public:
  CorruptFileError(std::string file, const std::string &what)
      : std::runtime_error(file + ": " + what), file_(std::move(file)) {}
  const std::string &file() const { return file_; }

 private:
  std::string file_;
};

/// Little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void f32s(std::span<const float> values) {
    for (float v : values) f32(v);
  }
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }

  const std::vector<std::uint8_t> &bytes() const { return bytes_; }

 private:
  template <typename U>
  void put(U v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    const auto *p = reinterpret_cast<const std::uint8_t *>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  template <typename U>
  static U byteswap(U v) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xff);
    return out;
  }
  std::vector<std::uint8_t> bytes_;
};

/// Little-endian byte source; every read is bounds-checked.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string name) : data_(data), name_(std::move(name)) {}

  void expect_magic(std::string_view m) {
    need(m.size());
    if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0)
      throw CorruptFileError(name_, "bad magic, expected '" + std::string(m) + "'");
    pos_ += m.size();
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  void f32s(std::span<float> out) {
    need(out.size() * 4);
    for (float &v : out) v = f32();
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string &name() const { return name_; }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CorruptFileError(name_, "truncated");
  }

 private:
  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::span<const std::uint8_t> data);
std::uint32_t crc32(std::span<const std::uint8_t> data);

}  // namespace skyloc
