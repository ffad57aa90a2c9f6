#pragma once

// Little-endian encoding helpers shared by the record, cache and checkpoint
// formats. Byte order is explicit so files are identical across hosts.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "mia/error.hpp"

namespace mia::detail {

class ByteWriter {
 public:
  void bytes(std::string_view data) { buffer_.append(data); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  /// u16 length prefix + raw UTF-8 bytes.
  void short_string(std::string_view s);
  /// u32 length prefix + raw bytes.
  void long_string(std::string_view s);

  const std::string& buffer() const { return buffer_; }
  std::string release() { return std::move(buffer_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }
  std::string buffer_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  std::string_view bytes(std::size_t n);
  std::uint16_t u16() { return get_le<std::uint16_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string short_string();
  std::string long_string();

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }
  void expect_magic(std::string_view magic);
  void expect_end();

 private:
  template <typename T>
  T get_le() {
    const std::string_view raw = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(raw[i])) << (8 * i));
    }
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string source_;
};

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a torn file.
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace mia::detail
