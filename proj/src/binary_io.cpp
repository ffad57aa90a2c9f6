#include "binary_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace mia::detail {

void ByteWriter::short_string(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError("string too long for u16 length prefix: " + std::string(s.substr(0, 32)) + "...");
  }
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(s);
}

void ByteWriter::long_string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

std::string_view ByteReader::bytes(std::size_t n) {
  if (n > remaining()) {
    throw FormatError(source_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", " + std::to_string(remaining()) + " left)");
  }
  const std::string_view out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::short_string() {
  const std::uint16_t n = u16();
  return std::string(bytes(n));
}

std::string ByteReader::long_string() {
  const std::uint32_t n = u32();
  return std::string(bytes(n));
}

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() || data_.substr(pos_, magic.size()) != magic) {
    throw FormatError(source_ + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
  pos_ += magic.size();
}

void ByteReader::expect_end() {
  if (remaining() != 0) {
    throw FormatError(source_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) {
    throw IoError("failed reading " + path.string());
  }
  return std::move(buffer).str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + path.string());
    }
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) {
      throw IoError("failed writing " + path.string());
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

}  // namespace mia::detail
