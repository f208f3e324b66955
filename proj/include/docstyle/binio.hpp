#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docstyle/error.hpp"

namespace docstyle {

// Little-endian binary serialization used by every DS* file format.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void magic(std::string_view tag) { bytes(tag.data(), tag.size()); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32s(std::span<const float> v);
  void f64s(std::span<const double> v);
  void string(std::string_view s);

  // Flushes and throws IoError when anything failed along the way.
  void close();

 private:
  void bytes(const void* p, std::size_t n);

  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<char> buffer_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<float> f32s(std::size_t n);
  std::vector<double> f64s(std::size_t n);
  std::string string();

  bool at_end() const { return pos_ == data_.size(); }
  // Throws unless every byte has been consumed.
  void expect_end() const;

 private:
  const unsigned char* take(std::size_t n);

  std::filesystem::path path_;
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

// Reads a whole text file; IoError if missing.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace docstyle
