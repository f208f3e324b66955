#include "docstyle/binio.hpp"

#include <iterator>
#include <limits>

namespace docstyle {

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + path.string());
}

void BinaryWriter::bytes(const void* p, std::size_t n) {
  const char* c = static_cast<const char*>(p);
  buffer_.insert(buffer_.end(), c, c + n);
  if (buffer_.size() > (1u << 20)) {
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    buffer_.clear();
  }
}

void BinaryWriter::u32(std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(b, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(b, 8);
}

void BinaryWriter::f32s(std::span<const float> v) {
  for (float x : v) f32(x);
}

void BinaryWriter::f64s(std::span<const double> v) {
  for (double x : v) f64(x);
}

void BinaryWriter::string(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("string too long to serialize");
  }
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void BinaryWriter::close() {
  if (!buffer_.empty()) {
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    buffer_.clear();
  }
  out_.close();
  if (!out_) throw IoError("write failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const unsigned char* BinaryReader::take(std::size_t n) {
  if (data_.size() - pos_ < n) throw IoError("truncated file: " + path_.string());
  const unsigned char* p = data_.data() + pos_;
  pos_ += n;
  return p;
}

void BinaryReader::expect_magic(std::string_view tag) {
  const unsigned char* p = take(tag.size());
  if (std::memcmp(p, tag.data(), tag.size()) != 0) {
    throw IoError("bad magic in " + path_.string() + " (expected " + std::string(tag) + ")");
  }
}

std::uint8_t BinaryReader::u8() { return *take(1); }

std::uint32_t BinaryReader::u32() {
  const unsigned char* p = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  const unsigned char* p = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<float> BinaryReader::f32s(std::size_t n) {
  if ((data_.size() - pos_) / 4 < n) throw IoError("truncated file: " + path_.string());
  std::vector<float> v(n);
  for (auto& x : v) x = f32();
  return v;
}

std::vector<double> BinaryReader::f64s(std::size_t n) {
  if ((data_.size() - pos_) / 8 < n) throw IoError("truncated file: " + path_.string());
  std::vector<double> v(n);
  for (auto& x : v) x = f64();
  return v;
}

std::string BinaryReader::string() {
  const std::uint32_t n = u32();
  const unsigned char* p = take(n);
  return std::string(reinterpret_cast<const char*>(p), n);
}

void BinaryReader::expect_end() const {
  if (pos_ != data_.size()) throw IoError("trailing bytes in " + path_.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace docstyle
