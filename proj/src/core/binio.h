#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "core/error.h"

namespace refbase {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
inline uint32_t crc32(const void* data, size_t len, uint32_t crc = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const uint8_t*>(data);
  crc ^= 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

// Serializes into a memory buffer; writers append a trailing CRC over the
// whole buffer and then write the file atomically (temp + rename).
class ByteWriter {
 public:
  void raw(const void* p, size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void i64(int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  template <typename T>
  void span(const T* p, size_t count) {
    raw(p, count * sizeof(T));
  }

  const std::string& buffer() const { return buf_; }

  // Appends crc32(everything so far) and atomically writes to `path`.
  void write_file(const std::string& path);

 private:
  std::string buf_;
};

// Bounds-checked cursor over an in-memory file image. `open_checked` verifies
// the trailing CRC before any field is parsed, so truncated or corrupt files
// are rejected without yielding partial state.
class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : buf_(std::move(bytes)) {}

  // Reads the file, validates the trailing CRC, returns a reader over the
  // payload (CRC excluded).
  static ByteReader open_checked(const std::string& path);

  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  uint8_t u8() { return get<uint8_t>(); }
  uint32_t u32() { return get<uint32_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  int64_t i64() { return get<int64_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> span(size_t count) {
    std::vector<T> v(count);
    raw(v.data(), count * sizeof(T));
    return v;
  }

  size_t remaining() const { return buf_.size() - pos_; }

 private:
  template <typename T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void need(size_t n) const {
    if (pos_ + n > buf_.size())
      throw IoError("read past end of file (offset " + std::to_string(pos_) + ")");
  }

  std::string buf_;
  size_t pos_ = 0;
};

std::string read_file_bytes(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace refbase
