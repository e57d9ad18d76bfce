#include "core/binio.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace refbase {

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on " + path);
  return bytes;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed on " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

void ByteWriter::write_file(const std::string& path) {
  const uint32_t crc = crc32(buf_.data(), buf_.size());
  std::string out = buf_;
  out.append(reinterpret_cast<const char*>(&crc), 4);
  write_file_atomic(path, out);
}

ByteReader ByteReader::open_checked(const std::string& path) {
  std::string bytes = read_file_bytes(path);
  if (bytes.size() < 4) throw IoError(path + ": file too short for CRC check");
  uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  const uint32_t actual = crc32(bytes.data(), bytes.size() - 4);
  if (stored != actual)
    throw IoError(path + ": CRC mismatch (file truncated or corrupt)");
  bytes.resize(bytes.size() - 4);
  return ByteReader(std::move(bytes));
}

}  // namespace refbase
