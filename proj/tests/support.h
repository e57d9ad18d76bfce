#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "core/binio.h"
#include "core/rng.h"
#include "core/tensor.h"

namespace testutil {

// Scratch directory removed on destruction.
struct TmpDir {
  std::filesystem::path path;
  explicit TmpDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("refbase-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline uint64_t file_hash(const std::string& path) {
  const std::string bytes = refbase::read_file_bytes(path);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
refbase::Tensor<T> random_tensor(refbase::Shape shape, uint64_t seed, double scale = 1.0) {
  refbase::Rng rng(seed);
  refbase::Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i)
    t.mutable_data()[i] = static_cast<T>(rng.normal() * scale);
  return t;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / (std::abs(a) + std::abs(b) + 1e-12);
}

}  // namespace testutil
