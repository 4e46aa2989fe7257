#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "bks/networks.hpp"
#include "bks/tensor.hpp"

namespace bkstest {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "bks");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline bks::Tensor uniform_tensor(std::uint64_t seed, bks::Shape shape, float lo = 0.0f,
                                  float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  bks::Tensor t(std::move(shape));
  for (float& v : t.values()) v = d(rng);
  return t;
}

inline bks::Tensor normal_tensor(std::uint64_t seed, bks::Shape shape, float stddev = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, stddev);
  bks::Tensor t(std::move(shape));
  for (float& v : t.values()) v = d(rng);
  return t;
}

// Small network for fast structural tests: 16x16 images give 2x2 kernels.
inline bks::ArchConfig tiny_arch(int channels = 3) {
  bks::ArchConfig a;
  a.base_channels = 4;
  a.kernel_channels = 6;
  a.downsample_factor = 8;
  a.image_channels = channels;
  return a;
}

}  // namespace bkstest
