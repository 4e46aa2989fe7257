#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bks/objectives.hpp"

namespace bks {

// Rejects tensors that are not C x H x W with C in {1, 3}.
void require_image(const ImageTensor& img, const char* what);
// Height and width >= 8 and divisible by 4, every value finite and in [0, 1].
bool is_valid_image(const ImageTensor& img);
ImageTensor clamp01(ImageTensor img);

// Non-negative odd-sized 2-D kernel summing to one.
class ConvKernel {
 public:
  ConvKernel(int height, int width, std::vector<float> weights);

  static ConvKernel delta(int size);
  static ConvKernel box(int size);

  int height() const { return height_; }
  int width() const { return width_; }
  float operator()(int y, int x) const { return weights_[static_cast<std::size_t>(y * width_ + x)]; }
  const std::vector<float>& weights() const { return weights_; }

  friend bool operator==(const ConvKernel&, const ConvKernel&) = default;

 private:
  int height_;
  int width_;
  std::vector<float> weights_;
};

// Per-channel 2-D correlation with edge-replicate padding; output shape equals
// input shape.
ImageTensor convolve_blur(const ImageTensor& x, const ConvKernel& k);

// Peak-1 PSNR in dB, capped at 100 (returned when MSE is zero).
inline constexpr double kPsnrCap = 100.0;
double psnr(const ImageTensor& a, const ImageTensor& b);

struct TrajectoryPoint {
  double y = 0.0;
  double x = 0.0;
};

// Seeded random walk used by generate_motion_kernel. Recipe, drawn from a
// std::mt19937_64(seed) in this order:
//   heading = U[0, 2pi)
//   for i in 1..steps-1: (i > 1: heading += N(0, 0.7)); length = U[0.5, 1.0)
//     p_i = p_{i-1} + length * (size - 1) / (steps - 1) * (sin heading, cos heading)
// The walk is then scaled down to fit within max(size - 3, 1) pixels and
// centered on the grid.
std::vector<TrajectoryPoint> motion_trajectory(std::uint64_t seed, int size, int steps);

// Rasterizes the trajectory (bilinear splats, linear interpolation along each
// segment), smooths with a 3x3 box and normalizes to sum one.
ConvKernel generate_motion_kernel(std::uint64_t seed, int size, int steps);

// Seeded procedural sharp image: smooth colored noise with random rectangles,
// discs and stripes.
ImageTensor procedural_image(std::uint64_t seed, int channels, int height, int width);

struct ImagePair {
  ImageTensor sharp;
  ImageTensor blurry;
  std::string id;
};

// Aligned (sharp, blurry) pairs kept in lexicographic id order.
class PairedDataset {
 public:
  void add(ImagePair pair);

  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const ImagePair& operator[](std::size_t i) const { return pairs_.at(i); }
  const std::vector<ImagePair>& pairs() const { return pairs_; }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

 private:
  std::vector<ImagePair> pairs_;
};

// Kernel index assigned to each sharp image: a seeded shuffle of i mod K.
std::vector<int> kernel_assignment(std::size_t count, std::size_t kernels,
                                   std::uint64_t assignment_seed);
std::string synthesized_pair_id(std::size_t image_index, int kernel_index);
// Parses the kernel index back out of a synthesized pair id; -1 if absent.
int kernel_index_from_id(const std::string& id);

PairedDataset synthesize_dataset(const std::vector<ImageTensor>& sharps,
                                 const std::vector<ConvKernel>& kernels,
                                 std::uint64_t assignment_seed);

}  // namespace bks
