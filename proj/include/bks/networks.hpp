#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bks/layers.hpp"
#include "bks/objectives.hpp"

namespace bks {

// Residual block counts fixed by the network structure.
inline constexpr int kPreprocessResBlocks = 10;
inline constexpr int kPostprocessResBlocks = 20;
inline constexpr int kKernelResBlocks = 4;

struct ArchConfig {
  int base_channels = 32;
  int kernel_channels = 64;
  int downsample_factor = 16;
  int image_channels = 3;
  // F adds its decoded output to the input image instead of emitting it raw.
  bool residual_output = true;
  // The input image is concatenated to the full-resolution features before
  // the last two convolutions of F.
  bool full_res_skip = true;

  void validate() const;
  // Throws unless the image size is divisible by downsample_factor.
  void require_image_size(int height, int width) const;
  // Number of stride-2 stages after the 4x preprocess block.
  int levels() const;
  Shape kernel_shape(int height, int width) const;
  // Stable identifier of the tensor layout this config produces.
  std::string arch_id() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// conv(stride 1) -> conv(stride 2) -> conv(stride 2) -> residual blocks.
struct PreprocessBlock {
  nn::Conv in;
  nn::Conv down1;
  nn::Conv down2;
  std::vector<nn::ResBlock> blocks;

  static PreprocessBlock build(nn::LayoutBuilder& b, const std::string& name, int in_channels,
                               int channels);
  Var operator()(const ParamVars& p, const Var& x) const;
};

// Kernel extractor G: (x, y) -> latent kernel of shape kc x H/d x W/d.
class Extractor {
 public:
  explicit Extractor(ArchConfig cfg);

  const ArchConfig& config() const { return cfg_; }
  const ParamStore& layout() const { return builder_.layout(); }
  ParamStore init_params(std::uint64_t seed) const;

  // `input` is the channel concatenation of the sharp and blurry images.
  Var forward(const ParamVars& p, const Var& input) const;
  Var forward(const ParamVars& p, const Var& sharp, const Var& blurry) const;

 private:
  ArchConfig cfg_;
  nn::LayoutBuilder builder_;
  PreprocessBlock pre_;
  nn::Conv wide_;
  // Stride-2 stages, or a single stride-1 projection to kernel_channels when
  // downsample_factor is 4.
  std::vector<nn::Conv> downs_;
  std::vector<nn::ResBlock> blocks_;
};

// Blur operator family F: (x, k) -> blurry image, an encoder-decoder with the
// kernel joined to the bottleneck by channel concatenation.
class OperatorFamily {
 public:
  struct Encoding {
    // levels[0] is the preprocess output; levels[L] the bottleneck features.
    std::vector<Var> levels;
    // The image that was encoded, reused by the residual and skip paths.
    Var input;
  };

  explicit OperatorFamily(ArchConfig cfg);

  const ArchConfig& config() const { return cfg_; }
  const ParamStore& layout() const { return builder_.layout(); }
  ParamStore init_params(std::uint64_t seed) const;

  Encoding encode(const ParamVars& p, const Var& x) const;
  Var decode(const ParamVars& p, const Encoding& enc, const Var& kernel) const;
  Var forward(const ParamVars& p, const Var& x, const Var& kernel) const;

  // Channel count of the bottleneck after the kernel is concatenated.
  int bottleneck_concat_channels() const;
  const std::string& output_conv_name() const { return output_conv_name_; }

 private:
  ArchConfig cfg_;
  nn::LayoutBuilder builder_;
  PreprocessBlock pre_;
  std::vector<nn::Conv> encoder_;
  std::vector<nn::TransConv> decoder_;
  // Only with downsample_factor 4: merges the kernel into base_channels.
  nn::Conv fuse_;
  std::vector<nn::ResBlock> post_blocks_;
  nn::Conv up1_;
  nn::Conv up2_;
  nn::Conv refine_;
  nn::Conv output_;
  std::vector<int> level_channels_;
  std::string output_conv_name_;
};

// Single forward evaluations without gradient tracking. Non-finite outputs are
// replaced by finite values; the output is not clamped to [0, 1].
ImageTensor apply_blur(const OperatorFamily& f, const ParamStore& params, const ImageTensor& x,
                       const BlurKernel& k);
BlurKernel extract_kernel(const Extractor& g, const ParamStore& params, const ImageTensor& x,
                          const ImageTensor& y);

}  // namespace bks
