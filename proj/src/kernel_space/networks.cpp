#include "bks/networks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bks {

void ArchConfig::validate() const {
  if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  if (kernel_channels < 1) throw std::invalid_argument("kernel_channels must be >= 1");
  if (image_channels != 1 && image_channels != 3) {
    throw std::invalid_argument("image_channels must be 1 or 3");
  }
  const int d = downsample_factor;
  if (d < 4 || (d & (d - 1)) != 0) {
    throw std::invalid_argument("downsample_factor must be a power of two >= 4");
  }
}

void ArchConfig::require_image_size(int height, int width) const {
  if (height % downsample_factor != 0 || width % downsample_factor != 0) {
    throw std::invalid_argument("image size " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by downsample factor " +
                                std::to_string(downsample_factor));
  }
}

int ArchConfig::levels() const {
  int l = 0;
  for (int d = downsample_factor / 4; d > 1; d /= 2) ++l;
  return l;
}

Shape ArchConfig::kernel_shape(int height, int width) const {
  require_image_size(height, width);
  return {kernel_channels, height / downsample_factor, width / downsample_factor};
}

std::string ArchConfig::arch_id() const {
  return "bks1-c" + std::to_string(image_channels) + "-b" + std::to_string(base_channels) +
         "-k" + std::to_string(kernel_channels) + "-d" + std::to_string(downsample_factor) +
         (residual_output ? "-res" : "") + (full_res_skip ? "-fs" : "");
}

PreprocessBlock PreprocessBlock::build(nn::LayoutBuilder& b, const std::string& name,
                                       int in_channels, int channels) {
  PreprocessBlock pb;
  pb.in = b.conv(name + ".conv_in", in_channels, channels, 3, 1, 1);
  pb.down1 = b.conv(name + ".down1", channels, channels, 3, 2, 1);
  pb.down2 = b.conv(name + ".down2", channels, channels, 3, 2, 1);
  pb.blocks = b.res_blocks(name + ".res", channels, kPreprocessResBlocks);
  return pb;
}

Var PreprocessBlock::operator()(const ParamVars& p, const Var& x) const {
  Var h = down2(p, down1(p, in(p, x)));
  return nn::run_blocks(blocks, p, h);
}

Extractor::Extractor(ArchConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int b = cfg_.base_channels;
  const int kc = cfg_.kernel_channels;
  pre_ = PreprocessBlock::build(builder_, "pre", 2 * cfg_.image_channels, b);
  wide_ = builder_.conv("wide", b, b, 7, 1, 3);
  const int levels = cfg_.levels();
  int ch = b;
  for (int l = 1; l <= levels; ++l) {
    const int out = l == levels ? kc : std::min(b << l, kc);
    downs_.push_back(builder_.conv("down" + std::to_string(l), ch, out, 3, 2, 1));
    ch = out;
  }
  if (levels == 0) downs_.push_back(builder_.conv("proj", b, kc, 3, 1, 1));
  blocks_ = builder_.res_blocks("res", kc, kKernelResBlocks);
}

ParamStore Extractor::init_params(std::uint64_t seed) const {
  ParamStore p = nn::init_uniform_fan_in(builder_.layout(), builder_.fan_in(), seed);
  p.meta.arch_id = cfg_.arch_id();
  return p;
}

Var Extractor::forward(const ParamVars& p, const Var& input) const {
  if (input.value().channels() != 2 * cfg_.image_channels) {
    throw std::invalid_argument("extractor input must have " +
                                std::to_string(2 * cfg_.image_channels) + " channels");
  }
  cfg_.require_image_size(input.value().height(), input.value().width());
  Var h = ops::leaky_relu(wide_(p, pre_(p, input)), nn::kLeakySlope);
  for (const nn::Conv& d : downs_) h = ops::leaky_relu(d(p, h), nn::kLeakySlope);
  return nn::run_blocks(blocks_, p, h);
}

Var Extractor::forward(const ParamVars& p, const Var& sharp, const Var& blurry) const {
  require_same_shape(sharp.value(), blurry.value(), "extractor inputs");
  return forward(p, ops::concat_channels(sharp, blurry));
}

OperatorFamily::OperatorFamily(ArchConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int b = cfg_.base_channels;
  const int kc = cfg_.kernel_channels;
  const int levels = cfg_.levels();
  pre_ = PreprocessBlock::build(builder_, "pre", cfg_.image_channels, b);
  level_channels_.push_back(b);
  for (int l = 1; l <= levels; ++l) {
    const int out = std::min(b << (l - 1), kc);
    encoder_.push_back(builder_.conv("enc" + std::to_string(l), level_channels_.back(), out, 3, 2, 1));
    level_channels_.push_back(out);
  }
  for (int j = 1; j <= levels; ++j) {
    const int top = level_channels_[static_cast<std::size_t>(levels - j + 1)];
    const int in = j == 1 ? top + kc : 2 * top;
    const int out = level_channels_[static_cast<std::size_t>(levels - j)];
    decoder_.push_back(builder_.trans_conv("dec" + std::to_string(j), in, out));
  }
  if (levels == 0) fuse_ = builder_.conv("fuse", b + kc, b, 3, 1, 1);
  post_blocks_ = builder_.res_blocks("post.res", b, kPostprocessResBlocks);
  up1_ = builder_.conv("post.up1", b, 4 * b, 3, 1, 1);
  up2_ = builder_.conv("post.up2", b, 4 * b, 3, 1, 1);
  refine_ = builder_.conv("post.refine", b + (cfg_.full_res_skip ? cfg_.image_channels : 0), b, 3, 1, 1);
  output_conv_name_ = "post.out";
  output_ = builder_.conv(output_conv_name_, b, cfg_.image_channels, 3, 1, 1);
}

ParamStore OperatorFamily::init_params(std::uint64_t seed) const {
  ParamStore p = nn::init_uniform_fan_in(builder_.layout(), builder_.fan_in(), seed);
  p.meta.arch_id = cfg_.arch_id();
  return p;
}

int OperatorFamily::bottleneck_concat_channels() const {
  return level_channels_.back() + cfg_.kernel_channels;
}

OperatorFamily::Encoding OperatorFamily::encode(const ParamVars& p, const Var& x) const {
  if (x.value().channels() != cfg_.image_channels) {
    throw std::invalid_argument("operator family expects " +
                                std::to_string(cfg_.image_channels) + "-channel images");
  }
  cfg_.require_image_size(x.value().height(), x.value().width());
  Encoding enc;
  enc.input = x;
  enc.levels.push_back(pre_(p, x));
  for (const nn::Conv& c : encoder_) {
    enc.levels.push_back(ops::leaky_relu(c(p, enc.levels.back()), nn::kLeakySlope));
  }
  return enc;
}

Var OperatorFamily::decode(const ParamVars& p, const Encoding& enc, const Var& kernel) const {
  const Tensor& bottom = enc.levels.back().value();
  const Shape expected{cfg_.kernel_channels, bottom.height(), bottom.width()};
  if (kernel.shape() != expected) {
    throw std::invalid_argument("kernel shape " + shape_string(kernel.shape()) +
                                " does not match bottleneck " + shape_string(expected));
  }
  const int levels = static_cast<int>(decoder_.size());
  Var h = ops::concat_channels(enc.levels.back(), kernel);
  for (int j = 1; j <= levels; ++j) {
    if (j > 1) h = ops::concat_channels(h, enc.levels[static_cast<std::size_t>(levels - j + 1)]);
    h = ops::leaky_relu(decoder_[static_cast<std::size_t>(j - 1)](p, h), nn::kLeakySlope);
  }
  if (levels == 0) h = ops::leaky_relu(fuse_(p, h), nn::kLeakySlope);
  h = nn::run_blocks(post_blocks_, p, h);
  h = ops::leaky_relu(ops::pixel_shuffle(up1_(p, h), 2), nn::kLeakySlope);
  h = ops::leaky_relu(ops::pixel_shuffle(up2_(p, h), 2), nn::kLeakySlope);
  if (cfg_.full_res_skip) h = ops::concat_channels(h, enc.input);
  Var out = output_(p, refine_(p, h));
  return cfg_.residual_output ? ops::add(enc.input, out) : out;
}

Var OperatorFamily::forward(const ParamVars& p, const Var& x, const Var& kernel) const {
  return decode(p, encode(p, x), kernel);
}

namespace {

Tensor finite_or_clamped(Tensor t) {
  constexpr float kMax = std::numeric_limits<float>::max();
  for (float& v : t.values()) {
    if (std::isnan(v)) v = 0.0f;
    else v = std::clamp(v, -kMax, kMax);
  }
  return t;
}

}  // namespace

ImageTensor apply_blur(const OperatorFamily& f, const ParamStore& params, const ImageTensor& x,
                       const BlurKernel& k) {
  ParamVars p(params, false);
  return finite_or_clamped(f.forward(p, Var::constant(x), Var::constant(k)).value());
}

BlurKernel extract_kernel(const Extractor& g, const ParamStore& params, const ImageTensor& x,
                          const ImageTensor& y) {
  ParamVars p(params, false);
  return finite_or_clamped(g.forward(p, Var::constant(x), Var::constant(y)).value());
}

}  // namespace bks
