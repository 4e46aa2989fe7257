#include "bks/layers.hpp"

#include <cmath>
#include <random>

namespace bks::nn {

Var run_blocks(const std::vector<ResBlock>& blocks, const ParamVars& p, Var x) {
  for (const ResBlock& b : blocks) x = b(p, x);
  return x;
}

Conv LayoutBuilder::conv(const std::string& name, int cin, int cout, int ksize, int stride,
                         int pad) {
  const int fan = cin * ksize * ksize;
  Conv c;
  c.weight = layout_.add(name + ".weight", Tensor({cout, cin, ksize, ksize}));
  fan_in_.push_back(fan);
  c.bias = layout_.add(name + ".bias", Tensor({cout}));
  fan_in_.push_back(fan);
  c.stride = stride;
  c.pad = pad;
  return c;
}

TransConv LayoutBuilder::trans_conv(const std::string& name, int cin, int cout) {
  const int fan = cin * 9;
  TransConv t;
  t.weight = layout_.add(name + ".weight", Tensor({cin, cout, 3, 3}));
  fan_in_.push_back(fan);
  t.bias = layout_.add(name + ".bias", Tensor({cout}));
  fan_in_.push_back(fan);
  return t;
}

ResBlock LayoutBuilder::res_block(const std::string& name, int channels) {
  ResBlock b;
  b.first = conv(name + ".conv1", channels, channels, 3, 1, 1);
  b.second = conv(name + ".conv2", channels, channels, 3, 1, 1);
  return b;
}

std::vector<ResBlock> LayoutBuilder::res_blocks(const std::string& prefix, int channels,
                                                int count) {
  std::vector<ResBlock> blocks;
  for (int i = 0; i < count; ++i) blocks.push_back(res_block(prefix + "." + std::to_string(i), channels));
  return blocks;
}

ParamStore init_uniform_fan_in(const ParamStore& layout, const std::vector<int>& fan_in,
                               std::uint64_t seed) {
  ParamStore out = layout;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < out.size(); ++i) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in[static_cast<std::size_t>(i)]));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& v : out[i].values()) v = dist(rng);
  }
  out.meta.rng_seed = seed;
  return out;
}

}  // namespace bks::nn
