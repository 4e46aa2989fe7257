#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bks/ops.hpp"
#include "bks/param_store.hpp"

namespace bks::nn {

inline constexpr float kLeakySlope = 0.1f;

struct Conv {
  int weight = -1;
  int bias = -1;
  int stride = 1;
  int pad = 0;

  Var operator()(const ParamVars& p, const Var& x) const {
    return ops::conv2d(x, p[weight], p[bias], stride, pad);
  }
};

// Doubles the spatial size (kernel 3, stride 2, padding 1, output padding 1).
struct TransConv {
  int weight = -1;
  int bias = -1;

  Var operator()(const ParamVars& p, const Var& x) const {
    return ops::conv_transpose2d(x, p[weight], p[bias], 2, 1, 1);
  }
};

// x + conv(lrelu(conv(x)))
struct ResBlock {
  Conv first;
  Conv second;

  Var operator()(const ParamVars& p, const Var& x) const {
    return ops::add(x, second(p, ops::leaky_relu(first(p, x), kLeakySlope)));
  }
};

Var run_blocks(const std::vector<ResBlock>& blocks, const ParamVars& p, Var x);

// Registers parameter tensors in a layout store and remembers each tensor's
// fan-in for seeded initialization.
class LayoutBuilder {
 public:
  Conv conv(const std::string& name, int cin, int cout, int ksize, int stride, int pad);
  TransConv trans_conv(const std::string& name, int cin, int cout);
  ResBlock res_block(const std::string& name, int channels);
  std::vector<ResBlock> res_blocks(const std::string& prefix, int channels, int count);

  const ParamStore& layout() const { return layout_; }
  const std::vector<int>& fan_in() const { return fan_in_; }

 private:
  ParamStore layout_;
  std::vector<int> fan_in_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor, drawn in layout
// order from a generator seeded with `seed`.
ParamStore init_uniform_fan_in(const ParamStore& layout, const std::vector<int>& fan_in,
                               std::uint64_t seed);

}  // namespace bks::nn
