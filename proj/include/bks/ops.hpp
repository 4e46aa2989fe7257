#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "bks/autograd.hpp"

namespace bks::ops {

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int out_pad);
Var leaky_relu(const Var& x, float slope);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var concat_channels(const Var& a, const Var& b);
// Rearranges C*r*r x H x W into C x H*r x W*r.
Var pixel_shuffle(const Var& x, int factor);
Var upsample_nearest(const Var& x, int factor);
// Bilinear resampling with half-pixel centers; identity when sizes match.
Var resize_bilinear(const Var& x, int out_h, int out_w);

// Scalar terms. Targets passed as Tensor are treated as constants.
Var charbonnier(const Var& a, const Tensor& target, double eps);
Var hyper_laplacian(const Var& x, double alpha);
Var kernel_l2(const Var& k);

// Generic scalar term from a value-and-gradient callback; grad is sized like x.
using ScalarFn = std::function<double(const Tensor& x, Tensor* grad)>;
Var scalar_term(const Var& x, const ScalarFn& fn);

// sum_i w_i * term_i over scalar Vars.
Var weighted_sum(const std::vector<std::pair<Var, double>>& terms);

}  // namespace bks::ops
