#include "bks/ops.hpp"

#include <cmath>
#include <stdexcept>

#include "bks/conv.hpp"
#include "bks/objectives.hpp"

namespace bks::ops {
namespace {

Tensor* grad_target(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

Tensor scalar(double v) { return Tensor({1}, std::vector<float>{static_cast<float>(v)}); }

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  Tensor y = kernels::conv2d_forward(x.value(), weight.value(),
                                     bias.defined() ? bias.value() : Tensor(), stride, pad);
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op(std::move(y), std::move(parents), [stride, pad](Node& self) {
    Tensor* gb = self.parents.size() > 2 ? grad_target(self, 2) : nullptr;
    kernels::conv2d_backward(self.parents[0]->value, self.parents[1]->value, self.grad, stride,
                             pad, grad_target(self, 0), grad_target(self, 1), gb);
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int out_pad) {
  Tensor y = kernels::conv_transpose2d_forward(
      x.value(), weight.value(), bias.defined() ? bias.value() : Tensor(), stride, pad, out_pad);
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op(std::move(y), std::move(parents), [stride, pad](Node& self) {
    Tensor* gb = self.parents.size() > 2 ? grad_target(self, 2) : nullptr;
    kernels::conv_transpose2d_backward(self.parents[0]->value, self.parents[1]->value, self.grad,
                                       stride, pad, grad_target(self, 0), grad_target(self, 1),
                                       gb);
  });
}

Var leaky_relu(const Var& x, float slope) {
  Tensor y = x.value();
  for (float& v : y.values()) v = v > 0.0f ? v : v * slope;
  return make_op(std::move(y), {x}, [slope](Node& self) {
    Tensor& gx = *grad_target(self, 0);
    const Tensor& in = self.parents[0]->value;
    for (std::size_t i = 0; i < in.size(); ++i) {
      gx[i] += in[i] > 0.0f ? self.grad[i] : self.grad[i] * slope;
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor y = x.value();
  for (float& v : y.values()) v = 1.0f / (1.0f + std::exp(-v));
  return make_op(std::move(y), {x}, [](Node& self) {
    Tensor& gx = *grad_target(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const float s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0f - s);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  axpy(1.0f, b.value(), y);
  return make_op(std::move(y), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (Tensor* g = grad_target(self, i)) axpy(1.0f, self.grad, *g);
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.height() != tb.height() || ta.width() != tb.width()) {
    throw std::invalid_argument("concat_channels: spatial mismatch " + shape_string(ta.shape()) +
                                " vs " + shape_string(tb.shape()));
  }
  Tensor y({ta.channels() + tb.channels(), ta.height(), ta.width()});
  std::copy(ta.data(), ta.data() + ta.size(), y.data());
  std::copy(tb.data(), tb.data() + tb.size(), y.data() + ta.size());
  const std::size_t split = ta.size();
  return make_op(std::move(y), {a, b}, [split](Node& self) {
    if (Tensor* ga = grad_target(self, 0)) {
      for (std::size_t i = 0; i < split; ++i) (*ga)[i] += self.grad[i];
    }
    if (Tensor* gb = grad_target(self, 1)) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[split + i];
    }
  });
}

Var pixel_shuffle(const Var& x, int factor) {
  const Tensor& in = x.value();
  const int r = factor;
  if (in.channels() % (r * r) != 0) {
    throw std::invalid_argument("pixel_shuffle: channels not divisible by factor^2");
  }
  const int c = in.channels() / (r * r), h = in.height(), w = in.width();
  Tensor y({c, h * r, w * r});
  // out[c, y*r+i, x*r+j] = in[c*r*r + i*r + j, y, x]
  auto map = [=](int ch, int yy, int xx, int i, int j, std::size_t& src, std::size_t& dst) {
    src = ((static_cast<std::size_t>(ch) * r * r + i * r + j) * h + yy) * w + xx;
    dst = (static_cast<std::size_t>(ch) * h * r + yy * r + i) * (w * r) + xx * r + j;
  };
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) {
            std::size_t s, d;
            map(ch, yy, xx, i, j, s, d);
            y[d] = in[s];
          }
  return make_op(std::move(y), {x}, [=](Node& self) {
    Tensor& gx = *grad_target(self, 0);
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
              std::size_t s, d;
              map(ch, yy, xx, i, j, s, d);
              gx[s] += self.grad[d];
            }
  });
}

Var upsample_nearest(const Var& x, int factor) {
  const Tensor& in = x.value();
  const int c = in.channels(), h = in.height(), w = in.width(), r = factor;
  Tensor y({c, h * r, w * r});
  for (int ch = 0; ch < c; ++ch)
    for (int yy = 0; yy < h * r; ++yy)
      for (int xx = 0; xx < w * r; ++xx) y.at(ch, yy, xx) = in.at(ch, yy / r, xx / r);
  return make_op(std::move(y), {x}, [=](Node& self) {
    Tensor& gx = *grad_target(self, 0);
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < h * r; ++yy)
        for (int xx = 0; xx < w * r; ++xx) gx.at(ch, yy / r, xx / r) += self.grad.at(ch, yy, xx);
  });
}

namespace {

struct Tap {
  int i0, i1;
  float w0, w1;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const float f = static_cast<float>(src - i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0f - f, f};
  }
  return taps;
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Tensor& in = x.value();
  if (in.height() == out_h && in.width() == out_w) return x;
  const int c = in.channels();
  const auto ty = bilinear_taps(in.height(), out_h);
  const auto tx = bilinear_taps(in.width(), out_w);
  Tensor y({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& a = ty[static_cast<std::size_t>(oy)];
        const Tap& b = tx[static_cast<std::size_t>(ox)];
        y.at(ch, oy, ox) = a.w0 * (b.w0 * in.at(ch, a.i0, b.i0) + b.w1 * in.at(ch, a.i0, b.i1)) +
                           a.w1 * (b.w0 * in.at(ch, a.i1, b.i0) + b.w1 * in.at(ch, a.i1, b.i1));
      }
  return make_op(std::move(y), {x}, [=](Node& self) {
    Tensor& gx = *grad_target(self, 0);
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap& a = ty[static_cast<std::size_t>(oy)];
          const Tap& b = tx[static_cast<std::size_t>(ox)];
          const float g = self.grad.at(ch, oy, ox);
          gx.at(ch, a.i0, b.i0) += g * a.w0 * b.w0;
          gx.at(ch, a.i0, b.i1) += g * a.w0 * b.w1;
          gx.at(ch, a.i1, b.i0) += g * a.w1 * b.w0;
          gx.at(ch, a.i1, b.i1) += g * a.w1 * b.w1;
        }
  });
}

Var scalar_term(const Var& x, const ScalarFn& fn) {
  const bool need_grad = x.requires_grad();
  Tensor grad;
  if (need_grad) grad = Tensor(x.shape());
  const double v = fn(x.value(), need_grad ? &grad : nullptr);
  Var out = make_op(scalar(v), {x}, [grad = std::move(grad)](Node& self) {
    axpy(self.grad[0], grad, *grad_target(self, 0));
  });
  out.node()->scalar = v;
  return out;
}

Var charbonnier(const Var& a, const Tensor& target, double eps) {
  return scalar_term(a, [&](const Tensor& t, Tensor* g) {
    if (g) *g = charbonnier_grad(t, target, eps);
    return bks::charbonnier(t, target, eps);
  });
}

Var hyper_laplacian(const Var& x, double alpha) {
  return scalar_term(x, [alpha](const Tensor& t, Tensor* g) {
    if (g) *g = hyper_laplacian_grad(t, alpha);
    return bks::hyper_laplacian(t, alpha);
  });
}

Var kernel_l2(const Var& k) {
  return scalar_term(k, [](const Tensor& t, Tensor* g) {
    if (g) *g = kernel_l2_grad(t);
    return bks::kernel_l2(t);
  });
}

Var weighted_sum(const std::vector<std::pair<Var, double>>& terms) {
  double total = 0.0;
  std::vector<Var> parents;
  std::vector<double> weights;
  for (const auto& [v, w] : terms) {
    total += w * v.item();
    parents.push_back(v);
    weights.push_back(w);
  }
  Var out = make_op(scalar(total), std::move(parents), [weights](Node& self) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (Tensor* g = grad_target(self, i)) {
        (*g)[0] += static_cast<float>(weights[i] * self.grad[0]);
      }
    }
  });
  out.node()->scalar = total;
  return out;
}

}  // namespace bks::ops
