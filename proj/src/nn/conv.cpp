#include "bks/conv.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace bks::kernels {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void add_bias(Tensor& y, const Tensor& bias) {
  if (bias.empty()) return;
  const int c = y.channels();
  const std::size_t plane = static_cast<std::size_t>(y.height()) * y.width();
  for (int ch = 0; ch < c; ++ch) {
    float* p = y.data() + ch * plane;
    const float b = bias[static_cast<std::size_t>(ch)];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

void accumulate_bias_grad(const Tensor& grad_out, Tensor* grad_b) {
  if (grad_b == nullptr) return;
  const std::size_t plane = static_cast<std::size_t>(grad_out.height()) * grad_out.width();
  for (int ch = 0; ch < grad_out.channels(); ++ch) {
    const float* p = grad_out.data() + ch * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    (*grad_b)[static_cast<std::size_t>(ch)] += static_cast<float>(s);
  }
}

bool is_pointwise(const Window& w) { return w.ksize == 1 && w.stride == 1 && w.pad == 0; }

}  // namespace

Window conv_window(const Shape& input, int ksize, int stride, int pad) {
  if (input.size() != 3) throw std::invalid_argument("convolution expects a CxHxW tensor");
  Window w;
  w.channels = input[0];
  w.height = input[1];
  w.width = input[2];
  w.ksize = ksize;
  w.stride = stride;
  w.pad = pad;
  w.out_h = (w.height + 2 * pad - ksize) / stride + 1;
  w.out_w = (w.width + 2 * pad - ksize) / stride + 1;
  if (w.out_h <= 0 || w.out_w <= 0) {
    throw std::invalid_argument("convolution window larger than input " + shape_string(input));
  }
  return w;
}

void im2col(const float* img, const Window& w, float* cols) {
  const int n = w.cols();
  for (int c = 0; c < w.channels; ++c) {
    const float* plane = img + static_cast<std::size_t>(c) * w.height * w.width;
    for (int ky = 0; ky < w.ksize; ++ky) {
      for (int kx = 0; kx < w.ksize; ++kx) {
        float* row = cols + static_cast<std::size_t>((c * w.ksize + ky) * w.ksize + kx) * n;
        for (int oy = 0; oy < w.out_h; ++oy) {
          const int iy = oy * w.stride - w.pad + ky;
          float* dst = row + oy * w.out_w;
          if (iy < 0 || iy >= w.height) {
            std::fill(dst, dst + w.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * w.width;
          for (int ox = 0; ox < w.out_w; ++ox) {
            const int ix = ox * w.stride - w.pad + kx;
            dst[ox] = (ix >= 0 && ix < w.width) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const Window& w, float* img) {
  const int n = w.cols();
  for (int c = 0; c < w.channels; ++c) {
    float* plane = img + static_cast<std::size_t>(c) * w.height * w.width;
    for (int ky = 0; ky < w.ksize; ++ky) {
      for (int kx = 0; kx < w.ksize; ++kx) {
        const float* row = cols + static_cast<std::size_t>((c * w.ksize + ky) * w.ksize + kx) * n;
        for (int oy = 0; oy < w.out_h; ++oy) {
          const int iy = oy * w.stride - w.pad + ky;
          if (iy < 0 || iy >= w.height) continue;
          float* dst = plane + static_cast<std::size_t>(iy) * w.width;
          const float* src = row + oy * w.out_w;
          for (int ox = 0; ox < w.out_w; ++ox) {
            const int ix = ox * w.stride - w.pad + kx;
            if (ix >= 0 && ix < w.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void gemm(const float* a, const float* b, float* out, int m, int n, int k, bool trans_a,
          bool trans_b, bool accumulate) {
  MutMap c(out, m, n);
  // Stored shapes: a is (m x k) or (k x m) when transposed; likewise b.
  ConstMap am(a, trans_a ? k : m, trans_a ? m : k);
  ConstMap bm(b, trans_b ? n : k, trans_b ? k : n);
  if (accumulate) {
    if (trans_a && trans_b) c.noalias() += am.transpose() * bm.transpose();
    else if (trans_a) c.noalias() += am.transpose() * bm;
    else if (trans_b) c.noalias() += am * bm.transpose();
    else c.noalias() += am * bm;
  } else {
    if (trans_a && trans_b) c.noalias() = am.transpose() * bm.transpose();
    else if (trans_a) c.noalias() = am.transpose() * bm;
    else if (trans_b) c.noalias() = am * bm.transpose();
    else c.noalias() = am * bm;
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                      int pad) {
  const int cout = weight.dim(0);
  const int k = weight.dim(2);
  if (weight.dim(1) != x.channels()) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.channels()) +
                                " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  const Window w = conv_window(x.shape(), k, stride, pad);
  Tensor y({cout, w.out_h, w.out_w});
  if (is_pointwise(w)) {
    gemm(weight.data(), x.data(), y.data(), cout, w.cols(), w.rows(), false, false, false);
  } else {
    std::vector<float> cols(static_cast<std::size_t>(w.rows()) * w.cols());
    im2col(x.data(), w, cols.data());
    gemm(weight.data(), cols.data(), y.data(), cout, w.cols(), w.rows(), false, false, false);
  }
  add_bias(y, bias);
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, int stride,
                     int pad, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
  const int cout = weight.dim(0);
  const int k = weight.dim(2);
  const Window w = conv_window(x.shape(), k, stride, pad);
  accumulate_bias_grad(grad_out, grad_b);
  const bool pointwise = is_pointwise(w);
  if (grad_w != nullptr) {
    if (pointwise) {
      gemm(grad_out.data(), x.data(), grad_w->data(), cout, w.rows(), w.cols(), false, true, true);
    } else {
      std::vector<float> cols(static_cast<std::size_t>(w.rows()) * w.cols());
      im2col(x.data(), w, cols.data());
      gemm(grad_out.data(), cols.data(), grad_w->data(), cout, w.rows(), w.cols(), false, true,
           true);
    }
  }
  if (grad_x != nullptr) {
    if (pointwise) {
      gemm(weight.data(), grad_out.data(), grad_x->data(), w.rows(), w.cols(), cout, true, false,
           true);
    } else {
      std::vector<float> cols(static_cast<std::size_t>(w.rows()) * w.cols());
      gemm(weight.data(), grad_out.data(), cols.data(), w.rows(), w.cols(), cout, true, false,
           false);
      col2im(cols.data(), w, grad_x->data());
    }
  }
}

namespace {

// The transposed convolution of x is the adjoint of a convolution whose input
// is the (larger) output image; this builds that convolution's window.
Window transposed_window(const Tensor& x, int cout, int k, int stride, int pad, int out_pad) {
  const int h = (x.height() - 1) * stride - 2 * pad + k + out_pad;
  const int wd = (x.width() - 1) * stride - 2 * pad + k + out_pad;
  if (h <= 0 || wd <= 0) throw std::invalid_argument("conv_transpose2d: empty output");
  Window w;
  w.channels = cout;
  w.height = h;
  w.width = wd;
  w.ksize = k;
  w.stride = stride;
  w.pad = pad;
  w.out_h = x.height();
  w.out_w = x.width();
  return w;
}

}  // namespace

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                                int stride, int pad, int out_pad) {
  const int cin = weight.dim(0);
  const int cout = weight.dim(1);
  const int k = weight.dim(2);
  if (cin != x.channels()) {
    throw std::invalid_argument("conv_transpose2d: input has " + std::to_string(x.channels()) +
                                " channels, weight expects " + std::to_string(cin));
  }
  const Window w = transposed_window(x, cout, k, stride, pad, out_pad);
  std::vector<float> cols(static_cast<std::size_t>(w.rows()) * w.cols());
  gemm(weight.data(), x.data(), cols.data(), w.rows(), w.cols(), cin, true, false, false);
  Tensor y({cout, w.height, w.width});
  col2im(cols.data(), w, y.data());
  add_bias(y, bias);
  return y;
}

void conv_transpose2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                               int stride, int pad, Tensor* grad_x, Tensor* grad_w,
                               Tensor* grad_b) {
  const int cin = weight.dim(0);
  const int cout = weight.dim(1);
  const int k = weight.dim(2);
  const int out_pad = grad_out.height() - ((x.height() - 1) * stride - 2 * pad + k);
  const Window w = transposed_window(x, cout, k, stride, pad, out_pad);
  accumulate_bias_grad(grad_out, grad_b);
  std::vector<float> cols(static_cast<std::size_t>(w.rows()) * w.cols());
  im2col(grad_out.data(), w, cols.data());
  if (grad_x != nullptr) {
    gemm(weight.data(), cols.data(), grad_x->data(), cin, w.cols(), w.rows(), false, false, true);
  }
  if (grad_w != nullptr) {
    gemm(x.data(), cols.data(), grad_w->data(), cin, w.rows(), w.cols(), false, true, true);
  }
}

}  // namespace bks::kernels
