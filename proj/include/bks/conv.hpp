#pragma once

#include "bks/tensor.hpp"

namespace bks::kernels {

// Sliding-window layout shared by convolution and transposed convolution.
// `channels x height x width` is the image the window slides over;
// `out_h x out_w` are the window positions.
struct Window {
  int channels = 0;
  int height = 0;
  int width = 0;
  int ksize = 1;
  int stride = 1;
  int pad = 0;
  int out_h = 0;
  int out_w = 0;

  int rows() const { return channels * ksize * ksize; }
  int cols() const { return out_h * out_w; }
};

Window conv_window(const Shape& input, int ksize, int stride, int pad);

// Unfolds `img` into a (C*k*k) x (out_h*out_w) row-major matrix.
void im2col(const float* img, const Window& w, float* cols);
// Accumulates the columns back into `img` (adjoint of im2col).
void col2im(const float* cols, const Window& w, float* img);

// out[m x n] (+)= a[m x k] * b[k x n]; trans flags select a^T / b^T storage.
void gemm(const float* a, const float* b, float* out, int m, int n, int k, bool trans_a,
          bool trans_b, bool accumulate);

// Weight layout: conv [Cout, Cin, k, k]; transposed conv [Cin, Cout, k, k].
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride,
                      int pad);
// Gradients are accumulated into non-null outputs.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, int stride,
                     int pad, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                                int stride, int pad, int out_pad);
void conv_transpose2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                               int stride, int pad, Tensor* grad_x, Tensor* grad_w,
                               Tensor* grad_b);

}  // namespace bks::kernels
