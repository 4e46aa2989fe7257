#pragma once

#include <map>
#include <string>

#include "bks/tensor.hpp"

namespace bks {

using ImageTensor = Tensor;
using BlurKernel = Tensor;

// Smoothing added under the hyper-Laplacian power so its gradient stays bounded
// where the image gradient vanishes.
inline constexpr double kHyperLaplacianDelta = 1e-8;

struct PriorWeights {
  double lambda_k = 6e-4;
  double gamma = 2e-2;
  double alpha = 2.0 / 3.0;
  double eps_charbonnier = 1e-3;

  void validate() const;
  friend bool operator==(const PriorWeights&, const PriorWeights&) = default;
};

// A scalar objective and its unweighted terms. `value` is the weighted sum of
// `breakdown` with the matching entries of `weights`.
struct LossValue {
  double value = 0.0;
  std::map<std::string, double> breakdown;
  std::map<std::string, double> weights;

  double weighted_total() const;
  bool all_finite() const;
  // Name of the first non-finite entry ("value" for the total), or empty.
  std::string first_non_finite() const;
};

// Mean over elements of sqrt((a-b)^2 + eps^2).
double charbonnier(const Tensor& a, const Tensor& b, double eps);
// Gradient with respect to `a`; the gradient for `b` is its negation.
Tensor charbonnier_grad(const Tensor& a, const Tensor& b, double eps);

// Mean over interior positions of (g_u^2 + g_v^2 + delta)^(alpha/2), where g_u
// and g_v are forward differences along height and width.
double hyper_laplacian(const Tensor& x, double alpha);
Tensor hyper_laplacian_grad(const Tensor& x, double alpha);

// Euclidean norm over all elements.
double kernel_l2(const Tensor& k);
// k / ||k||, and zero at the origin.
Tensor kernel_l2_grad(const Tensor& k);

// charbonnier(y, fake) + lambda_k * ||k|| + gamma * hyper_laplacian(x).
// `fake` is the blur operator applied to (x, k), evaluated by the caller.
LossValue deblur_objective(const ImageTensor& y, const ImageTensor& x, const BlurKernel& k,
                           const ImageTensor& fake, const PriorWeights& w);

struct DeblurObjectiveGrad {
  Tensor x;
  Tensor k;
  Tensor fake;
};
DeblurObjectiveGrad deblur_objective_grad(const ImageTensor& y, const ImageTensor& x,
                                          const BlurKernel& k, const ImageTensor& fake,
                                          const PriorWeights& w);

}  // namespace bks
