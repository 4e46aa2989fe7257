#include "bks/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace bks {

void PriorWeights::validate() const {
  if (!(lambda_k >= 0.0)) throw std::invalid_argument("lambda_k must be >= 0");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
  if (!(eps_charbonnier > 0.0)) throw std::invalid_argument("eps_charbonnier must be > 0");
}

double LossValue::weighted_total() const {
  double s = 0.0;
  for (const auto& [name, term] : breakdown) {
    auto it = weights.find(name);
    s += (it == weights.end() ? 1.0 : it->second) * term;
  }
  return s;
}

bool LossValue::all_finite() const { return first_non_finite().empty(); }

std::string LossValue::first_non_finite() const {
  for (const auto& [name, term] : breakdown) {
    if (!std::isfinite(term)) return name;
  }
  if (!std::isfinite(value)) return "value";
  return {};
}

double charbonnier(const Tensor& a, const Tensor& b, double eps) {
  require_same_shape(a, b, "charbonnier");
  if (!(eps > 0.0)) throw std::invalid_argument("charbonnier: eps must be > 0");
  if (a.empty()) throw std::invalid_argument("charbonnier: empty tensors");
  // Accumulates sqrt(d^2 + eps^2) - eps, so equal inputs give exactly eps.
  const double eps2 = eps * eps;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d / (std::sqrt(d * d + eps2) + eps);
  }
  return eps + s / static_cast<double>(a.size());
}

Tensor charbonnier_grad(const Tensor& a, const Tensor& b, double eps) {
  require_same_shape(a, b, "charbonnier_grad");
  const double eps2 = eps * eps;
  const double inv_n = 1.0 / static_cast<double>(a.size());
  Tensor g(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    g[i] = static_cast<float>(d / std::sqrt(d * d + eps2) * inv_n);
  }
  return g;
}

namespace {

void check_hyper_laplacian_input(const Tensor& x, double alpha) {
  if (x.rank() != 3) throw std::invalid_argument("hyper_laplacian expects a CxHxW tensor");
  if (x.height() < 2 || x.width() < 2) {
    throw std::invalid_argument("hyper_laplacian: image smaller than 2x2");
  }
  if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("hyper_laplacian: bad alpha");
}

}  // namespace

double hyper_laplacian(const Tensor& x, double alpha) {
  check_hyper_laplacian_input(x, alpha);
  const int c = x.channels(), h = x.height(), w = x.width();
  const double half = alpha / 2.0;
  double s = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    for (int u = 0; u + 1 < h; ++u) {
      for (int v = 0; v + 1 < w; ++v) {
        const double x0 = x.at(ch, u, v);
        const double gu = x.at(ch, u + 1, v) - x0;
        const double gv = x.at(ch, u, v + 1) - x0;
        s += std::pow(gu * gu + gv * gv + kHyperLaplacianDelta, half);
      }
    }
  }
  return s / (static_cast<double>(c) * (h - 1) * (w - 1));
}

Tensor hyper_laplacian_grad(const Tensor& x, double alpha) {
  check_hyper_laplacian_input(x, alpha);
  const int c = x.channels(), h = x.height(), w = x.width();
  const double inv_m = 1.0 / (static_cast<double>(c) * (h - 1) * (w - 1));
  const double half = alpha / 2.0;
  std::vector<double> g(x.size(), 0.0);
  auto idx = [h, w](int ch, int u, int v) {
    return (static_cast<std::size_t>(ch) * h + u) * w + v;
  };
  for (int ch = 0; ch < c; ++ch) {
    for (int u = 0; u + 1 < h; ++u) {
      for (int v = 0; v + 1 < w; ++v) {
        const double x0 = x.at(ch, u, v);
        const double gu = x.at(ch, u + 1, v) - x0;
        const double gv = x.at(ch, u, v + 1) - x0;
        // d/dg (g^2 + delta)^(a/2) = a * g * (g^2 + delta)^(a/2 - 1)
        const double coeff =
            alpha * std::pow(gu * gu + gv * gv + kHyperLaplacianDelta, half - 1.0) * inv_m;
        g[idx(ch, u + 1, v)] += coeff * gu;
        g[idx(ch, u, v + 1)] += coeff * gv;
        g[idx(ch, u, v)] -= coeff * (gu + gv);
      }
    }
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<float>(g[i]);
  return out;
}

double kernel_l2(const Tensor& k) { return std::sqrt(sum_squares(k)); }

Tensor kernel_l2_grad(const Tensor& k) {
  const double norm = kernel_l2(k);
  Tensor g(k.shape());
  if (norm == 0.0) return g;
  for (std::size_t i = 0; i < k.size(); ++i) g[i] = static_cast<float>(k[i] / norm);
  return g;
}

LossValue deblur_objective(const ImageTensor& y, const ImageTensor& x, const BlurKernel& k,
                           const ImageTensor& fake, const PriorWeights& w) {
  w.validate();
  LossValue lv;
  lv.breakdown["charbonnier"] = charbonnier(y, fake, w.eps_charbonnier);
  lv.breakdown["kernel_l2"] = kernel_l2(k);
  lv.breakdown["hyper_laplacian"] = hyper_laplacian(x, w.alpha);
  lv.weights = {{"charbonnier", 1.0}, {"kernel_l2", w.lambda_k}, {"hyper_laplacian", w.gamma}};
  lv.value = lv.weighted_total();
  return lv;
}

DeblurObjectiveGrad deblur_objective_grad(const ImageTensor& y, const ImageTensor& x,
                                          const BlurKernel& k, const ImageTensor& fake,
                                          const PriorWeights& w) {
  w.validate();
  DeblurObjectiveGrad g;
  g.fake = charbonnier_grad(fake, y, w.eps_charbonnier);
  g.k = kernel_l2_grad(k);
  for (float& v : g.k.values()) v = static_cast<float>(v * w.lambda_k);
  g.x = hyper_laplacian_grad(x, w.alpha);
  for (float& v : g.x.values()) v = static_cast<float>(v * w.gamma);
  return g;
}

}  // namespace bks
