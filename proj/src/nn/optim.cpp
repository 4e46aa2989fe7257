#include "bks/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bks {

std::string to_string(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "constant"; }

LrSchedule parse_schedule(const std::string& s) {
  if (s == "cosine") return LrSchedule::cosine;
  if (s == "constant") return LrSchedule::constant;
  throw std::invalid_argument("unknown learning-rate schedule '" + s + "'");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("optimizer lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer eps must be > 0");
  if (total_iters < 1) throw std::invalid_argument("total_iters must be >= 1");
}

double OptimizerConfig::learning_rate(std::int64_t step) const {
  if (schedule == LrSchedule::constant) return lr;
  const double t = std::min<double>(static_cast<double>(step), static_cast<double>(total_iters));
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(total_iters)));
}

Adam::Adam(const ParamStore& layout, OptimizerConfig cfg)
    : cfg_(cfg), m_(layout.zeros_like()), v_(layout.zeros_like()) {
  cfg_.validate();
}

void Adam::reset() {
  m_ = m_.zeros_like();
  v_ = v_.zeros_like();
  steps_ = 0;
}

void Adam::step(ParamStore& params, const ParamStore& grads) {
  const double lr = cfg_.learning_rate(steps_);
  ++steps_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const float step_size = static_cast<float>(lr / c1);
  const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const float eps = static_cast<float>(cfg_.eps);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  for (int i = 0; i < params.size(); ++i) {
    float* p = params[i].data();
    const float* g = grads[i].data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const std::size_t n = params[i].size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = fb1 * m[j] + (1.0f - fb1) * g[j];
      v[j] = fb2 * v[j] + (1.0f - fb2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
    }
  }
}

}  // namespace bks
