#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "bks/tensor.hpp"

namespace bks {

// Value at `x`; when `grad` is non-null it receives d value / d x.
using DifferentiableFn = std::function<double(const Tensor& x, Tensor* grad)>;

struct GradCheckOptions {
  double step = 1e-3;
  // 0 checks every coordinate; otherwise this many seeded random coordinates.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;

  std::string summary() const;
};

class NonFiniteGradCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Central differences against the analytic gradient. The relative error of a
// coordinate is |a - n| / max(|a|, |n|, 1e-6); the check passes when the
// largest one is <= rel_tol. Throws NonFiniteGradCheckError on NaN or inf.
GradCheckReport grad_check(const DifferentiableFn& f, const Tensor& point, double rel_tol,
                           const GradCheckOptions& opts = {});

}  // namespace bks
