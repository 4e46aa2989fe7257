#include "bks/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

namespace bks {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << ": max rel error " << max_rel_error << " at coordinate "
     << worst_index << " (analytic " << worst_analytic << ", numeric " << worst_numeric << ") over "
     << coords_checked << " coordinates";
  return os.str();
}

namespace {

double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteGradCheckError(std::string("non-finite ") + what);
  return v;
}

std::vector<std::size_t> pick_coords(std::size_t n, const GradCheckOptions& opts) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (opts.max_coords == 0 || opts.max_coords >= n) return idx;
  std::mt19937_64 rng(opts.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(opts.max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const DifferentiableFn& f, const Tensor& point, double rel_tol,
                           const GradCheckOptions& opts) {
  Tensor analytic(point.shape());
  finite_or_throw(f(point, &analytic), "function value");
  if (!analytic.same_shape(point)) throw std::invalid_argument("gradient shape mismatch");
  if (!analytic.all_finite()) throw NonFiniteGradCheckError("non-finite analytic gradient");

  GradCheckReport report;
  Tensor probe = point;
  for (std::size_t i : pick_coords(point.size(), opts)) {
    const float orig = probe.data()[i];
    probe.data()[i] = static_cast<float>(orig + opts.step);
    const double up = finite_or_throw(f(probe, nullptr), "function value");
    const double hi = probe.data()[i];
    probe.data()[i] = static_cast<float>(orig - opts.step);
    const double down = finite_or_throw(f(probe, nullptr), "function value");
    const double lo = probe.data()[i];
    probe.data()[i] = orig;

    // Divide by the realized step, which float rounding makes differ from 2h.
    const double numeric = (up - down) / (hi - lo);
    const double a = analytic.data()[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    ++report.coords_checked;
    if (err > report.max_rel_error || report.coords_checked == 1) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_rel_error <= rel_tol;
  return report;
}

}  // namespace bks
