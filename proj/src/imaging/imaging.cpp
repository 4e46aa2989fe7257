#include "bks/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace bks {

void require_image(const ImageTensor& img, const char* what) {
  if (img.rank() != 3 || (img.channels() != 1 && img.channels() != 3)) {
    throw std::invalid_argument(std::string(what) + ": expected a 1- or 3-channel CxHxW image, got " +
                                shape_string(img.shape()));
  }
}

bool is_valid_image(const ImageTensor& img) {
  if (img.rank() != 3 || (img.channels() != 1 && img.channels() != 3)) return false;
  if (img.height() < 8 || img.width() < 8 || img.height() % 4 || img.width() % 4) return false;
  return std::all_of(img.values().begin(), img.values().end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

ImageTensor clamp01(ImageTensor img) {
  for (float& v : img.values()) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
  return img;
}

ConvKernel::ConvKernel(int height, int width, std::vector<float> weights)
    : height_(height), width_(width), weights_(std::move(weights)) {
  if (height < 1 || width < 1 || height % 2 == 0 || width % 2 == 0) {
    throw std::invalid_argument("ConvKernel dimensions must be odd and positive");
  }
  if (weights_.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("ConvKernel weight count does not match its size");
  }
  double sum = 0.0;
  for (float w : weights_) {
    if (!(w >= 0.0f) || !std::isfinite(w)) throw std::invalid_argument("ConvKernel weights must be finite and >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("ConvKernel weights must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

ConvKernel ConvKernel::delta(int size) {
  std::vector<float> w(static_cast<std::size_t>(size) * size, 0.0f);
  w[static_cast<std::size_t>(size * size / 2)] = 1.0f;
  return ConvKernel(size, size, std::move(w));
}

ConvKernel ConvKernel::box(int size) {
  const std::size_t n = static_cast<std::size_t>(size) * size;
  return ConvKernel(size, size, std::vector<float>(n, 1.0f / static_cast<float>(n)));
}

ImageTensor convolve_blur(const ImageTensor& x, const ConvKernel& k) {
  require_image(x, "convolve_blur");
  if (k.height() > x.height() || k.width() > x.width()) {
    throw std::invalid_argument("convolve_blur: kernel larger than image");
  }
  const int c = x.channels(), h = x.height(), w = x.width();
  const int ry = k.height() / 2, rx = k.width() / 2;
  ImageTensor out(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int i = 0; i < k.height(); ++i) {
          const int sy = std::clamp(yy + i - ry, 0, h - 1);
          for (int j = 0; j < k.width(); ++j) {
            const float kw = k(i, j);
            if (kw == 0.0f) continue;
            s += static_cast<double>(kw) * x.at(ch, sy, std::clamp(xx + j - rx, 0, w - 1));
          }
        }
        out.at(ch, yy, xx) = static_cast<float>(s);
      }
    }
  }
  return out;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<TrajectoryPoint> motion_trajectory(std::uint64_t seed, int size, int steps) {
  if (size < 3 || size % 2 == 0) throw std::invalid_argument("motion kernel size must be odd and >= 3");
  if (steps < 2) throw std::invalid_argument("motion kernel needs at least 2 steps");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> heading_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> turn_dist(0.0, 0.7);
  std::uniform_real_distribution<double> length_dist(0.5, 1.0);
  const double unit = static_cast<double>(size - 1) / (steps - 1);

  std::vector<TrajectoryPoint> pts{{0.0, 0.0}};
  double heading = heading_dist(rng);
  for (int i = 1; i < steps; ++i) {
    if (i > 1) heading += turn_dist(rng);
    const double len = length_dist(rng) * unit;
    pts.push_back({pts.back().y + len * std::sin(heading), pts.back().x + len * std::cos(heading)});
  }

  double min_y = pts[0].y, max_y = pts[0].y, min_x = pts[0].x, max_x = pts[0].x;
  for (const auto& p : pts) {
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
  }
  const double extent = std::max(max_y - min_y, max_x - min_x);
  const double room = std::max(size - 3, 1);
  const double scale = extent > room ? room / extent : 1.0;
  const double center = (size - 1) / 2.0;
  const double cy = (min_y + max_y) / 2.0, cx = (min_x + max_x) / 2.0;
  for (auto& p : pts) {
    p.y = center + (p.y - cy) * scale;
    p.x = center + (p.x - cx) * scale;
  }
  return pts;
}

ConvKernel generate_motion_kernel(std::uint64_t seed, int size, int steps) {
  const auto pts = motion_trajectory(seed, size, steps);
  std::vector<double> grid(static_cast<std::size_t>(size) * size, 0.0);
  auto splat = [&](double y, double x, double mass) {
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    const double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1}, xs[4] = {x0, x0 + 1, x0, x0 + 1};
    for (int i = 0; i < 4; ++i) {
      if (ys[i] < 0 || ys[i] >= size || xs[i] < 0 || xs[i] >= size) continue;
      grid[static_cast<std::size_t>(ys[i] * size + xs[i])] += mass * wts[i];
    }
  };
  bool any = false;
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const double dy = pts[s + 1].y - pts[s].y, dx = pts[s + 1].x - pts[s].x;
    const double len = std::hypot(dy, dx);
    if (len == 0.0) continue;
    const int n = std::max(2, static_cast<int>(std::ceil(len * 4.0)) + 1);
    for (int i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / (n - 1);
      splat(pts[s].y + t * dy, pts[s].x + t * dx, len / n);
    }
    any = true;
  }
  if (!any) splat(pts[0].y, pts[0].x, 1.0);

  std::vector<double> smooth(grid.size(), 0.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double s = 0.0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const int yy = y + i, xx = x + j;
          if (yy >= 0 && yy < size && xx >= 0 && xx < size) s += grid[static_cast<std::size_t>(yy * size + xx)];
        }
      smooth[static_cast<std::size_t>(y * size + x)] = s / 9.0;
    }
  const double total = std::accumulate(smooth.begin(), smooth.end(), 0.0);
  std::vector<float> w(smooth.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(smooth[i] / total);
  // Put the float rounding residue on the largest tap so the sum is 1.
  double fsum = 0.0;
  for (float v : w) fsum += v;
  auto peak = std::max_element(w.begin(), w.end());
  *peak = static_cast<float>(*peak + (1.0 - fsum));
  return ConvKernel(size, size, std::move(w));
}

ImageTensor procedural_image(std::uint64_t seed, int channels, int height, int width) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ImageTensor img({channels, height, width});

  // Smooth colored noise: a coarse random lattice, bilinearly upsampled.
  const int cell = 8;
  const int gh = height / cell + 2, gw = width / cell + 2;
  for (int c = 0; c < channels; ++c) {
    std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
    const double base = 0.2 + 0.6 * u01(rng);
    for (double& v : lattice) v = base + 0.3 * (u01(rng) - 0.5);
    for (int y = 0; y < height; ++y) {
      const double gy = static_cast<double>(y) / cell;
      const int y0 = static_cast<int>(gy);
      const double fy = gy - y0;
      for (int x = 0; x < width; ++x) {
        const double gx = static_cast<double>(x) / cell;
        const int x0 = static_cast<int>(gx);
        const double fx = gx - x0;
        auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy * gw + xx)]; };
        img.at(c, y, x) = static_cast<float>((1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                                             fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1)));
      }
    }
  }

  std::uniform_int_distribution<int> shape_count(4, 8);
  const int shapes = shape_count(rng);
  for (int s = 0; s < shapes; ++s) {
    const int kind = static_cast<int>(u01(rng) * 3.0);
    std::vector<double> color(static_cast<std::size_t>(channels));
    for (double& v : color) v = u01(rng);
    const double cy = u01(rng) * height, cx = u01(rng) * width;
    const double ry = (0.1 + 0.25 * u01(rng)) * height, rx = (0.1 + 0.25 * u01(rng)) * width;
    const double period = 2.0 + 4.0 * u01(rng);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        bool inside = false;
        if (kind == 0) inside = std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        else if (kind == 1) inside = dy * dy + dx * dx <= 1.0;
        else inside = std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0 &&
                      static_cast<int>(std::floor((x + y) / period)) % 2 == 0;
        if (!inside) continue;
        for (int c = 0; c < channels; ++c) img.at(c, y, x) = static_cast<float>(color[static_cast<std::size_t>(c)]);
      }
  }
  return clamp01(std::move(img));
}

void PairedDataset::add(ImagePair pair) {
  require_same_shape(pair.sharp, pair.blurry, ("dataset pair '" + pair.id + "'").c_str());
  auto it = std::lower_bound(pairs_.begin(), pairs_.end(), pair.id,
                             [](const ImagePair& p, const std::string& id) { return p.id < id; });
  if (it != pairs_.end() && it->id == pair.id) {
    throw std::invalid_argument("duplicate pair id '" + pair.id + "'");
  }
  pairs_.insert(it, std::move(pair));
}

std::vector<int> kernel_assignment(std::size_t count, std::size_t kernels,
                                   std::uint64_t assignment_seed) {
  if (kernels == 0) throw std::invalid_argument("kernel_assignment: no kernels");
  std::vector<int> a(count);
  for (std::size_t i = 0; i < count; ++i) a[i] = static_cast<int>(i % kernels);
  std::mt19937_64 rng(assignment_seed);
  std::shuffle(a.begin(), a.end(), rng);
  return a;
}

std::string synthesized_pair_id(std::size_t image_index, int kernel_index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "img%05zu_k%03d", image_index, kernel_index);
  return buf;
}

int kernel_index_from_id(const std::string& id) {
  const auto pos = id.rfind("_k");
  if (pos == std::string::npos || pos + 2 >= id.size()) return -1;
  int v = 0;
  for (std::size_t i = pos + 2; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return -1;
    v = v * 10 + (id[i] - '0');
  }
  return v;
}

PairedDataset synthesize_dataset(const std::vector<ImageTensor>& sharps,
                                 const std::vector<ConvKernel>& kernels,
                                 std::uint64_t assignment_seed) {
  if (sharps.empty() || kernels.empty()) {
    throw std::invalid_argument("synthesize_dataset: need at least one image and one kernel");
  }
  const auto assignment = kernel_assignment(sharps.size(), kernels.size(), assignment_seed);
  PairedDataset data;
  for (std::size_t i = 0; i < sharps.size(); ++i) {
    const int k = assignment[i];
    data.add({sharps[i], convolve_blur(sharps[i], kernels[static_cast<std::size_t>(k)]),
              synthesized_pair_id(i, k)});
  }
  return data;
}

}  // namespace bks
