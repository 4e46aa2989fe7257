#include "bks/synthesis.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace bks {

namespace {

std::atomic<std::uint64_t> g_kernel_evaluations{0};

// Calls fn(i) for i in [0, n) on up to `threads` workers, each taking a
// contiguous block so results never depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::uint64_t transfer_kernel_evaluations() { return g_kernel_evaluations.load(); }

std::vector<ImageTensor> transfer_blur(const KernelSpaceModel& model, const TransferJob& job,
                                       int threads) {
  require_same_shape(job.source_sharp, job.source_blurry, "transfer source pair");
  for (const ImageTensor& t : job.targets) {
    require_image(t, "transfer target");
    if (t.channels() != model.arch.image_channels) {
      throw std::invalid_argument("transfer target channel count does not match the model");
    }
    model.arch.require_image_size(t.height(), t.width());
  }
  const BlurKernel k = model.extract_kernel(job.source_sharp, job.source_blurry);
  ++g_kernel_evaluations;
  std::vector<ImageTensor> out(job.targets.size());
  const Shape target_kernel_shape = k.shape();
  parallel_for(job.targets.size(), threads, [&](std::size_t i) {
    const ImageTensor& t = job.targets[i];
    if (model.arch.kernel_shape(t.height(), t.width()) != target_kernel_shape) {
      throw std::invalid_argument("transfer target size differs from the source pair size");
    }
    out[i] = model.apply_blur(t, k);
  });
  return out;
}

std::vector<std::size_t> donor_assignment(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("donor assignment needs at least one pair");
  if (n == 1) return {0};
  // Sattolo's algorithm: a uniformly random single cycle, hence no fixed points.
  std::vector<std::size_t> donor(n);
  std::iota(donor.begin(), donor.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 77));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(donor[i], donor[pick(rng)]);
  }
  return donor;
}

PairedDataset swap_dataset(const KernelSpaceModel& model, const PairedDataset& data,
                           std::uint64_t seed, int threads) {
  if (data.empty()) throw std::invalid_argument("swap_dataset needs a non-empty dataset");
  const std::vector<std::size_t> donor = donor_assignment(data.size(), seed);
  std::vector<ImagePair> pairs(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ImagePair& d = data[donor[i]];
    TransferJob job{d.sharp, d.blurry, {data[i].sharp}};
    pairs[i] = {data[i].sharp, transfer_blur(model, job, threads).front(),
                data[i].id + "__from__" + d.id};
  }
  PairedDataset out;
  for (ImagePair& p : pairs) out.add(std::move(p));
  return out;
}

}  // namespace bks
