#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "bks/imaging.hpp"
#include "bks/trainer.hpp"

namespace bks {

struct TransferJob {
  ImageTensor source_sharp;
  ImageTensor source_blurry;
  std::vector<ImageTensor> targets;
};

// Number of extract_kernel evaluations made by transfer_blur in this process.
std::uint64_t transfer_kernel_evaluations();

// k = G(x, y) once, then F(target_j, k) for every target. Targets are split
// across `threads` workers; the output order follows the input order.
std::vector<ImageTensor> transfer_blur(const KernelSpaceModel& model, const TransferJob& job,
                                       int threads = 1);

// Donor index for every pair: a seeded derangement when n > 1, {0} when n = 1.
std::vector<std::size_t> donor_assignment(std::size_t n, std::uint64_t seed);

// Each pair's sharp image re-blurred with the kernel of its donor pair. Ids
// become "<id>__from__<donor id>".
PairedDataset swap_dataset(const KernelSpaceModel& model, const PairedDataset& data,
                           std::uint64_t seed, int threads = 1);

}  // namespace bks
