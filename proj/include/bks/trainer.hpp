#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bks/imaging.hpp"
#include "bks/networks.hpp"
#include "bks/optim.hpp"

namespace bks {

// Raised when an objective evaluates to NaN or infinity; `term` names the
// offending breakdown entry.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::string term, std::int64_t iteration);
  const std::string& term() const { return term_; }
  std::int64_t iteration() const { return iteration_; }

 private:
  std::string term_;
  std::int64_t iteration_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Pair visiting order for one epoch: a shuffle seeded by (seed, epoch), so any
// iteration's pair is recoverable without replaying earlier ones.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch);

struct KernelSpaceModel {
  ArchConfig arch;
  OperatorFamily family;
  Extractor extractor;
  ParamStore family_params;
  ParamStore extractor_params;

  KernelSpaceModel(ArchConfig cfg, std::uint64_t seed);
  KernelSpaceModel(ArchConfig cfg, ParamStore family, ParamStore extractor);

  ImageTensor apply_blur(const ImageTensor& x, const BlurKernel& k) const;
  BlurKernel extract_kernel(const ImageTensor& x, const ImageTensor& y) const;
  // apply_blur(x, extract_kernel(x, y)).
  ImageTensor reconstruct(const ImageTensor& x, const ImageTensor& y) const;
};

// Minimizes sum_i charbonnier(y_i, F(x_i, G(x_i, y_i))) with Adam, batch size
// one and per-epoch seeded shuffling.
class KernelSpaceTrainer {
 public:
  KernelSpaceTrainer(ArchConfig arch, OptimizerConfig opt, std::uint64_t seed,
                     double eps_charbonnier = PriorWeights{}.eps_charbonnier);

  // Runs one optimizer step on the pair scheduled for the current iteration
  // and returns the loss measured before the update.
  LossValue step(const PairedDataset& data);

  std::int64_t iteration() const { return iteration_; }
  const KernelSpaceModel& model() const { return model_; }
  KernelSpaceModel& model() { return model_; }
  Adam& family_optimizer() { return family_opt_; }
  Adam& extractor_optimizer() { return extractor_opt_; }
  const Adam& family_optimizer() const { return family_opt_; }
  const Adam& extractor_optimizer() const { return extractor_opt_; }
  std::uint64_t seed() const { return seed_; }
  // Used when resuming from a checkpoint.
  void set_iteration(std::int64_t it);

 private:
  KernelSpaceModel model_;
  Adam family_opt_;
  Adam extractor_opt_;
  std::uint64_t seed_;
  double eps_;
  std::int64_t iteration_ = 0;
};

struct TrainResult {
  ParamStore family_params;
  ParamStore extractor_params;
  std::vector<LossValue> history;
};

// Called after every iteration with the iteration index and its loss.
using TrainCallback = std::function<void(std::int64_t, const LossValue&)>;

TrainResult train_kernel_space(const PairedDataset& data, const ArchConfig& arch,
                               const OptimizerConfig& opt, std::uint64_t seed,
                               const TrainCallback& callback = {});

}  // namespace bks
