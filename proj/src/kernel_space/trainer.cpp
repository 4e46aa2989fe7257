#include "bks/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace bks {

NonFiniteLossError::NonFiniteLossError(std::string term, std::int64_t iteration)
    : std::runtime_error("non-finite loss in term '" + term + "' at iteration " +
                         std::to_string(iteration)),
      term_(std::move(term)),
      iteration_(iteration) {}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

KernelSpaceModel::KernelSpaceModel(ArchConfig cfg, std::uint64_t seed)
    : arch(cfg),
      family(cfg),
      extractor(cfg),
      family_params(family.init_params(derive_seed(seed, 1))),
      extractor_params(extractor.init_params(derive_seed(seed, 2))) {}

KernelSpaceModel::KernelSpaceModel(ArchConfig cfg, ParamStore f, ParamStore g)
    : arch(cfg), family(cfg), extractor(cfg), family_params(std::move(f)),
      extractor_params(std::move(g)) {
  family_params.require_layout(family.layout());
  extractor_params.require_layout(extractor.layout());
}

ImageTensor KernelSpaceModel::apply_blur(const ImageTensor& x, const BlurKernel& k) const {
  return bks::apply_blur(family, family_params, x, k);
}

BlurKernel KernelSpaceModel::extract_kernel(const ImageTensor& x, const ImageTensor& y) const {
  return bks::extract_kernel(extractor, extractor_params, x, y);
}

ImageTensor KernelSpaceModel::reconstruct(const ImageTensor& x, const ImageTensor& y) const {
  return apply_blur(x, extract_kernel(x, y));
}

KernelSpaceTrainer::KernelSpaceTrainer(ArchConfig arch, OptimizerConfig opt, std::uint64_t seed,
                                       double eps_charbonnier)
    : model_(arch, seed),
      family_opt_(model_.family_params, opt),
      extractor_opt_(model_.extractor_params, opt),
      seed_(seed),
      eps_(eps_charbonnier) {}

void KernelSpaceTrainer::set_iteration(std::int64_t it) {
  iteration_ = it;
  family_opt_.set_steps(it);
  extractor_opt_.set_steps(it);
}

LossValue KernelSpaceTrainer::step(const PairedDataset& data) {
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  const std::size_t n = data.size();
  const auto order = epoch_order(n, seed_, iteration_ / static_cast<std::int64_t>(n));
  const ImagePair& pair = data[order[static_cast<std::size_t>(iteration_ % static_cast<std::int64_t>(n))]];

  ParamVars fv(model_.family_params, true);
  ParamVars gv(model_.extractor_params, true);
  const Var x = Var::constant(pair.sharp);
  const Var y = Var::constant(pair.blurry);
  const Var k = model_.extractor.forward(gv, x, y);
  const Var fake = model_.family.forward(fv, x, k);
  const Var loss = ops::charbonnier(fake, pair.blurry, eps_);

  LossValue lv;
  lv.breakdown["charbonnier"] = loss.item();
  lv.breakdown["kernel_l2"] = kernel_l2(k.value());
  lv.breakdown["hyper_laplacian"] = 0.0;
  // Training uses the bare data term; the kernel norm is logged for monitoring.
  lv.weights = {{"charbonnier", 1.0}, {"kernel_l2", 0.0}, {"hyper_laplacian", 0.0}};
  lv.value = lv.weighted_total();
  if (const std::string bad = lv.first_non_finite(); !bad.empty()) {
    throw NonFiniteLossError(bad, iteration_);
  }

  backward(loss);
  ParamStore fg = model_.family_params.zeros_like();
  ParamStore gg = model_.extractor_params.zeros_like();
  fv.accumulate_grads(fg);
  gv.accumulate_grads(gg);
  if (!fg.all_finite() || !gg.all_finite()) throw NonFiniteLossError("gradient", iteration_);
  family_opt_.step(model_.family_params, fg);
  extractor_opt_.step(model_.extractor_params, gg);
  ++iteration_;
  model_.family_params.meta.iteration = iteration_;
  model_.extractor_params.meta.iteration = iteration_;
  return lv;
}

TrainResult train_kernel_space(const PairedDataset& data, const ArchConfig& arch,
                               const OptimizerConfig& opt, std::uint64_t seed,
                               const TrainCallback& callback) {
  for (const ImagePair& p : data) {
    if (p.sharp.channels() != arch.image_channels) {
      throw std::invalid_argument("pair '" + p.id + "' has the wrong channel count");
    }
    arch.require_image_size(p.sharp.height(), p.sharp.width());
  }
  KernelSpaceTrainer trainer(arch, opt, seed);
  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(opt.total_iters));
  for (std::int64_t it = 0; it < opt.total_iters; ++it) {
    LossValue lv = trainer.step(data);
    if (callback) callback(it, lv);
    result.history.push_back(std::move(lv));
  }
  result.family_params = trainer.model().family_params;
  result.extractor_params = trainer.model().extractor_params;
  return result;
}

}  // namespace bks
