#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bks/grad_check.hpp"
#include "bks/networks.hpp"
#include "bks/optim.hpp"
#include "bks/trainer.hpp"

namespace bks {

// Side length of the single-channel noise fed to the image generator.
inline constexpr int kImageNoiseSize = 64;

// Small U-Net mapping 1 x 64 x 64 noise to a sigmoid image, bilinearly resized
// to the target size.
class ImageGeneratorNet {
 public:
  ImageGeneratorNet(int out_channels, int out_height, int out_width, int width = 16);

  const ParamStore& layout() const { return builder_.layout(); }
  ParamStore init_params(std::uint64_t seed) const;
  Var forward(const ParamVars& p, const Var& noise) const;

 private:
  int out_channels_;
  int out_height_;
  int out_width_;
  nn::LayoutBuilder builder_;
  std::vector<nn::Conv> down_;  // two per level; levels 1 and 2 start strided
  std::vector<nn::Conv> up_;    // two per decoder level
  nn::Conv out_;
};

enum class DipKind { image, kernel };

// A network reparameterizing an unknown tensor as net(noise) with the noise
// frozen after sampling.
struct DipGenerator {
  DipKind kind = DipKind::image;
  ParamStore params;
  Tensor noise_input;
};

struct DeblurConfig {
  std::int64_t outer_iters = 300;
  std::int64_t inner_iters_first = 100;
  std::int64_t inner_iters_rest = 10;
  // Re-sample z_k and re-initialize theta_k at the start of every outer
  // iteration, as the pseudocode literally reads. Off: warm start.
  bool reinit_kernel_each_outer = false;
  // Stop an inner phase early when the relative improvement of its best value
  // over the last early_stop_window steps drops below early_stop_tol.
  bool early_stop = false;
  std::int64_t early_stop_window = 20;
  double early_stop_tol = 1e-5;
  // Step budget for retrieve_kernel.
  std::int64_t retrieve_iters = 500;
  PriorWeights weights;
  // Optimizer for theta_k.
  OptimizerConfig optimizer{.lr = 1e-3, .schedule = LrSchedule::constant};
  // Optimizer for theta_x.
  OptimizerConfig image_optimizer{.lr = 3e-3, .schedule = LrSchedule::constant};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const DeblurConfig&, const DeblurConfig&) = default;
};

enum class DeblurPhase { kernel, image };

struct DeblurTraceEntry {
  std::int64_t outer = 0;
  // Step within the kernel phase; -1 for the image step.
  std::int64_t inner = 0;
  DeblurPhase phase = DeblurPhase::kernel;
  // Objective at the parameters before the step was applied.
  LossValue loss;
  // Running minimum of loss.value over the trace so far.
  double best_seen = 0.0;
};

using DeblurTrace = std::vector<DeblurTraceEntry>;

class DeblurAborted : public NonFiniteLossError {
 public:
  DeblurAborted(const NonFiniteLossError& cause, DeblurTrace trace)
      : NonFiniteLossError(cause), trace_(std::move(trace)) {}
  const DeblurTrace& trace() const { return trace_; }

 private:
  DeblurTrace trace_;
};

struct DeblurResult {
  ImageTensor image;  // clamped to [0, 1]
  BlurKernel kernel;
  DeblurTrace trace;
  // Generator outputs at iteration 0, for the data-term comparison.
  ImageTensor initial_image;
  BlurKernel initial_kernel;
};

struct RetrieveResult {
  BlurKernel kernel;
  double recon_psnr = 0.0;
  std::vector<LossValue> trace;
};

struct ImagePrior {
  std::string name;
  DifferentiableFn fn;
  double weight = 0.0;
};

// Blind deblurring against a frozen operator family. The image priors start
// as the hyper-Laplacian with weight gamma.
class Deblurrer {
 public:
  Deblurrer(const OperatorFamily& family, const ParamStore& family_params, DeblurConfig cfg);

  // Adds a prior term `weight * hook(x)` to the objective, logged under `name`.
  void register_image_prior(std::string name, DifferentiableFn hook, double weight);
  void clear_image_priors();
  const std::vector<ImagePrior>& image_priors() const { return priors_; }

  DeblurResult deblur(const ImageTensor& y) const;
  RetrieveResult retrieve_kernel(const ImageTensor& x, const ImageTensor& y) const;

  // Seeded generators for a blurry image of the given shape.
  DipGenerator make_image_generator(const Shape& image_shape, std::uint64_t seed) const;
  DipGenerator make_kernel_generator(const Shape& image_shape, std::uint64_t seed) const;
  Tensor generate(const DipGenerator& g, const Shape& image_shape) const;

  const DeblurConfig& config() const { return cfg_; }

  // Called after every image step with that step's trace entry and the
  // updated generator output.
  using Progress = std::function<void(const DeblurTraceEntry&, const ImageTensor&)>;
  void set_progress(Progress fn) { progress_ = std::move(fn); }

 private:
  const OperatorFamily& family_;
  const ParamStore& family_params_;
  DeblurConfig cfg_;
  Extractor kernel_net_;
  std::vector<ImagePrior> priors_;
  Progress progress_;
};

// Convenience wrappers with the default prior.
DeblurResult deblur(const ImageTensor& y, const OperatorFamily& family,
                    const ParamStore& family_params, const DeblurConfig& cfg);
RetrieveResult retrieve_kernel(const OperatorFamily& family, const ParamStore& family_params,
                               const ImageTensor& x, const ImageTensor& y,
                               const DeblurConfig& cfg);

}  // namespace bks
