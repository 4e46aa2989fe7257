#include "bks/deblur.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace bks {

ImageGeneratorNet::ImageGeneratorNet(int out_channels, int out_height, int out_width, int width)
    : out_channels_(out_channels), out_height_(out_height), out_width_(out_width) {
  const int w = width;
  down_ = {builder_.conv("enc0.a", 1, w, 3, 1, 1),         builder_.conv("enc0.b", w, w, 3, 1, 1),
           builder_.conv("enc1.a", w, 2 * w, 3, 2, 1),     builder_.conv("enc1.b", 2 * w, 2 * w, 3, 1, 1),
           builder_.conv("enc2.a", 2 * w, 4 * w, 3, 2, 1), builder_.conv("enc2.b", 4 * w, 4 * w, 3, 1, 1)};
  up_ = {builder_.conv("dec1.a", 6 * w, 2 * w, 3, 1, 1), builder_.conv("dec1.b", 2 * w, 2 * w, 3, 1, 1),
         builder_.conv("dec0.a", 3 * w, w, 3, 1, 1),     builder_.conv("dec0.b", w, w, 3, 1, 1)};
  out_ = builder_.conv("out", w, out_channels_, 3, 1, 1);
}

ParamStore ImageGeneratorNet::init_params(std::uint64_t seed) const {
  ParamStore p = nn::init_uniform_fan_in(builder_.layout(), builder_.fan_in(), seed);
  p.meta.arch_id = "dip-image-c" + std::to_string(out_channels_);
  return p;
}

Var ImageGeneratorNet::forward(const ParamVars& p, const Var& noise) const {
  const auto act = [](const Var& v) { return ops::leaky_relu(v, nn::kLeakySlope); };
  std::vector<Var> skips;
  Var h = noise;
  for (std::size_t l = 0; l < 3; ++l) {
    h = act(down_[2 * l + 1](p, act(down_[2 * l](p, h))));
    skips.push_back(h);
  }
  for (std::size_t j = 0; j < 2; ++j) {
    h = ops::concat_channels(ops::upsample_nearest(h, 2), skips[1 - j]);
    h = act(up_[2 * j + 1](p, act(up_[2 * j](p, h))));
  }
  return ops::resize_bilinear(ops::sigmoid(out_(p, h)), out_height_, out_width_);
}

void DeblurConfig::validate() const {
  if (outer_iters < 1 || inner_iters_first < 1 || inner_iters_rest < 1 || retrieve_iters < 1) {
    throw std::invalid_argument("deblur iteration counts must be >= 1");
  }
  if (early_stop_window < 1) throw std::invalid_argument("early_stop_window must be >= 1");
  weights.validate();
  optimizer.validate();
  image_optimizer.validate();
}

namespace {

Tensor standard_normal(const Shape& shape, std::uint64_t seed) {
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

// Seed streams for the generators; the kernel stream advances per outer
// iteration when re-initializing.
constexpr std::uint64_t kImageNoiseStream = 10;
constexpr std::uint64_t kImageParamStream = 11;
constexpr std::uint64_t kKernelStream = 20;

double relative_improvement(double before, double now) {
  return (before - now) / std::max(std::abs(before), 1e-12);
}

}  // namespace

Deblurrer::Deblurrer(const OperatorFamily& family, const ParamStore& family_params, DeblurConfig cfg)
    : family_(family), family_params_(family_params), cfg_(std::move(cfg)),
      kernel_net_(family.config()) {
  cfg_.validate();
  family_params_.require_layout(family_.layout());
  const double alpha = cfg_.weights.alpha;
  register_image_prior(
      "hyper_laplacian",
      [alpha](const Tensor& x, Tensor* grad) {
        if (grad) *grad = hyper_laplacian_grad(x, alpha);
        return hyper_laplacian(x, alpha);
      },
      cfg_.weights.gamma);
}

void Deblurrer::register_image_prior(std::string name, DifferentiableFn hook, double weight) {
  if (!hook) throw std::invalid_argument("image prior hook is empty");
  if (name == "charbonnier" || name == "kernel_l2") {
    throw std::invalid_argument("prior name '" + name + "' is reserved");
  }
  for (const ImagePrior& p : priors_) {
    if (p.name == name) throw std::invalid_argument("prior '" + name + "' already registered");
  }
  priors_.push_back({std::move(name), std::move(hook), weight});
}

void Deblurrer::clear_image_priors() { priors_.clear(); }

DipGenerator Deblurrer::make_image_generator(const Shape& image_shape, std::uint64_t seed) const {
  ImageGeneratorNet net(image_shape[0], image_shape[1], image_shape[2]);
  DipGenerator g;
  g.kind = DipKind::image;
  g.params = net.init_params(derive_seed(seed, kImageParamStream));
  g.noise_input = standard_normal({1, kImageNoiseSize, kImageNoiseSize},
                                  derive_seed(seed, kImageNoiseStream));
  return g;
}

DipGenerator Deblurrer::make_kernel_generator(const Shape& image_shape, std::uint64_t seed) const {
  DipGenerator g;
  g.kind = DipKind::kernel;
  g.params = kernel_net_.init_params(derive_seed(seed, 1));
  g.noise_input = standard_normal({2 * image_shape[0], image_shape[1], image_shape[2]},
                                  derive_seed(seed, 2));
  return g;
}

Tensor Deblurrer::generate(const DipGenerator& g, const Shape& image_shape) const {
  ParamVars p(g.params, false);
  if (g.kind == DipKind::kernel) return kernel_net_.forward(p, Var::constant(g.noise_input)).value();
  ImageGeneratorNet net(image_shape[0], image_shape[1], image_shape[2]);
  return net.forward(p, Var::constant(g.noise_input)).value();
}

DeblurResult Deblurrer::deblur(const ImageTensor& y) const {
  require_image(y, "deblur input");
  family_.config().require_image_size(y.height(), y.width());
  if (y.channels() != family_.config().image_channels) {
    throw std::invalid_argument("deblur input channel count does not match the model");
  }
  const Shape shape = y.shape();
  const PriorWeights& w = cfg_.weights;
  const ImageGeneratorNet image_net(shape[0], shape[1], shape[2]);
  const ParamVars fvars(family_params_, false);

  DipGenerator gx = make_image_generator(shape, cfg_.seed);
  DipGenerator gk = make_kernel_generator(shape, derive_seed(cfg_.seed, kKernelStream));
  Adam x_opt(gx.params, cfg_.image_optimizer);
  Adam k_opt(gk.params, cfg_.optimizer);
  const Var zx = Var::constant(gx.noise_input);

  DeblurResult result;
  result.initial_image = generate(gx, shape);
  result.initial_kernel = generate(gk, shape);
  DeblurTrace& trace = result.trace;
  double best_seen = std::numeric_limits<double>::infinity();

  const auto record = [&](std::int64_t outer, std::int64_t inner, DeblurPhase phase, LossValue lv) {
    best_seen = std::min(best_seen, lv.value);
    trace.push_back({outer, inner, phase, std::move(lv), best_seen});
    const DeblurTraceEntry& e = trace.back();
    if (const std::string bad = e.loss.first_non_finite(); !bad.empty()) {
      const std::int64_t step = static_cast<std::int64_t>(trace.size()) - 1;
      throw DeblurAborted(NonFiniteLossError(bad, step), trace);
    }
  };

  const auto base_loss = [&](double charb, double kl2) {
    LossValue lv;
    lv.breakdown = {{"charbonnier", charb}, {"kernel_l2", kl2}};
    lv.weights = {{"charbonnier", 1.0}, {"kernel_l2", w.lambda_k}};
    return lv;
  };

  Tensor x_value = result.initial_image;
  for (std::int64_t outer = 0; outer < cfg_.outer_iters; ++outer) {
    if (outer > 0 && cfg_.reinit_kernel_each_outer) {
      gk = make_kernel_generator(shape, derive_seed(cfg_.seed, kKernelStream + 1000 + static_cast<std::uint64_t>(outer)));
      k_opt.reset();
    }

    // (B) theta_k with theta_x frozen; F's encoding of x is fixed for the phase.
    std::map<std::string, double> prior_values;
    for (const ImagePrior& p : priors_) prior_values[p.name] = p.fn(x_value, nullptr);
    const OperatorFamily::Encoding enc = family_.encode(fvars, Var::constant(x_value));
    const Var zk = Var::constant(gk.noise_input);
    const std::int64_t inner_iters = outer == 0 ? cfg_.inner_iters_first : cfg_.inner_iters_rest;
    ParamStore best_k = gk.params;
    double best_k_value = std::numeric_limits<double>::infinity();
    std::vector<double> phase_best;
    const auto kernel_loss = [&](const Var& charb, const Var& kl2) {
      LossValue lv = base_loss(charb.item(), kl2.item());
      for (const ImagePrior& p : priors_) {
        lv.breakdown[p.name] = prior_values[p.name];
        lv.weights[p.name] = p.weight;
      }
      lv.value = lv.weighted_total();
      return lv;
    };
    const auto consider = [&](double value) {
      if (value < best_k_value) {
        best_k_value = value;
        best_k = gk.params;
      }
    };
    for (std::int64_t inner = 0; inner < inner_iters; ++inner) {
      ParamVars kv(gk.params, true);
      const Var k = kernel_net_.forward(kv, zk);
      const Var charb = ops::charbonnier(family_.decode(fvars, enc, k), y, w.eps_charbonnier);
      const Var kl2 = ops::kernel_l2(k);
      const Var total = ops::weighted_sum({{charb, 1.0}, {kl2, w.lambda_k}});
      LossValue lv = kernel_loss(charb, kl2);
      const double value = lv.value;
      record(outer, inner, DeblurPhase::kernel, std::move(lv));
      consider(value);
      phase_best.push_back(best_k_value);
      const auto n = static_cast<std::int64_t>(phase_best.size());
      if (cfg_.early_stop && n > cfg_.early_stop_window &&
          relative_improvement(phase_best[static_cast<std::size_t>(n - 1 - cfg_.early_stop_window)],
                               best_k_value) < cfg_.early_stop_tol) {
        break;
      }
      backward(total);
      ParamStore grads = gk.params.zeros_like();
      kv.accumulate_grads(grads);
      k_opt.step(gk.params, grads);
      if (inner + 1 == inner_iters) {
        // The last update is scored without a trace entry so it can still win.
        const ParamVars kc(gk.params, false);
        const Var kf = kernel_net_.forward(kc, zk);
        const Var cf = ops::charbonnier(family_.decode(fvars, enc, kf), y, w.eps_charbonnier);
        const LossValue last = kernel_loss(cf, ops::kernel_l2(kf));
        if (std::isfinite(last.value)) consider(last.value);
      }
    }
    gk.params = std::move(best_k);
    const Tensor k_value = generate(gk, shape);

    // (A) one step on theta_x with theta_k frozen.
    ParamVars xv(gx.params, true);
    const Var x = image_net.forward(xv, zx);
    const Var charb = ops::charbonnier(family_.forward(fvars, x, Var::constant(k_value)), y,
                                       w.eps_charbonnier);
    std::vector<std::pair<Var, double>> terms{{charb, 1.0}};
    LossValue lv = base_loss(charb.item(), kernel_l2(k_value));
    for (const ImagePrior& p : priors_) {
      const Var term = ops::scalar_term(x, p.fn);
      terms.emplace_back(term, p.weight);
      lv.breakdown[p.name] = term.item();
      lv.weights[p.name] = p.weight;
    }
    lv.value = lv.weighted_total();
    record(outer, -1, DeblurPhase::image, lv);
    backward(ops::weighted_sum(terms));
    ParamStore grads = gx.params.zeros_like();
    xv.accumulate_grads(grads);
    x_opt.step(gx.params, grads);
    x_value = generate(gx, shape);
    if (progress_) progress_(trace.back(), x_value);
  }

  result.image = clamp01(x_value);
  result.kernel = generate(gk, shape);
  return result;
}

RetrieveResult Deblurrer::retrieve_kernel(const ImageTensor& x, const ImageTensor& y) const {
  require_image(x, "retrieve sharp input");
  require_same_shape(x, y, "retrieve_kernel");
  family_.config().require_image_size(x.height(), x.width());
  const PriorWeights& w = cfg_.weights;
  const ParamVars fvars(family_params_, false);
  const OperatorFamily::Encoding enc = family_.encode(fvars, Var::constant(x));

  DipGenerator gk = make_kernel_generator(x.shape(), derive_seed(cfg_.seed, kKernelStream));
  Adam opt(gk.params, cfg_.optimizer);
  const Var zk = Var::constant(gk.noise_input);
  RetrieveResult result;
  ParamStore best = gk.params;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::int64_t it = 0; it < cfg_.retrieve_iters; ++it) {
    ParamVars kv(gk.params, true);
    const Var k = kernel_net_.forward(kv, zk);
    const Var charb = ops::charbonnier(family_.decode(fvars, enc, k), y, w.eps_charbonnier);
    const Var kl2 = ops::kernel_l2(k);
    const Var total = ops::weighted_sum({{charb, 1.0}, {kl2, w.lambda_k}});
    LossValue lv;
    lv.breakdown = {{"charbonnier", charb.item()}, {"kernel_l2", kl2.item()}};
    lv.weights = {{"charbonnier", 1.0}, {"kernel_l2", w.lambda_k}};
    lv.value = lv.weighted_total();
    result.trace.push_back(lv);
    if (const std::string bad = lv.first_non_finite(); !bad.empty()) throw NonFiniteLossError(bad, it);
    if (lv.value < best_value) {
      best_value = lv.value;
      best = gk.params;
    }
    if (it + 1 == cfg_.retrieve_iters) break;
    backward(total);
    ParamStore grads = gk.params.zeros_like();
    kv.accumulate_grads(grads);
    opt.step(gk.params, grads);
  }
  gk.params = std::move(best);
  result.kernel = generate(gk, x.shape());
  result.recon_psnr = psnr(apply_blur(family_, family_params_, x, result.kernel), y);
  return result;
}

DeblurResult deblur(const ImageTensor& y, const OperatorFamily& family,
                    const ParamStore& family_params, const DeblurConfig& cfg) {
  return Deblurrer(family, family_params, cfg).deblur(y);
}

RetrieveResult retrieve_kernel(const OperatorFamily& family, const ParamStore& family_params,
                               const ImageTensor& x, const ImageTensor& y,
                               const DeblurConfig& cfg) {
  return Deblurrer(family, family_params, cfg).retrieve_kernel(x, y);
}

}  // namespace bks
