#include <doctest.h>

#include <cmath>
#include <thread>

#include "bks/deblur.hpp"
#include "bks/objectives.hpp"
#include "support.hpp"

using namespace bks;
using bkstest::tiny_arch;

namespace {

struct Fixture {
  ArchConfig arch = tiny_arch();
  OperatorFamily family{arch};
  ParamStore params = family.init_params(21);
  ImageTensor sharp = procedural_image(33, 3, 16, 16);
  ImageTensor blurry = convolve_blur(sharp, generate_motion_kernel(5, 5, 3));
};

DeblurConfig small_config(std::int64_t outer = 3, std::int64_t first = 4, std::int64_t rest = 2) {
  DeblurConfig c;
  c.outer_iters = outer;
  c.inner_iters_first = first;
  c.inner_iters_rest = rest;
  c.retrieve_iters = 6;
  c.seed = 4;
  return c;
}

bool same_trace(const DeblurTrace& a, const DeblurTrace& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].outer != b[i].outer || a[i].inner != b[i].inner || a[i].phase != b[i].phase ||
        a[i].loss.value != b[i].loss.value || a[i].loss.breakdown != b[i].loss.breakdown ||
        a[i].best_seen != b[i].best_seen) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("deblur") {

TEST_CASE("config defaults and validation") {
  const DeblurConfig d;
  CHECK(d.outer_iters == 300);
  CHECK(d.inner_iters_first == 100);
  CHECK(d.inner_iters_rest == 10);
  CHECK_FALSE(d.reinit_kernel_each_outer);
  CHECK(d.early_stop_window == 20);
  CHECK(d.early_stop_tol == 1e-5);
  CHECK_NOTHROW(d.validate());
  for (auto edit : {+[](DeblurConfig& c) { c.outer_iters = 0; }, +[](DeblurConfig& c) { c.inner_iters_first = 0; },
                    +[](DeblurConfig& c) { c.inner_iters_rest = -1; }, +[](DeblurConfig& c) { c.retrieve_iters = 0; },
                    +[](DeblurConfig& c) { c.weights.lambda_k = -1; }}) {
    DeblurConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
}

TEST_CASE("generators have the documented shapes and frozen seeded noise") {
  Fixture f;
  const Deblurrer d(f.family, f.params, small_config());
  const DipGenerator gx = d.make_image_generator(f.blurry.shape(), 1);
  CHECK(gx.kind == DipKind::image);
  CHECK(gx.noise_input.shape() == Shape{1, 64, 64});
  const Tensor x = d.generate(gx, f.blurry.shape());
  CHECK(x.shape() == f.blurry.shape());
  for (float v : x.values()) REQUIRE((v >= 0.0f && v <= 1.0f));

  const DipGenerator gk = d.make_kernel_generator(f.blurry.shape(), 1);
  CHECK(gk.kind == DipKind::kernel);
  CHECK(gk.noise_input.shape() == Shape{6, 16, 16});
  CHECK(d.generate(gk, f.blurry.shape()).shape() == f.arch.kernel_shape(16, 16));

  CHECK(d.make_image_generator(f.blurry.shape(), 1).noise_input == gx.noise_input);
  CHECK_FALSE(d.make_image_generator(f.blurry.shape(), 2).noise_input == gx.noise_input);
  // Standard normal noise.
  double mean = 0, sq = 0;
  for (float v : gx.noise_input.values()) mean += v, sq += double(v) * v;
  mean /= 4096.0;
  CHECK(std::abs(mean) < 0.1);
  CHECK(std::abs(sq / 4096.0 - 1.0) < 0.1);
}

TEST_CASE("trace has one entry per kernel step plus one per image step") {
  Fixture f;
  SUBCASE("unit budgets, no priors") {
    DeblurConfig c = small_config(1, 1, 1);
    c.weights.lambda_k = 0;
    c.weights.gamma = 0;
    const DeblurResult r = deblur(f.blurry, f.family, f.params, c);
    REQUIRE(r.trace.size() == 2);
    CHECK(r.trace[0].phase == DeblurPhase::kernel);
    CHECK(r.trace[1].phase == DeblurPhase::image);
    CHECK(r.trace[1].inner == -1);
    CHECK(r.trace[0].loss.value == doctest::Approx(r.trace[0].loss.breakdown.at("charbonnier")));
  }
  SUBCASE("uniform budgets") {
    const DeblurResult r = deblur(f.blurry, f.family, f.params, small_config(3, 2, 2));
    CHECK(r.trace.size() == 3 * (2 + 1));
  }
  SUBCASE("first and rest budgets differ") {
    const DeblurResult r = deblur(f.blurry, f.family, f.params, small_config(3, 5, 2));
    CHECK(r.trace.size() == (5 + 1) + 2 * (2 + 1));
    CHECK(r.image.shape() == f.blurry.shape());
    CHECK(r.kernel.shape() == f.arch.kernel_shape(16, 16));
    for (float v : r.image.values()) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("best_seen is the running minimum and kernel phases never end worse") {
  Fixture f;
  const DeblurResult r = deblur(f.blurry, f.family, f.params, small_config(4, 6, 3));
  double m = INFINITY;
  for (const DeblurTraceEntry& e : r.trace) {
    m = std::min(m, e.loss.value);
    REQUIRE(e.best_seen == m);
  }
  // The image-step entry is evaluated at the phase's selected kernel with the
  // same frozen image, so it is the kernel phase's end value.
  for (std::size_t i = 0; i < r.trace.size();) {
    const double start = r.trace[i].loss.value;
    std::size_t j = i;
    while (r.trace[j].phase == DeblurPhase::kernel) ++j;
    const double end = r.trace[j].loss.value;
    CHECK(end <= start + 1e-12 * std::abs(start));
    i = j + 1;
  }
}

TEST_CASE("data term of the result is no worse than at initialization") {
  Fixture f;
  const DeblurConfig c = small_config(5, 8, 3);
  const DeblurResult r = deblur(f.blurry, f.family, f.params, c);
  const double eps = c.weights.eps_charbonnier;
  const double init = charbonnier(f.blurry, apply_blur(f.family, f.params, r.initial_image, r.initial_kernel), eps);
  const double out = charbonnier(f.blurry, apply_blur(f.family, f.params, r.image, r.kernel), eps);
  CHECK(out <= init);
}

TEST_CASE("fixed seed gives bit-identical traces") {
  Fixture f;
  const DeblurConfig c = small_config(10, 3, 2);
  const DeblurResult a = deblur(f.blurry, f.family, f.params, c);
  const DeblurResult b = deblur(f.blurry, f.family, f.params, c);
  CHECK(same_trace(a.trace, b.trace));
  CHECK(a.image == b.image);
  CHECK(a.kernel == b.kernel);
  DeblurConfig other = c;
  other.seed = 5;
  CHECK_FALSE(same_trace(a.trace, deblur(f.blurry, f.family, f.params, other).trace));
}

TEST_CASE("literal kernel re-initialization mode runs and differs from warm start") {
  Fixture f;
  DeblurConfig c = small_config(3, 3, 3);
  const DeblurResult warm = deblur(f.blurry, f.family, f.params, c);
  c.reinit_kernel_each_outer = true;
  const DeblurResult cold = deblur(f.blurry, f.family, f.params, c);
  CHECK(cold.trace.size() == warm.trace.size());
  // The first outer iteration is identical; the second starts from fresh kernel weights.
  CHECK(cold.trace[0].loss.value == warm.trace[0].loss.value);
  CHECK(cold.trace[4].loss.value != warm.trace[4].loss.value);
}

TEST_CASE("early stop shortens phases") {
  Fixture f;
  DeblurConfig c = small_config(1, 200, 1);
  c.early_stop = true;
  c.early_stop_window = 5;
  c.early_stop_tol = 1.0;  // any improvement below 100% stops
  const DeblurResult r = deblur(f.blurry, f.family, f.params, c);
  CHECK(r.trace.size() < 201);
  CHECK(r.trace.size() >= 7);
}

TEST_CASE("image prior hooks") {
  Fixture f;
  const DeblurConfig c = small_config(3, 3, 2);
  const DeblurResult base = Deblurrer(f.family, f.params, c).deblur(f.blurry);

  SUBCASE("default prior is the hyper-Laplacian with weight gamma") {
    const Deblurrer d(f.family, f.params, c);
    REQUIRE(d.image_priors().size() == 1);
    CHECK(d.image_priors()[0].name == "hyper_laplacian");
    CHECK(d.image_priors()[0].weight == c.weights.gamma);
    const DeblurTraceEntry& e = base.trace.back();
    CHECK(e.loss.weights.at("hyper_laplacian") == c.weights.gamma);
  }
  SUBCASE("zero hook leaves results identical") {
    Deblurrer d(f.family, f.params, c);
    d.register_image_prior("zero", [](const Tensor& x, Tensor* g) {
      if (g) *g = Tensor(x.shape());
      return 0.0;
    }, 1.0);
    const DeblurResult r = d.deblur(f.blurry);
    CHECK(r.image == base.image);
    CHECK(r.kernel == base.kernel);
    for (std::size_t i = 0; i < r.trace.size(); ++i) REQUIRE(r.trace[i].loss.value == base.trace[i].loss.value);
  }
  SUBCASE("constant hook shifts the objective but not the trajectory") {
    Deblurrer d(f.family, f.params, c);
    d.register_image_prior("const", [](const Tensor& x, Tensor* g) {
      if (g) *g = Tensor(x.shape());
      return 2.5;
    }, 0.4);
    const DeblurResult r = d.deblur(f.blurry);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      CHECK(r.trace[i].loss.value == doctest::Approx(base.trace[i].loss.value + 1.0).epsilon(1e-9));
      CHECK(r.trace[i].loss.breakdown.at("const") == 2.5);
    }
    CHECK(max_abs_diff(r.image, base.image) <= 1e-6f);
    CHECK(max_abs_diff(r.kernel, base.kernel) <= 1e-6f);
  }
  SUBCASE("re-registering the hyper-Laplacian reproduces the default") {
    Deblurrer d(f.family, f.params, c);
    d.clear_image_priors();
    const double alpha = c.weights.alpha;
    d.register_image_prior("hyper_laplacian", [alpha](const Tensor& x, Tensor* g) {
      if (g) *g = hyper_laplacian_grad(x, alpha);
      return hyper_laplacian(x, alpha);
    }, c.weights.gamma);
    const DeblurResult r = d.deblur(f.blurry);
    CHECK(same_trace(r.trace, base.trace));
    CHECK(r.image == base.image);
  }
  SUBCASE("trace values equal deblur_objective at the image step") {
    const DeblurTraceEntry& e = base.trace[static_cast<std::size_t>(c.inner_iters_first)];
    REQUIRE(e.phase == DeblurPhase::image);
    double sum = 0;
    for (const auto& [k, v] : e.loss.breakdown) sum += e.loss.weights.at(k) * v;
    CHECK(e.loss.value == doctest::Approx(sum).epsilon(1e-12));
  }
  SUBCASE("invalid registrations") {
    Deblurrer d(f.family, f.params, c);
    const DifferentiableFn zero = [](const Tensor&, Tensor*) { return 0.0; };
    CHECK_THROWS_AS(d.register_image_prior("charbonnier", zero, 1), std::invalid_argument);
    CHECK_THROWS_AS(d.register_image_prior("kernel_l2", zero, 1), std::invalid_argument);
    CHECK_THROWS_AS(d.register_image_prior("hyper_laplacian", zero, 1), std::invalid_argument);
    CHECK_THROWS_AS(d.register_image_prior("empty", DifferentiableFn{}, 1), std::invalid_argument);
  }
  SUBCASE("non-finite hook aborts with the trace so far") {
    Deblurrer d(f.family, f.params, c);
    d.register_image_prior("bad", [](const Tensor& x, Tensor* g) {
      if (g) *g = Tensor(x.shape());
      return std::nan("");
    }, 1.0);
    try {
      (void)d.deblur(f.blurry);
      FAIL("no abort");
    } catch (const DeblurAborted& e) {
      CHECK(e.term() == "bad");
      CHECK(e.trace().size() == 1);
    }
  }
}

TEST_CASE("F's weights are never updated") {
  Fixture f;
  const ParamStore before = f.params;
  (void)deblur(f.blurry, f.family, f.params, small_config());
  (void)retrieve_kernel(f.family, f.params, f.sharp, f.blurry, small_config());
  CHECK(f.params == before);
}

TEST_CASE("retrieve_kernel reports the PSNR of its reconstruction") {
  Fixture f;
  const DeblurConfig c = small_config();
  const RetrieveResult r = retrieve_kernel(f.family, f.params, f.sharp, f.blurry, c);
  CHECK(r.trace.size() == static_cast<std::size_t>(c.retrieve_iters));
  CHECK(r.kernel.shape() == f.arch.kernel_shape(16, 16));
  CHECK(r.recon_psnr == doctest::Approx(psnr(apply_blur(f.family, f.params, f.sharp, r.kernel), f.blurry)));
  const RetrieveResult again = retrieve_kernel(f.family, f.params, f.sharp, f.blurry, c);
  CHECK(again.kernel == r.kernel);
  CHECK_THROWS(retrieve_kernel(f.family, f.params, f.sharp, procedural_image(1, 3, 8, 8), c));
}

TEST_CASE("input validation") {
  Fixture f;
  CHECK_THROWS(deblur(procedural_image(1, 3, 12, 12), f.family, f.params, small_config()));
  CHECK_THROWS(deblur(procedural_image(1, 1, 16, 16), f.family, f.params, small_config()));
  ParamStore wrong = OperatorFamily(tiny_arch(1)).init_params(1);
  CHECK_THROWS(Deblurrer(f.family, wrong, small_config()));
}

TEST_CASE("independent jobs may run concurrently") {
  Fixture f;
  const ImageTensor other = convolve_blur(procedural_image(34, 3, 16, 16), generate_motion_kernel(6, 5, 3));
  const DeblurConfig c = small_config(2, 3, 2);
  const DeblurResult a = deblur(f.blurry, f.family, f.params, c);
  const DeblurResult b = deblur(other, f.family, f.params, c);
  DeblurResult ta, tb;
  std::thread t1([&] { ta = deblur(f.blurry, f.family, f.params, c); });
  std::thread t2([&] { tb = deblur(other, f.family, f.params, c); });
  t1.join();
  t2.join();
  CHECK(ta.image == a.image);
  CHECK(tb.image == b.image);
}

}  // TEST_SUITE
