#include "bks/run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace bks {

using nlohmann::json;

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::runtime_error(key.empty() ? message : "config key '" + key + "': " + message),
      key_(std::move(key)) {}

namespace {

// Reads the fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_, "expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string path = dotted(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(path, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(path, "expected an integer");
      if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned() &&
          it->template get<std::int64_t>() < 0) {
        throw ConfigError(path, "expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(path, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(path, "expected a string");
    }
    out = it->template get<T>();
  }

  // Nested object, or nullptr when absent.
  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string dotted(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(dotted(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

json optimizer_to_json(const OptimizerConfig& o) {
  return {{"lr", o.lr},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"eps", o.eps},
          {"schedule", to_string(o.schedule)},
          {"total_iters", o.total_iters}};
}

void read_optimizer(const json& j, const std::string& prefix, OptimizerConfig& o) {
  ObjectReader r(j, prefix);
  r.read("lr", o.lr);
  r.read("beta1", o.beta1);
  r.read("beta2", o.beta2);
  r.read("eps", o.eps);
  std::string schedule = to_string(o.schedule);
  r.read("schedule", schedule);
  try {
    o.schedule = parse_schedule(schedule);
  } catch (const std::exception& e) {
    throw ConfigError(r.dotted("schedule"), e.what());
  }
  r.read("total_iters", o.total_iters);
  r.finish();
}

json weights_to_json(const PriorWeights& w) {
  return {{"lambda_k", w.lambda_k},
          {"gamma", w.gamma},
          {"alpha", w.alpha},
          {"eps_charbonnier", w.eps_charbonnier}};
}

json deblur_to_json(const DeblurConfig& d) {
  return {{"outer_iters", d.outer_iters},
          {"inner_iters_first", d.inner_iters_first},
          {"inner_iters_rest", d.inner_iters_rest},
          {"reinit_kernel_each_outer", d.reinit_kernel_each_outer},
          {"early_stop", d.early_stop},
          {"early_stop_window", d.early_stop_window},
          {"early_stop_tol", d.early_stop_tol},
          {"retrieve_iters", d.retrieve_iters},
          {"kernel_optimizer", optimizer_to_json(d.optimizer)},
          {"image_optimizer", optimizer_to_json(d.image_optimizer)},
          {"seed", d.seed}};
}

// Wraps validate() failures so callers see one exception type.
template <typename F>
void validated(const std::string& key, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

json arch_to_json(const ArchConfig& a) {
  return {{"base_channels", a.base_channels},
          {"kernel_channels", a.kernel_channels},
          {"downsample_factor", a.downsample_factor},
          {"image_channels", a.image_channels},
          {"residual_output", a.residual_output},
          {"full_res_skip", a.full_res_skip}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  ObjectReader r(j, "arch");
  r.read("base_channels", a.base_channels);
  r.read("kernel_channels", a.kernel_channels);
  r.read("downsample_factor", a.downsample_factor);
  r.read("image_channels", a.image_channels);
  r.read("residual_output", a.residual_output);
  r.read("full_res_skip", a.full_res_skip);
  r.finish();
  validated("arch", [&] { a.validate(); });
  return a;
}

void RunConfig::validate() const {
  validated("arch", [&] { arch.validate(); });
  validated("weights", [&] { weights.validate(); });
  validated("optimizer", [&] { optimizer.validate(); });
  validated("deblur", [&] { deblur_config().validate(); });
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every", "must be >= 1");
}

DeblurConfig RunConfig::deblur_config() const {
  DeblurConfig d = deblur;
  d.weights = weights;
  return d;
}

json to_json(const RunConfig& cfg) {
  return {{"arch", arch_to_json(cfg.arch)},
          {"weights", weights_to_json(cfg.weights)},
          {"optimizer", optimizer_to_json(cfg.optimizer)},
          {"deblur", deblur_to_json(cfg.deblur)},
          {"seed", cfg.seed},
          {"threads", cfg.threads},
          {"checkpoint_every", cfg.checkpoint_every},
          {"paths", {{"data", cfg.paths.data}, {"out", cfg.paths.out}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  ObjectReader r(j, "");
  if (const json* a = r.child("arch")) cfg.arch = arch_from_json(*a);
  if (const json* w = r.child("weights")) {
    ObjectReader wr(*w, "weights");
    wr.read("lambda_k", cfg.weights.lambda_k);
    wr.read("gamma", cfg.weights.gamma);
    wr.read("alpha", cfg.weights.alpha);
    wr.read("eps_charbonnier", cfg.weights.eps_charbonnier);
    wr.finish();
  }
  if (const json* o = r.child("optimizer")) read_optimizer(*o, "optimizer", cfg.optimizer);
  if (const json* d = r.child("deblur")) {
    ObjectReader dr(*d, "deblur");
    DeblurConfig& dc = cfg.deblur;
    dr.read("outer_iters", dc.outer_iters);
    dr.read("inner_iters_first", dc.inner_iters_first);
    dr.read("inner_iters_rest", dc.inner_iters_rest);
    dr.read("reinit_kernel_each_outer", dc.reinit_kernel_each_outer);
    dr.read("early_stop", dc.early_stop);
    dr.read("early_stop_window", dc.early_stop_window);
    dr.read("early_stop_tol", dc.early_stop_tol);
    dr.read("retrieve_iters", dc.retrieve_iters);
    if (const json* ko = dr.child("kernel_optimizer")) {
      read_optimizer(*ko, "deblur.kernel_optimizer", dc.optimizer);
    }
    if (const json* io = dr.child("image_optimizer")) {
      read_optimizer(*io, "deblur.image_optimizer", dc.image_optimizer);
    }
    dr.read("seed", dc.seed);
    dr.finish();
  }
  r.read("seed", cfg.seed);
  r.read("threads", cfg.threads);
  r.read("checkpoint_every", cfg.checkpoint_every);
  if (const json* p = r.child("paths")) {
    ObjectReader pr(*p, "paths");
    pr.read("data", cfg.paths.data);
    pr.read("out", cfg.paths.out);
    pr.finish();
  }
  r.finish();
  cfg.deblur.weights = cfg.weights;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", "invalid JSON in " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  nlohmann::json j = to_json(cfg);
  j.erase("paths");
  for (const unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int threads_from_env() {
  const char* v = std::getenv("BKS_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  return (*end == '\0' && n > 0 && n <= 1024) ? static_cast<int>(n) : 1;
}

}  // namespace bks
