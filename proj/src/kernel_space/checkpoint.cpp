#include "bks/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>

namespace bks {

namespace fs = std::filesystem;
using nlohmann::json;

const ParamStore& Checkpoint::store(const std::string& name) const {
  for (const NamedStore& s : stores) {
    if (s.name == name) return s.store;
  }
  throw CheckpointError("checkpoint has no store '" + name + "'");
}

bool Checkpoint::has_store(const std::string& name) const {
  for (const NamedStore& s : stores) {
    if (s.name == name) return true;
  }
  return false;
}

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::vector<char> to_little_endian(const Tensor& t) {
  std::vector<char> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(t.data()[i]);
    if constexpr (std::endian::native == std::endian::big) u = byteswap32(u);
    std::memcpy(bytes.data() + 4 * i, &u, 4);
  }
  return bytes;
}

void from_little_endian(const std::vector<char>& bytes, Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = byteswap32(u);
    t.data()[i] = std::bit_cast<float>(u);
  }
}

std::string blob_file(const std::string& store, const std::string& tensor) {
  return store + "." + tensor + ".bin";
}

[[noreturn]] void fail_tensor(const std::string& name, const std::string& why) {
  throw CheckpointError("tensor '" + name + "': " + why);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  json tensors = json::array();
  for (const NamedStore& ns : ckpt.stores) {
    if (ns.name.find('/') != std::string::npos) {
      throw CheckpointError("store name '" + ns.name + "' contains '/'");
    }
    for (int i = 0; i < ns.store.size(); ++i) {
      const std::string& tname = ns.store.name(i);
      const Tensor& t = ns.store[i];
      const std::string file = blob_file(ns.name, tname);
      std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
      const std::vector<char> bytes = to_little_endian(t);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw CheckpointError("cannot write " + (dir / file).string());
      tensors.push_back({{"name", ns.name + "/" + tname},
                         {"shape", t.shape()},
                         {"dtype", "f32"},
                         {"byte_order", "little"},
                         {"file", file}});
    }
  }
  const json manifest{{"format_version", kCheckpointFormatVersion},
                      {"arch_id", ckpt.arch_id},
                      {"config", ckpt.config},
                      {"config_hash", ckpt.config_hash},
                      {"iteration", ckpt.iteration},
                      {"rng_seed", ckpt.rng_seed},
                      {"tensors", tensors}};
  // Manifest last, via rename, so a partially written checkpoint has none.
  const fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw CheckpointError("cannot write " + tmp.string());
  }
  fs::rename(tmp, dir / "manifest.json");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw CheckpointError("missing checkpoint manifest " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CheckpointError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError("unknown checkpoint format_version " + std::to_string(version));
    }
    ckpt.arch_id = m.at("arch_id").get<std::string>();
    ckpt.config = m.at("config");
    ckpt.config_hash = m.at("config_hash").get<std::string>();
    ckpt.iteration = m.at("iteration").get<std::int64_t>();
    ckpt.rng_seed = m.at("rng_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!m.contains("tensors") || !m["tensors"].is_array()) {
    throw CheckpointError("corrupt manifest: 'tensors' must be an array");
  }

  for (const json& entry : m["tensors"]) {
    std::string full = entry.value("name", std::string("<unnamed>"));
    Shape shape;
    std::string file;
    try {
      full = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
      file = entry.at("file").get<std::string>();
      if (entry.at("dtype").get<std::string>() != "f32") fail_tensor(full, "dtype must be f32");
      if (entry.at("byte_order").get<std::string>() != "little") {
        fail_tensor(full, "byte_order must be little");
      }
    } catch (const json::exception& e) {
      fail_tensor(full, std::string("malformed manifest entry: ") + e.what());
    }
    const auto slash = full.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == full.size()) {
      fail_tensor(full, "name must be <store>/<tensor>");
    }
    if (shape.empty()) fail_tensor(full, "empty shape");
    for (int d : shape) {
      if (d <= 0) fail_tensor(full, "non-positive dimension in shape " + shape_string(shape));
    }
    if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
      fail_tensor(full, "blob file must be a plain file name");
    }

    const fs::path blob = dir / file;
    std::ifstream bin(blob, std::ios::binary);
    if (!bin) fail_tensor(full, "missing blob " + blob.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    Tensor t(shape);
    if (bytes.size() != t.size() * 4) {
      fail_tensor(full, "blob has " + std::to_string(bytes.size()) + " bytes, shape " +
                            shape_string(shape) + " needs " + std::to_string(t.size() * 4));
    }
    from_little_endian(bytes, t);
    if (!t.all_finite()) fail_tensor(full, "contains non-finite values");

    const std::string store_name = full.substr(0, slash);
    const std::string tensor_name = full.substr(slash + 1);
    auto it = std::find_if(ckpt.stores.begin(), ckpt.stores.end(),
                           [&](const NamedStore& s) { return s.name == store_name; });
    if (it == ckpt.stores.end()) {
      ckpt.stores.push_back({store_name, {}});
      it = std::prev(ckpt.stores.end());
    }
    if (it->store.contains(tensor_name)) fail_tensor(full, "duplicate tensor name");
    it->store.add(tensor_name, std::move(t));
  }
  for (NamedStore& s : ckpt.stores) {
    s.store.meta.arch_id = ckpt.arch_id;
    s.store.meta.config_hash = ckpt.config_hash;
    s.store.meta.iteration = ckpt.iteration;
    s.store.meta.rng_seed = ckpt.rng_seed;
  }
  return ckpt;
}

namespace {

constexpr const char* kMomentSuffixes[] = {".adam_m", ".adam_v"};

void require_store_layout(const Checkpoint& ckpt, const std::string& name,
                          const ParamStore& layout) {
  try {
    ckpt.store(name).require_layout(layout);
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw CheckpointError("store '" + name + "': " + e.what());
  }
}

void check_arch(const Checkpoint& ckpt, const ArchConfig& arch) {
  if (ckpt.arch_id != arch.arch_id()) {
    throw CheckpointError("checkpoint arch_id '" + ckpt.arch_id + "' does not match configured '" +
                          arch.arch_id() + "'");
  }
}

}  // namespace

Checkpoint make_training_checkpoint(const KernelSpaceTrainer& trainer, const RunConfig& cfg) {
  const KernelSpaceModel& m = trainer.model();
  Checkpoint c;
  c.arch_id = m.arch.arch_id();
  c.config = to_json(cfg);
  c.config.erase("paths");
  c.config_hash = config_hash(cfg);
  c.iteration = trainer.iteration();
  c.rng_seed = trainer.seed();
  c.stores.push_back({kFamilyStore, m.family_params});
  c.stores.push_back({kExtractorStore, m.extractor_params});
  const std::string f = kFamilyStore;
  const std::string g = kExtractorStore;
  c.stores.push_back({f + kMomentSuffixes[0], trainer.family_optimizer().first_moment()});
  c.stores.push_back({f + kMomentSuffixes[1], trainer.family_optimizer().second_moment()});
  c.stores.push_back({g + kMomentSuffixes[0], trainer.extractor_optimizer().first_moment()});
  c.stores.push_back({g + kMomentSuffixes[1], trainer.extractor_optimizer().second_moment()});
  return c;
}

void restore_training_checkpoint(const Checkpoint& ckpt, KernelSpaceTrainer& trainer) {
  KernelSpaceModel& m = trainer.model();
  check_arch(ckpt, m.arch);
  const std::string f = kFamilyStore;
  const std::string g = kExtractorStore;
  for (const std::string& name : {f, f + kMomentSuffixes[0], f + kMomentSuffixes[1]}) {
    require_store_layout(ckpt, name, m.family.layout());
  }
  for (const std::string& name : {g, g + kMomentSuffixes[0], g + kMomentSuffixes[1]}) {
    require_store_layout(ckpt, name, m.extractor.layout());
  }
  m.family_params = ckpt.store(f);
  m.extractor_params = ckpt.store(g);
  trainer.family_optimizer().first_moment() = ckpt.store(f + kMomentSuffixes[0]);
  trainer.family_optimizer().second_moment() = ckpt.store(f + kMomentSuffixes[1]);
  trainer.extractor_optimizer().first_moment() = ckpt.store(g + kMomentSuffixes[0]);
  trainer.extractor_optimizer().second_moment() = ckpt.store(g + kMomentSuffixes[1]);
  trainer.set_iteration(ckpt.iteration);
}

LoadedModel load_model(const fs::path& dir) {
  Checkpoint ckpt = load_checkpoint(dir);
  RunConfig cfg;
  try {
    cfg = run_config_from_json(ckpt.config);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  check_arch(ckpt, cfg.arch);
  const OperatorFamily family(cfg.arch);
  const Extractor extractor(cfg.arch);
  require_store_layout(ckpt, kFamilyStore, family.layout());
  require_store_layout(ckpt, kExtractorStore, extractor.layout());
  return {cfg, KernelSpaceModel(cfg.arch, ckpt.store(kFamilyStore), ckpt.store(kExtractorStore)),
          ckpt.iteration};
}

fs::path checkpoint_dir(const fs::path& run_dir, std::int64_t iteration) {
  return run_dir / "checkpoints" / ("iter_" + std::to_string(iteration));
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path root = run_dir / "checkpoints";
  if (!fs::is_directory(root)) return {};
  static const std::regex pattern("iter_([0-9]+)");
  fs::path best;
  long long best_iter = -1;
  for (const auto& entry : fs::directory_iterator(root)) {
    std::smatch match;
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || !std::regex_match(name, match, pattern)) continue;
    if (!fs::exists(entry.path() / "manifest.json")) continue;
    const long long it = std::stoll(match[1].str());
    if (it > best_iter) {
      best_iter = it;
      best = entry.path();
    }
  }
  return best;
}

}  // namespace bks
