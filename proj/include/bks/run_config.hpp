#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "bks/deblur.hpp"
#include "json.hpp"

namespace bks {

// Malformed or unknown configuration entries; `key` is the dotted path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunPaths {
  std::string data;
  std::string out;
  friend bool operator==(const RunPaths&, const RunPaths&) = default;
};

struct RunConfig {
  ArchConfig arch;
  PriorWeights weights;
  OptimizerConfig optimizer;
  // deblur.weights mirrors `weights` and is not serialized separately.
  DeblurConfig deblur;
  std::uint64_t seed = 0;
  // Worker threads for parallel stages; recorded so runs are reproducible.
  int threads = 1;
  // Checkpoint every this many training iterations (the final one is always written).
  std::int64_t checkpoint_every = 100;
  RunPaths paths;

  void validate() const;
  // DeblurConfig with the shared prior weights applied.
  DeblurConfig deblur_config() const;

  // Compares deblur settings through deblur_config().
  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.arch == b.arch && a.weights == b.weights && a.optimizer == b.optimizer &&
           a.deblur_config() == b.deblur_config() && a.seed == b.seed && a.threads == b.threads &&
           a.checkpoint_every == b.checkpoint_every && a.paths == b.paths;
  }
};

nlohmann::json to_json(const RunConfig& cfg);
// Strict: unknown keys and wrong types throw ConfigError; missing keys keep
// their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

nlohmann::json arch_to_json(const ArchConfig& a);
ArchConfig arch_from_json(const nlohmann::json& j);

// FNV-1a over the canonical JSON dump without `paths`, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

// BKS_THREADS when set to a positive integer, else 1.
int threads_from_env();

}  // namespace bks
