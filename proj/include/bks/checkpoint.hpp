#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bks/param_store.hpp"
#include "bks/run_config.hpp"
#include "bks/trainer.hpp"

namespace bks {

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedStore {
  std::string name;
  ParamStore store;
};

// On disk: manifest.json plus one little-endian f32 blob per tensor. Tensor
// names in the manifest are "<store>/<tensor>".
struct Checkpoint {
  std::string arch_id;
  nlohmann::json config;
  std::string config_hash;
  std::int64_t iteration = 0;
  std::uint64_t rng_seed = 0;
  std::vector<NamedStore> stores;

  const ParamStore& store(const std::string& name) const;
  bool has_store(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
// Throws CheckpointError on unknown format versions, malformed manifests,
// blob size mismatches and non-finite values, naming the tensor involved.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Store names used for a kernel-space training run.
inline constexpr const char* kFamilyStore = "F";
inline constexpr const char* kExtractorStore = "G";

// Networks plus both optimizers' moments, so a resumed run continues exactly.
// The stored config omits `paths`.
Checkpoint make_training_checkpoint(const KernelSpaceTrainer& trainer, const RunConfig& cfg);
// Restores networks and optimizer state; the checkpoint's arch must match.
void restore_training_checkpoint(const Checkpoint& ckpt, KernelSpaceTrainer& trainer);

struct LoadedModel {
  RunConfig config;
  KernelSpaceModel model;
  std::int64_t iteration = 0;
};
// Reads the networks of a training checkpoint, validating arch_id and layout.
LoadedModel load_model(const std::filesystem::path& dir);

// Highest-numbered checkpoints/iter_<n> directory with a manifest, or empty.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);
std::filesystem::path checkpoint_dir(const std::filesystem::path& run_dir, std::int64_t iteration);

}  // namespace bks
