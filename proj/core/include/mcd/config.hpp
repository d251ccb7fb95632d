#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mcd/env.hpp"
#include "mcd/policy.hpp"
#include "mcd/trainer.hpp"

namespace mcd {

// Run configuration: one JSON document with sections env.*, encoder.*,
// cmcn.*, mhfp.*, train.*, policy.*, analysis.*, io.* plus a master seed.
// Files provide partial overrides of the defaults; unknown keys are rejected.
// Section seeds left null derive from the master seed.

nlohmann::json default_config();

// Defaults deep-merged with the optional file, then dotted-path overrides
// ("train.seed=7"); override values parse as JSON scalars, falling back to
// strings.
nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides);

void apply_override(nlohmann::json& config, const std::string& assignment);

EnvSpec env_spec_from(const nlohmann::json& config);
TaskMix task_mix_from(const nlohmann::json& config);
int demo_count_from(const nlohmann::json& config);
EncoderConfig encoder_config_from(const nlohmann::json& config);
ReconNetConfig recon_config_from(const nlohmann::json& config, const std::string& section);
TrainConfig train_config_from(const nlohmann::json& config);
PolicyConfig policy_config_from(const nlohmann::json& config);
PolicyTrainConfig policy_train_config_from(const nlohmann::json& config);

struct IoPaths {
  std::string out_dir;
  std::string dataset;
  std::string concepts_checkpoint;
  std::string concepts_metrics;
  std::string labels;
  std::string policy_checkpoint;
  std::string policy_metrics;
};
// Empty io.* entries fall back to canonical locations under out_dir; an empty
// out_dir falls back to $MCDS_OUT_DIR, then "./out".
IoPaths io_paths_from(const nlohmann::json& config);

std::uint64_t master_seed_from(const nlohmann::json& config);

// fnv-1a of a file's bytes, for provenance records.
std::string file_fingerprint(const std::string& path);

}  // namespace mcd
