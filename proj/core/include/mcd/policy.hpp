#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mcd/checkpoint.hpp"
#include "mcd/env.hpp"
#include "mcd/labeling.hpp"
#include "mcd/nets.hpp"

namespace mcd {

// Behavior cloning with a concept-prediction head grafted onto the shared
// backbone: h = backbone(obs, task), actions read the final layer, concepts
// read the output of layer L. Both heads emit fixed-length chunks.
struct PolicyConfig {
  int depth = 3;
  int width = 64;
  int heads = 4;
  int mlp_hidden = 64;
  int ffn = 128;
  int head_hidden = 128;
  int obs_window = 4;
  int chunk = 8;
  int execute_horizon = 1;  // rollout executes this many chunk steps, then re-plans
  int concept_layer = 2;    // L, 0 <= L < depth; 0 reads the embedding output
  double lambda_mc = 0.1;

  void validate() const {
    if (depth < 1) throw ValidationError("policy: depth must be >= 1");
    if (concept_layer < 0 || concept_layer >= depth) {
      throw ValidationError("policy: concept_layer must satisfy 0 <= L < depth");
    }
    if (lambda_mc < 0) throw ValidationError("policy: lambda_mc must be >= 0");
    if (obs_window < 1 || chunk < 1) throw ValidationError("policy: window/chunk must be >= 1");
    if (execute_horizon < 1 || execute_horizon > chunk) {
      throw ValidationError("policy: execute_horizon must be in [1, chunk]");
    }
    if (width % heads != 0) throw ValidationError("policy: width must be divisible by heads");
  }
};

struct PolicyTrainConfig {
  int iterations = 6000;
  int batch_size = 32;
  double base_lr = 1e-3;
  int warmup_iterations = 100;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  std::uint64_t seed = 1;
  int checkpoint_interval = 500;
};

template <class S>
struct PolicyNet {
  PolicyConfig cfg;
  int action_dim = 0;
  int dz = 0;
  std::vector<ModalitySpec> specs;
  std::vector<std::string> tasks;  // index = embedding row

  std::vector<Mlp2<S>> embeds;
  int task_table = -1;
  int temporal = -1;
  std::vector<TransformerBlock<S>> blocks;
  Mlp2<S> action_head;
  Mlp2<S> concept_head;

  static PolicyNet create(ParamStore<S>& store, const PolicyConfig& cfg,
                          const std::vector<ModalitySpec>& specs, int action_dim, int dz,
                          const std::vector<std::string>& tasks, Rng& rng);

  int task_index(const std::string& task_id) const;

  struct Forward {
    int actions = -1;   // B x (chunk * action_dim)
    int concepts = -1;  // B x (chunk * dz)
    int hidden = -1;    // (B*obs_window) x width, final layer
  };
  // modality_inputs are (B*obs_window) x dim_m stacks; task_rows maps each
  // window to its task embedding row.
  Forward forward(Tape<S>& tape, const std::vector<int>& modality_inputs,
                  const std::vector<int>& task_rows) const;
};

std::string policy_fingerprint(const PolicyConfig& cfg, const PolicyTrainConfig& tcfg,
                               const std::vector<ModalitySpec>& specs, int action_dim, int dz,
                               const std::vector<std::string>& tasks);

struct PolicyMetricsRecord {
  long iteration = 0;
  double loss = 0.0;
  double loss_action = 0.0;
  double loss_concept = 0.0;
  double lr = 0.0;
};
std::string to_json_line(const PolicyMetricsRecord& r);

struct PolicyTrainResult {
  std::vector<PolicyMetricsRecord> metrics;
  std::string checkpoint_path;
};

PolicyTrainResult train_policy(const Dataset& dataset, const ConceptLabels& labels,
                               const PolicyConfig& cfg, const PolicyTrainConfig& tcfg,
                               const std::string& checkpoint_path,
                               const std::string& metrics_path = "");

struct PolicyModel {
  ParamStore<float> store;
  PolicyNet<float> net;
  CheckpointHeader header;
};

PolicyModel load_policy_model(const std::string& checkpoint_path, const Dataset& reference);
PolicyModel load_policy_model(const std::string& checkpoint_path,
                              const std::vector<ModalitySpec>& specs, int action_dim);

// Rollout interface. The environment state is exposed alongside observations
// so scripted baselines (expert, random) can be evaluated through the same
// harness as learned policies.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;
  virtual void begin_episode(const std::string& task_id) = 0;
  // Returns a chunk of actions to execute in order.
  virtual std::vector<std::array<double, 3>> act(
      const EnvState& state, const std::vector<std::vector<std::vector<double>>>& obs_window) = 0;
};

std::unique_ptr<RolloutPolicy> make_net_policy(const PolicyModel& model);
std::unique_ptr<RolloutPolicy> make_expert_policy(const EnvSpec& spec);
std::unique_ptr<RolloutPolicy> make_random_policy(const EnvSpec& spec, std::uint64_t seed);

struct EpisodeOutcome {
  std::uint64_t seed = 0;
  bool success = false;
  int steps = 0;
};

struct EvalResult {
  std::string split;
  double success_rate = 0.0;
  std::vector<EpisodeOutcome> episodes;
};

EvalResult evaluate_policy(RolloutPolicy& policy, const EnvSpec& spec, int episodes,
                           std::uint64_t seed, const std::string& task_id_override = "");

// Success rates for the three desk splits (training-layout, novel-layout,
// two-stage), one EvalResult per split.
std::vector<EvalResult> evaluate_policy_splits(RolloutPolicy& policy, const EnvSpec& base_spec,
                                               int episodes, std::uint64_t seed);

struct SweepRow {
  int concept_layer = 0;
  double lambda_mc = 0.0;
  std::string split;
  double success_rate = 0.0;
  double stderr_ = 0.0;
  int seeds = 0;
};
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace mcd
