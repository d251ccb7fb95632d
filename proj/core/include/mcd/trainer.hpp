#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcd/checkpoint.hpp"
#include "mcd/concept_objective.hpp"
#include "mcd/optim.hpp"

namespace mcd {

struct TrainConfig {
  double lambda_mm = 1.0;
  double lambda_mh = 1.0;
  AblationMode ablation = AblationMode::kFull;
  int iterations = 2000;
  int batch_size = 32;
  double base_lr = 1e-3;
  int warmup_iterations = 100;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  std::uint64_t seed = 1;
  int checkpoint_interval = 500;

  void validate() const {
    if (iterations < 1) throw ValidationError("train: iterations must be >= 1");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (ablation == AblationMode::kFull && (lambda_mm <= 0 || lambda_mh <= 0)) {
      throw ValidationError("train: loss weights must be positive in full mode");
    }
  }
};

// Hash of everything that shapes the learned tensors; persisted into
// checkpoints and compared before any reuse.
std::string concept_fingerprint(const std::vector<ModalitySpec>& specs,
                                const EncoderConfig& ecfg, const ReconNetConfig& ccfg,
                                const ReconNetConfig& mcfg, const TrainConfig& tcfg);

struct MetricsRecord {
  long iteration = 0;  // 1-based
  double loss = 0.0;
  double loss_mm = 0.0;
  double loss_mh = 0.0;
  double lr = 0.0;
};

std::string to_json_line(const MetricsRecord& r);

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::string checkpoint_path;
  long iterations_run = 0;
};

// Joint concept-discovery training. Deterministic given config.seed: batch
// order, masks and coherence draws are all derived per-iteration from it, so
// a resumed run continues the exact same trace. Writes a checkpoint at
// iteration 0, every checkpoint_interval, and at the end; metrics go to
// metrics_path as line-delimited JSON when the path is nonempty.
// stop_after > 0 bounds the iterations executed in this launch (preemption);
// the run is then completed later via resume_path.
TrainResult train_concepts(const Dataset& dataset, const EncoderConfig& ecfg,
                           const ReconNetConfig& ccfg, const ReconNetConfig& mcfg,
                           const TrainConfig& tcfg, const std::string& checkpoint_path,
                           const std::string& metrics_path = "",
                           const std::string& resume_path = "", long stop_after = -1);

// Inference-time bundle: parameters loaded into freshly built nets.
struct ConceptModel {
  ParamStore<float> store;
  ConceptNets<float> nets;
  CheckpointHeader header;
};

ConceptModel load_concept_model(const std::string& checkpoint_path, const EncoderConfig& ecfg,
                                const ReconNetConfig& ccfg, const ReconNetConfig& mcfg,
                                const std::vector<ModalitySpec>& specs);

}  // namespace mcd
