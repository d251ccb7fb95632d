#include "mcd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace mcd {

using nlohmann::json;

namespace {

json specs_json(const std::vector<ModalitySpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) {
    arr.push_back({{"name", s.name}, {"dim", s.dim}, {"recon_norm", to_string(s.recon_norm)}});
  }
  return arr;
}

json recon_cfg_json(const ReconNetConfig& c) {
  return {{"depth", c.depth},
          {"heads", c.heads},
          {"mlp_hidden", c.mlp_hidden},
          {"ffn", c.ffn},
          {"dec_hidden", c.dec_hidden}};
}

std::vector<Window> all_training_windows(const Dataset& ds, int t_context) {
  std::vector<Window> all;
  for (std::size_t i = 0; i < ds.demos.size(); ++i) {
    auto ws = make_windows(ds.demos[i].length, t_context, WindowMode::kTraining,
                           static_cast<int>(i));
    all.insert(all.end(), ws.begin(), ws.end());
  }
  return all;
}

// Deterministic permutation of [0, n) for a given epoch, independent of any
// mutable generator state so resumed runs see identical batch order.
std::vector<int> epoch_permutation(std::uint64_t seed, long epoch, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

}  // namespace

std::string concept_fingerprint(const std::vector<ModalitySpec>& specs,
                                const EncoderConfig& ecfg, const ReconNetConfig& ccfg,
                                const ReconNetConfig& mcfg, const TrainConfig& tcfg) {
  json j;
  j["modalities"] = specs_json(specs);
  j["encoder"] = {{"dz", ecfg.dz},         {"depth", ecfg.depth},
                  {"heads", ecfg.heads},   {"mlp_hidden", ecfg.mlp_hidden},
                  {"ffn", ecfg.ffn},       {"t_context", ecfg.t_context}};
  j["cmcn"] = recon_cfg_json(ccfg);
  j["mhfp"] = recon_cfg_json(mcfg);
  j["train"] = {{"lambda_mm", tcfg.lambda_mm},
                {"lambda_mh", tcfg.lambda_mh},
                {"ablation", to_string(tcfg.ablation)},
                {"iterations", tcfg.iterations},
                {"batch_size", tcfg.batch_size},
                {"base_lr", tcfg.base_lr},
                {"warmup_iterations", tcfg.warmup_iterations},
                {"weight_decay", tcfg.weight_decay},
                {"beta1", tcfg.beta1},
                {"beta2", tcfg.beta2},
                {"seed", tcfg.seed}};
  return hex64(fnv1a64(j.dump()));
}

std::string to_json_line(const MetricsRecord& r) {
  json j;
  j["iteration"] = r.iteration;
  j["loss"] = r.loss;
  j["loss_mm"] = r.loss_mm;
  j["loss_mh"] = r.loss_mh;
  j["lr"] = r.lr;
  return j.dump();
}

TrainResult train_concepts(const Dataset& dataset, const EncoderConfig& ecfg,
                           const ReconNetConfig& ccfg, const ReconNetConfig& mcfg,
                           const TrainConfig& tcfg, const std::string& checkpoint_path,
                           const std::string& metrics_path, const std::string& resume_path,
                           long stop_after) {
  tcfg.validate();
  dataset.validate();
  if (dataset.demos.empty()) throw ValidationError("train: dataset has no demonstrations");

  const std::string fingerprint =
      concept_fingerprint(dataset.modalities, ecfg, ccfg, mcfg, tcfg);

  ParamStore<float> store;
  Rng init_rng(derive_seed(tcfg.seed, "init"));
  auto nets = ConceptNets<float>::create(store, ecfg, ccfg, mcfg, dataset.modalities, init_rng);

  AdamW<float> opt({tcfg.base_lr, tcfg.beta1, tcfg.beta2, 1e-8, tcfg.weight_decay});

  long start_iteration = 0;
  if (!resume_path.empty()) {
    const CheckpointHeader h = load_checkpoint<float>(resume_path, store);
    if (h.fingerprint != fingerprint) {
      throw ValidationError("resume refused: checkpoint fingerprint " + h.fingerprint +
                            " does not match configuration " + fingerprint);
    }
    start_iteration = h.iteration;
    opt.set_step_count(h.adam_step);
  }

  const auto windows = all_training_windows(dataset, ecfg.t_context);
  const int deck_size = static_cast<int>(windows.size());
  const int m_count = dataset.modality_count();

  std::ofstream metrics_out;
  if (!metrics_path.empty()) {
    metrics_out.open(metrics_path,
                     start_iteration == 0 ? std::ios::trunc : std::ios::app);
    if (!metrics_out) throw IoError("cannot open metrics file: " + metrics_path);
  }

  auto save = [&](long completed) {
    CheckpointHeader h;
    h.fingerprint = fingerprint;
    h.seed = tcfg.seed;
    h.iteration = completed;
    h.adam_step = opt.step_count();
    h.extra = {{"kind", "concepts"}};
    save_checkpoint<float>(checkpoint_path, store, h);
  };

  if (start_iteration == 0 && !checkpoint_path.empty()) save(0);

  TrainResult result;
  result.checkpoint_path = checkpoint_path;

  const long horizon = stop_after > 0
                           ? std::min<long>(tcfg.iterations, start_iteration + stop_after)
                           : tcfg.iterations;
  for (long iter = start_iteration; iter < horizon; ++iter) {
    // Batch selection: consume the shuffled deck; wraps across epochs.
    std::vector<Window> batch_windows;
    batch_windows.reserve(static_cast<std::size_t>(tcfg.batch_size));
    long consumed = iter * tcfg.batch_size;
    while (static_cast<int>(batch_windows.size()) < tcfg.batch_size) {
      const long epoch = consumed / deck_size;
      const int offset = static_cast<int>(consumed % deck_size);
      const auto perm = epoch_permutation(tcfg.seed, epoch, deck_size);
      for (int k = offset; k < deck_size &&
                           static_cast<int>(batch_windows.size()) < tcfg.batch_size;
           ++k) {
        batch_windows.push_back(windows[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
        consumed += 1;
      }
    }

    auto batch = assemble_windows<float>(dataset, batch_windows, ecfg.t_context);

    Rng mask_rng(derive_seed(tcfg.seed, "mask", static_cast<std::uint64_t>(iter)));
    Rng eps_rng(derive_seed(tcfg.seed, "eps", static_cast<std::uint64_t>(iter)));
    Rng nextn_rng(derive_seed(tcfg.seed, "next-n", static_cast<std::uint64_t>(iter)));

    std::vector<MaskPattern> masks;
    std::vector<double> eps;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      masks.push_back(tcfg.ablation == AblationMode::kAllMask ? full_mask(m_count)
                                                              : sample_mask(m_count, mask_rng));
      eps.push_back(eps_rng.uniform01());
    }

    Tape<float> tape(&store);
    ConceptLossBuild<float> build;
    try {
      build = build_concept_loss(tape, nets, batch, masks, eps, tcfg.lambda_mm,
                                 tcfg.lambda_mh, tcfg.ablation, &nextn_rng);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(iter + 1) +
                         "; last-good checkpoint retained at " + checkpoint_path);
    }

    const double joint = tcfg.lambda_mm * build.loss_mm + tcfg.lambda_mh * build.loss_mh;
    if (!std::isfinite(joint)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(iter + 1) +
                         "; last-good checkpoint retained at " + checkpoint_path);
    }

    store.zero_grads();
    tape.backward(build.root);
    const double lr = learning_rate_at(static_cast<int>(iter), tcfg.iterations,
                                       tcfg.warmup_iterations, tcfg.base_lr);
    opt.step(store, lr);

    MetricsRecord rec;
    rec.iteration = iter + 1;
    rec.loss = joint;
    rec.loss_mm = build.loss_mm;
    rec.loss_mh = build.loss_mh;
    rec.lr = lr;
    result.metrics.push_back(rec);
    if (metrics_out.is_open()) metrics_out << to_json_line(rec) << "\n";

    const long completed = iter + 1;
    if (!checkpoint_path.empty() &&
        (completed % tcfg.checkpoint_interval == 0 || completed == tcfg.iterations ||
         completed == horizon)) {
      save(completed);
    }
  }

  result.iterations_run = horizon - start_iteration;
  return result;
}

ConceptModel load_concept_model(const std::string& checkpoint_path, const EncoderConfig& ecfg,
                                const ReconNetConfig& ccfg, const ReconNetConfig& mcfg,
                                const std::vector<ModalitySpec>& specs) {
  ConceptModel model{ParamStore<float>{},
                     ConceptNets<float>{},
                     CheckpointHeader{}};
  Rng init_rng(0);
  model.nets = ConceptNets<float>::create(model.store, ecfg, ccfg, mcfg, specs, init_rng);
  model.header = load_checkpoint<float>(checkpoint_path, model.store);
  return model;
}

}  // namespace mcd
