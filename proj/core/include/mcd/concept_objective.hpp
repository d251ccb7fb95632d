#pragma once

#include <span>
#include <string>
#include <vector>

#include "mcd/mask.hpp"
#include "mcd/nets.hpp"
#include "mcd/segmentation.hpp"
#include "mcd/types.hpp"

namespace mcd {

enum class AblationMode { kFull, kAllMask, kNext, kNextN };

inline const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kFull: return "full";
    case AblationMode::kAllMask: return "all-mask";
    case AblationMode::kNext: return "next";
    case AblationMode::kNextN: return "next-n";
  }
  return "?";
}

inline AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "full") return AblationMode::kFull;
  if (s == "all-mask") return AblationMode::kAllMask;
  if (s == "next") return AblationMode::kNext;
  if (s == "next-n") return AblationMode::kNextN;
  throw ValidationError("unknown ablation mode: " + s);
}

// Encoder plus both heads over one shared parameter store.
template <class S>
struct ConceptNets {
  EncoderConfig encoder_cfg;
  ReconNetConfig cmcn_cfg;
  ReconNetConfig mhfp_cfg;
  std::vector<ModalitySpec> specs;
  EncoderNet<S> encoder;
  ReconNet<S> cmcn;
  ReconNet<S> mhfp;

  static ConceptNets create(ParamStore<S>& store, const EncoderConfig& ecfg,
                            const ReconNetConfig& ccfg, const ReconNetConfig& mcfg,
                            const std::vector<ModalitySpec>& specs, Rng& rng) {
    ConceptNets nets;
    nets.encoder_cfg = ecfg;
    nets.cmcn_cfg = ccfg;
    nets.mhfp_cfg = mcfg;
    nets.specs = specs;
    nets.encoder = EncoderNet<S>::create(store, ecfg, specs, rng);
    nets.cmcn = ReconNet<S>::create(store, "cmcn", ccfg, ecfg.dz, ecfg.t_context, specs,
                                    /*causal=*/false, /*with_eps=*/false, rng);
    nets.mhfp = ReconNet<S>::create(store, "mhfp", mcfg, ecfg.dz, ecfg.t_context, specs,
                                    /*causal=*/true, /*with_eps=*/true, rng);
    return nets;
  }
};

// A batch of fixed-length windows, stacked row-wise: row b*T + o holds the
// frame at offset o of window b. Padded offsets repeat the demo's final frame.
template <class S>
struct WindowBatch {
  int windows = 0;
  int t_context = 0;
  std::vector<Mat<S>> modality;
  std::vector<Window> meta;

  int rows() const { return windows * t_context; }
};

template <class S>
WindowBatch<S> assemble_windows(const Dataset& ds, std::span<const Window> windows,
                                int t_context) {
  WindowBatch<S> batch;
  batch.windows = static_cast<int>(windows.size());
  batch.t_context = t_context;
  batch.meta.assign(windows.begin(), windows.end());
  const int rows = batch.rows();
  for (int m = 0; m < ds.modality_count(); ++m) {
    batch.modality.emplace_back(rows, ds.modalities[static_cast<std::size_t>(m)].dim);
  }
  for (int b = 0; b < batch.windows; ++b) {
    const auto& w = windows[static_cast<std::size_t>(b)];
    const auto& demo = ds.demos[static_cast<std::size_t>(w.demo_index)];
    for (int o = 0; o < t_context; ++o) {
      const int timestep = std::min(w.start + o, demo.length);
      for (int m = 0; m < ds.modality_count(); ++m) {
        const int dim = ds.modalities[static_cast<std::size_t>(m)].dim;
        const auto row = demo.modality_row(m, timestep - 1, dim);
        for (int k = 0; k < dim; ++k) {
          batch.modality[static_cast<std::size_t>(m)](b * t_context + o, k) =
              static_cast<S>(row[static_cast<std::size_t>(k)]);
        }
      }
    }
  }
  return batch;
}

template <class S>
struct ConceptLossBuild {
  int root = -1;
  int z = -1;
  int mm_node = -1;  // mean CMCN term, before weighting
  int mh_node = -1;  // mean MHFP term, before weighting
  double loss_mm = 0.0;  // unweighted means
  double loss_mh = 0.0;
  double joint() const { return loss_mm_weight * loss_mm + loss_mh_weight * loss_mh; }
  double loss_mm_weight = 1.0;
  double loss_mh_weight = 1.0;
  std::vector<int> cmcn_preds;
  std::vector<int> mhfp_preds;
  std::vector<Segmentation> segmentations;  // per window (full/next modes)
};

// Target frame and coherence input for every stacked row of a batch.
struct MhfpPlan {
  std::vector<int> target_row;           // stacked row index of each row's goal
  std::vector<double> eps_rows;          // value fed to the coherence channel
  std::vector<Segmentation> segmentations;
};

// Decides terminal targets per mode. `latents` are the current encoder
// outputs (values only; selection is discrete and carries no gradient).
inline MhfpPlan plan_mhfp_targets(AblationMode mode, const Eigen::MatrixXd& latents,
                                  const std::vector<double>& eps_per_window, int windows,
                                  int t, Rng* next_n_rng) {
  MhfpPlan plan;
  const int rows = windows * t;
  plan.target_row.resize(static_cast<std::size_t>(rows));
  plan.eps_rows.resize(static_cast<std::size_t>(rows));
  if (mode == AblationMode::kNextN) {
    if (next_n_rng == nullptr) throw ValidationError("next-n mode needs an rng");
    for (int b = 0; b < windows; ++b) {
      for (int o = 0; o < t; ++o) {
        const int remaining = t - (o + 1);
        const int n =
            remaining >= 1 ? static_cast<int>(next_n_rng->uniform_int(1, remaining)) : 0;
        plan.target_row[static_cast<std::size_t>(b * t + o)] = b * t + o + n;
        plan.eps_rows[static_cast<std::size_t>(b * t + o)] = static_cast<double>(n) / t;
      }
    }
    return plan;
  }
  for (int b = 0; b < windows; ++b) {
    const double eps =
        mode == AblationMode::kNext ? 0.0 : eps_per_window[static_cast<std::size_t>(b)];
    const Segmentation seg = derive_subprocesses(latents.middleRows(b * t, t), eps);
    for (int o = 0; o < t; ++o) {
      const int goal = terminal_index(o + 1, seg);  // window-local, 1-indexed
      plan.target_row[static_cast<std::size_t>(b * t + o)] = b * t + (goal - 1);
      plan.eps_rows[static_cast<std::size_t>(b * t + o)] = eps;
    }
    plan.segmentations.push_back(seg);
  }
  return plan;
}

// One Algorithm-2 pass over a window batch: encode, mask-and-reconstruct,
// segment the current latents, predict terminal observations. Ablations
// substitute one term and leave everything else unchanged:
//   all-mask  every modality masked in the CMCN input
//   next      coherence forced to 0, so targets are next-step (clamped)
//   next-n    per-timestep horizon n ~ U{1..T-t}; n/T feeds the eps channel
template <class S>
ConceptLossBuild<S> build_concept_loss(Tape<S>& tape, const ConceptNets<S>& nets,
                                       const WindowBatch<S>& batch,
                                       const std::vector<MaskPattern>& masks,
                                       const std::vector<double>& eps_per_window,
                                       double lambda_mm, double lambda_mh, AblationMode mode,
                                       Rng* next_n_rng = nullptr) {
  const int b_count = batch.windows;
  const int t = batch.t_context;
  const int rows = batch.rows();
  const int m_count = static_cast<int>(nets.specs.size());
  if (mode == AblationMode::kFull || mode == AblationMode::kAllMask) {
    if (static_cast<int>(eps_per_window.size()) != b_count) {
      throw ValidationError("build_concept_loss: need one epsilon per window");
    }
  }
  if (mode != AblationMode::kAllMask && static_cast<int>(masks.size()) != b_count) {
    if (mode == AblationMode::kFull || mode == AblationMode::kNext ||
        mode == AblationMode::kNextN) {
      throw ValidationError("build_concept_loss: need one mask per window");
    }
  }

  ConceptLossBuild<S> out;
  out.loss_mm_weight = lambda_mm;
  out.loss_mh_weight = lambda_mh;

  std::vector<int> clean_inputs;
  for (int m = 0; m < m_count; ++m) {
    clean_inputs.push_back(tape.input(batch.modality[static_cast<std::size_t>(m)]));
  }

  out.z = nets.encoder.encode(tape, clean_inputs, b_count);

  // CMCN path. Masks are applied to a data copy; targets are the clean frames.
  std::vector<int> masked_inputs;
  for (int m = 0; m < m_count; ++m) {
    Mat<S> masked = batch.modality[static_cast<std::size_t>(m)];
    for (int b = 0; b < b_count; ++b) {
      const bool hide = mode == AblationMode::kAllMask ||
                        masks[static_cast<std::size_t>(b)].masked[static_cast<std::size_t>(m)];
      if (hide) masked.middleRows(b * t, t).setZero();
    }
    masked_inputs.push_back(tape.input(std::move(masked)));
  }
  out.cmcn_preds = nets.cmcn.forward(tape, masked_inputs, out.z, -1, b_count, "cmcn");

  int mm_sum = -1;
  for (int m = 0; m < m_count; ++m) {
    const int term =
        tape.rows_norm_loss(out.cmcn_preds[static_cast<std::size_t>(m)],
                            batch.modality[static_cast<std::size_t>(m)],
                            nets.specs[static_cast<std::size_t>(m)].recon_norm);
    mm_sum = mm_sum < 0 ? term : tape.add(mm_sum, term);
  }
  const int mm_mean = tape.scale(mm_sum, static_cast<S>(1.0 / rows));
  out.loss_mm = static_cast<double>(tape.scalar_value(mm_mean));

  // MHFP path: choose the target frame for every stacked row.
  const Eigen::MatrixXd latents = tape.value(out.z).template cast<double>();
  const MhfpPlan plan = plan_mhfp_targets(mode, latents, eps_per_window, b_count, t, next_n_rng);
  out.segmentations = plan.segmentations;
  const auto& target_row = plan.target_row;

  Mat<S> eps_rows(rows, 1);
  for (int r = 0; r < rows; ++r) {
    eps_rows(r, 0) = static_cast<S>(plan.eps_rows[static_cast<std::size_t>(r)]);
  }
  const int eps_node = tape.input(std::move(eps_rows));
  out.mhfp_preds = nets.mhfp.forward(tape, clean_inputs, out.z, eps_node, b_count, "mhfp");

  int mh_sum = -1;
  for (int m = 0; m < m_count; ++m) {
    const auto& source = batch.modality[static_cast<std::size_t>(m)];
    Mat<S> target(rows, source.cols());
    for (int r = 0; r < rows; ++r) {
      target.row(r) = source.row(target_row[static_cast<std::size_t>(r)]);
    }
    const int term = tape.rows_norm_loss(out.mhfp_preds[static_cast<std::size_t>(m)],
                                         std::move(target),
                                         nets.specs[static_cast<std::size_t>(m)].recon_norm);
    mh_sum = mh_sum < 0 ? term : tape.add(mh_sum, term);
  }
  const int mh_mean = tape.scale(mh_sum, static_cast<S>(1.0 / rows));
  out.loss_mh = static_cast<double>(tape.scalar_value(mh_mean));

  out.mm_node = mm_mean;
  out.mh_node = mh_mean;
  out.root = tape.add(tape.scale(mm_mean, static_cast<S>(lambda_mm)),
                      tape.scale(mh_mean, static_cast<S>(lambda_mh)));
  return out;
}

}  // namespace mcd
