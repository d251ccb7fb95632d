#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mcd/labeling.hpp"
#include "mcd/segmentation.hpp"
#include "mcd/trainer.hpp"

namespace mcd {

struct ConceptGroup {
  std::string label;
  Eigen::MatrixXd members;  // one latent per row

  void validate() const {
    if (members.rows() == 0) throw ValidationError("concept group '" + label + "' is empty");
  }
};

// Mean pairwise cosine similarity between groups (all pairs, including
// self-pairs on the diagonal). Symmetric, entries in [-1, 1].
Eigen::MatrixXd class_similarity(const std::vector<ConceptGroup>& groups);

// Fraction of rows whose maximum sits on the diagonal.
double diagonal_row_max_fraction(const Eigen::MatrixXd& similarity);

// Latents pooled by ground-truth segment label across demos.
std::vector<ConceptGroup> group_by_gt_segments(const Dataset& dataset,
                                               const ConceptLabels& labels);

// Latents grouped per motion axis: left-right, forward-backward and gripper,
// each with a direction pair plus "still". A step is still on an axis when its
// |velocity| is strictly below 20% of the axis maximum over the dataset.
std::vector<ConceptGroup> group_by_motion(const Dataset& dataset, const ConceptLabels& labels);

// Density clustering with min-points 1 (so no point is noise): cluster count
// per eps equals the number of connected components of the eps-neighborhood
// graph under Euclidean distance.
std::vector<int> diversity_sweep(const Eigen::MatrixXd& latents,
                                 const std::vector<double>& eps_grid);

struct HierarchyDemoReport {
  int demo_index = 0;
  std::vector<Segmentation> per_eps;  // aligned with the (ascending) eps list
  double boundary_agreement = 0.0;    // best over eps; 0 when no gt present
  double best_eps = 0.0;
  bool k_non_increasing = true;
};

HierarchyDemoReport hierarchy_demo_report(const Eigen::MatrixXf& demo_labels,
                                          const std::vector<double>& eps_list,
                                          const std::vector<GtSegment>& gt, int demo_index);

nlohmann::json hierarchy_report_json(const HierarchyDemoReport& r);

// Fraction of gt boundaries within +-tolerance steps of a predicted boundary.
double boundary_agreement(const Segmentation& seg, const std::vector<GtSegment>& gt,
                          int tolerance = 2);

struct GalleryRow {
  double eps = 0.0;
  int timestep = 0;        // absolute, 1-indexed
  int terminal = 0;        // absolute, 1-indexed
  double prediction_error = 0.0;            // summed per-modality norms
  std::vector<double> per_modality_error;
  std::vector<std::vector<double>> predicted;  // per modality
};

// Multi-horizon goal predictions for selected timesteps of one demo. Terminal
// targets follow the window-level segmentation the predictor was trained
// against.
std::vector<GalleryRow> goal_gallery(const Dataset& dataset, const ConceptModel& model,
                                     int demo_index, const std::vector<double>& eps_list,
                                     const std::vector<int>& timesteps);

std::string gallery_to_csv(const std::vector<GalleryRow>& rows);

// Aligned (X, Y, Z) = (modality a, modality b, concept latent) samples pooled
// over demos and timesteps, deterministically subsampled.
struct CmiSamples {
  Eigen::MatrixXd x, y, z;
};
CmiSamples collect_cmi_samples(const Dataset& dataset, const ConceptLabels& labels,
                               int modality_a, int modality_b, int max_samples,
                               std::uint64_t seed);

}  // namespace mcd
