#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mcd/common.hpp"

namespace mcd {

// Sub-process derivation over concept latents. Intervals are 1-indexed and
// half-open; a Segmentation of a length-T sequence tiles [1, T+1).

struct Interval {
  int start = 0;
  int end = 0;
  bool operator==(const Interval&) const = default;
};

struct Segmentation {
  std::vector<Interval> intervals;
  double epsilon = 0.0;
  int length = 0;  // T

  int cluster_count() const { return static_cast<int>(intervals.size()); }
  bool operator==(const Segmentation&) const = default;
};

// arccos of the cosine of the angle between z and u, divided by pi; in [0,1].
// Inputs need not be unit norm (the value is scale invariant); zero vectors
// are rejected. The dot product is clamped to [-1,1] before arccos.
double spherical_distance(const Eigen::VectorXd& z, const Eigen::VectorXd& u);

// Greedy left-to-right growth: the current interval absorbs the next latent
// while its distance to every latent already inside stays strictly below
// epsilon. epsilon = 0 therefore yields all singletons.
// `concepts` holds one latent per row (T x D).
Segmentation derive_subprocesses(const Eigen::MatrixXd& concepts, double epsilon);

// Variant over a precomputed pairwise distance matrix (T x T).
Segmentation derive_subprocesses_from_distances(const Eigen::MatrixXd& dist, double epsilon);

Eigen::MatrixXd pairwise_spherical_distances(const Eigen::MatrixXd& concepts);

// Ending timestep of the interval containing t, clamped to T:
// min(T, g_{k+1}) for t in [g_k, g_{k+1}).
int terminal_index(int timestep, const Segmentation& seg);

}  // namespace mcd
