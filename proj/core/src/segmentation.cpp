#include "mcd/segmentation.hpp"

#include <algorithm>
#include <cmath>

namespace mcd {

namespace {

constexpr double kPi = 3.14159265358979323846;

double row_norm_checked(const Eigen::MatrixXd& m, int row) {
  const double n = m.row(row).norm();
  if (n <= 0.0) throw ValidationError("spherical distance undefined for zero vector");
  return n;
}

}  // namespace

double spherical_distance(const Eigen::VectorXd& z, const Eigen::VectorXd& u) {
  const double nz = z.norm();
  const double nu = u.norm();
  if (nz <= 0.0 || nu <= 0.0) {
    throw ValidationError("spherical distance undefined for zero vector");
  }
  const double cosine = std::clamp(z.dot(u) / (nz * nu), -1.0, 1.0);
  return std::acos(cosine) / kPi;
}

Eigen::MatrixXd pairwise_spherical_distances(const Eigen::MatrixXd& concepts) {
  const int t = static_cast<int>(concepts.rows());
  Eigen::VectorXd norms(t);
  for (int i = 0; i < t; ++i) norms(i) = row_norm_checked(concepts, i);

  Eigen::MatrixXd gram = concepts * concepts.transpose();
  Eigen::MatrixXd dist(t, t);
  for (int i = 0; i < t; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < t; ++j) {
      const double cosine = std::clamp(gram(i, j) / (norms(i) * norms(j)), -1.0, 1.0);
      const double d = std::acos(cosine) / kPi;
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

Segmentation derive_subprocesses_from_distances(const Eigen::MatrixXd& dist, double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) throw ValidationError("epsilon must be in [0,1]");
  const int t = static_cast<int>(dist.rows());
  Segmentation seg;
  seg.epsilon = epsilon;
  seg.length = t;

  int begin = 1;
  while (begin <= t) {
    int end = begin + 1;
    while (end <= t) {
      bool breaks = false;
      for (int u = begin; u < end; ++u) {
        if (dist(u - 1, end - 1) >= epsilon) {
          breaks = true;
          break;
        }
      }
      if (breaks) break;
      end += 1;
    }
    seg.intervals.push_back({begin, end});
    begin = end;
  }
  return seg;
}

Segmentation derive_subprocesses(const Eigen::MatrixXd& concepts, double epsilon) {
  return derive_subprocesses_from_distances(pairwise_spherical_distances(concepts), epsilon);
}

int terminal_index(int timestep, const Segmentation& seg) {
  if (timestep < 1 || timestep > seg.length) {
    throw ValidationError("terminal_index: timestep out of range");
  }
  for (const auto& iv : seg.intervals) {
    if (timestep >= iv.start && timestep < iv.end) {
      return std::min(seg.length, iv.end);
    }
  }
  throw ValidationError("terminal_index: segmentation does not cover timestep");
}

}  // namespace mcd
