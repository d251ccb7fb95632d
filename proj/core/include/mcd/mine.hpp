#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mcd/common.hpp"

namespace mcd {

// Neural mutual-information estimation. Each MI term uses a 2-layer statistic
// network whose hidden width is 1.5x the summed input dims; the Donsker-
// Varadhan bound is maximized over joint samples versus marginal-shuffled
// samples drawn from the same set.
struct MineConfig {
  int iterations = 600;
  int batch = 256;
  double lr = 1e-3;
  double hidden_multiplier = 1.5;
  int restarts = 1;
  int eval_tail = 40;  // final bound = mean over this many trailing evaluations
};

// I(X;Y) in nats, mean over restarts. Rows are samples.
double estimate_mi(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const MineConfig& cfg,
                   std::uint64_t seed);

struct CmiResult {
  double cmi = 0.0;  // I(X:Y) + I(XY:Z) - I(X:Z) - I(Y:Z)
  double term_xy = 0.0;
  double term_xy_z = 0.0;
  double term_xz = 0.0;
  double term_yz = 0.0;
  bool degenerate = false;  // some variable was constant; its terms report 0
};

// Conditional mutual information I(X:Y|Z) via the four-term decomposition.
// Requires at least 1000 aligned samples.
CmiResult estimate_cmi(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const Eigen::MatrixXd& z, const MineConfig& cfg, std::uint64_t seed);

}  // namespace mcd
