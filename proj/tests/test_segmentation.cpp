#include <doctest.h>

#include <cmath>

#include "mcd/rng.hpp"
#include "mcd/segmentation.hpp"

using namespace mcd;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd unit2(double angle_deg) {
  Eigen::VectorXd v(2);
  v << std::cos(angle_deg * kPi / 180.0), std::sin(angle_deg * kPi / 180.0);
  return v;
}

// Independent re-implementation used as the oracle: for every candidate
// extension it re-checks all pairwise distances from scratch.
Segmentation brute_force_segmentation(const Eigen::MatrixXd& dist, double epsilon) {
  const int t = static_cast<int>(dist.rows());
  Segmentation seg;
  seg.epsilon = epsilon;
  seg.length = t;
  int start = 1;
  while (start <= t) {
    int best_end = start + 1;
    for (int candidate_end = start + 1; candidate_end <= t + 1; ++candidate_end) {
      bool coherent = true;
      for (int a = start; a < candidate_end && coherent; ++a) {
        for (int b = start; b < candidate_end && coherent; ++b) {
          if (a != b && dist(a - 1, b - 1) >= epsilon) coherent = false;
        }
      }
      if (coherent) {
        best_end = candidate_end;
      } else {
        break;
      }
    }
    seg.intervals.push_back({start, best_end});
    start = best_end;
  }
  return seg;
}

// Mix of sphere random-walk stretches and jumps, so intervals of many sizes
// appear.
Eigen::MatrixXd random_latents(int t, int dim, Rng& rng) {
  Eigen::MatrixXd m(t, dim);
  Eigen::VectorXd current(dim);
  for (int k = 0; k < dim; ++k) current(k) = rng.normal();
  current.normalize();
  for (int r = 0; r < t; ++r) {
    if (rng.uniform01() < 0.15) {
      for (int k = 0; k < dim; ++k) current(k) = rng.normal();
    } else {
      for (int k = 0; k < dim; ++k) current(k) += 0.15 * rng.normal();
    }
    current.normalize();
    m.row(r) = current;
  }
  return m;
}

}  // namespace

TEST_CASE("spherical distance fixed points") {
  Eigen::VectorXd z(3), u(3);
  z << 1, 0, 0;
  CHECK(spherical_distance(z, z) == doctest::Approx(0.0));
  u << 0, 1, 0;
  CHECK(spherical_distance(z, u) == doctest::Approx(0.5));
  u << -1, 0, 0;
  CHECK(spherical_distance(z, u) == doctest::Approx(1.0));
  Eigen::VectorXd a(2), b(2);
  a << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  b << 1, 0;
  CHECK(spherical_distance(a, b) == doctest::Approx(0.25));
}

TEST_CASE("spherical distance rejects zero vectors and clamps cosines") {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd u = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(spherical_distance(z, u), ValidationError);
  // parallel vectors whose dot product can exceed 1 in floating point
  Eigen::VectorXd v(3);
  v << 0.1 + 0.2, 0.3, 0.4;  // 0.1+0.2 != 0.3 exactly
  CHECK(spherical_distance(v, v) == doctest::Approx(0.0));
}

TEST_CASE("spherical distance is scale invariant, hence so is the segmentation") {
  Rng rng(41);
  auto latents = random_latents(24, 8, rng);
  const auto seg = derive_subprocesses(latents, 0.3);
  Eigen::MatrixXd scaled = latents;
  for (int r = 0; r < scaled.rows(); ++r) scaled.row(r) *= 0.5 + rng.uniform01() * 10.0;
  CHECK(derive_subprocesses(scaled, 0.3) == seg);
}

TEST_CASE("hand-traced segmentation on the unit circle") {
  Eigen::MatrixXd latents(5, 2);
  const double angles[5] = {0, 10, 20, 80, 85};
  for (int i = 0; i < 5; ++i) latents.row(i) = unit2(angles[i]).transpose();
  // pairwise distance is angle difference / 180; 80 vs 0 gives 0.444 >= 0.2
  const auto seg = derive_subprocesses(latents, 0.2);
  REQUIRE(seg.intervals.size() == 2);
  CHECK(seg.intervals[0] == Interval{1, 4});
  CHECK(seg.intervals[1] == Interval{4, 6});
}

TEST_CASE("epsilon zero yields singletons, constant sequences one interval") {
  Rng rng(5);
  const auto latents = random_latents(17, 4, rng);
  const auto singles = derive_subprocesses(latents, 0.0);
  CHECK(singles.cluster_count() == 17);

  Eigen::MatrixXd constant(9, 4);
  for (int r = 0; r < 9; ++r) constant.row(r) = latents.row(0);
  for (const double eps : {0.05, 0.3, 1.0}) {
    CHECK(derive_subprocesses(constant, eps).cluster_count() == 1);
  }
}

TEST_CASE("greedy segmentation matches the brute-force oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 120; ++trial) {
    const int t = 2 + static_cast<int>(rng.uniform_int(0, 38));
    const int dim = trial % 3 == 0 ? 2 : (trial % 3 == 1 ? 8 : 64);
    const auto latents = random_latents(t, dim, rng);
    const auto dist = pairwise_spherical_distances(latents);
    for (int e = 0; e <= 10; ++e) {
      const double eps = e / 10.0;
      const auto fast = derive_subprocesses_from_distances(dist, eps);
      const auto slow = brute_force_segmentation(dist, eps);
      REQUIRE(fast == slow);
    }
  }
}

TEST_CASE("terminal index examples and bounds") {
  Segmentation seg;
  seg.length = 5;
  seg.intervals = {{1, 4}, {4, 6}};
  CHECK(terminal_index(2, seg) == 4);
  CHECK(terminal_index(5, seg) == 5);  // min(5, 6)
  CHECK(terminal_index(3, seg) == 4);
  CHECK_THROWS_AS(terminal_index(0, seg), ValidationError);
  CHECK_THROWS_AS(terminal_index(6, seg), ValidationError);

  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = 2 + static_cast<int>(rng.uniform_int(0, 30));
    const auto latents = random_latents(t, 8, rng);
    const auto s = derive_subprocesses(latents, rng.uniform01());
    for (int tt = 1; tt < t; ++tt) {
      const int g = terminal_index(tt, s);
      CHECK(g >= tt + 1);
      CHECK(g <= t);
    }
    CHECK(terminal_index(t, s) == t);
  }
}

TEST_CASE("interval boundaries dominate monotonically in epsilon") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const int t = 3 + static_cast<int>(rng.uniform_int(0, 27));
    const auto latents = random_latents(t, 8, rng);
    const auto dist = pairwise_spherical_distances(latents);
    Segmentation previous;
    for (int e = 0; e <= 10; ++e) {
      const auto seg = derive_subprocesses_from_distances(dist, e / 10.0);
      if (e > 0) {
        CHECK(seg.cluster_count() <= previous.cluster_count());
        for (std::size_t k = 0; k < seg.intervals.size(); ++k) {
          CHECK(seg.intervals[k].start >= previous.intervals[k].start);
        }
      }
      previous = seg;
    }
  }
}

TEST_CASE("segmentation tiles the full timeline and stays coherent inside") {
  Rng rng(123);
  for (int trial = 0; trial < 40; ++trial) {
    const int t = 2 + static_cast<int>(rng.uniform_int(0, 40));
    const auto latents = random_latents(t, 8, rng);
    const double eps = rng.uniform01();
    const auto dist = pairwise_spherical_distances(latents);
    const auto seg = derive_subprocesses_from_distances(dist, eps);
    int cursor = 1;
    for (const auto& iv : seg.intervals) {
      CHECK(iv.start == cursor);
      CHECK(iv.end > iv.start);
      cursor = iv.end;
      for (int a = iv.start; a < iv.end; ++a) {
        for (int b = iv.start; b < iv.end; ++b) {
          if (a != b) CHECK(dist(a - 1, b - 1) < eps);
        }
      }
    }
    CHECK(cursor == t + 1);
  }
}
