#include <benchmark/benchmark.h>

#include "mcd/rng.hpp"
#include "mcd/segmentation.hpp"

namespace {

Eigen::MatrixXd walk(int t, int dim, std::uint64_t seed) {
  mcd::Rng rng(seed);
  Eigen::MatrixXd m(t, dim);
  Eigen::VectorXd cur(dim);
  for (int k = 0; k < dim; ++k) cur(k) = rng.normal();
  cur.normalize();
  for (int r = 0; r < t; ++r) {
    for (int k = 0; k < dim; ++k) cur(k) += 0.1 * rng.normal();
    cur.normalize();
    m.row(r) = cur;
  }
  return m;
}

void BM_DeriveSubprocesses(benchmark::State& state) {
  const auto latents = walk(static_cast<int>(state.range(0)), 64, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mcd::derive_subprocesses(latents, 0.2));
  }
}

void BM_PairwiseDistances(benchmark::State& state) {
  const auto latents = walk(static_cast<int>(state.range(0)), 64, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mcd::pairwise_spherical_distances(latents));
  }
}

}  // namespace

BENCHMARK(BM_DeriveSubprocesses)->Arg(20)->Arg(60)->Arg(200);
BENCHMARK(BM_PairwiseDistances)->Arg(20)->Arg(60)->Arg(200);
