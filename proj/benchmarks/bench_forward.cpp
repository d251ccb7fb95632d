#include <benchmark/benchmark.h>

#include "mcd/concept_objective.hpp"

namespace {

using namespace mcd;

std::vector<ModalitySpec> specs() {
  return {{"scene", 12, ReconNorm::kL2},
          {"hand", 8, ReconNorm::kL2},
          {"proprio", 3, ReconNorm::kL1}};
}

void BM_EncoderForward(benchmark::State& state) {
  const int windows = static_cast<int>(state.range(0));
  EncoderConfig cfg;  // desk-scale defaults
  ParamStore<float> store;
  Rng rng(1);
  auto net = EncoderNet<float>::create(store, cfg, specs(), rng);

  std::vector<Mat<float>> data;
  for (const auto& m : specs()) {
    Mat<float> x(windows * cfg.t_context, m.dim);
    for (int c = 0; c < m.dim; ++c) {
      for (int r = 0; r < x.rows(); ++r) x(r, c) = static_cast<float>(rng.normal());
    }
    data.push_back(std::move(x));
  }

  for (auto _ : state) {
    Tape<float> tape(&store);
    std::vector<int> inputs;
    for (const auto& d : data) inputs.push_back(tape.input(d));
    benchmark::DoNotOptimize(net.encode(tape, inputs, windows));
  }
}

}  // namespace

BENCHMARK(BM_EncoderForward)->Arg(1)->Arg(8)->Arg(32);
