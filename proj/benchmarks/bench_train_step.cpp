#include <benchmark/benchmark.h>

#include "mcd/env.hpp"
#include "mcd/optim.hpp"
#include "mcd/trainer.hpp"

namespace {

using namespace mcd;

// One full training iteration at desk scale: batch assembly, forward,
// backward, optimizer step.
void BM_TrainIteration(benchmark::State& state) {
  EnvSpec spec;
  const auto ds = generate_demonstrations(spec, {0.5, 0.5, 0.0}, 16, 3);
  EncoderConfig ecfg;  // defaults
  ReconNetConfig rcfg;

  ParamStore<float> store;
  Rng rng(4);
  auto nets = ConceptNets<float>::create(store, ecfg, rcfg, rcfg, ds.modalities, rng);
  AdamW<float> opt({1e-3, 0.9, 0.95, 1e-8, 1e-3});

  std::vector<Window> windows;
  for (std::size_t d = 0; d < ds.demos.size(); ++d) {
    auto ws = make_windows(ds.demos[d].length, ecfg.t_context, WindowMode::kTraining,
                           static_cast<int>(d));
    windows.insert(windows.end(), ws.begin(), ws.end());
  }
  const int batch_size = static_cast<int>(state.range(0));

  long iter = 0;
  for (auto _ : state) {
    std::vector<Window> picks;
    for (int b = 0; b < batch_size; ++b) {
      picks.push_back(windows[static_cast<std::size_t>((iter * batch_size + b) % windows.size())]);
    }
    auto batch = assemble_windows<float>(ds, picks, ecfg.t_context);
    Rng mask_rng(derive_seed(9, "mask", static_cast<std::uint64_t>(iter)));
    Rng eps_rng(derive_seed(9, "eps", static_cast<std::uint64_t>(iter)));
    std::vector<MaskPattern> masks;
    std::vector<double> eps;
    for (int b = 0; b < batch_size; ++b) {
      masks.push_back(sample_mask(3, mask_rng));
      eps.push_back(eps_rng.uniform01());
    }
    Tape<float> tape(&store);
    auto build = build_concept_loss(tape, nets, batch, masks, eps, 1.0, 1.0, AblationMode::kFull);
    store.zero_grads();
    tape.backward(build.root);
    opt.step(store, 1e-3);
    iter += 1;
  }
}

}  // namespace

BENCHMARK(BM_TrainIteration)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
