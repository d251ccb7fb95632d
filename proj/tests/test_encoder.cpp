#include <doctest.h>

#include <algorithm>

#include "mcd/concept_objective.hpp"
#include "mcd/env.hpp"
#include "mcd/labeling.hpp"

using namespace mcd;

namespace {

std::vector<ModalitySpec> tiny_specs() {
  return {{"scene", 3, ReconNorm::kL2}, {"hand", 2, ReconNorm::kL2}, {"proprio", 2, ReconNorm::kL1}};
}

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.dz = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_hidden = 8;
  cfg.ffn = 16;
  cfg.t_context = 5;
  return cfg;
}

Mat<double> random_stack(int rows, int cols, Rng& rng) {
  Mat<double> m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("encoded latents are unit norm for random inputs") {
  const auto specs = tiny_specs();
  const auto cfg = tiny_encoder();
  ParamStore<double> store;
  Rng rng(1);
  auto net = EncoderNet<double>::create(store, cfg, specs, rng);

  for (int trial = 0; trial < 100; ++trial) {
    Tape<double> tape(&store);
    std::vector<int> inputs;
    for (const auto& m : specs) inputs.push_back(tape.input(random_stack(cfg.t_context, m.dim, rng)));
    const int z = net.encode(tape, inputs, 1);
    const auto& zv = tape.value(z);
    for (int r = 0; r < zv.rows(); ++r) {
      CHECK(std::abs(zv.row(r).norm() - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("encode is a pure function of window and parameters") {
  const auto specs = tiny_specs();
  const auto cfg = tiny_encoder();
  ParamStore<double> store;
  Rng rng(2);
  auto net = EncoderNet<double>::create(store, cfg, specs, rng);

  std::vector<Mat<double>> data;
  for (const auto& m : specs) data.push_back(random_stack(cfg.t_context, m.dim, rng));

  auto run = [&]() {
    Tape<double> tape(&store);
    std::vector<int> inputs;
    for (const auto& d : data) inputs.push_back(tape.input(d));
    return Mat<double>(tape.value(net.encode(tape, inputs, 1)));
  };
  CHECK(run() == run());
}

TEST_CASE("non-causal attention makes every latent sensitive to every frame") {
  const auto specs = tiny_specs();
  const auto cfg = tiny_encoder();
  ParamStore<double> store;
  Rng rng(3);
  auto net = EncoderNet<double>::create(store, cfg, specs, rng);

  std::vector<Mat<double>> data;
  for (const auto& m : specs) data.push_back(random_stack(cfg.t_context, m.dim, rng));

  auto encode_with = [&](const std::vector<Mat<double>>& frames) {
    Tape<double> tape(&store);
    std::vector<int> inputs;
    for (const auto& d : frames) inputs.push_back(tape.input(d));
    return Mat<double>(tape.value(net.encode(tape, inputs, 1)));
  };

  const auto base = encode_with(data);
  auto perturbed = data;
  perturbed[0](3, 1) += 0.5;  // frame t'=4 only
  const auto after = encode_with(perturbed);
  for (int t = 0; t < cfg.t_context; ++t) {
    if (t == 3) continue;
    CHECK((base.row(t) - after.row(t)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("frame embedding is the sum of per-modality MLPs") {
  const auto specs = tiny_specs();
  const auto cfg = tiny_encoder();

  SUBCASE("zero frame with zero-initialized parameters maps to zero") {
    ParamStore<double> store;
    Rng rng(4);
    auto net = EncoderNet<double>::create(store, cfg, specs, rng);
    for (auto& e : store.entries) e.value.setZero();
    Tape<double> tape(&store);
    std::vector<int> inputs;
    for (const auto& m : specs) inputs.push_back(tape.input(Mat<double>::Zero(4, m.dim)));
    const int h = net.embed_frames(tape, inputs);
    CHECK(tape.value(h).cwiseAbs().maxCoeff() == 0.0);
    CHECK(tape.value(h).cols() == cfg.dz);
  }

  SUBCASE("permuting modality order with matched parameters is a no-op") {
    ParamStore<double> store;
    Rng rng(5);
    auto net = EncoderNet<double>::create(store, cfg, specs, rng);

    std::vector<Mat<double>> data;
    for (const auto& m : specs) data.push_back(random_stack(4, m.dim, rng));

    Tape<double> t1(&store);
    std::vector<int> in1;
    for (const auto& d : data) in1.push_back(t1.input(d));
    const auto direct = Mat<double>(t1.value(net.embed_frames(t1, in1)));

    // same parameters, modalities visited in reverse order
    EncoderNet<double> reversed = net;
    std::reverse(reversed.embeds.begin(), reversed.embeds.end());
    std::vector<Mat<double>> rdata(data.rbegin(), data.rend());
    Tape<double> t2(&store);
    std::vector<int> in2;
    for (const auto& d : rdata) in2.push_back(t2.input(d));
    const auto swapped = Mat<double>(t2.value(reversed.embed_frames(t2, in2)));

    CHECK((direct - swapped).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("label_dataset matches per-slot encoding and keeps unit norms") {
  EnvSpec spec;
  spec.noise_scale = 0.003;
  auto ds = generate_demonstrations(spec, {1.0, 0.0, 0.0}, 4, 5);

  EncoderConfig ecfg;
  ecfg.dz = 16;
  ecfg.depth = 1;
  ecfg.heads = 2;
  ecfg.mlp_hidden = 16;
  ecfg.ffn = 32;
  ecfg.t_context = 12;
  ReconNetConfig rcfg;
  rcfg.depth = 1;
  rcfg.heads = 2;
  rcfg.mlp_hidden = 16;
  rcfg.ffn = 32;
  rcfg.dec_hidden = 16;

  ConceptModel model{ParamStore<float>{}, ConceptNets<float>{}, CheckpointHeader{}};
  Rng rng(9);
  model.nets = ConceptNets<float>::create(model.store, ecfg, rcfg, rcfg, ds.modalities, rng);

  const auto labels = label_dataset(ds, model);
  REQUIRE(labels.size() == ds.demos.size());

  for (std::size_t d = 0; d < ds.demos.size(); ++d) {
    REQUIRE(labels[d].rows() == ds.demos[d].length);
    for (int t = 0; t < labels[d].rows(); ++t) {
      CHECK(std::abs(labels[d].row(t).norm() - 1.0f) < 1e-5f);
    }
  }

  // spot check: a tail timestep must come from the final window at its offset
  const auto& demo = ds.demos[0];
  const int t_probe = demo.length;
  const auto slot = labeling_slot(demo.length, ecfg.t_context, t_probe, 0);
  std::span<const Window> span(&slot.window, 1);
  auto batch = assemble_windows<float>(ds, span, ecfg.t_context);
  Tape<float> tape(&model.store);
  std::vector<int> inputs;
  for (const auto& m : batch.modality) inputs.push_back(tape.input(m));
  const int z = model.nets.encoder.encode(tape, inputs, 1);
  const Eigen::RowVectorXf expected = tape.value(z).row(slot.offset);
  CHECK((labels[0].row(t_probe - 1) - expected).cwiseAbs().maxCoeff() < 1e-6f);
}
