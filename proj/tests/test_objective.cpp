#include <doctest.h>

#include <algorithm>

#include "mcd/concept_objective.hpp"

using namespace mcd;

namespace {

std::vector<ModalitySpec> tiny_specs() {
  return {{"scene", 3, ReconNorm::kL2}, {"hand", 2, ReconNorm::kL2}, {"proprio", 2, ReconNorm::kL1}};
}

template <class S>
ConceptNets<S> tiny_nets(ParamStore<S>& store, std::uint64_t seed, int t_context = 4) {
  EncoderConfig ecfg;
  ecfg.dz = 8;
  ecfg.depth = 1;
  ecfg.heads = 2;
  ecfg.mlp_hidden = 8;
  ecfg.ffn = 16;
  ecfg.t_context = t_context;
  ReconNetConfig rcfg;
  rcfg.depth = 1;
  rcfg.heads = 2;
  rcfg.mlp_hidden = 8;
  rcfg.ffn = 16;
  rcfg.dec_hidden = 8;
  Rng rng(seed);
  return ConceptNets<S>::create(store, ecfg, rcfg, rcfg, tiny_specs(), rng);
}

template <class S>
WindowBatch<S> random_batch(int windows, int t_context, std::uint64_t seed) {
  WindowBatch<S> batch;
  batch.windows = windows;
  batch.t_context = t_context;
  Rng rng(seed);
  for (const auto& m : tiny_specs()) {
    Mat<S> x(windows * t_context, m.dim);
    for (int c = 0; c < m.dim; ++c) {
      for (int r = 0; r < x.rows(); ++r) x(r, c) = static_cast<S>(rng.normal());
    }
    batch.modality.push_back(std::move(x));
  }
  return batch;
}

// epsilon in the middle of the widest gap of pairwise latent distances, so a
// +-h parameter nudge cannot flip a segmentation boundary during finite
// differencing.
double stable_eps(const Eigen::MatrixXd& latents) {
  const auto dist = pairwise_spherical_distances(latents);
  std::vector<double> values{0.0, 1.0};
  for (int i = 0; i < dist.rows(); ++i) {
    for (int j = i + 1; j < dist.cols(); ++j) values.push_back(dist(i, j));
  }
  std::sort(values.begin(), values.end());
  double best = 0.5, width = 0.0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    const double gap = values[k] - values[k - 1];
    if (gap > width) {
      width = gap;
      best = 0.5 * (values[k] + values[k - 1]);
    }
  }
  return best;
}

std::vector<MaskPattern> fixed_masks(int windows, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MaskPattern> masks;
  for (int b = 0; b < windows; ++b) masks.push_back(sample_mask(3, rng));
  return masks;
}

}  // namespace

TEST_CASE("reconstruction predictions match modality dims and are deterministic") {
  ParamStore<double> store;
  auto nets = tiny_nets(store, 1);
  auto batch = random_batch<double>(2, 4, 11);
  const auto masks = fixed_masks(2, 3);
  const std::vector<double> eps{0.4, 0.7};

  Tape<double> t1(&store);
  auto b1 = build_concept_loss(t1, nets, batch, masks, eps, 1.0, 1.0, AblationMode::kFull);
  const auto specs = tiny_specs();
  for (std::size_t m = 0; m < specs.size(); ++m) {
    CHECK(t1.value(b1.cmcn_preds[m]).cols() == specs[m].dim);
    CHECK(t1.value(b1.mhfp_preds[m]).cols() == specs[m].dim);
    CHECK(t1.value(b1.cmcn_preds[m]).rows() == 8);
  }

  Tape<double> t2(&store);
  auto b2 = build_concept_loss(t2, nets, batch, masks, eps, 1.0, 1.0, AblationMode::kFull);
  CHECK(b1.loss_mm == b2.loss_mm);
  CHECK(b1.loss_mh == b2.loss_mh);
}

TEST_CASE("the reported term breakdown is exact") {
  ParamStore<double> store;
  auto nets = tiny_nets(store, 2);
  auto batch = random_batch<double>(2, 4, 12);
  const auto masks = fixed_masks(2, 4);
  const std::vector<double> eps{0.3, 0.9};

  Tape<double> tape(&store);
  auto build = build_concept_loss(tape, nets, batch, masks, eps, 0.7, 1.3, AblationMode::kFull);
  CHECK(tape.scalar_value(build.root) ==
        doctest::Approx(0.7 * build.loss_mm + 1.3 * build.loss_mh).epsilon(1e-12));

  // lambda_mm = 0 reduces the joint loss to the weighted MHFP term exactly
  Tape<double> tape0(&store);
  auto b0 = build_concept_loss(tape0, nets, batch, masks, eps, 0.0, 1.3, AblationMode::kFull);
  CHECK(tape0.scalar_value(b0.root) == 1.3 * tape0.scalar_value(b0.mh_node));
}

TEST_CASE("loss means follow sum-over-modalities, mean-over-rows reduction") {
  ParamStore<double> store;
  auto nets = tiny_nets(store, 3);
  auto batch = random_batch<double>(2, 4, 13);
  const auto masks = fixed_masks(2, 5);
  const std::vector<double> eps{0.5, 0.5};

  Tape<double> tape(&store);
  auto build = build_concept_loss(tape, nets, batch, masks, eps, 1.0, 1.0, AblationMode::kFull);

  const auto specs = tiny_specs();
  double expected = 0.0;
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const auto& pred = tape.value(build.cmcn_preds[m]);
    for (int r = 0; r < pred.rows(); ++r) {
      Eigen::RowVectorXd diff = pred.row(r) - batch.modality[m].row(r);
      expected += specs[m].recon_norm == ReconNorm::kL2 ? diff.norm() : diff.cwiseAbs().sum();
    }
  }
  expected /= 8.0;
  CHECK(build.loss_mm == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mask and norm fixed-point examples") {
  ParamStore<double> store;
  Tape<double> tape(&store);
  Mat<double> pred(1, 2), target(1, 2);
  pred << 3, 4;
  target << 0, 0;
  CHECK(tape.scalar_value(tape.rows_norm_loss(tape.input(pred), target, ReconNorm::kL2)) ==
        doctest::Approx(5.0));
  Mat<double> p1(1, 2), t1(1, 2);
  p1 << 1, -1;
  t1 << 0, 0;
  CHECK(tape.scalar_value(tape.rows_norm_loss(tape.input(p1), t1, ReconNorm::kL1)) ==
        doctest::Approx(2.0));
  CHECK(tape.scalar_value(tape.rows_norm_loss(tape.input(t1), t1, ReconNorm::kL1)) == 0.0);
}

TEST_CASE("all-mask mode zeroes every CMCN input and keeps the concept path alive") {
  ParamStore<double> store;
  auto nets = tiny_nets(store, 4);
  auto batch = random_batch<double>(2, 4, 14);
  const std::vector<double> eps{0.5, 0.5};

  Tape<double> tape(&store);
  auto build =
      build_concept_loss(tape, nets, batch, fixed_masks(2, 6), eps, 1.0, 1.0, AblationMode::kAllMask);

  // reconstruction depends on the concept input: backward from the CMCN term
  // alone must reach the latent node
  store.zero_grads();
  tape.backward(build.mm_node);
  CHECK(tape.grad(build.z).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("next mode forces singleton segments with clamped next-step targets") {
  Eigen::MatrixXd latents(4, 3);
  latents << 1, 0, 0, 0, 1, 0, -1, 0, 0, 0, -1, 0;
  const auto plan = plan_mhfp_targets(AblationMode::kNext, latents, {}, 1, 4, nullptr);
  REQUIRE(plan.segmentations.size() == 1);
  CHECK(plan.segmentations[0].cluster_count() == 4);
  CHECK(plan.target_row == std::vector<int>{1, 2, 3, 3});  // last clamps to T
  for (const double e : plan.eps_rows) CHECK(e == 0.0);
}

TEST_CASE("epsilon one on a sub-unit-diameter window targets the final frame") {
  Eigen::MatrixXd latents(4, 3);
  latents << 1, 0, 0, 0.9, 0.1, 0, 0.8, 0.2, 0, 0.7, 0.3, 0;  // all pairwise < 1
  const auto plan = plan_mhfp_targets(AblationMode::kFull, latents, {1.0}, 1, 4, nullptr);
  REQUIRE(plan.segmentations.size() == 1);
  CHECK(plan.segmentations[0].cluster_count() == 1);
  CHECK(plan.target_row == std::vector<int>{3, 3, 3, 3});
}

TEST_CASE("next-n draws per-timestep horizons within the remaining window") {
  Eigen::MatrixXd latents = Eigen::MatrixXd::Identity(4, 4);
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const auto plan = plan_mhfp_targets(AblationMode::kNextN, latents, {}, 1, 4, &rng);
    for (int o = 0; o < 4; ++o) {
      const int target = plan.target_row[static_cast<std::size_t>(o)];
      CHECK(target >= (o == 3 ? 3 : o + 1));  // n >= 1, except the final step
      CHECK(target <= 3);
    }
    // T - t = 1 forces n = 1 deterministically
    CHECK(plan.target_row[2] == 3);
  }
}

TEST_CASE("mhfp predictions at position t ignore frames after t") {
  ParamStore<double> store;
  auto nets = tiny_nets(store, 5);
  auto batch = random_batch<double>(1, 4, 15);

  auto predict = [&](const WindowBatch<double>& b) {
    Tape<double> tape(&store);
    std::vector<int> inputs;
    for (const auto& m : b.modality) inputs.push_back(tape.input(m));
    const int z_const = tape.input(Mat<double>::Constant(4, 8, 0.35));
    const int eps_in = tape.input(Mat<double>::Constant(4, 1, 0.5));
    const auto preds = nets.mhfp.forward(tape, inputs, z_const, eps_in, 1, "mhfp");
    Mat<double> out = tape.value(preds[0]);
    return out;
  };

  const auto base = predict(batch);
  auto perturbed = batch;
  perturbed.modality[1](3, 0) += 2.0;  // last frame
  const auto after = predict(perturbed);
  CHECK((base.topRows(3) - after.topRows(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.row(3) - after.row(3)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("joint loss gradients match central finite differences") {
  ParamStore<double> store;
  auto nets = tiny_nets(store, 6);
  auto batch = random_batch<double>(2, 4, 16);
  const auto masks = fixed_masks(2, 7);

  // stable epsilons so the discrete target selection cannot flip under +-h
  Eigen::MatrixXd latents;
  {
    Tape<double> tape(&store);
    std::vector<int> inputs;
    for (const auto& m : batch.modality) inputs.push_back(tape.input(m));
    latents = tape.value(nets.encoder.encode(tape, inputs, 2));
  }
  const std::vector<double> eps{stable_eps(latents.topRows(4)),
                                stable_eps(latents.bottomRows(4))};

  auto loss = [&]() {
    Tape<double> tape(&store);
    auto b = build_concept_loss(tape, nets, batch, masks, eps, 1.0, 1.0, AblationMode::kFull);
    return tape.scalar_value(b.root);
  };

  Tape<double> tape(&store);
  auto build = build_concept_loss(tape, nets, batch, masks, eps, 1.0, 1.0, AblationMode::kFull);
  store.zero_grads();
  tape.backward(build.root);
  std::vector<Mat<double>> analytic;
  for (const auto& e : store.entries) analytic.push_back(e.grad);

  Rng pick(99);
  const double h = 1e-5;
  int checked = 0;
  for (std::size_t p = 0; p < store.entries.size(); ++p) {
    auto& value = store.entries[p].value;
    // sample a handful of coordinates per tensor
    const int samples = std::min<int>(3, static_cast<int>(value.size()));
    for (int s = 0; s < samples; ++s) {
      const int r = static_cast<int>(pick.uniform_int(0, value.rows() - 1));
      const int c = static_cast<int>(pick.uniform_int(0, value.cols() - 1));
      const double keep = value(r, c);
      value(r, c) = keep + h;
      const double fp = loss();
      value(r, c) = keep - h;
      const double fm = loss();
      value(r, c) = keep;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[p](r, c);
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      CAPTURE(store.entries[p].name);
      REQUIRE(err < 1e-4);
      checked += 1;
    }
  }
  CHECK(checked > 100);
}
