#include <doctest.h>

#include <cstdio>

#include "mcd/env.hpp"
#include "mcd/policy.hpp"

using namespace mcd;

namespace {

Dataset tiny_dataset(std::uint64_t seed, int demos = 6) {
  EnvSpec spec;
  spec.noise_scale = 0.003;
  return generate_demonstrations(spec, {0.5, 0.5, 0.0}, demos, seed);
}

PolicyConfig tiny_policy() {
  PolicyConfig cfg;
  cfg.depth = 3;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.mlp_hidden = 16;
  cfg.ffn = 32;
  cfg.head_hidden = 16;
  cfg.obs_window = 3;
  cfg.chunk = 4;
  cfg.concept_layer = 1;
  cfg.lambda_mc = 0.1;
  return cfg;
}

ConceptLabels random_labels(const Dataset& ds, int dz, std::uint64_t seed) {
  Rng rng(seed);
  ConceptLabels labels;
  for (const auto& demo : ds.demos) {
    Eigen::MatrixXf m(demo.length, dz);
    for (int r = 0; r < demo.length; ++r) {
      for (int c = 0; c < dz; ++c) m(r, c) = static_cast<float>(rng.normal());
      m.row(r).normalize();
    }
    labels.push_back(std::move(m));
  }
  return labels;
}

struct ForwardResult {
  Mat<double> actions;
  Mat<double> concepts;
};

ForwardResult run_forward(ParamStore<double>& store, const PolicyNet<double>& net,
                          std::uint64_t data_seed) {
  Rng rng(data_seed);
  Tape<double> tape(&store);
  std::vector<int> inputs;
  for (const auto& spec : net.specs) {
    Mat<double> x(net.cfg.obs_window, spec.dim);
    for (int c = 0; c < spec.dim; ++c) {
      for (int r = 0; r < x.rows(); ++r) x(r, c) = rng.normal();
    }
    inputs.push_back(tape.input(std::move(x)));
  }
  const auto fwd = net.forward(tape, inputs, {0});
  return {tape.value(fwd.actions), tape.value(fwd.concepts)};
}

}  // namespace

TEST_CASE("policy forward emits chunked actions and concepts of the right shape") {
  const auto ds = tiny_dataset(1);
  ParamStore<double> store;
  Rng rng(2);
  auto net = PolicyNet<double>::create(store, tiny_policy(), ds.modalities, ds.action_dim, 12,
                                       {"single-place", "two-stage"}, rng);
  const auto out = run_forward(store, net, 3);
  CHECK(out.actions.rows() == 1);
  CHECK(out.actions.cols() == 4 * 3);    // chunk x action_dim
  CHECK(out.concepts.cols() == 4 * 12);  // chunk x dz

  CHECK_THROWS_AS(net.task_index("unknown-task"), ValidationError);
}

TEST_CASE("lambda_mc plays no role in the forward pass") {
  const auto ds = tiny_dataset(2);
  PolicyConfig a = tiny_policy();
  PolicyConfig b = tiny_policy();
  b.lambda_mc = 123.0;

  ParamStore<double> store_a, store_b;
  Rng rng_a(5), rng_b(5);
  auto net_a = PolicyNet<double>::create(store_a, a, ds.modalities, ds.action_dim, 8,
                                         {"single-place"}, rng_a);
  auto net_b = PolicyNet<double>::create(store_b, b, ds.modalities, ds.action_dim, 8,
                                         {"single-place"}, rng_b);
  const auto out_a = run_forward(store_a, net_a, 7);
  const auto out_b = run_forward(store_b, net_b, 7);
  CHECK(out_a.actions == out_b.actions);
  CHECK(out_a.concepts == out_b.concepts);
}

TEST_CASE("parameters above layer L do not affect the concept chunk") {
  const auto ds = tiny_dataset(3);
  ParamStore<double> store;
  Rng rng(6);
  auto cfg = tiny_policy();  // L = 1, depth = 3
  auto net = PolicyNet<double>::create(store, cfg, ds.modalities, ds.action_dim, 8,
                                       {"single-place"}, rng);
  const auto before = run_forward(store, net, 9);

  // perturb a block-2 weight (above L=1) and the action head
  const int late_block = store.find("policy.block2.ffn.w1");
  REQUIRE(late_block >= 0);
  store.entries[static_cast<std::size_t>(late_block)].value.array() += 0.5;
  const auto after = run_forward(store, net, 9);
  CHECK(before.concepts == after.concepts);
  CHECK(before.actions != after.actions);

  // perturbing a block at or below L changes the concept chunk
  const int early_block = store.find("policy.block0.ffn.w1");
  REQUIRE(early_block >= 0);
  store.entries[static_cast<std::size_t>(early_block)].value.array() += 0.5;
  const auto after2 = run_forward(store, net, 9);
  CHECK(before.concepts != after2.concepts);
}

TEST_CASE("training rejects misaligned concept labels") {
  const auto ds = tiny_dataset(4);
  auto labels = random_labels(ds, 8, 1);
  labels[0].conservativeResize(labels[0].rows() - 1, labels[0].cols());
  PolicyTrainConfig tcfg;
  tcfg.iterations = 1;
  CHECK_THROWS_AS(train_policy(ds, labels, tiny_policy(), tcfg, "", ""), ValidationError);
}

TEST_CASE("loss decomposes exactly and lambda zero reduces to plain cloning") {
  const auto ds = tiny_dataset(5);
  const auto labels = random_labels(ds, 8, 2);

  PolicyTrainConfig tcfg;
  tcfg.iterations = 5;
  tcfg.batch_size = 4;
  tcfg.warmup_iterations = 2;
  tcfg.seed = 3;

  PolicyConfig with = tiny_policy();
  with.lambda_mc = 0.25;
  const auto run_with = train_policy(ds, labels, with, tcfg, "", "");
  for (const auto& r : run_with.metrics) {
    CHECK(std::abs(r.loss - (r.loss_action + 0.25 * r.loss_concept)) < 1e-9);
  }

  PolicyConfig plain = tiny_policy();
  plain.lambda_mc = 0.0;
  const auto run_plain = train_policy(ds, labels, plain, tcfg, "", "");
  for (const auto& r : run_plain.metrics) {
    CHECK(r.loss == r.loss_action);
  }
}

TEST_CASE("concept-head gradients vanish identically at lambda_mc zero") {
  const auto ds = tiny_dataset(6);
  const auto labels = random_labels(ds, 8, 3);

  PolicyConfig cfg = tiny_policy();
  cfg.lambda_mc = 0.0;
  ParamStore<float> store;
  Rng rng(11);
  auto net = PolicyNet<float>::create(store, cfg, ds.modalities, ds.action_dim, 8,
                                      {"single-place", "two-stage"}, rng);

  // one handmade training step
  Tape<float> tape(&store);
  std::vector<int> inputs;
  Rng drng(12);
  for (const auto& spec : net.specs) {
    Mat<float> x(2 * cfg.obs_window, spec.dim);
    for (int c = 0; c < spec.dim; ++c) {
      for (int r = 0; r < x.rows(); ++r) x(r, c) = static_cast<float>(drng.normal());
    }
    inputs.push_back(tape.input(std::move(x)));
  }
  const auto fwd = net.forward(tape, inputs, {0, 1});
  Mat<float> ta = Mat<float>::Zero(2, cfg.chunk * 3);
  Mat<float> tz = Mat<float>::Zero(2, cfg.chunk * 8);
  const int root = tape.add(
      tape.scale(tape.group_norm_loss(fwd.actions, ta, cfg.chunk, ReconNorm::kL2), 1.0f),
      tape.scale(tape.group_norm_loss(fwd.concepts, tz, cfg.chunk, ReconNorm::kL2),
                 static_cast<float>(cfg.lambda_mc)));
  store.zero_grads();
  tape.backward(root);

  for (const auto& e : store.entries) {
    const bool concept_head = e.name.rfind("policy.head.concept", 0) == 0;
    if (concept_head) {
      CHECK(e.grad.cwiseAbs().maxCoeff() == 0.0f);
    }
  }
  // the action path still learns
  const int aw = store.find("policy.head.action.w2");
  CHECK(store.entries[static_cast<std::size_t>(aw)].grad.cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("jointly rescaling concept targets, predictions and lambda is a no-op") {
  // policy_loss(a, a_hat, c*z_hat, c*z, lambda/c) == policy_loss(a, a_hat, z_hat, z, lambda):
  // the concept term is jointly 1-homogeneous in (predictions, targets).
  ParamStore<double> store;
  Rng rng(13);
  Mat<double> pred(3, 8), target(3, 8), pa(3, 6), ta(3, 6);
  for (int c = 0; c < 8; ++c) {
    for (int r = 0; r < 3; ++r) {
      pred(r, c) = rng.normal();
      target(r, c) = rng.normal();
    }
  }
  for (int c = 0; c < 6; ++c) {
    for (int r = 0; r < 3; ++r) {
      pa(r, c) = rng.normal();
      ta(r, c) = rng.normal();
    }
  }

  auto joint_loss = [&](const Mat<double>& pz, const Mat<double>& tz, double lambda) {
    Tape<double> tape(&store);
    const int a = tape.group_norm_loss(tape.input(pa), ta, 2, ReconNorm::kL2);
    const int z = tape.group_norm_loss(tape.input(pz), tz, 2, ReconNorm::kL2);
    return tape.scalar_value(tape.add(a, tape.scale(z, lambda)));
  };

  const double c = 3.7;
  const double base = joint_loss(pred, target, 0.4);
  const double scaled = joint_loss(c * pred, c * target, 0.4 / c);
  CHECK(base == doctest::Approx(scaled).epsilon(1e-12));
}

TEST_CASE("expert rollout succeeds everywhere at zero noise, random policy nowhere") {
  EnvSpec spec;
  spec.noise_scale = 0.0;

  auto expert = make_expert_policy(spec);
  const auto expert_result = evaluate_policy(*expert, spec, 40, 4);
  CHECK(expert_result.success_rate == 1.0);

  auto random = make_random_policy(spec, 5);
  const auto random_result = evaluate_policy(*random, spec, 100, 6);
  CHECK(random_result.success_rate <= 0.05);
}

TEST_CASE("evaluation is deterministic per seed") {
  EnvSpec spec;
  spec.noise_scale = 0.004;
  auto expert = make_expert_policy(spec);
  const auto a = evaluate_policy(*expert, spec, 20, 11);
  const auto b = evaluate_policy(*expert, spec, 20, 11);
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(a.episodes[i].success == b.episodes[i].success);
    CHECK(a.episodes[i].steps == b.episodes[i].steps);
  }
}

TEST_CASE("policy checkpoints reload into a working model") {
  const auto ds = tiny_dataset(7);
  const auto labels = random_labels(ds, 8, 4);
  PolicyTrainConfig tcfg;
  tcfg.iterations = 3;
  tcfg.batch_size = 4;
  tcfg.warmup_iterations = 1;
  train_policy(ds, labels, tiny_policy(), tcfg, "pol.mcck", "");

  const auto model = load_policy_model("pol.mcck", ds);
  CHECK(model.net.cfg.chunk == 4);
  auto rollout = make_net_policy(model);
  EnvSpec spec;
  spec.noise_scale = 0.0;
  const auto result = evaluate_policy(*rollout, spec, 3, 21);
  CHECK(result.episodes.size() == 3);  // runs to completion

  std::remove("pol.mcck");
}

TEST_CASE("sweep csv carries the expected columns") {
  std::vector<SweepRow> rows{{2, 0.1, "two-stage", 0.75, 0.05, 4}};
  const auto csv = sweep_to_csv(rows);
  CHECK(csv.find("L,lambda_mc,split,success_rate,stderr,seeds") == 0);
  CHECK(csv.find("2,0.1,two-stage,0.75,0.05,4") != std::string::npos);
}
