#include "mcd/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mcd/optim.hpp"

namespace mcd {

using nlohmann::json;

template <class S>
PolicyNet<S> PolicyNet<S>::create(ParamStore<S>& store, const PolicyConfig& cfg,
                                  const std::vector<ModalitySpec>& specs, int action_dim,
                                  int dz, const std::vector<std::string>& tasks, Rng& rng) {
  cfg.validate();
  if (tasks.empty()) throw ValidationError("policy: task list is empty");
  PolicyNet net;
  net.cfg = cfg;
  net.action_dim = action_dim;
  net.dz = dz;
  net.specs = specs;
  net.tasks = tasks;
  for (const auto& m : specs) {
    net.embeds.push_back(
        Mlp2<S>::create(store, "policy.embed." + m.name, m.dim, cfg.mlp_hidden, cfg.width, rng));
  }
  net.task_table = store.add("policy.tasks", static_cast<int>(tasks.size()), cfg.width, 0.02, rng);
  net.temporal = store.add("policy.temporal", cfg.obs_window, cfg.width, 0.02, rng);
  for (int i = 0; i < cfg.depth; ++i) {
    net.blocks.push_back(TransformerBlock<S>::create(store, "policy.block" + std::to_string(i),
                                                     cfg.width, cfg.ffn, rng));
  }
  net.action_head = Mlp2<S>::create(store, "policy.head.action", cfg.width, cfg.head_hidden,
                                    cfg.chunk * action_dim, rng);
  net.concept_head = Mlp2<S>::create(store, "policy.head.concept", cfg.width, cfg.head_hidden,
                                     cfg.chunk * dz, rng);
  return net;
}

template <class S>
int PolicyNet<S>::task_index(const std::string& task_id) const {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i] == task_id) return static_cast<int>(i);
  }
  throw ValidationError("policy: unknown task '" + task_id + "'");
}

template <class S>
typename PolicyNet<S>::Forward PolicyNet<S>::forward(Tape<S>& tape,
                                                     const std::vector<int>& modality_inputs,
                                                     const std::vector<int>& task_rows) const {
  const int windows = static_cast<int>(task_rows.size());
  int x = -1;
  for (std::size_t m = 0; m < embeds.size(); ++m) {
    const int e = embeds[m].forward(tape, modality_inputs[m]);
    x = x < 0 ? e : tape.add(x, e);
  }
  const int task_emb = tape.gather_rows(tape.param(task_table), task_rows);
  x = tape.add_per_window(x, task_emb, windows);
  x = tape.add_tiled(x, tape.param(temporal), windows);

  int concept_source = x;  // L = 0 reads the embedding output
  for (int i = 0; i < cfg.depth; ++i) {
    x = blocks[static_cast<std::size_t>(i)].forward(tape, x, windows, cfg.heads,
                                                    /*causal=*/false);
    tape.check_finite(x, "policy layer " + std::to_string(i));
    if (i + 1 == cfg.concept_layer) concept_source = x;
  }

  Forward f;
  f.hidden = x;
  const int last_final = tape.select_row_per_window(x, cfg.obs_window - 1, windows);
  const int last_concept =
      tape.select_row_per_window(concept_source, cfg.obs_window - 1, windows);
  f.actions = action_head.forward(tape, last_final);
  f.concepts = concept_head.forward(tape, last_concept);
  return f;
}

template struct PolicyNet<float>;
template struct PolicyNet<double>;

std::string policy_fingerprint(const PolicyConfig& cfg, const PolicyTrainConfig& tcfg,
                               const std::vector<ModalitySpec>& specs, int action_dim, int dz,
                               const std::vector<std::string>& tasks) {
  json j;
  j["policy"] = {{"depth", cfg.depth},
                 {"width", cfg.width},
                 {"heads", cfg.heads},
                 {"mlp_hidden", cfg.mlp_hidden},
                 {"ffn", cfg.ffn},
                 {"head_hidden", cfg.head_hidden},
                 {"obs_window", cfg.obs_window},
                 {"chunk", cfg.chunk},
                 {"concept_layer", cfg.concept_layer},
                 {"lambda_mc", cfg.lambda_mc}};
  j["train"] = {{"iterations", tcfg.iterations}, {"batch_size", tcfg.batch_size},
                {"base_lr", tcfg.base_lr},       {"warmup_iterations", tcfg.warmup_iterations},
                {"weight_decay", tcfg.weight_decay}, {"beta1", tcfg.beta1},
                {"beta2", tcfg.beta2},           {"seed", tcfg.seed}};
  json mods = json::array();
  for (const auto& s : specs) {
    mods.push_back({{"name", s.name}, {"dim", s.dim}});
  }
  j["modalities"] = mods;
  j["action_dim"] = action_dim;
  j["dz"] = dz;
  j["tasks"] = tasks;
  return hex64(fnv1a64(j.dump()));
}

std::string to_json_line(const PolicyMetricsRecord& r) {
  json j;
  j["iteration"] = r.iteration;
  j["loss"] = r.loss;
  j["loss_action"] = r.loss_action;
  j["loss_concept"] = r.loss_concept;
  j["lr"] = r.lr;
  return j.dump();
}

namespace {

std::vector<std::string> task_vocabulary(const Dataset& ds) {
  std::set<std::string> seen;
  for (const auto& d : ds.demos) seen.insert(d.task_id);
  return {seen.begin(), seen.end()};
}

struct PolicyItem {
  int demo = 0;
  int timestep = 0;  // 1-indexed decision point
};

// One training item per (demo, timestep).
std::vector<PolicyItem> all_policy_items(const Dataset& ds) {
  std::vector<PolicyItem> items;
  for (std::size_t d = 0; d < ds.demos.size(); ++d) {
    for (int t = 1; t <= ds.demos[d].length; ++t) {
      items.push_back({static_cast<int>(d), t});
    }
  }
  return items;
}

std::vector<int> epoch_perm(std::uint64_t seed, long epoch, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, "policy-epoch", static_cast<std::uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

struct PolicyBatch {
  std::vector<Mat<float>> modality;  // (B*obs_window) x dim
  std::vector<int> task_rows;
  Mat<float> action_targets;   // B x (chunk*action_dim)
  Mat<float> concept_targets;  // B x (chunk*dz)
};

PolicyBatch assemble_policy_batch(const Dataset& ds, const ConceptLabels& labels,
                                  const PolicyNet<float>& net,
                                  const std::vector<PolicyItem>& items) {
  const auto& cfg = net.cfg;
  const int b_count = static_cast<int>(items.size());
  PolicyBatch batch;
  for (const auto& spec : net.specs) {
    batch.modality.emplace_back(
        Mat<float>::Zero(b_count * cfg.obs_window, spec.dim));
  }
  batch.action_targets.resize(b_count, cfg.chunk * net.action_dim);
  batch.concept_targets.resize(b_count, cfg.chunk * net.dz);

  for (int b = 0; b < b_count; ++b) {
    const auto& item = items[static_cast<std::size_t>(b)];
    const auto& demo = ds.demos[static_cast<std::size_t>(item.demo)];
    batch.task_rows.push_back(net.task_index(demo.task_id));
    for (int o = 0; o < cfg.obs_window; ++o) {
      // window ends at the decision timestep; the head is padded by clamping
      const int t = std::max(1, item.timestep - (cfg.obs_window - 1) + o);
      for (std::size_t m = 0; m < net.specs.size(); ++m) {
        const int dim = net.specs[m].dim;
        const auto row = demo.modality_row(static_cast<int>(m), t - 1, dim);
        for (int k = 0; k < dim; ++k) {
          batch.modality[m](b * cfg.obs_window + o, k) = row[static_cast<std::size_t>(k)];
        }
      }
    }
    for (int c = 0; c < cfg.chunk; ++c) {
      const int t = std::min(demo.length, item.timestep + c);  // tail clamped
      const auto arow = demo.action_row(t - 1, net.action_dim);
      for (int k = 0; k < net.action_dim; ++k) {
        batch.action_targets(b, c * net.action_dim + k) = arow[static_cast<std::size_t>(k)];
      }
      const auto& zrow = labels[static_cast<std::size_t>(item.demo)];
      for (int k = 0; k < net.dz; ++k) {
        batch.concept_targets(b, c * net.dz + k) = zrow(t - 1, k);
      }
    }
  }
  return batch;
}

}  // namespace

PolicyTrainResult train_policy(const Dataset& dataset, const ConceptLabels& labels,
                               const PolicyConfig& cfg, const PolicyTrainConfig& tcfg,
                               const std::string& checkpoint_path,
                               const std::string& metrics_path) {
  cfg.validate();
  dataset.validate();
  if (labels.size() != dataset.demos.size()) {
    throw ValidationError("train_policy: one label matrix per demo required");
  }
  for (std::size_t d = 0; d < labels.size(); ++d) {
    if (labels[d].rows() != dataset.demos[d].length) {
      throw ValidationError("train_policy: labels misaligned with demo " + std::to_string(d));
    }
  }
  const int dz = labels.empty() ? 0 : static_cast<int>(labels[0].cols());
  const auto tasks = task_vocabulary(dataset);

  ParamStore<float> store;
  Rng init_rng(derive_seed(tcfg.seed, "policy-init"));
  auto net = PolicyNet<float>::create(store, cfg, dataset.modalities, dataset.action_dim, dz,
                                      tasks, init_rng);
  AdamW<float> opt({tcfg.base_lr, tcfg.beta1, tcfg.beta2, 1e-8, tcfg.weight_decay});

  const auto items = all_policy_items(dataset);
  const int deck = static_cast<int>(items.size());
  const std::string fingerprint =
      policy_fingerprint(cfg, tcfg, dataset.modalities, dataset.action_dim, dz, tasks);

  std::ofstream metrics_out;
  if (!metrics_path.empty()) {
    metrics_out.open(metrics_path, std::ios::trunc);
    if (!metrics_out) throw IoError("cannot open metrics file: " + metrics_path);
  }

  auto save = [&](long completed) {
    if (checkpoint_path.empty()) return;
    CheckpointHeader h;
    h.fingerprint = fingerprint;
    h.seed = tcfg.seed;
    h.iteration = completed;
    h.adam_step = opt.step_count();
    h.extra = {{"kind", "policy"},
               {"tasks", tasks},
               {"dz", dz},
               {"action_dim", dataset.action_dim},
               {"config",
                {{"depth", cfg.depth},
                 {"width", cfg.width},
                 {"heads", cfg.heads},
                 {"mlp_hidden", cfg.mlp_hidden},
                 {"ffn", cfg.ffn},
                 {"head_hidden", cfg.head_hidden},
                 {"obs_window", cfg.obs_window},
                 {"chunk", cfg.chunk},
                 {"execute_horizon", cfg.execute_horizon},
                 {"concept_layer", cfg.concept_layer},
                 {"lambda_mc", cfg.lambda_mc}}}};
    save_checkpoint<float>(checkpoint_path, store, h);
  };

  PolicyTrainResult result;
  result.checkpoint_path = checkpoint_path;

  for (long iter = 0; iter < tcfg.iterations; ++iter) {
    std::vector<PolicyItem> batch_items;
    long consumed = iter * tcfg.batch_size;
    while (static_cast<int>(batch_items.size()) < tcfg.batch_size) {
      const long epoch = consumed / deck;
      const int offset = static_cast<int>(consumed % deck);
      const auto perm = epoch_perm(tcfg.seed, epoch, deck);
      for (int k = offset;
           k < deck && static_cast<int>(batch_items.size()) < tcfg.batch_size; ++k) {
        batch_items.push_back(items[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
        consumed += 1;
      }
    }

    auto batch = assemble_policy_batch(dataset, labels, net, batch_items);
    Tape<float> tape(&store);
    std::vector<int> inputs;
    for (const auto& m : batch.modality) inputs.push_back(tape.input(m));
    const auto fwd = net.forward(tape, inputs, batch.task_rows);

    const int action_sum =
        tape.group_norm_loss(fwd.actions, batch.action_targets, cfg.chunk, ReconNorm::kL2);
    const int concept_sum =
        tape.group_norm_loss(fwd.concepts, batch.concept_targets, cfg.chunk, ReconNorm::kL2);
    const float mean_scale = 1.0f / static_cast<float>(tcfg.batch_size * cfg.chunk);
    const int action_mean = tape.scale(action_sum, mean_scale);
    const int concept_mean = tape.scale(concept_sum, mean_scale);
    const int root = tape.add(action_mean,
                              tape.scale(concept_mean, static_cast<float>(cfg.lambda_mc)));

    const double loss_action = static_cast<double>(tape.scalar_value(action_mean));
    const double loss_concept = static_cast<double>(tape.scalar_value(concept_mean));
    const double joint = loss_action + cfg.lambda_mc * loss_concept;
    if (!std::isfinite(joint)) {
      throw NumericError("non-finite policy loss at iteration " + std::to_string(iter + 1));
    }

    store.zero_grads();
    tape.backward(root);
    const double lr = learning_rate_at(static_cast<int>(iter), tcfg.iterations,
                                       tcfg.warmup_iterations, tcfg.base_lr);
    opt.step(store, lr);

    PolicyMetricsRecord rec;
    rec.iteration = iter + 1;
    rec.loss = joint;
    rec.loss_action = loss_action;
    rec.loss_concept = loss_concept;
    rec.lr = lr;
    result.metrics.push_back(rec);
    if (metrics_out.is_open()) metrics_out << to_json_line(rec) << "\n";

    const long completed = iter + 1;
    if (completed % tcfg.checkpoint_interval == 0 || completed == tcfg.iterations) {
      save(completed);
    }
  }
  return result;
}

PolicyModel load_policy_model(const std::string& checkpoint_path,
                              const std::vector<ModalitySpec>& specs, int action_dim) {
  const CheckpointHeader peek = peek_checkpoint(checkpoint_path);
  if (peek.extra.value("kind", "") != "policy") {
    throw ValidationError("not a policy checkpoint: " + checkpoint_path);
  }
  PolicyConfig cfg;
  const auto& cj = peek.extra.at("config");
  cfg.depth = cj.at("depth").get<int>();
  cfg.width = cj.at("width").get<int>();
  cfg.heads = cj.at("heads").get<int>();
  cfg.mlp_hidden = cj.at("mlp_hidden").get<int>();
  cfg.ffn = cj.at("ffn").get<int>();
  cfg.head_hidden = cj.at("head_hidden").get<int>();
  cfg.obs_window = cj.at("obs_window").get<int>();
  cfg.chunk = cj.at("chunk").get<int>();
  cfg.execute_horizon = cj.value("execute_horizon", 1);
  cfg.concept_layer = cj.at("concept_layer").get<int>();
  cfg.lambda_mc = cj.at("lambda_mc").get<double>();
  const auto tasks = peek.extra.at("tasks").get<std::vector<std::string>>();
  const int dz = peek.extra.at("dz").get<int>();
  if (peek.extra.at("action_dim").get<int>() != action_dim) {
    throw ValidationError("policy checkpoint action_dim mismatch");
  }

  PolicyModel model{ParamStore<float>{}, PolicyNet<float>{}, CheckpointHeader{}};
  Rng init_rng(0);
  model.net = PolicyNet<float>::create(model.store, cfg, specs, action_dim, dz, tasks, init_rng);
  model.header = load_checkpoint<float>(checkpoint_path, model.store);
  return model;
}

PolicyModel load_policy_model(const std::string& checkpoint_path, const Dataset& reference) {
  return load_policy_model(checkpoint_path, reference.modalities, reference.action_dim);
}

namespace {

class NetPolicy final : public RolloutPolicy {
 public:
  explicit NetPolicy(const PolicyModel& model) : model_(model) {}

  void begin_episode(const std::string& task_id) override {
    task_row_ = model_.net.task_index(task_id);
  }

  std::vector<std::array<double, 3>> act(
      const EnvState&,
      const std::vector<std::vector<std::vector<double>>>& history) override {
    auto& store = const_cast<ParamStore<float>&>(model_.store);
    const auto& cfg = model_.net.cfg;
    if (static_cast<int>(history.size()) < cfg.obs_window) {
      throw ValidationError("rollout history shorter than policy obs_window");
    }
    if (model_.net.action_dim != kActionDim) {
      throw ValidationError("policy action space does not match environment");
    }
    const std::size_t base = history.size() - static_cast<std::size_t>(cfg.obs_window);
    Tape<float> tape(&store);
    std::vector<int> inputs;
    for (std::size_t m = 0; m < model_.net.specs.size(); ++m) {
      Mat<float> x(cfg.obs_window, model_.net.specs[m].dim);
      for (int o = 0; o < cfg.obs_window; ++o) {
        const auto& frame = history[base + static_cast<std::size_t>(o)][m];
        for (std::size_t k = 0; k < frame.size(); ++k) {
          x(o, static_cast<int>(k)) = static_cast<float>(frame[k]);
        }
      }
      inputs.push_back(tape.input(std::move(x)));
    }
    const auto fwd = model_.net.forward(tape, inputs, {task_row_});
    const auto& chunk = tape.value(fwd.actions);
    std::vector<std::array<double, 3>> actions;
    for (int c = 0; c < cfg.execute_horizon; ++c) {
      actions.push_back({static_cast<double>(chunk(0, c * 3 + 0)),
                         static_cast<double>(chunk(0, c * 3 + 1)),
                         static_cast<double>(chunk(0, c * 3 + 2))});
    }
    return actions;
  }

 private:
  const PolicyModel& model_;
  int task_row_ = 0;
};

class ExpertRollout final : public RolloutPolicy {
 public:
  explicit ExpertRollout(const EnvSpec& spec) : spec_(spec) {}

  void begin_episode(const std::string& task_id) override {
    spec_.family = task_family_from_string(task_id);
    expert_ = std::make_unique<ScriptedExpert>(spec_);
  }

  std::vector<std::array<double, 3>> act(
      const EnvState& state, const std::vector<std::vector<std::vector<double>>>&) override {
    return {expert_->act(state)};
  }

 private:
  EnvSpec spec_;
  std::unique_ptr<ScriptedExpert> expert_;
};

class RandomRollout final : public RolloutPolicy {
 public:
  RandomRollout(const EnvSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

  void begin_episode(const std::string&) override {}

  std::vector<std::array<double, 3>> act(
      const EnvState&, const std::vector<std::vector<std::vector<double>>>&) override {
    return {{rng_.uniform(-spec_.max_speed, spec_.max_speed),
             rng_.uniform(-spec_.max_speed, spec_.max_speed),
             rng_.uniform(-spec_.grip_speed, spec_.grip_speed)}};
  }

 private:
  EnvSpec spec_;
  Rng rng_;
};

}  // namespace

std::unique_ptr<RolloutPolicy> make_net_policy(const PolicyModel& model) {
  return std::make_unique<NetPolicy>(model);
}
std::unique_ptr<RolloutPolicy> make_expert_policy(const EnvSpec& spec) {
  return std::make_unique<ExpertRollout>(spec);
}
std::unique_ptr<RolloutPolicy> make_random_policy(const EnvSpec& spec, std::uint64_t seed) {
  return std::make_unique<RandomRollout>(spec, seed);
}

EvalResult evaluate_policy(RolloutPolicy& policy, const EnvSpec& spec, int episodes,
                           std::uint64_t seed, const std::string& task_id_override) {
  EvalResult result;
  result.split = to_string(spec.family);
  const std::string task_id =
      task_id_override.empty() ? to_string(spec.family) : task_id_override;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t ep_seed = derive_seed(seed, "eval-episode", static_cast<std::uint64_t>(e));
    Env env(spec, ep_seed);
    policy.begin_episode(task_id);

    std::vector<std::vector<std::vector<double>>> window;  // obs ring, oldest first
    const auto first = observe(env.state(), spec);
    // ring length adapts to what the policy consumes; use a fixed history of 8
    constexpr int kHistory = 8;
    for (int i = 0; i < kHistory; ++i) window.push_back(first);

    EpisodeOutcome outcome;
    outcome.seed = ep_seed;
    bool done = false;
    while (!done) {
      const auto chunk = policy.act(env.state(), window);
      for (const auto& action : chunk) {
        const auto r = env.step(action);
        window.erase(window.begin());
        window.push_back(observe(env.state(), spec));
        outcome.steps += 1;
        if (r.done) {
          outcome.success = r.success;
          done = true;
          break;
        }
      }
    }
    successes += outcome.success ? 1 : 0;
    result.episodes.push_back(outcome);
  }
  result.success_rate = episodes > 0 ? static_cast<double>(successes) / episodes : 0.0;
  return result;
}

std::vector<EvalResult> evaluate_policy_splits(RolloutPolicy& policy, const EnvSpec& base_spec,
                                               int episodes, std::uint64_t seed) {
  std::vector<EvalResult> out;
  for (const TaskFamily family :
       {TaskFamily::kSinglePlace, TaskFamily::kNovelLayout, TaskFamily::kTwoStage}) {
    EnvSpec spec = base_spec;
    spec.family = family;
    // Novel layouts carry the single-place instruction; only the spawn
    // distribution is out of support.
    const std::string task =
        family == TaskFamily::kNovelLayout ? to_string(TaskFamily::kSinglePlace) : "";
    out.push_back(
        evaluate_policy(policy, spec, episodes, derive_seed(seed, to_string(family)), task));
  }
  return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "L,lambda_mc,split,success_rate,stderr,seeds\n";
  for (const auto& r : rows) {
    out << r.concept_layer << "," << r.lambda_mc << "," << r.split << "," << r.success_rate
        << "," << r.stderr_ << "," << r.seeds << "\n";
  }
  return out.str();
}

}  // namespace mcd
