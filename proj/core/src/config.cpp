#include "mcd/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mcd {

using nlohmann::json;

json default_config() {
  json c;
  c["seed"] = 1;
  c["env"] = {{"object_count", 2},
              {"noise_scale", 0.004},
              {"obs_noise", 0.02},
              {"private_dims", 4},
              {"private_walk", 0.12},
              {"max_steps", 220},
              {"max_speed", 0.08},
              {"grip_speed", 0.25},
              {"grasp_radius", 0.06},
              {"goal_radius", 0.09},
              {"novel_shift", 0.3},
              {"n_demos", 200},
              {"task_mix",
               {{"single-place", 0.5}, {"two-stage", 0.5}, {"novel-layout", 0.0}}}};
  c["encoder"] = {{"dz", 64},       {"depth", 4}, {"heads", 4},
                  {"mlp_hidden", 64}, {"ffn", 128}, {"t_context", 20}};
  c["cmcn"] = {{"depth", 4}, {"heads", 4}, {"mlp_hidden", 64}, {"ffn", 128}, {"dec_hidden", 128}};
  c["mhfp"] = {{"depth", 4}, {"heads", 4}, {"mlp_hidden", 64}, {"ffn", 128}, {"dec_hidden", 128}};
  c["train"] = {{"lambda_mm", 1.0},
                {"lambda_mh", 1.0},
                {"ablation", "full"},
                {"iterations", 2000},
                {"batch_size", 32},
                {"base_lr", 0.001},
                {"warmup_iterations", 100},
                {"weight_decay", 0.001},
                {"beta1", 0.9},
                {"beta2", 0.95},
                {"checkpoint_interval", 500},
                {"seed", nullptr}};
  c["policy"] = {{"depth", 3},
                 {"width", 64},
                 {"heads", 4},
                 {"mlp_hidden", 64},
                 {"ffn", 128},
                 {"head_hidden", 128},
                 {"obs_window", 4},
                 {"chunk", 8},
                 {"execute_horizon", 1},
                 {"concept_layer", 2},
                 {"lambda_mc", 0.1},
                 {"iterations", 6000},
                 {"batch_size", 32},
                 {"base_lr", 0.001},
                 {"warmup_iterations", 100},
                 {"weight_decay", 0.001},
                 {"beta1", 0.9},
                 {"beta2", 0.95},
                 {"checkpoint_interval", 500},
                 {"eval_episodes", 50},
                 {"seed", nullptr}};
  c["analysis"] = {{"eps_list", {0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8}},
                   {"dbscan_grid", {0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9, 1.1, 1.4}},
                   {"max_latents", 1200},
                   {"hierarchy_demos", 3},
                   {"gallery_demo", 0},
                   {"gallery_timesteps", 5},
                   {"cmi_samples", 3000},
                   {"mine",
                    {{"iterations", 400},
                     {"batch", 256},
                     {"lr", 0.001},
                     {"hidden_multiplier", 1.5},
                     {"restarts", 3}}},
                   {"seed", nullptr}};
  c["io"] = {{"out_dir", ""},          {"dataset", ""},
             {"concepts_checkpoint", ""}, {"concepts_metrics", ""},
             {"labels", ""},           {"policy_checkpoint", ""},
             {"policy_metrics", ""}};
  return c;
}

namespace {

void merge_validated(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) {
    throw ValidationError("config section '" + (prefix.empty() ? "<root>" : prefix) +
                          "' must be a JSON object");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ValidationError("unknown config key: " + path);
    if (base[key].is_object() && !base[key].empty()) {
      merge_validated(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

std::uint64_t section_seed(const json& config, const std::string& section, const char* tag) {
  const json& v = config.at(section).at("seed");
  if (!v.is_null()) return v.get<std::uint64_t>();
  return derive_seed(master_seed_from(config), tag);
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("override must look like key.path=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }

  json* cursor = &config;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (!cursor->contains(key)) throw ValidationError("unknown config key: " + path);
    if (dot == std::string::npos) {
      (*cursor)[key] = value;
      return;
    }
    cursor = &(*cursor)[key];
    pos = dot + 1;
  }
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json config = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json user;
    try {
      in >> user;
    } catch (const json::exception& e) {
      throw FormatError("config file is not valid JSON: " + std::string(e.what()));
    }
    merge_validated(config, user, "");
  }
  for (const auto& o : overrides) apply_override(config, o);
  return config;
}

EnvSpec env_spec_from(const json& config) {
  const auto& e = config.at("env");
  EnvSpec spec;
  spec.object_count = e.at("object_count").get<int>();
  spec.noise_scale = e.at("noise_scale").get<double>();
  spec.obs_noise = e.at("obs_noise").get<double>();
  spec.private_dims = e.at("private_dims").get<int>();
  spec.private_walk = e.at("private_walk").get<double>();
  spec.max_steps = e.at("max_steps").get<int>();
  spec.max_speed = e.at("max_speed").get<double>();
  spec.grip_speed = e.at("grip_speed").get<double>();
  spec.grasp_radius = e.at("grasp_radius").get<double>();
  spec.goal_radius = e.at("goal_radius").get<double>();
  spec.novel_shift = e.at("novel_shift").get<double>();
  return spec;
}

TaskMix task_mix_from(const json& config) {
  const auto& m = config.at("env").at("task_mix");
  TaskMix mix;
  mix.single_place = m.at("single-place").get<double>();
  mix.two_stage = m.at("two-stage").get<double>();
  mix.novel_layout = m.at("novel-layout").get<double>();
  return mix;
}

int demo_count_from(const json& config) { return config.at("env").at("n_demos").get<int>(); }

EncoderConfig encoder_config_from(const json& config) {
  const auto& e = config.at("encoder");
  EncoderConfig cfg;
  cfg.dz = e.at("dz").get<int>();
  cfg.depth = e.at("depth").get<int>();
  cfg.heads = e.at("heads").get<int>();
  cfg.mlp_hidden = e.at("mlp_hidden").get<int>();
  cfg.ffn = e.at("ffn").get<int>();
  cfg.t_context = e.at("t_context").get<int>();
  return cfg;
}

ReconNetConfig recon_config_from(const json& config, const std::string& section) {
  const auto& e = config.at(section);
  ReconNetConfig cfg;
  cfg.depth = e.at("depth").get<int>();
  cfg.heads = e.at("heads").get<int>();
  cfg.mlp_hidden = e.at("mlp_hidden").get<int>();
  cfg.ffn = e.at("ffn").get<int>();
  cfg.dec_hidden = e.at("dec_hidden").get<int>();
  return cfg;
}

TrainConfig train_config_from(const json& config) {
  const auto& t = config.at("train");
  TrainConfig cfg;
  cfg.lambda_mm = t.at("lambda_mm").get<double>();
  cfg.lambda_mh = t.at("lambda_mh").get<double>();
  cfg.ablation = ablation_mode_from_string(t.at("ablation").get<std::string>());
  cfg.iterations = t.at("iterations").get<int>();
  cfg.batch_size = t.at("batch_size").get<int>();
  cfg.base_lr = t.at("base_lr").get<double>();
  cfg.warmup_iterations = t.at("warmup_iterations").get<int>();
  cfg.weight_decay = t.at("weight_decay").get<double>();
  cfg.beta1 = t.at("beta1").get<double>();
  cfg.beta2 = t.at("beta2").get<double>();
  cfg.checkpoint_interval = t.at("checkpoint_interval").get<int>();
  cfg.seed = section_seed(config, "train", "train");
  return cfg;
}

PolicyConfig policy_config_from(const json& config) {
  const auto& p = config.at("policy");
  PolicyConfig cfg;
  cfg.depth = p.at("depth").get<int>();
  cfg.width = p.at("width").get<int>();
  cfg.heads = p.at("heads").get<int>();
  cfg.mlp_hidden = p.at("mlp_hidden").get<int>();
  cfg.ffn = p.at("ffn").get<int>();
  cfg.head_hidden = p.at("head_hidden").get<int>();
  cfg.obs_window = p.at("obs_window").get<int>();
  cfg.chunk = p.at("chunk").get<int>();
  cfg.execute_horizon = p.at("execute_horizon").get<int>();
  cfg.concept_layer = p.at("concept_layer").get<int>();
  cfg.lambda_mc = p.at("lambda_mc").get<double>();
  return cfg;
}

PolicyTrainConfig policy_train_config_from(const json& config) {
  const auto& p = config.at("policy");
  PolicyTrainConfig cfg;
  cfg.iterations = p.at("iterations").get<int>();
  cfg.batch_size = p.at("batch_size").get<int>();
  cfg.base_lr = p.at("base_lr").get<double>();
  cfg.warmup_iterations = p.at("warmup_iterations").get<int>();
  cfg.weight_decay = p.at("weight_decay").get<double>();
  cfg.beta1 = p.at("beta1").get<double>();
  cfg.beta2 = p.at("beta2").get<double>();
  cfg.checkpoint_interval = p.at("checkpoint_interval").get<int>();
  cfg.seed = section_seed(config, "policy", "policy");
  return cfg;
}

IoPaths io_paths_from(const json& config) {
  const auto& io = config.at("io");
  IoPaths p;
  p.out_dir = io.at("out_dir").get<std::string>();
  if (p.out_dir.empty()) {
    const char* env = std::getenv("MCDS_OUT_DIR");
    p.out_dir = env != nullptr && env[0] != '\0' ? env : "./out";
  }
  auto pick = [&](const char* key, const std::string& fallback) {
    const std::string v = io.at(key).get<std::string>();
    return v.empty() ? p.out_dir + "/" + fallback : v;
  };
  p.dataset = pick("dataset", "gen-data/dataset.mcds");
  p.concepts_checkpoint = pick("concepts_checkpoint", "train-concepts/concepts.mcck");
  p.concepts_metrics = pick("concepts_metrics", "train-concepts/metrics.jsonl");
  p.labels = pick("labels", "label/labels.mclb");
  p.policy_checkpoint = pick("policy_checkpoint", "train-policy/policy.mcck");
  p.policy_metrics = pick("policy_metrics", "train-policy/metrics.jsonl");
  return p;
}

std::uint64_t master_seed_from(const json& config) {
  return config.at("seed").get<std::uint64_t>();
}

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for fingerprint: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return hex64(h);
}

}  // namespace mcd
