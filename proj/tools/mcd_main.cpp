#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcd/analysis.hpp"
#include "mcd/config.hpp"
#include "mcd/dataset_io.hpp"
#include "mcd/mine.hpp"
#include "mcd/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mcd;

namespace {

struct Provenance {
  json inputs = json::object();
  json outputs = json::array();

  void input(const std::string& path) { inputs[path] = file_fingerprint(path); }
  void output(const std::string& path) { outputs.push_back(path); }
};

// Every command writes the resolved config and its input fingerprints next to
// its outputs.
void finalize_dir(const std::string& dir, const json& config, const Provenance& prov) {
  json p;
  p["inputs"] = prov.inputs;
  p["outputs"] = prov.outputs;
  write_text_file(dir + "/resolved_config.json", config.dump(2) + "\n");
  write_text_file(dir + "/provenance.json", p.dump(2) + "\n");
}

void require_input(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw ValidationError(what + " not found: " + path);
  }
}

std::string command_dir(const json& config, const std::string& command) {
  const auto io = io_paths_from(config);
  const std::string dir = io.out_dir + "/" + command;
  fs::create_directories(dir);
  return dir;
}

double rate_stderr(double rate, int episodes) {
  if (episodes <= 1) return 0.0;
  return std::sqrt(rate * (1.0 - rate) / episodes);
}

int cmd_gen_data(const json& config) {
  const auto io = io_paths_from(config);
  fs::create_directories(fs::path(io.dataset).parent_path());
  const std::string dir = command_dir(config, "gen-data");

  GenerationReport report;
  const auto ds = generate_demonstrations(env_spec_from(config), task_mix_from(config),
                                          demo_count_from(config),
                                          derive_seed(master_seed_from(config), "data"), &report);
  write_dataset(ds, io.dataset);

  Provenance prov;
  prov.output(io.dataset);
  finalize_dir(dir, config, prov);
  std::cout << "wrote " << io.dataset << " (" << ds.demos.size() << " demos, "
            << report.discarded << " discarded)\n";
  return 0;
}

int cmd_train_concepts(const json& config) {
  const auto io = io_paths_from(config);
  require_input(io.dataset, "dataset");
  const std::string dir = command_dir(config, "train-concepts");
  fs::create_directories(fs::path(io.concepts_checkpoint).parent_path());
  fs::create_directories(fs::path(io.concepts_metrics).parent_path());

  const auto ds = read_dataset(io.dataset);
  const auto result = train_concepts(ds, encoder_config_from(config),
                                     recon_config_from(config, "cmcn"),
                                     recon_config_from(config, "mhfp"), train_config_from(config),
                                     io.concepts_checkpoint, io.concepts_metrics);

  Provenance prov;
  prov.input(io.dataset);
  prov.output(io.concepts_checkpoint);
  prov.output(io.concepts_metrics);
  finalize_dir(dir, config, prov);
  std::cout << "trained " << result.metrics.size() << " iterations, final loss "
            << (result.metrics.empty() ? 0.0 : result.metrics.back().loss) << "\n";
  return 0;
}

ConceptModel load_checked_concept_model(const json& config, const Dataset& ds,
                                        const std::string& path) {
  const auto expected =
      concept_fingerprint(ds.modalities, encoder_config_from(config),
                          recon_config_from(config, "cmcn"), recon_config_from(config, "mhfp"),
                          train_config_from(config));
  auto model = load_concept_model(path, encoder_config_from(config),
                                  recon_config_from(config, "cmcn"),
                                  recon_config_from(config, "mhfp"), ds.modalities);
  if (model.header.fingerprint != expected) {
    throw ValidationError("refusing: checkpoint fingerprint " + model.header.fingerprint +
                          " does not match this configuration (" + expected + ")");
  }
  return model;
}

int cmd_label(const json& config) {
  const auto io = io_paths_from(config);
  require_input(io.dataset, "dataset");
  require_input(io.concepts_checkpoint, "concepts checkpoint");
  const std::string dir = command_dir(config, "label");
  fs::create_directories(fs::path(io.labels).parent_path());

  const auto ds = read_dataset(io.dataset);
  const auto model = load_checked_concept_model(config, ds, io.concepts_checkpoint);
  const auto labels = label_dataset(ds, model);
  write_labels(io.labels, labels, model.header.fingerprint);

  Provenance prov;
  prov.input(io.dataset);
  prov.input(io.concepts_checkpoint);
  prov.output(io.labels);
  finalize_dir(dir, config, prov);
  std::cout << "labeled " << labels.size() << " demos -> " << io.labels << "\n";
  return 0;
}

int cmd_train_policy(const json& config) {
  const auto io = io_paths_from(config);
  require_input(io.dataset, "dataset");
  require_input(io.labels, "concept labels");
  const std::string dir = command_dir(config, "train-policy");
  fs::create_directories(fs::path(io.policy_checkpoint).parent_path());
  fs::create_directories(fs::path(io.policy_metrics).parent_path());

  const auto ds = read_dataset(io.dataset);
  const auto labels = read_labels(io.labels);
  const auto expected =
      concept_fingerprint(ds.modalities, encoder_config_from(config),
                          recon_config_from(config, "cmcn"), recon_config_from(config, "mhfp"),
                          train_config_from(config));
  if (labels.fingerprint != expected) {
    throw ValidationError("refusing: labels were produced by checkpoint " + labels.fingerprint +
                          ", configuration expects " + expected);
  }

  const auto result = train_policy(ds, labels.labels, policy_config_from(config),
                                   policy_train_config_from(config), io.policy_checkpoint,
                                   io.policy_metrics);

  Provenance prov;
  prov.input(io.dataset);
  prov.input(io.labels);
  prov.output(io.policy_checkpoint);
  prov.output(io.policy_metrics);
  finalize_dir(dir, config, prov);
  std::cout << "trained policy, final loss "
            << (result.metrics.empty() ? 0.0 : result.metrics.back().loss) << "\n";
  return 0;
}

int cmd_eval(const json& config) {
  const auto io = io_paths_from(config);
  require_input(io.dataset, "dataset");
  require_input(io.policy_checkpoint, "policy checkpoint");
  const std::string dir = command_dir(config, "eval");

  const auto ds = read_dataset(io.dataset);
  const auto model = load_policy_model(io.policy_checkpoint, ds);
  auto rollout = make_net_policy(model);

  const int episodes = config.at("policy").at("eval_episodes").get<int>();
  const auto splits = evaluate_policy_splits(*rollout, env_spec_from(config), episodes,
                                             derive_seed(master_seed_from(config), "eval"));

  std::ostringstream csv;
  csv << "split,success_rate,stderr,episodes\n";
  json log = json::array();
  for (const auto& split : splits) {
    csv << split.split << "," << split.success_rate << ","
        << rate_stderr(split.success_rate, episodes) << "," << episodes << "\n";
    for (const auto& e : split.episodes) {
      log.push_back({{"split", split.split},
                     {"seed", e.seed},
                     {"success", e.success},
                     {"steps", e.steps}});
    }
  }
  write_text_file(dir + "/success_rates.csv", csv.str());
  write_text_file(dir + "/episodes.json", log.dump(2) + "\n");

  Provenance prov;
  prov.input(io.dataset);
  prov.input(io.policy_checkpoint);
  prov.output(dir + "/success_rates.csv");
  prov.output(dir + "/episodes.json");
  finalize_dir(dir, config, prov);
  std::cout << csv.str();
  return 0;
}

void analyze_semantic(const Dataset& ds, const ConceptLabels& labels, const std::string& dir,
                      Provenance& prov) {
  const auto groups = group_by_gt_segments(ds, labels);
  const auto sim = class_similarity(groups);
  std::vector<std::string> names;
  for (const auto& g : groups) names.push_back(g.label);

  std::ostringstream csv;
  csv << "group";
  for (const auto& n : names) csv << "," << n;
  csv << "\n";
  for (int i = 0; i < sim.rows(); ++i) {
    csv << names[static_cast<std::size_t>(i)];
    for (int j = 0; j < sim.cols(); ++j) csv << "," << sim(i, j);
    csv << "\n";
  }
  write_text_file(dir + "/class_similarity.csv", csv.str());
  write_text_file(dir + "/class_similarity.svg",
                  svg_heatmap(sim, names, "mean pairwise cosine by sub-goal group"));
  json j;
  j["diagonal_row_max_fraction"] = diagonal_row_max_fraction(sim);
  j["groups"] = names;
  write_text_file(dir + "/semantic.json", j.dump(2) + "\n");
  prov.output(dir + "/class_similarity.csv");
  prov.output(dir + "/class_similarity.svg");
  prov.output(dir + "/semantic.json");
}

void analyze_motion(const Dataset& ds, const ConceptLabels& labels, const std::string& dir,
                    Provenance& prov) {
  const auto groups = group_by_motion(ds, labels);
  const auto sim = class_similarity(groups);
  std::vector<std::string> names;
  for (const auto& g : groups) names.push_back(g.label);
  write_text_file(dir + "/motion_similarity.svg",
                  svg_heatmap(sim, names, "mean pairwise cosine by motion group"));
  std::ostringstream csv;
  csv << "group";
  for (const auto& n : names) csv << "," << n;
  csv << "\n";
  for (int i = 0; i < sim.rows(); ++i) {
    csv << names[static_cast<std::size_t>(i)];
    for (int j = 0; j < sim.cols(); ++j) csv << "," << sim(i, j);
    csv << "\n";
  }
  write_text_file(dir + "/motion_similarity.csv", csv.str());
  prov.output(dir + "/motion_similarity.csv");
  prov.output(dir + "/motion_similarity.svg");
}

void analyze_diversity(const json& config, const ConceptLabels& labels, const std::string& dir,
                       Provenance& prov) {
  const int max_latents = config.at("analysis").at("max_latents").get<int>();
  const auto grid = config.at("analysis").at("dbscan_grid").get<std::vector<double>>();

  long total = 0;
  for (const auto& m : labels) total += m.rows();
  Eigen::MatrixXd pooled(std::min<long>(total, max_latents), labels[0].cols());
  Rng rng(derive_seed(master_seed_from(config), "diversity"));
  long written = 0;
  for (const auto& m : labels) {
    for (int r = 0; r < m.rows() && written < pooled.rows(); ++r) {
      if (total <= pooled.rows() ||
          rng.uniform01() < static_cast<double>(pooled.rows()) / static_cast<double>(total)) {
        pooled.row(written) = m.row(r).cast<double>();
        written += 1;
      }
    }
  }
  pooled.conservativeResize(written, pooled.cols());

  const auto counts = diversity_sweep(pooled, grid);
  std::ostringstream csv;
  csv << "eps,clusters\n";
  std::vector<double> ys;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    csv << grid[i] << "," << counts[i] << "\n";
    ys.push_back(counts[i]);
  }
  write_text_file(dir + "/diversity.csv", csv.str());
  write_text_file(dir + "/diversity.svg",
                  svg_curve(grid, ys, "eps", "clusters", "density clusters per eps"));
  prov.output(dir + "/diversity.csv");
  prov.output(dir + "/diversity.svg");
}

void analyze_hierarchy(const json& config, const Dataset& ds, const ConceptLabels& labels,
                       const std::string& dir, Provenance& prov) {
  auto eps_list = config.at("analysis").at("eps_list").get<std::vector<double>>();
  std::sort(eps_list.begin(), eps_list.end());
  const int demos = std::min<int>(config.at("analysis").at("hierarchy_demos").get<int>(),
                                  static_cast<int>(ds.demos.size()));

  json all = json::array();
  for (int d = 0; d < demos; ++d) {
    const auto report = hierarchy_demo_report(labels[static_cast<std::size_t>(d)], eps_list,
                                              ds.demos[static_cast<std::size_t>(d)].gt_segments, d);
    all.push_back(hierarchy_report_json(report));

    // coarse (large eps) on top, ground truth at the bottom
    std::vector<TimelineRow> rows;
    for (auto it = report.per_eps.rbegin(); it != report.per_eps.rend(); ++it) {
      TimelineRow row;
      std::ostringstream title;
      title << "eps=" << it->epsilon << " (K=" << it->cluster_count() << ")";
      row.title = title.str();
      for (const auto& iv : it->intervals) row.intervals.push_back({iv.start, iv.end});
      rows.push_back(std::move(row));
    }
    TimelineRow gt_row;
    gt_row.title = "ground truth";
    for (const auto& s : ds.demos[static_cast<std::size_t>(d)].gt_segments) {
      gt_row.intervals.push_back({s.start, s.end});
    }
    rows.push_back(std::move(gt_row));
    const std::string svg_path = dir + "/hierarchy_demo" + std::to_string(d) + ".svg";
    write_text_file(svg_path,
                    svg_timeline(rows, ds.demos[static_cast<std::size_t>(d)].length,
                                 "segmentations by coherence, demo " + std::to_string(d)));
    prov.output(svg_path);
  }
  write_text_file(dir + "/hierarchy.json", all.dump(2) + "\n");
  prov.output(dir + "/hierarchy.json");
}

void analyze_gallery(const json& config, const Dataset& ds, const std::string& dir,
                     Provenance& prov) {
  const auto io = io_paths_from(config);
  require_input(io.concepts_checkpoint, "concepts checkpoint");
  const auto model = load_checked_concept_model(config, ds, io.concepts_checkpoint);

  auto eps_list = config.at("analysis").at("eps_list").get<std::vector<double>>();
  const int demo = config.at("analysis").at("gallery_demo").get<int>();
  const int count = config.at("analysis").at("gallery_timesteps").get<int>();
  const int length = ds.demos[static_cast<std::size_t>(demo)].length;
  std::vector<int> timesteps;
  for (int k = 0; k < count; ++k) {
    timesteps.push_back(1 + static_cast<int>((length - 1) * (k + 0.5) / count));
  }

  const auto rows = goal_gallery(ds, model, demo, eps_list, timesteps);
  write_text_file(dir + "/gallery.csv", gallery_to_csv(rows));
  prov.output(dir + "/gallery.csv");

  // schematic overlays: current frame, predicted goal, true terminal
  const auto env = env_spec_from(config);
  for (const auto& row : rows) {
    const auto& demo_ref = ds.demos[static_cast<std::size_t>(demo)];
    std::vector<std::vector<double>> current, truth;
    for (int m = 0; m < ds.modality_count(); ++m) {
      const int dim = ds.modalities[static_cast<std::size_t>(m)].dim;
      const auto cr = demo_ref.modality_row(m, row.timestep - 1, dim);
      const auto tr = demo_ref.modality_row(m, row.terminal - 1, dim);
      current.emplace_back(cr.begin(), cr.end());
      truth.emplace_back(tr.begin(), tr.end());
    }
    std::ostringstream name;
    name << dir << "/gallery_eps" << row.eps << "_t" << row.timestep << ".svg";
    std::ostringstream title;
    title << "eps=" << row.eps << " t=" << row.timestep << " goal=" << row.terminal;
    write_text_file(name.str(),
                    svg_arena({decode_observation(current, env),
                               decode_observation(row.predicted, env),
                               decode_observation(truth, env)},
                              {"current", "predicted goal", "true terminal"}, env.goal_radius,
                              title.str()));
    prov.output(name.str());
  }
}

void analyze_cmi(const json& config, const Dataset& ds, const ConceptLabels& labels,
                 const std::string& dir, Provenance& prov) {
  const auto& a = config.at("analysis");
  MineConfig mine;
  mine.iterations = a.at("mine").at("iterations").get<int>();
  mine.batch = a.at("mine").at("batch").get<int>();
  mine.lr = a.at("mine").at("lr").get<double>();
  mine.hidden_multiplier = a.at("mine").at("hidden_multiplier").get<double>();
  mine.restarts = a.at("mine").at("restarts").get<int>();
  const int n = a.at("cmi_samples").get<int>();
  const std::uint64_t seed = derive_seed(master_seed_from(config), "cmi");

  json out = json::array();
  std::ostringstream csv;
  csv << "pair,cmi,term_xy,term_xy_z,term_xz,term_yz\n";
  const int m_count = ds.modality_count();
  for (int i = 0; i < m_count; ++i) {
    for (int j = i + 1; j < m_count; ++j) {
      const auto samples = collect_cmi_samples(ds, labels, i, j, n, seed);
      const auto r =
          estimate_cmi(samples.x, samples.y, samples.z, mine,
                       derive_seed(seed, "pair", static_cast<std::uint64_t>(i * 16 + j)));
      const std::string pair = ds.modalities[static_cast<std::size_t>(i)].name + ":" +
                               ds.modalities[static_cast<std::size_t>(j)].name;
      csv << pair << "," << r.cmi << "," << r.term_xy << "," << r.term_xy_z << "," << r.term_xz
          << "," << r.term_yz << "\n";
      out.push_back({{"pair", pair},
                     {"cmi", r.cmi},
                     {"terms",
                      {{"xy", r.term_xy}, {"xy_z", r.term_xy_z}, {"xz", r.term_xz},
                       {"yz", r.term_yz}}},
                     {"degenerate", r.degenerate}});
    }
  }
  write_text_file(dir + "/cmi.csv", csv.str());
  write_text_file(dir + "/cmi.json", out.dump(2) + "\n");
  prov.output(dir + "/cmi.csv");
  prov.output(dir + "/cmi.json");
}

int cmd_analyze(const json& config, const std::set<std::string>& which) {
  const auto io = io_paths_from(config);
  require_input(io.dataset, "dataset");
  require_input(io.labels, "concept labels");
  const std::string dir = command_dir(config, "analysis");

  const auto ds = read_dataset(io.dataset);
  const auto labels_file = read_labels(io.labels);
  const auto& labels = labels_file.labels;
  if (labels.size() != ds.demos.size()) {
    throw ValidationError("labels file does not match the dataset demo count");
  }

  Provenance prov;
  prov.input(io.dataset);
  prov.input(io.labels);

  auto wants = [&](const char* name) { return which.empty() || which.count(name) > 0; };
  if (wants("semantic")) analyze_semantic(ds, labels, dir, prov);
  if (wants("motion")) analyze_motion(ds, labels, dir, prov);
  if (wants("diversity")) analyze_diversity(config, labels, dir, prov);
  if (wants("hierarchy")) analyze_hierarchy(config, ds, labels, dir, prov);
  if (wants("gallery")) {
    analyze_gallery(config, ds, dir, prov);
    prov.input(io.concepts_checkpoint);
  }
  if (wants("cmi")) analyze_cmi(config, ds, labels, dir, prov);

  finalize_dir(dir, config, prov);
  std::cout << "analysis written to " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manipulation concept discovery pipeline"};
  app.require_subcommand(1);
  app.fallthrough(true);  // global -c/--set may follow the subcommand

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file (defaults when omitted)");
  app.add_option("--set", overrides, "dotted-path override, e.g. --set train.seed=7");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic demonstration dataset");
  auto* train = app.add_subcommand("train-concepts", "run concept discovery training");
  auto* label = app.add_subcommand("label", "label the dataset with concept latents");
  auto* pol = app.add_subcommand("train-policy", "train the concept-enhanced policy");
  auto* eval = app.add_subcommand("eval", "evaluate the policy across splits");
  auto* analyze = app.add_subcommand("analyze", "run analyses over labeled concepts");
  std::vector<std::string> which;
  analyze
      ->add_option("--which", which,
                   "subset of analyses: semantic, motion, diversity, hierarchy, gallery, cmi")
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    const json config = load_config(config_path, overrides);
    if (gen->parsed()) return cmd_gen_data(config);
    if (train->parsed()) return cmd_train_concepts(config);
    if (label->parsed()) return cmd_label(config);
    if (pol->parsed()) return cmd_train_policy(config);
    if (eval->parsed()) return cmd_eval(config);
    if (analyze->parsed()) {
      const std::set<std::string> names{which.begin(), which.end()};
      for (const auto& name : names) {
        static const std::set<std::string> known{"semantic", "motion",  "diversity",
                                                 "hierarchy", "gallery", "cmi"};
        if (known.count(name) == 0) throw ValidationError("unknown analysis: " + name);
      }
      return cmd_analyze(config, names);
    }
  } catch (const std::exception& e) {
    const char* kind = "error";
    if (dynamic_cast<const ValidationError*>(&e) != nullptr) {
      kind = "validation";
    } else if (dynamic_cast<const FormatError*>(&e) != nullptr) {
      kind = "format";
    } else if (dynamic_cast<const NumericError*>(&e) != nullptr) {
      kind = "numeric";
    } else if (dynamic_cast<const IoError*>(&e) != nullptr) {
      kind = "io";
    }
    json err;
    err["error"] = {{"kind", kind}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
