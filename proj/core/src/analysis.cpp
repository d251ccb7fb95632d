#include "mcd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace mcd {

using nlohmann::json;

Eigen::MatrixXd class_similarity(const std::vector<ConceptGroup>& groups) {
  if (groups.size() < 2) throw ValidationError("class_similarity: need at least 2 groups");
  for (const auto& g : groups) g.validate();

  // Mean pairwise cosine equals the dot product of mean normalized members.
  const int n = static_cast<int>(groups.size());
  std::vector<Eigen::VectorXd> mean_dirs;
  for (const auto& g : groups) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(g.members.cols());
    for (int r = 0; r < g.members.rows(); ++r) {
      const double norm = g.members.row(r).norm();
      if (norm <= 0) throw ValidationError("class_similarity: zero latent in '" + g.label + "'");
      acc += g.members.row(r).transpose() / norm;
    }
    mean_dirs.push_back(acc / static_cast<double>(g.members.rows()));
  }
  Eigen::MatrixXd sim(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) sim(i, j) = mean_dirs[static_cast<std::size_t>(i)].dot(
        mean_dirs[static_cast<std::size_t>(j)]);
  }
  return sim;
}

double diagonal_row_max_fraction(const Eigen::MatrixXd& similarity) {
  const int n = static_cast<int>(similarity.rows());
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    int argmax = 0;
    similarity.row(i).maxCoeff(&argmax);
    hits += argmax == i ? 1 : 0;
  }
  return n > 0 ? static_cast<double>(hits) / n : 0.0;
}

std::vector<ConceptGroup> group_by_gt_segments(const Dataset& dataset,
                                               const ConceptLabels& labels) {
  if (labels.size() != dataset.demos.size()) {
    throw ValidationError("group_by_gt_segments: labels misaligned with dataset");
  }
  std::map<std::string, std::vector<Eigen::RowVectorXd>> pool;
  for (std::size_t d = 0; d < dataset.demos.size(); ++d) {
    for (const auto& seg : dataset.demos[d].gt_segments) {
      for (int t = seg.start; t < seg.end; ++t) {
        pool[seg.label].push_back(labels[d].row(t - 1).cast<double>());
      }
    }
  }
  std::vector<ConceptGroup> groups;
  for (auto& [label, rows] : pool) {
    ConceptGroup g;
    g.label = label;
    g.members.resize(static_cast<int>(rows.size()), rows[0].cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      g.members.row(static_cast<int>(r)) = rows[r];
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<ConceptGroup> group_by_motion(const Dataset& dataset, const ConceptLabels& labels) {
  if (labels.size() != dataset.demos.size()) {
    throw ValidationError("group_by_motion: labels misaligned with dataset");
  }
  if (dataset.action_dim < 3) throw ValidationError("group_by_motion: need (dx, dy, grip) actions");

  // Axis order: 0 = left-right (x), 1 = forward-backward (y), 2 = gripper.
  double max_abs[3] = {0, 0, 0};
  for (const auto& demo : dataset.demos) {
    for (int t = 0; t < demo.length; ++t) {
      const auto a = demo.action_row(t, dataset.action_dim);
      for (int axis = 0; axis < 3; ++axis) {
        max_abs[axis] = std::max(max_abs[axis], std::abs(static_cast<double>(a[static_cast<std::size_t>(axis)])));
      }
    }
  }

  const char* names[3][3] = {{"x:left", "x:right", "x:still"},
                             {"y:backward", "y:forward", "y:still"},
                             {"grip:close", "grip:open", "grip:still"}};
  std::map<std::string, std::vector<Eigen::RowVectorXd>> pool;
  for (std::size_t d = 0; d < dataset.demos.size(); ++d) {
    const auto& demo = dataset.demos[d];
    for (int t = 0; t < demo.length; ++t) {
      const auto a = demo.action_row(t, dataset.action_dim);
      for (int axis = 0; axis < 3; ++axis) {
        const double v = static_cast<double>(a[static_cast<std::size_t>(axis)]);
        const char* key;
        // still only when strictly below 20% of the observed maximum
        if (std::abs(v) < 0.2 * max_abs[axis]) {
          key = names[axis][2];
        } else {
          key = v < 0 ? names[axis][0] : names[axis][1];
        }
        pool[key].push_back(labels[d].row(t).cast<double>());
      }
    }
  }

  std::vector<ConceptGroup> groups;
  for (auto& [label, rows] : pool) {
    ConceptGroup g;
    g.label = label;
    g.members.resize(static_cast<int>(rows.size()), rows[0].cols());
    for (std::size_t r = 0; r < rows.size(); ++r) g.members.row(static_cast<int>(r)) = rows[r];
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<int> diversity_sweep(const Eigen::MatrixXd& latents,
                                 const std::vector<double>& eps_grid) {
  const int n = static_cast<int>(latents.rows());
  if (n == 0) throw ValidationError("diversity_sweep: no latents");
  Eigen::MatrixXd dist(n, n);
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double d = (latents.row(i) - latents.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  std::vector<int> counts;
  std::vector<int> component(static_cast<std::size_t>(n));
  std::vector<int> stack;
  for (const double eps : eps_grid) {
    if (eps <= 0) throw ValidationError("diversity_sweep: eps must be positive");
    std::fill(component.begin(), component.end(), -1);
    int clusters = 0;
    for (int i = 0; i < n; ++i) {
      if (component[static_cast<std::size_t>(i)] >= 0) continue;
      stack.assign(1, i);
      component[static_cast<std::size_t>(i)] = clusters;
      while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int w = 0; w < n; ++w) {
          if (component[static_cast<std::size_t>(w)] < 0 && dist(u, w) <= eps) {
            component[static_cast<std::size_t>(w)] = clusters;
            stack.push_back(w);
          }
        }
      }
      clusters += 1;
    }
    counts.push_back(clusters);
  }
  return counts;
}

double boundary_agreement(const Segmentation& seg, const std::vector<GtSegment>& gt,
                          int tolerance) {
  if (gt.empty()) return 0.0;
  std::vector<int> predicted;
  for (const auto& iv : seg.intervals) predicted.push_back(iv.start);
  predicted.push_back(seg.length + 1);

  int matched = 0;
  int total = 0;
  for (const auto& s : gt) {
    for (const int boundary : {s.start, s.end}) {
      total += 1;
      for (const int p : predicted) {
        if (std::abs(p - boundary) <= tolerance) {
          matched += 1;
          break;
        }
      }
    }
  }
  return total > 0 ? static_cast<double>(matched) / total : 0.0;
}

HierarchyDemoReport hierarchy_demo_report(const Eigen::MatrixXf& demo_labels,
                                          const std::vector<double>& eps_list,
                                          const std::vector<GtSegment>& gt, int demo_index) {
  if (!std::is_sorted(eps_list.begin(), eps_list.end())) {
    throw ValidationError("hierarchy report: eps list must be ascending");
  }
  HierarchyDemoReport report;
  report.demo_index = demo_index;
  const Eigen::MatrixXd latents = demo_labels.cast<double>();
  const Eigen::MatrixXd dist = pairwise_spherical_distances(latents);

  int prev_k = -1;
  for (const double eps : eps_list) {
    Segmentation seg = derive_subprocesses_from_distances(dist, eps);
    if (prev_k >= 0 && seg.cluster_count() > prev_k) report.k_non_increasing = false;
    prev_k = seg.cluster_count();
    const double agreement = boundary_agreement(seg, gt);
    if (agreement > report.boundary_agreement) {
      report.boundary_agreement = agreement;
      report.best_eps = eps;
    }
    report.per_eps.push_back(std::move(seg));
  }
  return report;
}

json hierarchy_report_json(const HierarchyDemoReport& r) {
  json j;
  j["demo"] = r.demo_index;
  j["k_non_increasing"] = r.k_non_increasing;
  j["boundary_agreement"] = r.boundary_agreement;
  j["best_eps"] = r.best_eps;
  json rows = json::array();
  for (const auto& seg : r.per_eps) {
    json intervals = json::array();
    for (const auto& iv : seg.intervals) intervals.push_back({{"start", iv.start}, {"end", iv.end}});
    rows.push_back({{"eps", seg.epsilon}, {"k", seg.cluster_count()}, {"intervals", intervals}});
  }
  j["per_eps"] = rows;
  return j;
}

std::vector<GalleryRow> goal_gallery(const Dataset& dataset, const ConceptModel& model,
                                     int demo_index, const std::vector<double>& eps_list,
                                     const std::vector<int>& timesteps) {
  if (demo_index < 0 || demo_index >= static_cast<int>(dataset.demos.size())) {
    throw ValidationError("goal_gallery: demo index out of range");
  }
  const auto& demo = dataset.demos[static_cast<std::size_t>(demo_index)];
  const int t_context = model.nets.encoder_cfg.t_context;
  auto& store = const_cast<ParamStore<float>&>(model.store);

  std::vector<GalleryRow> rows;
  for (const double eps : eps_list) {
    for (const int t : timesteps) {
      if (t < 1 || t > demo.length) throw ValidationError("goal_gallery: timestep out of range");
      const auto slot = labeling_slot(demo.length, t_context, t, demo_index);
      const Window w = slot.window;
      std::span<const Window> span(&w, 1);
      auto batch = assemble_windows<float>(dataset, span, t_context);

      Tape<float> tape(&store);
      std::vector<int> inputs;
      for (const auto& m : batch.modality) inputs.push_back(tape.input(m));
      const int z = model.nets.encoder.encode(tape, inputs, 1);

      // Window-level segmentation at this eps decides the target, matching
      // the training-time semantics.
      const auto& zv = tape.value(z);
      Eigen::MatrixXd latents = zv.cast<double>();
      const Segmentation seg = derive_subprocesses(latents, eps);
      const int goal_offset = terminal_index(slot.offset + 1, seg);  // window coords

      Mat<float> eps_rows = Mat<float>::Constant(t_context, 1, static_cast<float>(eps));
      const auto preds =
          model.nets.mhfp.forward(tape, inputs, z, tape.input(std::move(eps_rows)), 1, "mhfp");

      GalleryRow row;
      row.eps = eps;
      row.timestep = t;
      row.terminal = std::min(demo.length, w.start + goal_offset - 1);

      for (std::size_t m = 0; m < preds.size(); ++m) {
        const auto& pm = tape.value(preds[m]);
        const int dim = dataset.modalities[m].dim;
        std::vector<double> pred_vec;
        Eigen::RowVectorXd diff(dim);
        const auto target = demo.modality_row(static_cast<int>(m), row.terminal - 1, dim);
        for (int k = 0; k < dim; ++k) {
          const double p = static_cast<double>(pm(slot.offset, k));
          pred_vec.push_back(p);
          diff(k) = p - static_cast<double>(target[static_cast<std::size_t>(k)]);
        }
        const double err = dataset.modalities[m].recon_norm == ReconNorm::kL2
                               ? diff.norm()
                               : diff.cwiseAbs().sum();
        row.per_modality_error.push_back(err);
        row.prediction_error += err;
        row.predicted.push_back(std::move(pred_vec));
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string gallery_to_csv(const std::vector<GalleryRow>& rows) {
  std::ostringstream out;
  out << "eps,timestep,terminal,prediction_error\n";
  for (const auto& r : rows) {
    out << r.eps << "," << r.timestep << "," << r.terminal << "," << r.prediction_error << "\n";
  }
  return out.str();
}

CmiSamples collect_cmi_samples(const Dataset& dataset, const ConceptLabels& labels,
                               int modality_a, int modality_b, int max_samples,
                               std::uint64_t seed) {
  if (labels.size() != dataset.demos.size()) {
    throw ValidationError("collect_cmi_samples: labels misaligned with dataset");
  }
  std::vector<std::pair<int, int>> all;  // (demo, frame index)
  for (std::size_t d = 0; d < dataset.demos.size(); ++d) {
    for (int t = 0; t < dataset.demos[d].length; ++t) {
      all.push_back({static_cast<int>(d), t});
    }
  }
  Rng rng(derive_seed(seed, "cmi-subsample"));
  for (std::size_t i = all.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(all[i - 1], all[j]);
  }
  const int n = std::min<int>(max_samples, static_cast<int>(all.size()));

  const int da = dataset.modalities[static_cast<std::size_t>(modality_a)].dim;
  const int db = dataset.modalities[static_cast<std::size_t>(modality_b)].dim;
  const int dz = static_cast<int>(labels[0].cols());
  CmiSamples s;
  s.x.resize(n, da);
  s.y.resize(n, db);
  s.z.resize(n, dz);
  for (int i = 0; i < n; ++i) {
    const auto [d, t] = all[static_cast<std::size_t>(i)];
    const auto ra = dataset.demos[static_cast<std::size_t>(d)].modality_row(modality_a, t, da);
    const auto rb = dataset.demos[static_cast<std::size_t>(d)].modality_row(modality_b, t, db);
    for (int k = 0; k < da; ++k) s.x(i, k) = static_cast<double>(ra[static_cast<std::size_t>(k)]);
    for (int k = 0; k < db; ++k) s.y(i, k) = static_cast<double>(rb[static_cast<std::size_t>(k)]);
    s.z.row(i) = labels[static_cast<std::size_t>(d)].row(t).cast<double>();
  }
  return s;
}

}  // namespace mcd
