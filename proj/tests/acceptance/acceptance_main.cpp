// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier criteria reuse artifacts produced by earlier ones inside
// the work directory (./acceptance_work).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mcd/analysis.hpp"
#include "mcd/env.hpp"
#include "mcd/mine.hpp"
#include "mcd/policy.hpp"
#include "mcd/segmentation.hpp"
#include "mcd/trainer.hpp"

using namespace mcd;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << detail
            << std::endl;
  if (!pass) g_failures += 1;
}

void report_extra(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " supplementary " << name << ": " << detail
            << std::endl;
  if (!pass) g_failures += 1;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// independent segmentation oracle: re-checks every pairwise distance from its
// own arccos computation at each candidate extension
// ---------------------------------------------------------------------------

double oracle_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double cosine = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(cosine, -1.0, 1.0)) / 3.14159265358979323846;
}

std::vector<Interval> oracle_segmentation(const Eigen::MatrixXd& latents, double eps) {
  const int t = static_cast<int>(latents.rows());
  std::vector<Interval> out;
  int start = 1;
  while (start <= t) {
    int end = start + 1;
    for (int candidate = start + 1; candidate <= t; ++candidate) {
      bool coherent = true;
      for (int a = start; a <= candidate && coherent; ++a) {
        for (int b = start; b <= candidate && coherent; ++b) {
          if (a != b && oracle_distance(latents.row(a - 1), latents.row(b - 1)) >= eps) {
            coherent = false;
          }
        }
      }
      if (!coherent) break;
      end = candidate + 1;
    }
    out.push_back({start, end});
    start = end;
  }
  return out;
}

int oracle_terminal(int timestep, const std::vector<Interval>& intervals, int t) {
  for (const auto& iv : intervals) {
    if (timestep >= iv.start && timestep < iv.end) return std::min(t, iv.end);
  }
  return -1;
}

Eigen::MatrixXd random_walk_latents(int t, int dim, Rng& rng) {
  Eigen::MatrixXd m(t, dim);
  Eigen::VectorXd cur(dim);
  for (int k = 0; k < dim; ++k) cur(k) = rng.normal();
  cur.normalize();
  for (int r = 0; r < t; ++r) {
    if (rng.uniform01() < 0.15) {
      for (int k = 0; k < dim; ++k) cur(k) = rng.normal();
    } else {
      for (int k = 0; k < dim; ++k) cur(k) += 0.15 * rng.normal();
    }
    cur.normalize();
    m.row(r) = cur;
  }
  return m;
}

std::pair<bool, std::string> criterion_1_and_3() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240501);
  const int dims[3] = {2, 8, 64};
  long seg_mismatches = 0, terminal_mismatches = 0, terminal_bound_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int t = 2 + static_cast<int>(rng.uniform_int(0, 48));
    const int dim = dims[trial % 3];
    const auto latents = random_walk_latents(t, dim, rng);
    for (int e = 0; e <= 20; ++e) {
      const double eps = e * 0.05;
      const auto fast = derive_subprocesses(latents, eps);
      const auto slow = oracle_segmentation(latents, eps);
      if (fast.intervals.size() != slow.size()) {
        seg_mismatches += 1;
        continue;
      }
      for (std::size_t k = 0; k < slow.size(); ++k) {
        if (!(fast.intervals[k] == slow[k])) seg_mismatches += 1;
      }
      for (int tt = 1; tt <= t; ++tt) {
        const int got = terminal_index(tt, fast);
        const int want = oracle_terminal(tt, slow, t);
        if (got != want) terminal_mismatches += 1;
        if (tt < t && (got < tt + 1 || got > t)) terminal_bound_violations += 1;
        if (tt == t && got != t) terminal_bound_violations += 1;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  {
    std::ostringstream d;
    d << "segmentation equals brute force on 1000 sequences x 21 eps (mismatches="
      << seg_mismatches << ", " << std::fixed << std::setprecision(1) << elapsed << "s)";
    report(1, seg_mismatches == 0 && elapsed < 60.0, d.str());
  }
  std::ostringstream d;
  d << "terminal mapping matches brute force and stays in [t+1, T] (mismatches="
    << terminal_mismatches << ", bound violations=" << terminal_bound_violations << ")";
  return {terminal_mismatches == 0 && terminal_bound_violations == 0, d.str()};
}

void criterion_2() {
  Rng rng(77001);
  long violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 3 + static_cast<int>(rng.uniform_int(0, 37));
    const auto latents = random_walk_latents(t, 8, rng);
    const auto dist = pairwise_spherical_distances(latents);
    Segmentation prev;
    for (int e = 0; e <= 10; ++e) {
      const auto seg = derive_subprocesses_from_distances(dist, e / 10.0);
      if (e == 0 && seg.cluster_count() != t) violations += 1;
      if (e > 0) {
        if (seg.cluster_count() > prev.cluster_count()) violations += 1;
        for (std::size_t k = 0; k < seg.intervals.size(); ++k) {
          if (seg.intervals[k].start < prev.intervals[k].start) violations += 1;
        }
      }
      prev = seg;
    }
    // constant sequences collapse to a single interval for eps > 0
    Eigen::MatrixXd constant(6, 8);
    for (int r = 0; r < 6; ++r) constant.row(r) = latents.row(0);
    for (const double eps : {0.1, 0.5, 1.0}) {
      if (derive_subprocesses(constant, eps).cluster_count() != 1) violations += 1;
    }
  }
  std::ostringstream d;
  d << "hierarchy monotonicity over 200 sequences x 11 eps (violations=" << violations << ")";
  report(2, violations == 0, d.str());
}

void criterion_4() {
  Rng rng(88002);
  long counts[8] = {0};
  long empty = 0;
  for (int i = 0; i < 70000; ++i) {
    const auto p = sample_mask(3, rng);
    int code = 0;
    for (int m = 0; m < 3; ++m) code |= p.masked[static_cast<std::size_t>(m)] ? (1 << m) : 0;
    if (code == 0) empty += 1;
    counts[code] += 1;
  }
  double chi2 = 0.0;
  const double expected = 70000.0 / 7.0;
  for (int code = 1; code <= 7; ++code) {
    const double diff = counts[code] - expected;
    chi2 += diff * diff / expected;
  }
  // chi-square upper 0.001 quantile at 6 dof
  const double critical = 22.4577;
  std::ostringstream d;
  d << "mask distribution chi2=" << std::fixed << std::setprecision(3) << chi2 << " < "
    << critical << " (p > 0.001), empty patterns=" << empty;
  report(4, chi2 < critical && empty == 0, d.str());
}

std::vector<ModalitySpec> small_specs() {
  return {{"scene", 3, ReconNorm::kL2},
          {"hand", 2, ReconNorm::kL2},
          {"proprio", 2, ReconNorm::kL1}};
}

void criterion_5() {
  // float64 gradient check of the joint objective through all three networks
  // at 20 random parameter points, plus the unit-norm invariant.
  int points_checked = 0, coords_checked = 0;
  double worst = 0.0;
  double worst_norm_err = 0.0;
  std::string worst_name;

  for (int point = 0; point < 20; ++point) {
    EncoderConfig ecfg;
    ecfg.dz = 8;
    ecfg.depth = 1;
    ecfg.heads = 2;
    ecfg.mlp_hidden = 8;
    ecfg.ffn = 16;
    ecfg.t_context = 4;
    ReconNetConfig rcfg;
    rcfg.depth = 1;
    rcfg.heads = 2;
    rcfg.mlp_hidden = 8;
    rcfg.ffn = 16;
    rcfg.dec_hidden = 8;

    ParamStore<double> store;
    Rng rng(derive_seed(5000, "gradcheck-params", static_cast<std::uint64_t>(point)));
    auto nets = ConceptNets<double>::create(store, ecfg, rcfg, rcfg, small_specs(), rng);

    WindowBatch<double> batch;
    batch.windows = 2;
    batch.t_context = 4;
    Rng drng(derive_seed(5001, "gradcheck-data", static_cast<std::uint64_t>(point)));
    for (const auto& m : small_specs()) {
      Mat<double> x(8, m.dim);
      for (int c = 0; c < m.dim; ++c) {
        for (int r = 0; r < 8; ++r) x(r, c) = drng.normal();
      }
      batch.modality.push_back(std::move(x));
    }

    Rng mask_rng(derive_seed(5002, "gradcheck-mask", static_cast<std::uint64_t>(point)));
    std::vector<MaskPattern> masks{sample_mask(3, mask_rng), sample_mask(3, mask_rng)};

    // epsilons centered in the widest gap of pairwise distances, so the
    // discrete target selection cannot flip inside the +-h stencil
    std::vector<double> eps;
    Eigen::MatrixXd latents;
    {
      Tape<double> tape(&store);
      std::vector<int> inputs;
      for (const auto& m : batch.modality) inputs.push_back(tape.input(m));
      const int z = nets.encoder.encode(tape, inputs, 2);
      latents = tape.value(z);
      // unit-norm invariant on these latents
      for (int r = 0; r < latents.rows(); ++r) {
        worst_norm_err = std::max(worst_norm_err, std::abs(latents.row(r).norm() - 1.0));
      }
    }
    for (int b = 0; b < 2; ++b) {
      const auto dist = pairwise_spherical_distances(latents.middleRows(b * 4, 4));
      std::vector<double> vals{0.0, 1.0};
      for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) vals.push_back(dist(i, j));
      }
      std::sort(vals.begin(), vals.end());
      double best = 0.5, width = 0.0;
      for (std::size_t k = 1; k < vals.size(); ++k) {
        if (vals[k] - vals[k - 1] > width) {
          width = vals[k] - vals[k - 1];
          best = 0.5 * (vals[k] + vals[k - 1]);
        }
      }
      eps.push_back(best);
    }

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

    Rng pick(derive_seed(5003, "gradcheck-pick", static_cast<std::uint64_t>(point)));
    const double h = 1e-5;
    for (int s = 0; s < 12; ++s) {
      const int p = static_cast<int>(pick.uniform_int(0, static_cast<int>(store.entries.size()) - 1));
      auto& value = store.entries[static_cast<std::size_t>(p)].value;
      const int r = static_cast<int>(pick.uniform_int(0, value.rows() - 1));
      const int c = static_cast<int>(pick.uniform_int(0, value.cols() - 1));
      const double keep = value(r, c);
      value(r, c) = keep + h;
      const double fp = loss();
      value(r, c) = keep - h;
      const double fm = loss();
      value(r, c) = keep;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[static_cast<std::size_t>(p)](r, c);
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > worst) {
        worst = err;
        worst_name = store.entries[static_cast<std::size_t>(p)].name;
      }
      coords_checked += 1;
    }
    points_checked += 1;
  }

  std::ostringstream d;
  d << "float64 gradcheck over " << points_checked << " parameter points / " << coords_checked
    << " coordinates: worst rel err " << std::scientific << std::setprecision(2) << worst
    << " (" << worst_name << ") < 1e-4; max unit-norm error " << worst_norm_err << " < 1e-5";
  report(5, worst < 1e-4 && worst_norm_err < 1e-5, d.str());
}

}  // namespace

// later criteria live in separate translation stages of this file
#include "acceptance_trained.inc"

int main() {
  std::cout << "acceptance suite starting; work dir ./acceptance_work" << std::endl;
  fs::create_directories("acceptance_work");

  const auto [c3_pass, c3_detail] = criterion_1_and_3();
  criterion_2();
  report(3, c3_pass, c3_detail);
  criterion_4();
  criterion_5();

  run_trained_criteria();

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT") << " ("
            << g_failures << " failing)" << std::endl;
  return g_failures == 0 ? 0 : 1;
}
