#include "mcd/mine.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "mcd/nets.hpp"
#include "mcd/optim.hpp"

namespace mcd {

namespace {

// Column-standardize; constant columns are flagged rather than divided by ~0.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, bool* degenerate) {
  Eigen::MatrixXd out = x;
  bool any_live = false;
  for (int c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    if (var < 1e-18) {
      out.col(c).setZero();
      continue;
    }
    any_live = true;
    out.col(c) = (x.col(c).array() - mean) / std::sqrt(var);
  }
  if (!any_live && degenerate) *degenerate = true;
  return out;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

double log_mean_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().mean());
}

// Statistic outputs are soft-bounded to +-kStatBound by a scaled tanh. Terms
// with deterministic dependence (e.g. Z identical to X) then saturate at the
// same ceiling on both sides of the decomposition and cancel, while modest
// log density ratios sit in the near-linear region.
constexpr double kStatBound = 6.0;

// One restart of the Donsker-Varadhan maximization.
double mine_once(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys, const MineConfig& cfg,
                 std::uint64_t seed) {
  const int n = static_cast<int>(xs.rows());
  const int dx = static_cast<int>(xs.cols());
  const int dy = static_cast<int>(ys.cols());
  const int input = dx + dy;
  const int hidden =
      std::max(2, static_cast<int>(std::ceil(cfg.hidden_multiplier * input)));

  ParamStore<double> store;
  Rng init(derive_seed(seed, "mine-init"));
  auto net = Mlp2<double>::create(store, "mine", input, hidden, 1, init);
  AdamW<double> opt({cfg.lr, 0.9, 0.999, 1e-8, 0.0});

  Rng shuffle_rng(derive_seed(seed, "mine-shuffle"));
  Rng batch_rng(derive_seed(seed, "mine-batch"));

  // Fixed evaluation inputs: full sample joint plus one fixed marginal shuffle.
  Eigen::MatrixXd joint_all(n, input);
  joint_all << xs, ys;
  const auto eval_perm = shuffled_indices(n, shuffle_rng);
  Eigen::MatrixXd marg_all(n, input);
  for (int i = 0; i < n; ++i) {
    marg_all.row(i).head(dx) = xs.row(i);
    marg_all.row(i).tail(dy) = ys.row(eval_perm[static_cast<std::size_t>(i)]);
  }

  auto statistic = [&](Tape<double>& tape, const Eigen::MatrixXd& rows) {
    return tape.bounded_tanh(net.forward(tape, tape.input(rows)), kStatBound);
  };

  auto bound_on = [&](const Eigen::MatrixXd& joint, const Eigen::MatrixXd& marg) {
    Tape<double> tape(&store);
    const Eigen::VectorXd vj = tape.value(statistic(tape, joint)).col(0);
    const Eigen::VectorXd vm = tape.value(statistic(tape, marg)).col(0);
    return vj.mean() - log_mean_exp(vm);
  };

  double tail_sum = 0.0;
  int tail_count = 0;
  const int batch = std::min(cfg.batch, n);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Eigen::MatrixXd joint(batch, input);
    Eigen::MatrixXd marg(batch, input);
    for (int b = 0; b < batch; ++b) {
      const int i = static_cast<int>(batch_rng.uniform_int(0, n - 1));
      const int j = static_cast<int>(batch_rng.uniform_int(0, n - 1));
      joint.row(b).head(dx) = xs.row(i);
      joint.row(b).tail(dy) = ys.row(i);
      marg.row(b).head(dx) = xs.row(i);
      marg.row(b).tail(dy) = ys.row(j);
    }

    Tape<double> tape(&store);
    const int tj = statistic(tape, joint);
    const int tm = statistic(tape, marg);

    // loss = -(mean(T_joint) - log mean exp(T_marg)); gradients assembled by
    // scaling the two column sums, with the exp term weighted by softmax-like
    // normalized weights. Build it with tape ops on the raw outputs.
    const auto& vj = tape.value(tj);
    const auto& vm = tape.value(tm);
    const double mx = vm.maxCoeff();
    Eigen::VectorXd w = (vm.col(0).array() - mx).exp();
    const double wsum = w.sum();

    // The DV loss is -(mean T_joint - log mean exp T_marg); its gradient in
    // the statistic outputs is -1/batch on joint rows and softmax weights on
    // marginal rows. A linear functional with those coefficients has the same
    // gradient, so it serves as the backward root.
    Mat<double> cj = Mat<double>::Constant(vj.rows(), 1, -1.0 / static_cast<double>(batch));
    Mat<double> cm(vm.rows(), 1);
    for (int i = 0; i < vm.rows(); ++i) cm(i, 0) = w(i) / wsum;
    const int lin_j = tape.matmul(tape.input(cj.transpose()), tj);  // 1x1
    const int lin_m = tape.matmul(tape.input(cm.transpose()), tm);  // 1x1
    const int root = tape.add(lin_j, lin_m);

    store.zero_grads();
    tape.backward(root);
    opt.step(store, cfg.lr);

    if (iter >= cfg.iterations - cfg.eval_tail) {
      tail_sum += bound_on(joint_all, marg_all);
      tail_count += 1;
    }
  }
  return tail_count > 0 ? tail_sum / tail_count : bound_on(joint_all, marg_all);
}

}  // namespace

double estimate_mi(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const MineConfig& cfg,
                   std::uint64_t seed) {
  if (x.rows() != y.rows()) throw ValidationError("estimate_mi: sample counts differ");
  bool degenerate = false;
  const Eigen::MatrixXd xs = standardize(x, &degenerate);
  const Eigen::MatrixXd ys = standardize(y, &degenerate);
  if (degenerate) return 0.0;

  double total = 0.0;
  for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
    total += mine_once(xs, ys, cfg, derive_seed(seed, "mine-restart", static_cast<std::uint64_t>(r)));
  }
  return total / std::max(1, cfg.restarts);
}

CmiResult estimate_cmi(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const Eigen::MatrixXd& z, const MineConfig& cfg, std::uint64_t seed) {
  if (x.rows() != y.rows() || x.rows() != z.rows()) {
    throw ValidationError("estimate_cmi: sample counts differ");
  }
  if (x.rows() < 1000) throw ValidationError("estimate_cmi: need at least 1000 samples");

  auto is_degenerate = [](const Eigen::MatrixXd& v) {
    for (int c = 0; c < v.cols(); ++c) {
      const double mean = v.col(c).mean();
      if ((v.col(c).array() - mean).square().mean() >= 1e-18) return false;
    }
    return true;
  };

  CmiResult r;
  if (is_degenerate(x) || is_degenerate(y) || is_degenerate(z)) {
    r.degenerate = true;
    std::cerr << "estimate_cmi: degenerate (constant) variable, terms reported as 0\n";
    return r;
  }

  // Conditioning on a variable that duplicates X (or Y) pins it down exactly,
  // so I(X:Y|Z) = 0; the decomposition would need two infinite MI terms to
  // cancel, which no finite estimator does reliably.
  auto duplicates = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a - b).cwiseAbs().maxCoeff() == 0.0;
  };
  if (duplicates(x, z) || duplicates(y, z)) return r;

  Eigen::MatrixXd xy(x.rows(), x.cols() + y.cols());
  xy << x, y;

  // Common random numbers across the four terms: identical batch and shuffle
  // streams make the paired errors cancel in the sum.
  const std::uint64_t term_seed = derive_seed(seed, "terms");
  r.term_xy = estimate_mi(x, y, cfg, term_seed);
  r.term_xy_z = estimate_mi(xy, z, cfg, term_seed);
  r.term_xz = estimate_mi(x, z, cfg, term_seed);
  r.term_yz = estimate_mi(y, z, cfg, term_seed);
  r.cmi = r.term_xy + r.term_xy_z - r.term_xz - r.term_yz;
  return r;
}

}  // namespace mcd
