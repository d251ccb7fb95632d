#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcd/common.hpp"
#include "mcd/rng.hpp"
#include "mcd/types.hpp"

namespace mcd {

// Reverse-mode autodiff over dense matrices. A Tape is rebuilt per forward
// pass; nodes are appended in topological order, so backward() is a single
// reverse sweep. Sequences are stored stacked: a batch of B windows of length
// T with feature dim D occupies a (B*T) x D matrix, and attention runs over
// per-window blocks.
//
// The scalar type is templated: training runs in float, gradient checks and
// the MINE estimator in double.

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
struct ParamStore {
  struct Entry {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    Mat<S> m;  // Adam first moment
    Mat<S> v;  // Adam second moment
  };

  std::vector<Entry> entries;

  int add(const std::string& name, int rows, int cols, double init_std, Rng& rng) {
    Entry e;
    e.name = name;
    e.value.resize(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) {
        e.value(r, c) = static_cast<S>(init_std == 0.0 ? 0.0 : rng.normal(0.0, init_std));
      }
    }
    e.grad = Mat<S>::Zero(rows, cols);
    e.m = Mat<S>::Zero(rows, cols);
    e.v = Mat<S>::Zero(rows, cols);
    entries.push_back(std::move(e));
    return static_cast<int>(entries.size()) - 1;
  }

  int add_constant(const std::string& name, int rows, int cols, double fill) {
    Rng unused(0);
    const int id = add(name, rows, cols, 0.0, unused);
    entries[static_cast<std::size_t>(id)].value.setConstant(static_cast<S>(fill));
    return id;
  }

  Entry& operator[](int id) { return entries[static_cast<std::size_t>(id)]; }
  const Entry& operator[](int id) const { return entries[static_cast<std::size_t>(id)]; }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  void zero_grads() {
    for (auto& e : entries) e.grad.setZero();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(e.value.size());
    return n;
  }
};

enum class Op {
  kInput,
  kParam,
  kMatmul,
  kAdd,
  kAddRowBroadcast,
  kAddTiled,
  kAddPerWindow,
  kGelu,
  kBoundedTanh,
  kLayerNorm,
  kUnitNormRows,
  kMha,
  kSelectRowPerWindow,
  kGatherRows,
  kScale,
  kRowsNormLoss,
  kGroupNormLoss,
};

template <class S>
class Tape {
 public:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    Op op = Op::kInput;
    std::array<int, 8> parents{-1, -1, -1, -1, -1, -1, -1, -1};
    int param = -1;          // ParamStore slot for kParam leaves
    int windows = 0;         // B
    int window_len = 0;      // T
    int heads = 0;
    int row_index = 0;       // kSelectRowPerWindow
    int group = 0;           // kGroupNormLoss group width
    S scalar{};              // kScale factor
    bool causal = false;
    ReconNorm norm = ReconNorm::kL2;
    Mat<S> target;           // loss targets
    Mat<S> aux0, aux1;       // op-specific stashes
    std::vector<int> indices;
  };

  explicit Tape(ParamStore<S>* store) : store_(store) {}

  const Mat<S>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Mat<S>& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  S scalar_value(int id) const { return nodes_[static_cast<std::size_t>(id)].value(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  int input(Mat<S> v) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(v);
    return push(std::move(n));
  }

  int param(int store_id) {
    Node n;
    n.op = Op::kParam;
    n.param = store_id;
    n.value = (*store_)[store_id].value;
    return push(std::move(n));
  }

  int matmul(int a, int w) {
    Node n;
    n.op = Op::kMatmul;
    n.parents[0] = a;
    n.parents[1] = w;
    n.value.noalias() = val(a) * val(w);
    return push(std::move(n));
  }

  int add(int a, int b) {
    Node n;
    n.op = Op::kAdd;
    n.parents[0] = a;
    n.parents[1] = b;
    n.value = val(a) + val(b);
    return push(std::move(n));
  }

  // bias is 1 x C, added to every row
  int add_row_broadcast(int a, int bias) {
    Node n;
    n.op = Op::kAddRowBroadcast;
    n.parents[0] = a;
    n.parents[1] = bias;
    n.value = val(a).rowwise() + val(bias).row(0);
    return push(std::move(n));
  }

  // tile is T x C, added to every window block of the stacked (B*T) x C input
  int add_tiled(int a, int tile, int windows) {
    const auto& t = val(tile);
    Node n;
    n.op = Op::kAddTiled;
    n.parents[0] = a;
    n.parents[1] = tile;
    n.windows = windows;
    n.window_len = static_cast<int>(t.rows());
    n.value = val(a);
    for (int b = 0; b < windows; ++b) {
      n.value.middleRows(b * n.window_len, n.window_len) += t;
    }
    return push(std::move(n));
  }

  // rows is B x C; row b is added to every row of window b
  int add_per_window(int a, int rows, int windows) {
    Node n;
    n.op = Op::kAddPerWindow;
    n.parents[0] = a;
    n.parents[1] = rows;
    n.windows = windows;
    n.window_len = static_cast<int>(val(a).rows()) / windows;
    n.value = val(a);
    for (int b = 0; b < windows; ++b) {
      n.value.middleRows(b * n.window_len, n.window_len).rowwise() += val(rows).row(b);
    }
    return push(std::move(n));
  }

  int gelu(int a) {
    Node n;
    n.op = Op::kGelu;
    n.parents[0] = a;
    n.value = val(a).unaryExpr([](S x) { return gelu_fwd(x); });
    return push(std::move(n));
  }

  // bound * tanh(x / bound): identity-like near zero, saturating at +-bound
  int bounded_tanh(int a, S bound) {
    Node n;
    n.op = Op::kBoundedTanh;
    n.parents[0] = a;
    n.scalar = bound;
    n.value = val(a).unaryExpr([bound](S x) { return bound * std::tanh(x / bound); });
    return push(std::move(n));
  }

  int layer_norm(int a, int gain, int bias) {
    const auto& x = val(a);
    Node n;
    n.op = Op::kLayerNorm;
    n.parents[0] = a;
    n.parents[1] = gain;
    n.parents[2] = bias;
    const int rows = static_cast<int>(x.rows());
    const int cols = static_cast<int>(x.cols());
    n.aux0.resize(rows, cols);  // normalized x-hat
    n.aux1.resize(rows, 1);     // 1/sigma
    n.value.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      const S mean = x.row(r).mean();
      const S var = (x.row(r).array() - mean).square().sum() / static_cast<S>(cols);
      const S inv = S(1) / std::sqrt(var + S(1e-5));
      n.aux1(r, 0) = inv;
      n.aux0.row(r) = (x.row(r).array() - mean) * inv;
      n.value.row(r) =
          n.aux0.row(r).cwiseProduct(val(gain).row(0)) + val(bias).row(0);
    }
    return push(std::move(n));
  }

  // Rows divided by their Euclidean norm, denominator floored at 1e-12.
  int unit_norm_rows(int a) {
    const auto& x = val(a);
    Node n;
    n.op = Op::kUnitNormRows;
    n.parents[0] = a;
    const int rows = static_cast<int>(x.rows());
    n.aux1.resize(rows, 1);  // 1/denominator; negative flags a floored row
    n.value.resizeLike(x);
    for (int r = 0; r < rows; ++r) {
      const S norm = x.row(r).norm();
      const S floor = S(1e-12);
      if (norm < floor) {
        n.aux1(r, 0) = -S(1) / floor;
        n.value.row(r) = x.row(r) / floor;
      } else {
        n.aux1(r, 0) = S(1) / norm;
        n.value.row(r) = x.row(r) / norm;
      }
    }
    return push(std::move(n));
  }

  // Multi-head self-attention over per-window blocks of the stacked input.
  // params: wq, wk, wv, wo are D x D; bq, bk, bv, bo are 1 x D.
  int mha(int x, const std::array<int, 4>& weights, const std::array<int, 4>& biases,
          int windows, int heads, bool causal) {
    Node n;
    n.op = Op::kMha;
    n.parents = {x, weights[0], weights[1], weights[2], weights[3], biases[0], biases[1],
                 biases[2]};
    // bo does not fit in the 8-slot parent array; stored separately.
    n.indices = {biases[3]};
    n.windows = windows;
    n.heads = heads;
    n.causal = causal;
    const auto& xv = val(x);
    const int rows = static_cast<int>(xv.rows());
    const int dim = static_cast<int>(xv.cols());
    const int t = rows / windows;
    n.window_len = t;
    const int hd = dim / heads;

    Mat<S> q = (xv * val(weights[0])).rowwise() + val(biases[0]).row(0);
    Mat<S> k = (xv * val(weights[1])).rowwise() + val(biases[1]).row(0);
    Mat<S> v = (xv * val(weights[2])).rowwise() + val(biases[2]).row(0);

    // aux0 stacks the (windows*heads) T x T attention matrices vertically;
    // aux1 keeps the pre-output-projection concat of heads.
    n.aux0.resize(windows * heads * t, t);
    n.aux1.resize(rows, dim);
    const S scale = S(1) / std::sqrt(static_cast<S>(hd));
    for (int b = 0; b < windows; ++b) {
      for (int h = 0; h < heads; ++h) {
        auto qh = q.block(b * t, h * hd, t, hd);
        auto kh = k.block(b * t, h * hd, t, hd);
        auto vh = v.block(b * t, h * hd, t, hd);
        Mat<S> scores = qh * kh.transpose() * scale;
        if (causal) {
          for (int i = 0; i < t; ++i) {
            for (int j = i + 1; j < t; ++j) {
              scores(i, j) = -std::numeric_limits<S>::infinity();
            }
          }
        }
        for (int i = 0; i < t; ++i) {
          const S mx = scores.row(i).maxCoeff();
          Eigen::Array<S, 1, Eigen::Dynamic> e = (scores.row(i).array() - mx).exp();
          scores.row(i) = e / e.sum();
        }
        n.aux0.middleRows((b * heads + h) * t, t) = scores;
        n.aux1.block(b * t, h * hd, t, hd).noalias() = scores * vh;
      }
    }
    n.value.noalias() = n.aux1 * val(weights[3]);
    n.value.rowwise() += val(biases[3]).row(0);
    // q, k, v are cheap to recompute in backward from x and the weights.
    return push(std::move(n));
  }

  int select_row_per_window(int a, int row_index, int windows) {
    const auto& x = val(a);
    Node n;
    n.op = Op::kSelectRowPerWindow;
    n.parents[0] = a;
    n.windows = windows;
    n.window_len = static_cast<int>(x.rows()) / windows;
    n.row_index = row_index;
    n.value.resize(windows, x.cols());
    for (int b = 0; b < windows; ++b) {
      n.value.row(b) = x.row(b * n.window_len + row_index);
    }
    return push(std::move(n));
  }

  int gather_rows(int table, const std::vector<int>& indices) {
    const auto& p = val(table);
    Node n;
    n.op = Op::kGatherRows;
    n.parents[0] = table;
    n.indices = indices;
    n.value.resize(static_cast<int>(indices.size()), p.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      n.value.row(static_cast<int>(i)) = p.row(indices[i]);
    }
    return push(std::move(n));
  }

  int scale(int a, S factor) {
    Node n;
    n.op = Op::kScale;
    n.parents[0] = a;
    n.scalar = factor;
    n.value = val(a) * factor;
    return push(std::move(n));
  }

  // Sum over rows of the per-row norm of (pred - target). L2 is the Euclidean
  // row norm, L1 the absolute sum.
  int rows_norm_loss(int pred, Mat<S> target, ReconNorm norm) {
    Node n;
    n.op = Op::kRowsNormLoss;
    n.parents[0] = pred;
    n.norm = norm;
    n.target = std::move(target);
    const auto& p = val(pred);
    S total = 0;
    if (norm == ReconNorm::kL2) {
      for (int r = 0; r < p.rows(); ++r) total += (p.row(r) - n.target.row(r)).norm();
    } else {
      total = (p - n.target).cwiseAbs().sum();
    }
    n.value.resize(1, 1);
    n.value(0, 0) = total;
    return push(std::move(n));
  }

  // Rows are concatenations of `group_count` sub-vectors of width
  // cols/group_count; sums the per-sub-vector norms. Used for chunked heads.
  int group_norm_loss(int pred, Mat<S> target, int group_count, ReconNorm norm) {
    Node n;
    n.op = Op::kGroupNormLoss;
    n.parents[0] = pred;
    n.norm = norm;
    n.group = group_count;
    n.target = std::move(target);
    const auto& p = val(pred);
    const int width = static_cast<int>(p.cols()) / group_count;
    S total = 0;
    for (int r = 0; r < p.rows(); ++r) {
      for (int g = 0; g < group_count; ++g) {
        auto diff = p.row(r).segment(g * width, width) - n.target.row(r).segment(g * width, width);
        total += norm == ReconNorm::kL2 ? diff.norm() : diff.cwiseAbs().sum();
      }
    }
    n.value.resize(1, 1);
    n.value(0, 0) = total;
    return push(std::move(n));
  }

  // Throws NumericError when the node holds a NaN/Inf; `where` names the site.
  void check_finite(int id, const std::string& where) const {
    if (!val(id).allFinite()) {
      throw NumericError("non-finite values in " + where);
    }
  }

  void backward(int root);

 private:
  static S gelu_fwd(S x) {
    const S c = S(0.7978845608028654);  // sqrt(2/pi)
    const S a = S(0.044715);
    return S(0.5) * x * (S(1) + std::tanh(c * (x + a * x * x * x)));
  }

  static S gelu_bwd(S x) {
    const S c = S(0.7978845608028654);
    const S a = S(0.044715);
    const S u = c * (x + a * x * x * x);
    const S th = std::tanh(u);
    const S sech2 = S(1) - th * th;
    return S(0.5) * (S(1) + th) + S(0.5) * x * sech2 * c * (S(1) + S(3) * a * x * x);
  }

  const Mat<S>& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  Mat<S>& grad_of(int id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  ParamStore<S>* store_;
  std::vector<Node> nodes_;
};

template <class S>
void Tape<S>::backward(int root) {
  auto& r = nodes_[static_cast<std::size_t>(root)];
  if (r.value.size() != 1) throw ValidationError("backward: root must be scalar");
  grad_of(root).setConstant(S(1));

  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;  // not on any path to the root
    const Mat<S>& g = n.grad;

    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParam:
        (*store_)[n.param].grad += g;
        break;
      case Op::kMatmul: {
        grad_of(n.parents[0]).noalias() += g * val(n.parents[1]).transpose();
        grad_of(n.parents[1]).noalias() += val(n.parents[0]).transpose() * g;
        break;
      }
      case Op::kAdd:
        grad_of(n.parents[0]) += g;
        grad_of(n.parents[1]) += g;
        break;
      case Op::kAddRowBroadcast:
        grad_of(n.parents[0]) += g;
        grad_of(n.parents[1]).row(0) += g.colwise().sum();
        break;
      case Op::kAddTiled: {
        grad_of(n.parents[0]) += g;
        auto& tg = grad_of(n.parents[1]);
        for (int b = 0; b < n.windows; ++b) {
          tg += g.middleRows(b * n.window_len, n.window_len);
        }
        break;
      }
      case Op::kAddPerWindow: {
        grad_of(n.parents[0]) += g;
        auto& rg = grad_of(n.parents[1]);
        for (int b = 0; b < n.windows; ++b) {
          rg.row(b) += g.middleRows(b * n.window_len, n.window_len).colwise().sum();
        }
        break;
      }
      case Op::kGelu: {
        const auto& x = val(n.parents[0]);
        grad_of(n.parents[0]) +=
            g.binaryExpr(x, [](S gy, S xv) { return gy * gelu_bwd(xv); });
        break;
      }
      case Op::kBoundedTanh: {
        const S bound = n.scalar;
        grad_of(n.parents[0]) += g.binaryExpr(n.value, [bound](S gy, S yv) {
          const S r = yv / bound;
          return gy * (S(1) - r * r);
        });
        break;
      }
      case Op::kLayerNorm: {
        const auto& gain = val(n.parents[1]);
        auto& dx = grad_of(n.parents[0]);
        auto& dgain = grad_of(n.parents[1]);
        auto& dbias = grad_of(n.parents[2]);
        const int cols = static_cast<int>(n.value.cols());
        for (int r = 0; r < n.value.rows(); ++r) {
          Eigen::Array<S, 1, Eigen::Dynamic> gy = g.row(r).array() * gain.row(0).array();
          const S mean_gy = gy.mean();
          const S mean_gy_xhat = (gy * n.aux0.row(r).array()).mean();
          dx.row(r).array() +=
              (gy - mean_gy - n.aux0.row(r).array() * mean_gy_xhat) * n.aux1(r, 0);
          dgain.row(0).array() += g.row(r).array() * n.aux0.row(r).array();
          dbias.row(0) += g.row(r);
          (void)cols;
        }
        break;
      }
      case Op::kUnitNormRows: {
        auto& dx = grad_of(n.parents[0]);
        for (int r = 0; r < n.value.rows(); ++r) {
          const S inv = n.aux1(r, 0);
          if (inv < 0) {
            dx.row(r) += g.row(r) * (-inv);  // floored: plain division by the floor
          } else {
            const S dot = n.value.row(r).dot(g.row(r));
            dx.row(r) += (g.row(r) - n.value.row(r) * dot) * inv;
          }
        }
        break;
      }
      case Op::kMha: {
        const int x = n.parents[0];
        const int wq = n.parents[1], wk = n.parents[2], wv = n.parents[3], wo = n.parents[4];
        const int bq = n.parents[5], bk = n.parents[6], bv = n.parents[7];
        const int bo = n.indices[0];
        const auto& xv = val(x);
        const int rows = static_cast<int>(xv.rows());
        const int dim = static_cast<int>(xv.cols());
        const int t = n.window_len;
        const int hd = dim / n.heads;
        const S scale = S(1) / std::sqrt(static_cast<S>(hd));

        Mat<S> q = (xv * val(wq)).rowwise() + val(bq).row(0);
        Mat<S> k = (xv * val(wk)).rowwise() + val(bk).row(0);
        Mat<S> v = (xv * val(wv)).rowwise() + val(bv).row(0);

        grad_of(bo).row(0) += g.colwise().sum();
        grad_of(wo).noalias() += n.aux1.transpose() * g;
        Mat<S> d_concat = g * val(wo).transpose();

        Mat<S> dq = Mat<S>::Zero(rows, dim);
        Mat<S> dk = Mat<S>::Zero(rows, dim);
        Mat<S> dv = Mat<S>::Zero(rows, dim);
        for (int b = 0; b < n.windows; ++b) {
          for (int h = 0; h < n.heads; ++h) {
            auto p = n.aux0.middleRows((b * n.heads + h) * t, t);
            auto vh = v.block(b * t, h * hd, t, hd);
            auto d_oh = d_concat.block(b * t, h * hd, t, hd);
            Mat<S> dp = d_oh * vh.transpose();
            dv.block(b * t, h * hd, t, hd).noalias() += p.transpose() * d_oh;
            // softmax backward, rowwise
            Mat<S> ds(t, t);
            for (int i = 0; i < t; ++i) {
              const S dot = dp.row(i).dot(p.row(i));
              ds.row(i) = (dp.row(i).array() - dot) * p.row(i).array();
            }
            ds *= scale;
            dq.block(b * t, h * hd, t, hd).noalias() += ds * k.block(b * t, h * hd, t, hd);
            dk.block(b * t, h * hd, t, hd).noalias() += ds.transpose() * q.block(b * t, h * hd, t, hd);
          }
        }
        grad_of(bq).row(0) += dq.colwise().sum();
        grad_of(bk).row(0) += dk.colwise().sum();
        grad_of(bv).row(0) += dv.colwise().sum();
        grad_of(wq).noalias() += xv.transpose() * dq;
        grad_of(wk).noalias() += xv.transpose() * dk;
        grad_of(wv).noalias() += xv.transpose() * dv;
        auto& dx = grad_of(x);
        dx.noalias() += dq * val(wq).transpose();
        dx.noalias() += dk * val(wk).transpose();
        dx.noalias() += dv * val(wv).transpose();
        break;
      }
      case Op::kSelectRowPerWindow: {
        auto& dx = grad_of(n.parents[0]);
        for (int b = 0; b < n.windows; ++b) {
          dx.row(b * n.window_len + n.row_index) += g.row(b);
        }
        break;
      }
      case Op::kGatherRows: {
        auto& dp = grad_of(n.parents[0]);
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          dp.row(n.indices[i]) += g.row(static_cast<int>(i));
        }
        break;
      }
      case Op::kScale:
        grad_of(n.parents[0]) += g * n.scalar;
        break;
      case Op::kRowsNormLoss: {
        const auto& p = val(n.parents[0]);
        auto& dp = grad_of(n.parents[0]);
        const S gy = g(0, 0);
        if (n.norm == ReconNorm::kL2) {
          for (int r = 0; r < p.rows(); ++r) {
            Eigen::Matrix<S, 1, Eigen::Dynamic> diff = p.row(r) - n.target.row(r);
            const S norm = diff.norm();
            if (norm > S(1e-20)) dp.row(r) += diff * (gy / norm);
          }
        } else {
          dp += (p - n.target).unaryExpr([gy](S d) {
            return d > 0 ? gy : (d < 0 ? -gy : S(0));
          });
        }
        break;
      }
      case Op::kGroupNormLoss: {
        const auto& p = val(n.parents[0]);
        auto& dp = grad_of(n.parents[0]);
        const S gy = g(0, 0);
        const int width = static_cast<int>(p.cols()) / n.group;
        for (int r = 0; r < p.rows(); ++r) {
          for (int gi = 0; gi < n.group; ++gi) {
            Eigen::Matrix<S, 1, Eigen::Dynamic> diff =
                p.row(r).segment(gi * width, width) - n.target.row(r).segment(gi * width, width);
            if (n.norm == ReconNorm::kL2) {
              const S norm = diff.norm();
              if (norm > S(1e-20)) dp.row(r).segment(gi * width, width) += diff * (gy / norm);
            } else {
              dp.row(r).segment(gi * width, width) +=
                  diff.unaryExpr([gy](S d) { return d > 0 ? gy : (d < 0 ? -gy : S(0)); });
            }
          }
        }
        break;
      }
    }
  }
}

}  // namespace mcd
