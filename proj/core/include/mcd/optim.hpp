#pragma once

#include <cmath>

#include "mcd/tape.hpp"

namespace mcd {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

// Decoupled weight decay: the decay term multiplies the parameter directly
// and is not folded into the adaptive moments.
template <class S>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(ParamStore<S>& store, double lr) {
    t_ += 1;
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const S bc1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, t_));
    const S bc2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, t_));
    const S eps = static_cast<S>(cfg_.eps);
    const S wd = static_cast<S>(cfg_.weight_decay);
    const S rate = static_cast<S>(lr);
    for (auto& e : store.entries) {
      e.m = b1 * e.m + (S(1) - b1) * e.grad;
      e.v = b2 * e.v.array() + (S(1) - b2) * e.grad.array().square();
      e.value.array() -= rate * ((e.m.array() / bc1) /
                                     ((e.v.array() / bc2).sqrt() + eps) +
                                 wd * e.value.array());
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
};

// Linear warmup from base/10 to base, then cosine decay back to base/10 by
// the final iteration. `iteration` is 0-based.
inline double learning_rate_at(int iteration, int total_iterations, int warmup, double base) {
  const double floor = base / 10.0;
  if (warmup > 0 && iteration < warmup) {
    return floor + (base - floor) * static_cast<double>(iteration) / static_cast<double>(warmup);
  }
  const int span = total_iterations - 1 - warmup;
  if (span <= 0) return base;
  const double progress =
      static_cast<double>(iteration - warmup) / static_cast<double>(span);
  constexpr double kPi = 3.14159265358979323846;
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(kPi * std::min(1.0, progress)));
}

}  // namespace mcd
