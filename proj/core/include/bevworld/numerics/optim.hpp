#pragma once

#include <cstdint>
#include <vector>

#include "bevworld/numerics/params.hpp"

namespace bevworld::num {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay. Moment state is keyed by parameter
/// index and persists across steps; parameters whose gradient contains a
/// non-finite value are skipped for that step (and counted).
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(ParamSet& params);

  int64_t steps_taken() const { return t_; }
  int64_t skipped_nonfinite() const { return skipped_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamWConfig cfg_;
  std::vector<Moments> state_;
  int64_t t_ = 0;
  int64_t skipped_ = 0;
};

}  // namespace bevworld::num
