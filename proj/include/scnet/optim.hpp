#pragma once

#include <map>
#include <string>
#include <vector>

#include "scnet/param_store.hpp"

namespace scnet {

struct OptimConfig {
  double base_lr = 1e-4;
  double lr_decay = 0.1;
  long long warmup_iters = 1000;
  double warmup_factor = 0.2;
  int batch_size = 48;
  long long max_iters = 48000;
  std::vector<long long> decay_steps = {28000, 38000};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// Learning rate at a 0-based iteration: linear warmup from
// base_lr*warmup_factor up to base_lr over warmup_iters, then an lr_decay
// multiplier for every decay step at or before the iteration.
double lr_at(long long iter, const OptimConfig& cfg);

// Adam with bias correction. Parameters that never received a gradient in the
// current step (empty grad buffer) are left unchanged; a non-finite gradient
// aborts with the parameter's name.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(OptimConfig cfg) : cfg_(cfg) {}

  const OptimConfig& config() const { return cfg_; }
  long long steps_taken() const { return t_; }

  // lr is the already-scheduled rate for this step.
  void step(ParameterStore& params, double lr);

 private:
  struct State {
    std::vector<double> m;
    std::vector<double> v;
  };
  OptimConfig cfg_;
  std::map<std::string, State> state_;
  long long t_ = 0;
};

}  // namespace scnet
