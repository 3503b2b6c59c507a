#include "scnet/optim.hpp"

#include <cmath>
#include <sstream>

#include "scnet/errors.hpp"

namespace scnet {

double lr_at(long long iter, const OptimConfig& cfg) {
  double lr = cfg.base_lr;
  if (cfg.warmup_iters > 0 && iter < cfg.warmup_iters) {
    const double frac =
        static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
    lr *= cfg.warmup_factor + (1.0 - cfg.warmup_factor) * frac;
  }
  for (long long milestone : cfg.decay_steps)
    if (iter >= milestone) lr *= cfg.lr_decay;
  return lr;
}

void AdamOptimizer::step(ParameterStore& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    detail::Node* node = p.node();
    if (node->grad.empty()) continue;
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(node->values.size(), 0.0);
      st.v.assign(node->values.size(), 0.0);
    }
    for (size_t i = 0; i < node->values.size(); ++i) {
      const double g = node->grad[i];
      if (!std::isfinite(g)) {
        std::ostringstream msg;
        msg << "non-finite gradient in parameter " << name << " at flat index "
            << i;
        throw ToleranceError(msg.str());
      }
      st.m[i] = cfg_.adam_beta1 * st.m[i] + (1.0 - cfg_.adam_beta1) * g;
      st.v[i] = cfg_.adam_beta2 * st.v[i] + (1.0 - cfg_.adam_beta2) * g * g;
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      node->values[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
  }
}

}  // namespace scnet
