#include "scnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "scnet/rng.hpp"

namespace scnet {

namespace {

std::vector<long long> sample_indices(long long numel, int k, SplitMix64 rng) {
  if (numel <= k) {
    std::vector<long long> all(static_cast<size_t>(numel));
    for (long long i = 0; i < numel; ++i) all[static_cast<size_t>(i)] = i;
    return all;
  }
  std::vector<long long> out;
  out.reserve(static_cast<size_t>(k));
  while (static_cast<int>(out.size()) < k) {
    const long long idx =
        static_cast<long long>(rng.next_u64() % static_cast<std::uint64_t>(numel));
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(ParameterStore&)>& f,
                           ParameterStore& params, const GradCheckOptions& opts) {
  GradCheckReport report;

  if (opts.check_determinism) {
    NoGradGuard ng;
    const double a = f(params).item();
    const double b = f(params).item();
    report.determinism_ok = std::memcmp(&a, &b, sizeof(double)) == 0;
  }

  params.zero_grads();
  Tensor loss = f(params);
  loss.backward();
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, p] : params) {
    if (p.node()->grad.empty())
      analytic[name].assign(p.values().size(), 0.0);
    else
      analytic[name] = p.node()->grad;
  }

  NoGradGuard ng;
  SplitMix64 base(opts.seed);
  for (auto& [name, p] : params) {
    double& param_max = report.per_param_max[name];
    const auto idxs =
        sample_indices(p.numel(), opts.samples_per_tensor, base.fork(name));
    for (long long idx : idxs) {
      auto& vals = p.mutable_values();
      const double orig = vals[static_cast<size_t>(idx)];
      vals[static_cast<size_t>(idx)] = orig + opts.h;
      const double up = f(params).item();
      vals[static_cast<size_t>(idx)] = orig - opts.h;
      const double dn = f(params).item();
      vals[static_cast<size_t>(idx)] = orig;
      const double fd = (up - dn) / (2.0 * opts.h);
      const double ad = analytic[name][static_cast<size_t>(idx)];
      const double denom =
          std::max({std::abs(ad), std::abs(fd), opts.rel_floor});
      const double rel = std::abs(ad - fd) / denom;
      ++report.entries_checked;
      GradCheckEntry e{name, idx, ad, fd, rel};
      if (rel > param_max) param_max = rel;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = e;
      }
      if (rel > opts.tolerance) report.failures.push_back(e);
    }
  }

  report.pass = report.determinism_ok && report.failures.empty();
  return report;
}

}  // namespace scnet
