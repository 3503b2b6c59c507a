#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "scnet/param_store.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

struct GradCheckOptions {
  double h = 1e-5;
  int samples_per_tensor = 6;   // deterministic subsample of each tensor
  double tolerance = 1e-4;      // max relative error allowed
  double rel_floor = 1e-6;      // denominator floor for the relative error
  std::uint64_t seed = 1234;    // drives the index subsampling only
  bool check_determinism = true;
};

struct GradCheckEntry {
  std::string param;
  long long flat_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  bool determinism_ok = true;
  double max_rel_err = 0.0;
  GradCheckEntry worst;
  long long entries_checked = 0;
  std::map<std::string, double> per_param_max;
  std::vector<GradCheckEntry> failures;  // entries above tolerance
};

// Central-difference verification of reverse-mode gradients. `f` must map the
// parameter store to a scalar and be a pure function of the stored values.
// Every parameter tensor is probed at a deterministic subsample of entries;
// the relative error uses |a-b| / max(|a|,|b|,rel_floor). When
// check_determinism is set, f is evaluated twice up front and the two scalars
// must agree bitwise.
GradCheckReport grad_check(const std::function<Tensor(ParameterStore&)>& f,
                           ParameterStore& params,
                           const GradCheckOptions& opts = {});

}  // namespace scnet
