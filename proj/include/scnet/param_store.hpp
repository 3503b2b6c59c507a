#pragma once

#include <map>
#include <string>
#include <vector>

#include "scnet/rng.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

// Named trainable tensors. std::map keeps iteration in lexicographic name
// order, which fixes the parameter order everywhere: checkpoints, optimizer
// sweeps, gradient checks.
class ParameterStore {
 public:
  Tensor& create(const std::string& name, std::vector<int> shape,
                 std::vector<double> values);
  Tensor& create_zeros(const std::string& name, std::vector<int> shape);
  Tensor& create_full(const std::string& name, std::vector<int> shape,
                      double fill);
  // Gaussian init from the stream forked off `rng` by the parameter name, so
  // adding or removing other parameters never shifts this one's draw.
  Tensor& create_normal(const std::string& name, std::vector<int> shape,
                        const SplitMix64& rng, double stddev);

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<std::string> names() const;
  long long total_parameters() const;
  void zero_grads();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }

  // Binary checkpoint with raw little-endian doubles; a save/load round trip
  // restores values bit-exactly. load() requires the store and the file to
  // agree on the full name set and on every shape.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::map<std::string, Tensor> params_;
};

}  // namespace scnet
