#include "scnet/param_store.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scnet/errors.hpp"

namespace scnet {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'N', 'E', 'T', 'C', 'K', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

Tensor& ParameterStore::create(const std::string& name, std::vector<int> shape,
                               std::vector<double> values) {
  if (params_.count(name))
    throw std::invalid_argument("parameter already exists: " + name);
  auto [it, ok] = params_.emplace(
      name, Tensor::leaf(std::move(shape), std::move(values), true));
  (void)ok;
  return it->second;
}

Tensor& ParameterStore::create_zeros(const std::string& name,
                                     std::vector<int> shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  return create(name, std::move(shape),
                std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor& ParameterStore::create_full(const std::string& name,
                                    std::vector<int> shape, double fill) {
  long long n = 1;
  for (int d : shape) n *= d;
  return create(name, std::move(shape),
                std::vector<double>(static_cast<size_t>(n), fill));
}

Tensor& ParameterStore::create_normal(const std::string& name,
                                      std::vector<int> shape,
                                      const SplitMix64& rng, double stddev) {
  long long n = 1;
  for (int d : shape) n *= d;
  SplitMix64 stream = rng.fork(name);
  std::vector<double> vals(static_cast<size_t>(n));
  for (double& v : vals) v = stream.normal(0.0, stddev);
  return create(name, std::move(shape), std::move(vals));
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [k, v] : params_) out.push_back(k);
  return out;
}

long long ParameterStore::total_parameters() const {
  long long n = 0;
  for (const auto& [k, v] : params_) n += v.numel();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& [k, v] : params_) v.zero_grad();
}

void ParameterStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  put_u64(os, params_.size());
  for (const auto& [name, t] : params_) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
    for (double v : t.values()) put_f64(os, v);
  }
  if (!os) throw IoError("write failed for checkpoint: " + path);
}

void ParameterStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("bad checkpoint magic in " + path);
  const std::uint64_t count = get_u64(is);
  if (count != params_.size()) {
    std::ostringstream msg;
    msg << "checkpoint " << path << " holds " << count << " parameters, store has "
        << params_.size();
    throw IoError(msg.str());
  }
  std::map<std::string, bool> seen;
  for (std::uint64_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(is);
    std::vector<int> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i)
      shape[i] = static_cast<int>(get_u64(is));
    if (!is) throw IoError("truncated checkpoint: " + path);
    auto it = params_.find(name);
    if (it == params_.end())
      throw IoError("checkpoint parameter not in store: " + name);
    if (it->second.shape() != shape)
      throw IoError("checkpoint shape mismatch for parameter: " + name);
    auto& vals = it->second.mutable_values();
    for (double& v : vals) v = get_f64(is);
    if (!is) throw IoError("truncated checkpoint data for parameter: " + name);
    seen[name] = true;
  }
  for (const auto& [name, t] : params_)
    if (!seen.count(name))
      throw IoError("store parameter missing from checkpoint: " + name);
}

}  // namespace scnet
