#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace scnet {

class Tensor;

namespace detail {

// One node of the dynamically built computation graph. Nodes are created in
// forward order and carry a monotonically increasing sequence number, so
// sorting reachable nodes by descending seq is a valid reverse-topological
// order for the backward sweep.
struct Node {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until touched by backward()
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<Tensor> parents;
  std::function<void(Node&)> backward;

  long long numel() const {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

// Whether newly created ops record parents and backward closures. Disabled
// during finite-difference sweeps and pure evaluation to skip graph building.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Value-semantics handle over a shared graph node. Copies alias the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  long long numel() const { return n_->numel(); }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<double>& values() const { return n_->values; }
  std::vector<double>& mutable_values() { return n_->values; }
  const std::vector<double>& grad() const;

  double item() const;                  // numel()==1
  double at(int i) const;               // rank 1
  double at(int i, int j) const;        // rank 2

  // Runs reverse-mode accumulation from this scalar. Seeds d(this)/d(this)=1,
  // accumulates into every reachable node's grad. Single-threaded by design.
  void backward() const;
  void zero_grad() const;

  detail::Node* node() const { return n_.get(); }

  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> n_;
};

// Builds an op node. parents/backward are dropped when grad is disabled or no
// parent requires grad, which prunes constant subgraphs.
Tensor make_op(const char* op, std::vector<int> shape,
               std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward);

// Query/key pairwise attention permission. Empty `allowed` means everything is
// permitted. Disallowed keys are excluded from max/sum arithmetic entirely, not
// pushed through a large negative constant.
struct AttentionMask {
  int lq = 0;
  int lk = 0;
  std::vector<std::uint8_t> allowed;  // lq*lk row-major; empty = all allowed

  static AttentionMask all(int lq, int lk) { return {lq, lk, {}}; }
  static AttentionMask from_key_mask(int lq,
                                     const std::vector<std::uint8_t>& key_mask);
  bool at(int q, int k) const {
    return allowed.empty() ||
           allowed[static_cast<size_t>(q) * lk + static_cast<size_t>(k)] != 0;
  }
};

// ---- elementwise / structural ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // hadamard, same shape
Tensor scale(const Tensor& x, double c);
Tensor scale_by(const Tensor& x, const Tensor& s);     // s is a learnable scalar
Tensor add_n(const std::vector<Tensor>& xs);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor sum_all(const Tensor& x);

// rows of x [T,d] combined with vector v (numel d)
Tensor add_rowwise(const Tensor& x, const Tensor& v);
Tensor mul_rowwise(const Tensor& x, const Tensor& v);

Tensor concat_rows(const std::vector<Tensor>& xs);     // [Ti,d] -> [sum Ti, d]
Tensor concat_cols(const std::vector<Tensor>& xs);     // [m,Ci] -> [m, sum Ci]
Tensor slice_rows(const Tensor& x, int start, int len);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);       // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);    // [m,k]x[n,k]^T
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // xW+b
Tensor linear_nobias(const Tensor& x, const Tensor& w);

// ---- normalization / attention ----
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// Multi-head scaled dot-product attention over already-projected q/k/v.
// A query row with no permitted key yields an exactly zero output row.
// weights_out, when given, receives the [num_heads, Lq, Lk] softmax weights.
Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value,
                 const AttentionMask& mask, int num_heads,
                 std::vector<double>* weights_out = nullptr);
Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value,
                 const std::vector<std::uint8_t>& key_mask, int num_heads,
                 std::vector<double>* weights_out = nullptr);

// ---- lookup ----
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// ---- reductions used by losses ----
// log(sum_{i in mask} exp(x_i)) with max-shift stabilization; requires at
// least one selected element.
Tensor masked_logsumexp(const Tensor& x, const std::vector<std::uint8_t>& mask);

// Numerically stable elementwise binary cross-entropy from logits, summed over
// valid elements: max(x,0) - x*y + log1p(exp(-|x|)). valid_count receives the
// number of contributing elements.
Tensor bce_with_logits_sum(const Tensor& logits,
                           const std::vector<double>& targets,
                           const std::vector<std::uint8_t>& valid,
                           long long* valid_count);

// Throws ToleranceError naming `context` if any stored value is not finite.
void check_finite(const Tensor& t, const std::string& context);

}  // namespace scnet
