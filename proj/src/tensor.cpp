#include "scnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "scnet/errors.hpp"
#include "scnet/kernels.hpp"

namespace scnet {

namespace {

std::atomic<std::uint64_t> g_seq{1};
thread_local int g_no_grad_depth = 0;

std::shared_ptr<detail::Node> new_node(std::vector<int> shape,
                                       std::vector<double> values) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->seq = g_seq.fetch_add(1);
  long long expect = n->numel();
  if (expect != static_cast<long long>(n->values.size()))
    throw std::invalid_argument("tensor: value count does not match shape");
  return n;
}

void shape_to_stream(std::ostringstream& os, const std::vector<int>& s) {
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes ";
  shape_to_stream(os, a.shape());
  os << " and ";
  shape_to_stream(os, b.shape());
  throw std::invalid_argument(os.str());
}

double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() : prev_(false) { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tensor Tensor::leaf(std::vector<int> shape, std::vector<double> values,
                    bool requires_grad) {
  auto n = new_node(std::move(shape), std::move(values));
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  long long n = 1;
  for (int d : shape) n *= d;
  return leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0),
              requires_grad);
}

Tensor Tensor::scalar(double v) { return leaf({1}, {v}, false); }

const std::vector<double>& Tensor::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar");
  return n_->values[0];
}

double Tensor::at(int i) const {
  if (i < 0 || i >= static_cast<int>(n_->values.size()))
    throw std::out_of_range("at: index out of range");
  return n_->values[static_cast<size_t>(i)];
}

double Tensor::at(int i, int j) const {
  if (rank() != 2) throw std::invalid_argument("at(i,j): tensor is not rank 2");
  const int rows = dim(0), cols = dim(1);
  if (i < 0 || i >= rows || j < 0 || j >= cols)
    throw std::out_of_range("at(i,j): index out of range");
  return n_->values[static_cast<size_t>(i) * cols + j];
}

void Tensor::backward() const {
  if (!n_) throw std::invalid_argument("backward: undefined tensor");
  if (numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");

  // Collect reachable nodes, then run in descending creation order, which is a
  // reverse-topological order because parents predate children.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{n_.get()};
  seen.insert(n_.get());
  while (!stack.empty()) {
    detail::Node* cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (const Tensor& p : cur->parents) {
      detail::Node* pn = p.node();
      if (seen.insert(pn).second) stack.push_back(pn);
    }
  }
  std::sort(order.begin(), order.end(),
            [](detail::Node* a, detail::Node* b) { return a->seq > b->seq; });

  n_->ensure_grad();
  n_->grad[0] += 1.0;
  for (detail::Node* node : order)
    if (node->backward && node->requires_grad) node->backward(*node);
}

void Tensor::zero_grad() const {
  if (n_) n_->grad.assign(n_->values.size(), 0.0);
}

Tensor make_op(const char* op, std::vector<int> shape,
               std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward) {
  auto n = new_node(std::move(shape), std::move(values));
  n->op = op;
  bool need = false;
  if (grad_enabled())
    for (const Tensor& p : parents)
      if (p.requires_grad()) {
        need = true;
        break;
      }
  if (need) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(n));
}

AttentionMask AttentionMask::from_key_mask(
    int lq, const std::vector<std::uint8_t>& key_mask) {
  AttentionMask m;
  m.lq = lq;
  m.lk = static_cast<int>(key_mask.size());
  m.allowed.resize(static_cast<size_t>(m.lq) * m.lk);
  for (int q = 0; q < lq; ++q)
    for (int k = 0; k < m.lk; ++k)
      m.allowed[static_cast<size_t>(q) * m.lk + k] = key_mask[static_cast<size_t>(k)];
  return m;
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [](detail::Node& self) {
                   for (const Tensor& p : self.parents) {
                     if (!p.requires_grad()) continue;
                     p.node()->ensure_grad();
                     auto& g = p.node()->grad;
                     for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op("sub", a.shape(), std::move(out), {a, b},
                 [](detail::Node& self) {
                   const Tensor& a = self.parents[0];
                   const Tensor& b = self.parents[1];
                   if (a.requires_grad()) {
                     a.node()->ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       a.node()->grad[i] += self.grad[i];
                   }
                   if (b.requires_grad()) {
                     b.node()->ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       b.node()->grad[i] -= self.grad[i];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_op("mul", a.shape(), std::move(out), {a, b},
                 [](detail::Node& self) {
                   const Tensor& a = self.parents[0];
                   const Tensor& b = self.parents[1];
                   if (a.requires_grad()) {
                     a.node()->ensure_grad();
                     const auto& bv = b.values();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       a.node()->grad[i] += self.grad[i] * bv[i];
                   }
                   if (b.requires_grad()) {
                     b.node()->ensure_grad();
                     const auto& av = a.values();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       b.node()->grad[i] += self.grad[i] * av[i];
                   }
                 });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.values());
  for (double& v : out) v *= c;
  return make_op("scale", x.shape(), std::move(out), {x},
                 [c](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   if (!x.requires_grad()) return;
                   x.node()->ensure_grad();
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     x.node()->grad[i] += c * self.grad[i];
                 });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1)
    throw std::invalid_argument("scale_by: scale tensor must have one element");
  const double c = s.values()[0];
  std::vector<double> out(x.values());
  for (double& v : out) v *= c;
  return make_op("scale_by", x.shape(), std::move(out), {x, s},
                 [](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   const Tensor& s = self.parents[1];
                   const double c = s.values()[0];
                   if (x.requires_grad()) {
                     x.node()->ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       x.node()->grad[i] += c * self.grad[i];
                   }
                   if (s.requires_grad()) {
                     s.node()->ensure_grad();
                     const auto& xv = x.values();
                     double acc = 0.0;
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       acc += self.grad[i] * xv[i];
                     s.node()->grad[0] += acc;
                   }
                 });
}

Tensor add_n(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: empty input list");
  for (const Tensor& t : xs)
    if (t.shape() != xs[0].shape()) shape_error("add_n", xs[0], t);
  std::vector<double> out(xs[0].values());
  for (size_t k = 1; k < xs.size(); ++k) {
    const auto& v = xs[k].values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return make_op("add_n", xs[0].shape(), std::move(out), xs,
                 [](detail::Node& self) {
                   for (const Tensor& p : self.parents) {
                     if (!p.requires_grad()) continue;
                     p.node()->ensure_grad();
                     auto& g = p.node()->grad;
                     for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                 });
}

Tensor gelu(const Tensor& x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i)
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * 0.7071067811865476));
  return make_op(
      "gelu", x.shape(), std::move(out), {x}, [](detail::Node& self) {
        const Tensor& x = self.parents[0];
        if (!x.requires_grad()) return;
        x.node()->ensure_grad();
        const auto& xv = x.values();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const double v = xv[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865476));
          const double pdf = std::exp(-0.5 * v * v) * 0.3989422804014327;
          x.node()->grad[i] += self.grad[i] * (cdf + v * pdf);
        }
      });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_op("relu", x.shape(), std::move(out), {x},
                 [](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   if (!x.requires_grad()) return;
                   x.node()->ensure_grad();
                   const auto& xv = x.values();
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     if (xv[i] > 0.0) x.node()->grad[i] += self.grad[i];
                 });
}

Tensor clamp_min(const Tensor& x, double floor) {
  std::vector<double> out(x.values());
  for (double& v : out) v = v < floor ? floor : v;
  return make_op("clamp_min", x.shape(), std::move(out), {x},
                 [floor](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   if (!x.requires_grad()) return;
                   x.node()->ensure_grad();
                   const auto& xv = x.values();
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     if (xv[i] > floor) x.node()->grad[i] += self.grad[i];
                 });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  if (n != x.numel()) throw std::invalid_argument("reshape: element count changed");
  return make_op("reshape", std::move(shape), x.values(), {x},
                 [](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   if (!x.requires_grad()) return;
                   x.node()->ensure_grad();
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     x.node()->grad[i] += self.grad[i];
                 });
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_op("sum_all", {1}, {acc}, {x}, [](detail::Node& self) {
    const Tensor& x = self.parents[0];
    if (!x.requires_grad()) return;
    x.node()->ensure_grad();
    const double g = self.grad[0];
    for (double& gv : x.node()->grad) gv += g;
  });
}

Tensor add_rowwise(const Tensor& x, const Tensor& v) {
  if (x.rank() != 2 || v.numel() != x.dim(1)) shape_error("add_rowwise", x, v);
  const int rows = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.values());
  const auto& vv = v.values();
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(r) * d + j] += vv[static_cast<size_t>(j)];
  return make_op("add_rowwise", x.shape(), std::move(out), {x, v},
                 [rows, d](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   const Tensor& v = self.parents[1];
                   if (x.requires_grad()) {
                     x.node()->ensure_grad();
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       x.node()->grad[i] += self.grad[i];
                   }
                   if (v.requires_grad()) {
                     v.node()->ensure_grad();
                     for (int j = 0; j < d; ++j) {
                       double acc = 0.0;
                       for (int r = 0; r < rows; ++r)
                         acc += self.grad[static_cast<size_t>(r) * d + j];
                       v.node()->grad[static_cast<size_t>(j)] += acc;
                     }
                   }
                 });
}

Tensor mul_rowwise(const Tensor& x, const Tensor& v) {
  if (x.rank() != 2 || v.numel() != x.dim(1)) shape_error("mul_rowwise", x, v);
  const int rows = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.values());
  const auto& vv = v.values();
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(r) * d + j] *= vv[static_cast<size_t>(j)];
  return make_op("mul_rowwise", x.shape(), std::move(out), {x, v},
                 [rows, d](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   const Tensor& v = self.parents[1];
                   const auto& xv = x.values();
                   const auto& vv = v.values();
                   if (x.requires_grad()) {
                     x.node()->ensure_grad();
                     for (int r = 0; r < rows; ++r)
                       for (int j = 0; j < d; ++j) {
                         const size_t i = static_cast<size_t>(r) * d + j;
                         x.node()->grad[i] += self.grad[i] * vv[static_cast<size_t>(j)];
                       }
                   }
                   if (v.requires_grad()) {
                     v.node()->ensure_grad();
                     for (int j = 0; j < d; ++j) {
                       double acc = 0.0;
                       for (int r = 0; r < rows; ++r) {
                         const size_t i = static_cast<size_t>(r) * d + j;
                         acc += self.grad[i] * xv[i];
                       }
                       v.node()->grad[static_cast<size_t>(j)] += acc;
                     }
                   }
                 });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input list");
  const int d = xs[0].dim(1);
  int total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != 2 || t.dim(1) != d) shape_error("concat_rows", xs[0], t);
    total += t.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total) * d);
  for (const Tensor& t : xs)
    out.insert(out.end(), t.values().begin(), t.values().end());
  return make_op("concat_rows", {total, d}, std::move(out), xs,
                 [d](detail::Node& self) {
                   size_t off = 0;
                   for (const Tensor& p : self.parents) {
                     const size_t n = p.values().size();
                     if (p.requires_grad()) {
                       p.node()->ensure_grad();
                       for (size_t i = 0; i < n; ++i)
                         p.node()->grad[i] += self.grad[off + i];
                     }
                     off += n;
                   }
                   (void)d;
                 });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input list");
  const int m = xs[0].dim(0);
  int total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != 2 || t.dim(0) != m) shape_error("concat_cols", xs[0], t);
    total += t.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(m) * total);
  int col = 0;
  for (const Tensor& t : xs) {
    const int c = t.dim(1);
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < c; ++j)
        out[static_cast<size_t>(r) * total + col + j] =
            t.values()[static_cast<size_t>(r) * c + j];
    col += c;
  }
  return make_op("concat_cols", {m, total}, std::move(out), xs,
                 [m, total](detail::Node& self) {
                   int col = 0;
                   for (const Tensor& p : self.parents) {
                     const int c = p.dim(1);
                     if (p.requires_grad()) {
                       p.node()->ensure_grad();
                       for (int r = 0; r < m; ++r)
                         for (int j = 0; j < c; ++j)
                           p.node()->grad[static_cast<size_t>(r) * c + j] +=
                               self.grad[static_cast<size_t>(r) * total + col +
                                         j];
                     }
                     col += c;
                   }
                 });
}

Tensor slice_rows(const Tensor& x, int start, int len) {
  if (x.rank() != 2) throw std::invalid_argument("slice_rows: rank 2 required");
  const int rows = x.dim(0), d = x.dim(1);
  if (start < 0 || len < 0 || start + len > rows)
    throw std::out_of_range("slice_rows: range out of bounds");
  std::vector<double> out(x.values().begin() + static_cast<size_t>(start) * d,
                          x.values().begin() + static_cast<size_t>(start + len) * d);
  return make_op("slice_rows", {len, d}, std::move(out), {x},
                 [start, d](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   if (!x.requires_grad()) return;
                   x.node()->ensure_grad();
                   const size_t off = static_cast<size_t>(start) * d;
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     x.node()->grad[off + i] += self.grad[i];
                 });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    shape_error("matmul", a, b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n,
                     false);
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [m, k, n](detail::Node& self) {
                   const Tensor& a = self.parents[0];
                   const Tensor& b = self.parents[1];
                   if (a.requires_grad()) {
                     a.node()->ensure_grad();
                     kernels::matmul_nt(self.grad.data(), b.values().data(),
                                        a.node()->grad.data(), m, n, k, true);
                   }
                   if (b.requires_grad()) {
                     b.node()->ensure_grad();
                     kernels::matmul_tn(a.values().data(), self.grad.data(),
                                        b.node()->grad.data(), k, m, n, true);
                   }
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    shape_error("matmul_nt", a, b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(static_cast<size_t>(m) * n);
  kernels::matmul_nt(a.values().data(), b.values().data(), out.data(), m, k, n,
                     false);
  return make_op("matmul_nt", {m, n}, std::move(out), {a, b},
                 [m, k, n](detail::Node& self) {
                   const Tensor& a = self.parents[0];
                   const Tensor& b = self.parents[1];
                   if (a.requires_grad()) {
                     a.node()->ensure_grad();
                     kernels::matmul_nn(self.grad.data(), b.values().data(),
                                        a.node()->grad.data(), m, n, k, true);
                   }
                   if (b.requires_grad()) {
                     b.node()->ensure_grad();
                     kernels::matmul_tn(self.grad.data(), a.values().data(),
                                        b.node()->grad.data(), n, m, k, true);
                   }
                 });
}

Tensor linear_nobias(const Tensor& x, const Tensor& w) { return matmul(x, w); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    shape_error("linear", x, w);
  if (b.numel() != w.dim(1)) shape_error("linear(bias)", w, b);
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  kernels::matmul_nn(x.values().data(), w.values().data(), out.data(), m, k, n,
                     false);
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += bv[static_cast<size_t>(j)];
  return make_op("linear", {m, n}, std::move(out), {x, w, b},
                 [m, k, n](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   const Tensor& w = self.parents[1];
                   const Tensor& b = self.parents[2];
                   if (x.requires_grad()) {
                     x.node()->ensure_grad();
                     kernels::matmul_nt(self.grad.data(), w.values().data(),
                                        x.node()->grad.data(), m, n, k, true);
                   }
                   if (w.requires_grad()) {
                     w.node()->ensure_grad();
                     kernels::matmul_tn(x.values().data(), self.grad.data(),
                                        w.node()->grad.data(), k, m, n, true);
                   }
                   if (b.requires_grad()) {
                     b.node()->ensure_grad();
                     for (int j = 0; j < n; ++j) {
                       double acc = 0.0;
                       for (int i = 0; i < m; ++i)
                         acc += self.grad[static_cast<size_t>(i) * n + j];
                       b.node()->grad[static_cast<size_t>(j)] += acc;
                     }
                   }
                 });
}

// ---- layer norm ----

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank >= 1 required");
  const int d = x.dim(x.rank() - 1);
  if (gamma.numel() != d || beta.numel() != d)
    shape_error("layer_norm(affine)", x, gamma);
  const int rows = static_cast<int>(x.numel() / d);
  auto xhat = std::make_shared<std::vector<double>>(x.values().size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  std::vector<double> out(x.values().size());
  kernels::layer_norm_rows(x.values().data(), gamma.values().data(),
                           beta.values().data(), eps, rows, d, out.data(),
                           xhat->data(), rstd->data());
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat, rstd](detail::Node& self) {
        const Tensor& x = self.parents[0];
        const Tensor& gamma = self.parents[1];
        const Tensor& beta = self.parents[2];
        const auto& gv = gamma.values();
        if (gamma.requires_grad()) gamma.node()->ensure_grad();
        if (beta.requires_grad()) beta.node()->ensure_grad();
        if (x.requires_grad()) x.node()->ensure_grad();
        std::vector<double> dxhat(static_cast<size_t>(d));
        for (int r = 0; r < rows; ++r) {
          const size_t off = static_cast<size_t>(r) * d;
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (int j = 0; j < d; ++j) {
            const double g = self.grad[off + j];
            const double xh = (*xhat)[off + j];
            if (gamma.requires_grad()) gamma.node()->grad[static_cast<size_t>(j)] += g * xh;
            if (beta.requires_grad()) beta.node()->grad[static_cast<size_t>(j)] += g;
            const double dxh = g * gv[static_cast<size_t>(j)];
            dxhat[static_cast<size_t>(j)] = dxh;
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh;
          }
          if (!x.requires_grad()) continue;
          mean_dxh /= d;
          mean_dxh_xh /= d;
          const double rs = (*rstd)[static_cast<size_t>(r)];
          for (int j = 0; j < d; ++j)
            x.node()->grad[off + j] +=
                rs * (dxhat[static_cast<size_t>(j)] - mean_dxh -
                      (*xhat)[off + j] * mean_dxh_xh);
        }
      });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  if (x.rank() != 2)
    throw std::invalid_argument("l2_normalize_rows: rank 2 required");
  const int rows = x.dim(0), d = x.dim(1);
  auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  std::vector<double> out(x.values().size());
  for (int r = 0; r < rows; ++r) {
    const size_t off = static_cast<size_t>(r) * d;
    double ss = 0.0;
    for (int j = 0; j < d; ++j) ss += x.values()[off + j] * x.values()[off + j];
    const double norm = std::sqrt(ss);
    const double ri = 1.0 / (norm > eps ? norm : eps);
    (*inv)[static_cast<size_t>(r)] = ri;
    for (int j = 0; j < d; ++j) out[off + j] = x.values()[off + j] * ri;
  }
  return make_op("l2_normalize_rows", x.shape(), std::move(out), {x},
                 [rows, d, inv](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   if (!x.requires_grad()) return;
                   x.node()->ensure_grad();
                   for (int r = 0; r < rows; ++r) {
                     const size_t off = static_cast<size_t>(r) * d;
                     const double ri = (*inv)[static_cast<size_t>(r)];
                     double dot = 0.0;
                     for (int j = 0; j < d; ++j)
                       dot += self.grad[off + j] * self.values[off + j];
                     for (int j = 0; j < d; ++j)
                       x.node()->grad[off + j] +=
                           ri * (self.grad[off + j] - self.values[off + j] * dot);
                   }
                 });
}

// ---- attention ----

Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value,
                 const AttentionMask& mask, int num_heads,
                 std::vector<double>* weights_out) {
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2)
    throw std::invalid_argument("attention: rank 2 inputs required");
  const int lq = query.dim(0), dq = query.dim(1);
  const int lk = key.dim(0), dk = key.dim(1);
  const int lv = value.dim(0), dv = value.dim(1);
  if (dq != dk || lk != lv)
    throw std::invalid_argument("attention: query/key/value shapes disagree");
  if (num_heads <= 0 || dq % num_heads != 0 || dv % num_heads != 0)
    throw std::invalid_argument(
        "attention: head count must divide query and value widths");
  if (!mask.allowed.empty() && (mask.lq != lq || mask.lk != lk))
    throw std::invalid_argument("attention: mask shape disagrees with inputs");

  const int hd = dq / num_heads;
  const int hv = dv / num_heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));

  // weights[h][q][k], zero where masked out or the query row sees no key
  auto weights = std::make_shared<std::vector<double>>(
      static_cast<size_t>(num_heads) * lq * lk, 0.0);
  auto mask_copy = std::make_shared<AttentionMask>(mask);
  std::vector<double> out(static_cast<size_t>(lq) * dv, 0.0);

  const auto& qv = query.values();
  const auto& kv = key.values();
  const auto& vv = value.values();
  std::vector<double> logits(static_cast<size_t>(lk));
  for (int h = 0; h < num_heads; ++h) {
    const int qoff = h * hd, voff = h * hv;
    for (int i = 0; i < lq; ++i) {
      double mx = 0.0;
      bool any = false;
      for (int k = 0; k < lk; ++k) {
        if (!mask.at(i, k)) continue;
        double acc = 0.0;
        for (int p = 0; p < hd; ++p)
          acc += qv[static_cast<size_t>(i) * dq + qoff + p] *
                 kv[static_cast<size_t>(k) * dk + qoff + p];
        acc *= sc;
        logits[static_cast<size_t>(k)] = acc;
        if (!any || acc > mx) mx = acc;
        any = true;
      }
      if (!any) continue;  // fully masked query row stays exactly zero
      double denom = 0.0;
      for (int k = 0; k < lk; ++k) {
        if (!mask.at(i, k)) continue;
        denom += std::exp(logits[static_cast<size_t>(k)] - mx);
      }
      double* wrow =
          weights->data() + (static_cast<size_t>(h) * lq + i) * lk;
      double* orow = out.data() + static_cast<size_t>(i) * dv + voff;
      for (int k = 0; k < lk; ++k) {
        if (!mask.at(i, k)) continue;
        const double w = std::exp(logits[static_cast<size_t>(k)] - mx) / denom;
        wrow[k] = w;
        const double* vrow = vv.data() + static_cast<size_t>(k) * dv + voff;
        for (int p = 0; p < hv; ++p) orow[p] += w * vrow[p];
      }
    }
  }

  if (weights_out) *weights_out = *weights;
  return make_op(
      "attention", {lq, dv}, std::move(out), {query, key, value},
      [lq, lk, dq, dv, hd, hv, num_heads, sc, weights,
       mask_copy](detail::Node& self) {
        const Tensor& query = self.parents[0];
        const Tensor& key = self.parents[1];
        const Tensor& value = self.parents[2];
        const auto& qv = query.values();
        const auto& kv = key.values();
        const auto& vv = value.values();
        if (query.requires_grad()) query.node()->ensure_grad();
        if (key.requires_grad()) key.node()->ensure_grad();
        if (value.requires_grad()) value.node()->ensure_grad();
        std::vector<double> dw(static_cast<size_t>(lk));
        for (int h = 0; h < num_heads; ++h) {
          const int qoff = h * hd, voff = h * hv;
          for (int i = 0; i < lq; ++i) {
            const double* wrow =
                weights->data() + (static_cast<size_t>(h) * lq + i) * lk;
            const double* grow = self.grad.data() + static_cast<size_t>(i) * dv + voff;
            double wdw = 0.0;
            for (int k = 0; k < lk; ++k) {
              if (!mask_copy->at(i, k) || wrow[k] == 0.0) {
                dw[static_cast<size_t>(k)] = 0.0;
                continue;
              }
              const double* vrow = vv.data() + static_cast<size_t>(k) * dv + voff;
              double acc = 0.0;
              for (int p = 0; p < hv; ++p) acc += grow[p] * vrow[p];
              dw[static_cast<size_t>(k)] = acc;
              wdw += wrow[k] * acc;
              if (value.requires_grad()) {
                double* dvrow =
                    value.node()->grad.data() + static_cast<size_t>(k) * dv + voff;
                for (int p = 0; p < hv; ++p) dvrow[p] += wrow[k] * grow[p];
              }
            }
            for (int k = 0; k < lk; ++k) {
              if (!mask_copy->at(i, k) || wrow[k] == 0.0) continue;
              const double dl = wrow[k] * (dw[static_cast<size_t>(k)] - wdw) * sc;
              if (query.requires_grad()) {
                double* dqrow =
                    query.node()->grad.data() + static_cast<size_t>(i) * dq + qoff;
                const double* krow = kv.data() + static_cast<size_t>(k) * dq + qoff;
                for (int p = 0; p < hd; ++p) dqrow[p] += dl * krow[p];
              }
              if (key.requires_grad()) {
                double* dkrow =
                    key.node()->grad.data() + static_cast<size_t>(k) * dq + qoff;
                const double* qrow = qv.data() + static_cast<size_t>(i) * dq + qoff;
                for (int p = 0; p < hd; ++p) dkrow[p] += dl * qrow[p];
              }
            }
          }
        }
      });
}

Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value,
                 const std::vector<std::uint8_t>& key_mask, int num_heads,
                 std::vector<double>* weights_out) {
  return attention(query, key, value,
                   AttentionMask::from_key_mask(query.dim(0), key_mask),
                   num_heads, weights_out);
}

// ---- lookup ----

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw std::invalid_argument("embedding_lookup: table must be rank 2");
  const int v = table.dim(0), d = table.dim(1);
  std::vector<double> out;
  out.reserve(ids.size() * static_cast<size_t>(d));
  for (int id : ids) {
    if (id < 0 || id >= v) {
      std::ostringstream os;
      os << "embedding_lookup: id " << id << " out of range [0," << v << ")";
      throw std::out_of_range(os.str());
    }
    const double* row = table.values().data() + static_cast<size_t>(id) * d;
    out.insert(out.end(), row, row + d);
  }
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return make_op("embedding_lookup", {static_cast<int>(ids.size()), d},
                 std::move(out), {table},
                 [d, ids_copy](detail::Node& self) {
                   const Tensor& table = self.parents[0];
                   if (!table.requires_grad()) return;
                   table.node()->ensure_grad();
                   for (size_t r = 0; r < ids_copy->size(); ++r) {
                     double* dst = table.node()->grad.data() +
                                   static_cast<size_t>((*ids_copy)[r]) * d;
                     const double* src = self.grad.data() + r * d;
                     for (int j = 0; j < d; ++j) dst[j] += src[j];
                   }
                 });
}

// ---- loss reductions ----

Tensor masked_logsumexp(const Tensor& x, const std::vector<std::uint8_t>& mask) {
  const size_t n = x.values().size();
  if (mask.size() != n)
    throw std::invalid_argument("masked_logsumexp: mask size mismatch");
  const auto& xv = x.values();
  double mx = 0.0;
  bool any = false;
  for (size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (!any || xv[i] > mx) mx = xv[i];
    any = true;
  }
  if (!any)
    throw std::invalid_argument("masked_logsumexp: nothing selected by mask");
  double s = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (mask[i]) s += std::exp(xv[i] - mx);
  const double out = mx + std::log(s);
  auto mask_copy = std::make_shared<std::vector<std::uint8_t>>(mask);
  return make_op("masked_logsumexp", {1}, {out}, {x},
                 [mask_copy](detail::Node& self) {
                   const Tensor& x = self.parents[0];
                   if (!x.requires_grad()) return;
                   x.node()->ensure_grad();
                   const auto& xv = x.values();
                   const double g = self.grad[0];
                   const double lse = self.values[0];
                   for (size_t i = 0; i < xv.size(); ++i)
                     if ((*mask_copy)[i])
                       x.node()->grad[i] += g * std::exp(xv[i] - lse);
                 });
}

Tensor bce_with_logits_sum(const Tensor& logits,
                           const std::vector<double>& targets,
                           const std::vector<std::uint8_t>& valid,
                           long long* valid_count) {
  const size_t n = logits.values().size();
  if (targets.size() != n || valid.size() != n)
    throw std::invalid_argument("bce_with_logits_sum: size mismatch");
  const auto& xv = logits.values();
  double acc = 0.0;
  long long cnt = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const double x = xv[i];
    acc += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    ++cnt;
  }
  if (valid_count) *valid_count = cnt;
  auto t_copy = std::make_shared<std::vector<double>>(targets);
  auto v_copy = std::make_shared<std::vector<std::uint8_t>>(valid);
  return make_op("bce_with_logits_sum", {1}, {acc}, {logits},
                 [t_copy, v_copy](detail::Node& self) {
                   const Tensor& logits = self.parents[0];
                   if (!logits.requires_grad()) return;
                   logits.node()->ensure_grad();
                   const auto& xv = logits.values();
                   const double g = self.grad[0];
                   for (size_t i = 0; i < xv.size(); ++i)
                     if ((*v_copy)[i])
                       logits.node()->grad[i] +=
                           g * (sigmoid_stable(xv[i]) - (*t_copy)[i]);
                 });
}

void check_finite(const Tensor& t, const std::string& context) {
  const auto& v = t.values();
  for (size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << context << ": non-finite value " << v[i] << " at flat index " << i;
      throw ToleranceError(os.str());
    }
}

}  // namespace scnet
