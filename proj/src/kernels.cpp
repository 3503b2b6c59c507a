#include "scnet/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace scnet::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Parallel dispatch is only worth it above this many multiply-adds.
constexpr long long kParallelGrain = 1 << 15;

inline void row_nn(const double* arow, const double* b, double* crow, int k,
                   int n, bool accumulate) {
  if (!accumulate) std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double av = arow[p];
    if (av == 0.0) continue;
    const double* brow = b + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void row_nt(const double* arow, const double* b, double* crow, int k,
                   int n, bool accumulate) {
  for (int j = 0; j < n; ++j) {
    const double* brow = b + static_cast<size_t>(j) * k;
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
    crow[j] = accumulate ? crow[j] + acc : acc;
  }
}

inline void row_tn(const double* a, const double* b, double* crow, int i, int m,
                   int k, int n, bool accumulate) {
  if (!accumulate) std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double av = a[static_cast<size_t>(p) * m + i];
    if (av == 0.0) continue;
    const double* brow = b + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void row_layer_norm(const double* xrow, const double* gamma,
                           const double* beta, double eps, int d, double* orow,
                           double* xhrow, double* rstd_out, int r) {
  double mean = 0.0;
  for (int j = 0; j < d; ++j) mean += xrow[j];
  mean /= d;
  double var = 0.0;
  for (int j = 0; j < d; ++j) {
    const double c = xrow[j] - mean;
    var += c * c;
  }
  var /= d;
  const double rstd = 1.0 / std::sqrt(var + eps);
  for (int j = 0; j < d; ++j) {
    const double xh = (xrow[j] - mean) * rstd;
    if (xhrow) xhrow[j] = xh;
    orow[j] = gamma[j] * xh + beta[j];
  }
  if (rstd_out) rstd_out[r] = rstd;
}

}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k,
                      int n, bool accumulate) {
  for (int i = 0; i < m; ++i)
    row_nn(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k,
           n, accumulate);
}

void matmul_nn_parallel(const double* a, const double* b, double* c, int m,
                        int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    row_nn(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k,
           n, accumulate);
}

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  if (g_parallel.load() && 1LL * m * k * n >= kParallelGrain && m > 1)
    matmul_nn_parallel(a, b, c, m, k, n, accumulate);
  else
    matmul_nn_serial(a, b, c, m, k, n, accumulate);
}

void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k,
                      int n, bool accumulate) {
  for (int i = 0; i < m; ++i)
    row_nt(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k,
           n, accumulate);
}

void matmul_nt_parallel(const double* a, const double* b, double* c, int m,
                        int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    row_nt(a + static_cast<size_t>(i) * k, b, c + static_cast<size_t>(i) * n, k,
           n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  if (g_parallel.load() && 1LL * m * k * n >= kParallelGrain && m > 1)
    matmul_nt_parallel(a, b, c, m, k, n, accumulate);
  else
    matmul_nt_serial(a, b, c, m, k, n, accumulate);
}

void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k,
                      int n, bool accumulate) {
  for (int i = 0; i < m; ++i)
    row_tn(a, b, c + static_cast<size_t>(i) * n, i, m, k, n, accumulate);
}

void matmul_tn_parallel(const double* a, const double* b, double* c, int m,
                        int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    row_tn(a, b, c + static_cast<size_t>(i) * n, i, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate) {
  if (g_parallel.load() && 1LL * m * k * n >= kParallelGrain && m > 1)
    matmul_tn_parallel(a, b, c, m, k, n, accumulate);
  else
    matmul_tn_serial(a, b, c, m, k, n, accumulate);
}

void layer_norm_rows_serial(const double* x, const double* gamma,
                            const double* beta, double eps, int rows, int d,
                            double* out, double* xhat, double* rstd) {
  for (int r = 0; r < rows; ++r)
    row_layer_norm(x + static_cast<size_t>(r) * d, gamma, beta, eps, d,
                   out + static_cast<size_t>(r) * d,
                   xhat ? xhat + static_cast<size_t>(r) * d : nullptr, rstd, r);
}

void layer_norm_rows_parallel(const double* x, const double* gamma,
                              const double* beta, double eps, int rows, int d,
                              double* out, double* xhat, double* rstd) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r)
    row_layer_norm(x + static_cast<size_t>(r) * d, gamma, beta, eps, d,
                   out + static_cast<size_t>(r) * d,
                   xhat ? xhat + static_cast<size_t>(r) * d : nullptr, rstd, r);
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     double eps, int rows, int d, double* out, double* xhat,
                     double* rstd) {
  if (g_parallel.load() && 1LL * rows * d >= kParallelGrain && rows > 1)
    layer_norm_rows_parallel(x, gamma, beta, eps, rows, d, out, xhat, rstd);
  else
    layer_norm_rows_serial(x, gamma, beta, eps, rows, d, out, xhat, rstd);
}

}  // namespace scnet::kernels
