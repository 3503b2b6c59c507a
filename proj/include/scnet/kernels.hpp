#pragma once

namespace scnet::kernels {

// Dense kernels used by the tensor ops. Every output element is produced by a
// fixed serial accumulation order shared between the serial and the
// OpenMP-parallel variants; parallelism only changes which thread owns a row,
// so the two variants are bit-identical and the *_serial forms stay around as
// the reference the tests compare against.

void set_parallel(bool enabled);
bool parallel_enabled();

// C[m,n] += A[m,k] * B[k,n]; when accumulate is false C is overwritten.
void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k,
                      int n, bool accumulate);
void matmul_nn_parallel(const double* a, const double* b, double* c, int m,
                        int k, int n, bool accumulate);
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate);

// C[m,n] += A[m,k] * B[n,k]^T
void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k,
                      int n, bool accumulate);
void matmul_nt_parallel(const double* a, const double* b, double* c, int m,
                        int k, int n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate);

// C[m,n] += A[k,m]^T * B[k,n]
void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k,
                      int n, bool accumulate);
void matmul_tn_parallel(const double* a, const double* b, double* c, int m,
                        int k, int n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate);

// Row-wise layer normalization with affine output. xhat and rstd receive the
// normalized rows and reciprocal stddevs needed by the backward pass; either
// may be null when only the output is wanted.
void layer_norm_rows_serial(const double* x, const double* gamma,
                            const double* beta, double eps, int rows, int d,
                            double* out, double* xhat, double* rstd);
void layer_norm_rows_parallel(const double* x, const double* gamma,
                              const double* beta, double eps, int rows, int d,
                              double* out, double* xhat, double* rstd);
void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     double eps, int rows, int d, double* out, double* xhat,
                     double* rstd);

}  // namespace scnet::kernels
