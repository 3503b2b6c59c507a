#include <doctest.h>

#include <cstring>
#include <vector>

#include "scnet/kernels.hpp"
#include "scnet/rng.hpp"

namespace {

using namespace scnet;

std::vector<double> random_vec(size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void naive_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

}  // namespace

TEST_SUITE("tensor_engine") {

TEST_CASE("matmul kernels agree with a naive oracle") {
  const int m = 9, k = 17, n = 13;
  const auto a = random_vec(static_cast<size_t>(m) * k, 11);
  const auto b = random_vec(static_cast<size_t>(k) * n, 22);
  std::vector<double> want(static_cast<size_t>(m) * n);
  naive_nn(a.data(), b.data(), want.data(), m, k, n);

  std::vector<double> got(want.size(), -1.0);
  kernels::matmul_nn(a.data(), b.data(), got.data(), m, k, n, false);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // nt: B stored transposed
  std::vector<double> bt(b.size());
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < n; ++j) bt[static_cast<size_t>(j) * k + p] = b[static_cast<size_t>(p) * n + j];
  std::vector<double> got_nt(want.size(), -1.0);
  kernels::matmul_nt(a.data(), bt.data(), got_nt.data(), m, k, n, false);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(got_nt[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // tn: A stored transposed
  std::vector<double> at(a.size());
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) at[static_cast<size_t>(p) * m + i] = a[static_cast<size_t>(i) * k + p];
  std::vector<double> got_tn(want.size(), -1.0);
  kernels::matmul_tn(at.data(), b.data(), got_tn.data(), m, k, n, false);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(got_tn[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  struct Dims {
    int m, k, n;
  };
  for (const Dims dims : {Dims{7, 13, 11}, Dims{64, 64, 64}, Dims{82, 70, 96}}) {
    const auto a = random_vec(static_cast<size_t>(dims.m) * dims.k,
                              1000 + static_cast<std::uint64_t>(dims.m));
    const auto b = random_vec(static_cast<size_t>(dims.k) * dims.n,
                              2000 + static_cast<std::uint64_t>(dims.n));
    const size_t cn = static_cast<size_t>(dims.m) * dims.n;
    std::vector<double> cs(cn), cp(cn);

    kernels::matmul_nn_serial(a.data(), b.data(), cs.data(), dims.m, dims.k,
                              dims.n, false);
    kernels::matmul_nn_parallel(a.data(), b.data(), cp.data(), dims.m, dims.k,
                                dims.n, false);
    CHECK(std::memcmp(cs.data(), cp.data(), cn * sizeof(double)) == 0);

    const auto bt = random_vec(static_cast<size_t>(dims.n) * dims.k, 31);
    kernels::matmul_nt_serial(a.data(), bt.data(), cs.data(), dims.m, dims.k,
                              dims.n, false);
    kernels::matmul_nt_parallel(a.data(), bt.data(), cp.data(), dims.m, dims.k,
                                dims.n, false);
    CHECK(std::memcmp(cs.data(), cp.data(), cn * sizeof(double)) == 0);

    const auto att = random_vec(static_cast<size_t>(dims.k) * dims.m, 32);
    kernels::matmul_tn_serial(att.data(), b.data(), cs.data(), dims.m, dims.k,
                              dims.n, false);
    kernels::matmul_tn_parallel(att.data(), b.data(), cp.data(), dims.m, dims.k,
                                dims.n, false);
    CHECK(std::memcmp(cs.data(), cp.data(), cn * sizeof(double)) == 0);
  }

  const int rows = 53, d = 64;
  const auto x = random_vec(static_cast<size_t>(rows) * d, 77);
  const auto gamma = random_vec(static_cast<size_t>(d), 78);
  const auto beta = random_vec(static_cast<size_t>(d), 79);
  std::vector<double> os(x.size()), op(x.size()), hs(x.size()), hp(x.size());
  std::vector<double> rs(static_cast<size_t>(rows)), rp(static_cast<size_t>(rows));
  kernels::layer_norm_rows_serial(x.data(), gamma.data(), beta.data(), 1e-6,
                                  rows, d, os.data(), hs.data(), rs.data());
  kernels::layer_norm_rows_parallel(x.data(), gamma.data(), beta.data(), 1e-6,
                                    rows, d, op.data(), hp.data(), rp.data());
  CHECK(std::memcmp(os.data(), op.data(), os.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(hs.data(), hp.data(), hs.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(rs.data(), rp.data(), rs.size() * sizeof(double)) == 0);
}

TEST_CASE("accumulate flag adds onto the existing output") {
  const int m = 3, k = 4, n = 5;
  const auto a = random_vec(static_cast<size_t>(m) * k, 5);
  const auto b = random_vec(static_cast<size_t>(k) * n, 6);
  std::vector<double> base(static_cast<size_t>(m) * n, 2.5);
  std::vector<double> fresh(static_cast<size_t>(m) * n);
  kernels::matmul_nn(a.data(), b.data(), fresh.data(), m, k, n, false);
  kernels::matmul_nn(a.data(), b.data(), base.data(), m, k, n, true);
  for (size_t i = 0; i < fresh.size(); ++i)
    CHECK(base[i] == doctest::Approx(fresh[i] + 2.5).epsilon(1e-12));
}

TEST_CASE("parallel switch routes through the same row kernels") {
  const int m = 70, k = 82, n = 64;
  const auto a = random_vec(static_cast<size_t>(m) * k, 91);
  const auto b = random_vec(static_cast<size_t>(k) * n, 92);
  std::vector<double> on(static_cast<size_t>(m) * n), off(on.size());
  kernels::set_parallel(true);
  kernels::matmul_nn(a.data(), b.data(), on.data(), m, k, n, false);
  kernels::set_parallel(false);
  kernels::matmul_nn(a.data(), b.data(), off.data(), m, k, n, false);
  kernels::set_parallel(true);
  CHECK(std::memcmp(on.data(), off.data(), on.size() * sizeof(double)) == 0);
}

}  // TEST_SUITE
