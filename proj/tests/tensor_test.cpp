#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "scnet/errors.hpp"
#include "scnet/grad_check.hpp"
#include "scnet/param_store.hpp"
#include "scnet/rng.hpp"
#include "scnet/tensor.hpp"

namespace {

using namespace scnet;

std::vector<double> random_vec(size_t n, std::uint64_t seed, double scale = 1.0) {
  SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

Tensor const_tensor(std::vector<int> shape, std::uint64_t seed) {
  long long n = 1;
  for (int d : shape) n *= d;
  return Tensor::leaf(std::move(shape), random_vec(static_cast<size_t>(n), seed));
}

// Runs grad_check over a one-param model built by `body` and requires every
// sampled entry to match finite differences.
void expect_grads_ok(const std::function<Tensor(ParameterStore&)>& body,
                     ParameterStore& params, double tol = 1e-5) {
  GradCheckOptions opts;
  opts.tolerance = tol;
  opts.samples_per_tensor = 8;
  const GradCheckReport rep = grad_check(body, params, opts);
  CAPTURE(rep.worst.param);
  CAPTURE(rep.worst.flat_index);
  CAPTURE(rep.worst.analytic);
  CAPTURE(rep.worst.numeric);
  CHECK(rep.determinism_ok);
  CHECK(rep.max_rel_err <= tol);
}

}  // namespace

TEST_SUITE("tensor_engine") {

TEST_CASE("matmul forward matches hand values") {
  const Tensor a = Tensor::leaf({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::leaf({2, 2}, {5, 6, 7, 8});
  const Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
  CHECK_THROWS_AS(matmul(a, Tensor::leaf({3, 2}, {1, 2, 3, 4, 5, 6})),
                  std::invalid_argument);
}

TEST_CASE("layer_norm matches the frozen oracle") {
  const Tensor gamma = Tensor::leaf({3}, {1, 1, 1});
  const Tensor beta = Tensor::leaf({3}, {0, 0, 0});

  const Tensor y = layer_norm(Tensor::leaf({1, 3}, {1, 2, 3}), gamma, beta, 1e-12);
  CHECK(y.at(0, 0) == doctest::Approx(-1.2247448713906706).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(y.at(0, 2) == doctest::Approx(1.2247448713906706).epsilon(1e-12));

  // zero-variance row maps to beta
  const Tensor c = layer_norm(Tensor::leaf({1, 3}, {4, 4, 4}), gamma, beta, 1e-12);
  CHECK(c.at(0, 0) == 0.0);
  CHECK(c.at(0, 1) == 0.0);
  CHECK(c.at(0, 2) == 0.0);

  // gamma = 0 forces output to beta
  const Tensor g0 = layer_norm(Tensor::leaf({1, 3}, {1, 2, 3}),
                               Tensor::leaf({3}, {0, 0, 0}),
                               Tensor::leaf({3}, {5, 5, 5}), 1e-12);
  CHECK(g0.at(0, 0) == 5.0);
  CHECK(g0.at(0, 2) == 5.0);

  // shift invariance up to eps effects
  const Tensor s1 = layer_norm(Tensor::leaf({1, 3}, {1, 2, 3}), gamma, beta, 1e-12);
  const Tensor s2 =
      layer_norm(Tensor::leaf({1, 3}, {101, 102, 103}), gamma, beta, 1e-12);
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(s1.at(0, j) - s2.at(0, j)) < 1e-9);

  CHECK_THROWS_AS(layer_norm(Tensor::leaf({1, 4}, {1, 2, 3, 4}), gamma, beta, 1e-12),
                  std::invalid_argument);
}

TEST_CASE("attention handles single, duplicate and masked keys") {
  const Tensor q = Tensor::leaf({1, 4}, {0.3, -0.2, 0.5, 0.9});

  SUBCASE("one unmasked key returns its value row exactly") {
    const Tensor k = Tensor::leaf({1, 4}, {1, 2, 3, 4});
    const Tensor v = Tensor::leaf({1, 4}, {7, 8, 9, 10});
    const Tensor out = attention(q, k, v, std::vector<std::uint8_t>{1}, 2);
    for (int j = 0; j < 4; ++j) CHECK(out.at(0, j) == v.at(0, j));
  }

  SUBCASE("identical keys average the value rows") {
    const Tensor k = Tensor::leaf({2, 4}, {1, 2, 3, 4, 1, 2, 3, 4});
    const Tensor v = Tensor::leaf({2, 4}, {1, 0, 2, 0, 3, 0, 4, 0});
    const Tensor out = attention(q, k, v, std::vector<std::uint8_t>{1, 1}, 1);
    CHECK(out.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(out.at(0, 2) == doctest::Approx(3.0).epsilon(1e-12));
  }

  SUBCASE("masked key is excluded, not down-weighted") {
    const Tensor k = const_tensor({2, 4}, 41);
    const Tensor v = const_tensor({2, 4}, 42);
    const Tensor out = attention(q, k, v, std::vector<std::uint8_t>{1, 0}, 2);
    for (int j = 0; j < 4; ++j) CHECK(out.at(0, j) == v.at(0, j));
  }

  SUBCASE("fully masked query row is exactly zero") {
    const Tensor k = const_tensor({2, 4}, 43);
    const Tensor v = const_tensor({2, 4}, 44);
    const Tensor out = attention(q, k, v, std::vector<std::uint8_t>{0, 0}, 2);
    for (int j = 0; j < 4; ++j) CHECK(out.at(0, j) == 0.0);
  }

  SUBCASE("weights are a per-head convex combination") {
    const Tensor qq = const_tensor({3, 8}, 45);
    const Tensor kk = const_tensor({5, 8}, 46);
    const Tensor vv = const_tensor({5, 8}, 47);
    std::vector<double> w;
    attention(qq, kk, vv, std::vector<std::uint8_t>{1, 1, 0, 1, 1}, 2, &w);
    REQUIRE(w.size() == 2u * 3u * 5u);
    for (int h = 0; h < 2; ++h)
      for (int i = 0; i < 3; ++i) {
        double sum = 0.0;
        for (int k = 0; k < 5; ++k) {
          const double wi = w[(static_cast<size_t>(h) * 3 + i) * 5 + k];
          CHECK(wi >= 0.0);
          sum += wi;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(w[(static_cast<size_t>(h) * 3 + i) * 5 + 2] == 0.0);
      }
  }

  SUBCASE("shape and head-count errors") {
    const Tensor k = const_tensor({2, 4}, 48);
    const Tensor v = const_tensor({2, 4}, 49);
    CHECK_THROWS_AS(attention(q, k, v, std::vector<std::uint8_t>{1, 1}, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(attention(q, k, v, std::vector<std::uint8_t>{1, 1}, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        attention(q, const_tensor({2, 6}, 50), v, std::vector<std::uint8_t>{1, 1}, 2),
        std::invalid_argument);
  }
}

TEST_CASE("masking excludes keys from the arithmetic entirely") {
  // attention over [valid ++ masked junk] must equal attention over the valid
  // prefix alone, bit for bit
  const Tensor q = const_tensor({4, 8}, 60);
  const Tensor k_full = const_tensor({6, 8}, 61);
  const Tensor v_full = const_tensor({6, 8}, 62);
  const Tensor k_cut = slice_rows(k_full, 0, 4);
  const Tensor v_cut = slice_rows(v_full, 0, 4);

  const Tensor a = attention(q, k_full, v_full,
                             std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0}, 2);
  const Tensor b =
      attention(q, k_cut, v_cut, std::vector<std::uint8_t>{1, 1, 1, 1}, 2);
  REQUIRE(a.values().size() == b.values().size());
  CHECK(std::memcmp(a.values().data(), b.values().data(),
                    a.values().size() * sizeof(double)) == 0);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  const Tensor x = Tensor::leaf({1}, {3.0}, true);
  const Tensor y = mul(x, x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

  // a second backward pass on a fresh graph adds on top
  const Tensor y2 = mul(x, x);
  y2.backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("no-grad evaluation builds no graph") {
  const Tensor x = Tensor::leaf({2}, {1.0, 2.0}, true);
  NoGradGuard ng;
  const Tensor y = sum_all(mul(x, x));
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("gradients of each primitive match finite differences") {
  SUBCASE("add sub mul scale") {
    ParameterStore ps;
    SplitMix64 rng(7);
    ps.create_normal("a", {3, 4}, rng, 1.0);
    ps.create_normal("b", {3, 4}, rng, 1.0);
    const Tensor c = const_tensor({3, 4}, 71);
    expect_grads_ok(
        [&](ParameterStore& p) {
          const Tensor s =
              add(mul(p.get("a"), p.get("b")), scale(sub(p.get("a"), c), 0.7));
          return sum_all(mul(s, c));
        },
        ps);
  }

  SUBCASE("scale_by and add_n") {
    ParameterStore ps;
    SplitMix64 rng(8);
    ps.create_normal("x", {2, 3}, rng, 1.0);
    ps.create_full("alpha", {1}, 0.5);
    const Tensor c = const_tensor({2, 3}, 72);
    expect_grads_ok(
        [&](ParameterStore& p) {
          const Tensor y = scale_by(p.get("x"), p.get("alpha"));
          return sum_all(mul(add_n({y, p.get("x"), y}), c));
        },
        ps);
  }

  SUBCASE("gelu relu clamp_min away from kinks") {
    ParameterStore ps;
    SplitMix64 rng(9);
    ps.create_normal("x", {4, 4}, rng, 1.0);
    const Tensor c = const_tensor({4, 4}, 73);
    expect_grads_ok(
        [&](ParameterStore& p) {
          return sum_all(mul(gelu(p.get("x")), c));
        },
        ps);
    expect_grads_ok(
        [&](ParameterStore& p) {
          return sum_all(mul(clamp_min(p.get("x"), -8.0), c));
        },
        ps);
  }

  SUBCASE("rowwise broadcast ops") {
    ParameterStore ps;
    SplitMix64 rng(10);
    ps.create_normal("x", {5, 3}, rng, 1.0);
    ps.create_normal("v", {3}, rng, 1.0);
    const Tensor c = const_tensor({5, 3}, 74);
    expect_grads_ok(
        [&](ParameterStore& p) {
          return sum_all(
              mul(add_rowwise(mul_rowwise(p.get("x"), p.get("v")), p.get("v")), c));
        },
        ps);
  }

  SUBCASE("concat slice reshape") {
    ParameterStore ps;
    SplitMix64 rng(11);
    ps.create_normal("a", {2, 3}, rng, 1.0);
    ps.create_normal("b", {4, 3}, rng, 1.0);
    const Tensor c = const_tensor({3, 3}, 75);
    expect_grads_ok(
        [&](ParameterStore& p) {
          const Tensor cat = concat_rows({p.get("a"), p.get("b")});
          const Tensor sl = slice_rows(cat, 1, 3);
          return sum_all(mul(reshape(sl, {3, 3}), c));
        },
        ps);
  }

  SUBCASE("matmul variants and linear") {
    ParameterStore ps;
    SplitMix64 rng(12);
    ps.create_normal("a", {3, 4}, rng, 1.0);
    ps.create_normal("w", {4, 5}, rng, 1.0);
    ps.create_normal("wt", {5, 4}, rng, 1.0);
    ps.create_normal("bias", {5}, rng, 1.0);
    const Tensor c = const_tensor({3, 5}, 76);
    expect_grads_ok(
        [&](ParameterStore& p) {
          const Tensor y1 = linear(p.get("a"), p.get("w"), p.get("bias"));
          const Tensor y2 = matmul_nt(p.get("a"), p.get("wt"));
          return sum_all(mul(add(y1, y2), c));
        },
        ps);
  }

  SUBCASE("layer_norm") {
    ParameterStore ps;
    SplitMix64 rng(13);
    ps.create_normal("x", {4, 6}, rng, 1.0);
    ps.create_normal("gamma", {6}, rng, 0.5);
    ps.create_normal("beta", {6}, rng, 0.5);
    const Tensor c = const_tensor({4, 6}, 77);
    expect_grads_ok(
        [&](ParameterStore& p) {
          return sum_all(
              mul(layer_norm(p.get("x"), p.get("gamma"), p.get("beta"), 1e-6), c));
        },
        ps, 2e-5);
  }

  SUBCASE("attention with mask and multiple heads") {
    ParameterStore ps;
    SplitMix64 rng(14);
    ps.create_normal("q", {3, 8}, rng, 1.0);
    ps.create_normal("k", {5, 8}, rng, 1.0);
    ps.create_normal("v", {5, 8}, rng, 1.0);
    const Tensor c = const_tensor({3, 8}, 78);
    const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1};
    expect_grads_ok(
        [&](ParameterStore& p) {
          return sum_all(
              mul(attention(p.get("q"), p.get("k"), p.get("v"), mask, 2), c));
        },
        ps, 2e-5);
  }

  SUBCASE("embedding lookup") {
    ParameterStore ps;
    SplitMix64 rng(15);
    ps.create_normal("table", {7, 4}, rng, 1.0);
    const Tensor c = const_tensor({3, 4}, 79);
    expect_grads_ok(
        [&](ParameterStore& p) {
          return sum_all(
              mul(embedding_lookup(p.get("table"), {2, 5, 2}), c));
        },
        ps);
  }

  SUBCASE("masked_logsumexp") {
    ParameterStore ps;
    SplitMix64 rng(16);
    ps.create_normal("x", {6}, rng, 1.0);
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1};
    expect_grads_ok(
        [&](ParameterStore& p) {
          return masked_logsumexp(p.get("x"), mask);
        },
        ps);
  }

  SUBCASE("bce_with_logits_sum") {
    ParameterStore ps;
    SplitMix64 rng(17);
    ps.create_normal("x", {3, 4}, rng, 2.0);
    const std::vector<double> targets{1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1};
    const std::vector<std::uint8_t> valid{1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1};
    expect_grads_ok(
        [&](ParameterStore& p) {
          long long count = 0;
          return bce_with_logits_sum(p.get("x"), targets, valid, &count);
        },
        ps);
  }
}

TEST_CASE("grad_check trivial oracles") {
  SUBCASE("sum has all-ones gradient") {
    ParameterStore ps;
    ps.create("theta", {3}, {0.4, -1.2, 2.0});
    const auto rep = grad_check(
        [](ParameterStore& p) { return sum_all(p.get("theta")); }, ps);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-8);
  }

  SUBCASE("sum of squares at [1,2] gives [2,4]") {
    ParameterStore ps;
    ps.create("theta", {2}, {1.0, 2.0});
    const auto rep = grad_check(
        [](ParameterStore& p) {
          return sum_all(mul(p.get("theta"), p.get("theta")));
        },
        ps);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-6);
    ps.zero_grads();
    const Tensor loss = sum_all(mul(ps.get("theta"), ps.get("theta")));
    loss.backward();
    CHECK(ps.get("theta").grad()[0] == doctest::Approx(2.0));
    CHECK(ps.get("theta").grad()[1] == doctest::Approx(4.0));
  }

  SUBCASE("a corrupted backward implementation is caught") {
    ParameterStore ps;
    ps.create("theta", {3}, {0.3, 0.9, -0.5});
    const auto broken_double = [](const Tensor& x) {
      std::vector<double> out(x.values());
      for (double& v : out) v *= 2.0;
      return make_op("broken_double", x.shape(), std::move(out), {x},
                     [](detail::Node& self) {
                       const Tensor& x = self.parents[0];
                       x.node()->ensure_grad();
                       for (size_t i = 0; i < self.grad.size(); ++i)
                         x.node()->grad[i] += 1.7 * self.grad[i];  // wrong on purpose
                     });
    };
    const auto rep = grad_check(
        [&](ParameterStore& p) { return sum_all(broken_double(p.get("theta"))); },
        ps);
    CHECK_FALSE(rep.pass);
    CHECK(rep.max_rel_err > 0.1);
  }

  SUBCASE("a nondeterministic function is detected") {
    ParameterStore ps;
    ps.create("theta", {2}, {1.0, 2.0});
    int calls = 0;
    const auto rep = grad_check(
        [&](ParameterStore& p) {
          ++calls;
          const double jitter = (calls % 2 == 0) ? 1e-3 : 0.0;
          return add(sum_all(p.get("theta")), Tensor::scalar(jitter));
        },
        ps);
    CHECK_FALSE(rep.determinism_ok);
    CHECK_FALSE(rep.pass);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "scnet_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "params.bin").string();

  ParameterStore ps;
  SplitMix64 rng(99);
  ps.create_normal("layer.w", {4, 3}, rng, 1.0);
  ps.create_normal("layer.b", {3}, rng, 1.0);
  ps.create("edge", {5}, {0.0, -0.0, 1e-308, 1e308, -3.25});
  const auto before_w = ps.get("layer.w").values();
  const auto before_edge = ps.get("edge").values();
  ps.save(path);

  for (auto& [name, t] : ps)
    for (double& v : t.mutable_values()) v = 42.0;
  ps.load(path);
  CHECK(std::memcmp(ps.get("layer.w").values().data(), before_w.data(),
                    before_w.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(ps.get("edge").values().data(), before_edge.data(),
                    before_edge.size() * sizeof(double)) == 0);

  SUBCASE("missing parameter in the store is rejected") {
    ParameterStore other;
    other.create("layer.w", {4, 3}, std::vector<double>(12, 0.0));
    other.create("layer.b", {3}, {0, 0, 0});
    other.create("unexpected", {5}, {0, 0, 0, 0, 0});
    CHECK_THROWS_AS(other.load(path), IoError);
  }

  SUBCASE("shape mismatch is rejected by name") {
    ParameterStore other;
    other.create("layer.w", {3, 4}, std::vector<double>(12, 0.0));
    other.create("layer.b", {3}, {0, 0, 0});
    other.create("edge", {5}, {0, 0, 0, 0, 0});
    CHECK_THROWS_WITH_AS(other.load(path),
                         doctest::Contains("layer.w"), IoError);
  }

  SUBCASE("extra parameter in the store is rejected") {
    ParameterStore other;
    other.create("layer.w", {4, 3}, std::vector<double>(12, 0.0));
    other.create("layer.b", {3}, {0, 0, 0});
    other.create("edge", {5}, {0, 0, 0, 0, 0});
    other.create("straggler", {1}, {0});
    CHECK_THROWS_AS(other.load(path), IoError);
  }
}

TEST_CASE("misc error paths") {
  const Tensor table = Tensor::leaf({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(embedding_lookup(table, {3}), std::out_of_range);
  CHECK_THROWS_AS(embedding_lookup(table, {-1}), std::out_of_range);

  const Tensor bad = Tensor::leaf({2}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_WITH_AS(check_finite(bad, "unit-test probe"),
                       doctest::Contains("unit-test probe"), ToleranceError);

  CHECK_THROWS_AS(masked_logsumexp(Tensor::leaf({2}, {1, 2}),
                                   std::vector<std::uint8_t>{0, 0}),
                  std::invalid_argument);
}

}  // TEST_SUITE
