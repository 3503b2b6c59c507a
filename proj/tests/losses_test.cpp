#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "scnet/losses.hpp"
#include "scnet/rng.hpp"
#include "scnet/tensor.hpp"

namespace {

using namespace scnet;

struct Case {
  std::vector<double> pred;        // d
  std::vector<double> candidates;  // n x d
  std::vector<double> y_gt;        // n
  std::vector<std::uint8_t> valid; // n
  int n = 0;
  int d = 0;
};

Case random_case(SplitMix64& rng) {
  Case c;
  c.n = rng.uniform_int(3, 12);
  c.d = rng.uniform_int(2, 6);
  c.pred.resize(static_cast<size_t>(c.d));
  for (double& x : c.pred) x = rng.normal();
  c.candidates.resize(static_cast<size_t>(c.n) * c.d);
  for (double& x : c.candidates) x = rng.normal();
  c.y_gt.assign(static_cast<size_t>(c.n), 0.0);
  c.valid.assign(static_cast<size_t>(c.n), 0);
  // Force at least one valid positive and one valid negative.
  for (int i = 0; i < c.n; ++i) {
    c.valid[static_cast<size_t>(i)] = rng.bernoulli(0.8) ? 1 : 0;
    c.y_gt[static_cast<size_t>(i)] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  c.valid[0] = 1;
  c.y_gt[0] = 1.0;
  c.valid[1] = 1;
  c.y_gt[1] = 0.0;
  return c;
}

// Direct-summation reference, no log-sum-exp shifts.
double naive_loss(const Case& c, const LossConfig& cfg) {
  double pred_norm = 0;
  for (double x : c.pred) pred_norm += x * x;
  pred_norm = std::sqrt(pred_norm);
  double pos = 0, neg = 0, all = 0;
  for (int i = 0; i < c.n; ++i) {
    if (!c.valid[static_cast<size_t>(i)]) continue;
    double dot = 0, cnorm = 0;
    for (int j = 0; j < c.d; ++j) {
      const double cv = c.candidates[static_cast<size_t>(i) * c.d + j];
      dot += c.pred[static_cast<size_t>(j)] * cv;
      cnorm += cv * cv;
    }
    double sim = dot;
    if (cfg.similarity == SimilarityKind::cosine) {
      sim = dot / (pred_norm * std::sqrt(cnorm));
    }
    const double e = std::exp(sim / cfg.tau);
    all += e;
    if (c.y_gt[static_cast<size_t>(i)] == 1.0) {
      pos += e;
    } else {
      neg += e;
    }
  }
  const double denom =
      cfg.contrastive_variant == ContrastiveVariant::denominator_neg ? neg : all;
  return -std::log(pos / denom);
}

ContrastiveResult run_single(const Case& c, const LossConfig& cfg) {
  ContrastiveInputs in;
  in.pred_semantic = Tensor::leaf({1, c.d}, c.pred);
  in.candidates = &c.candidates;
  in.y_gt = &c.y_gt;
  in.valid = &c.valid;
  return contrastive_loss({in}, cfg);
}

// One slot per entry of sims, pred = e_0, candidate i = sims[i] * e_0.
Case sims_case(const std::vector<double>& sims,
               const std::vector<double>& y_gt) {
  Case c;
  c.n = static_cast<int>(sims.size());
  c.d = 2;
  c.pred = {1.0, 0.0};
  c.candidates.assign(static_cast<size_t>(c.n) * 2, 0.0);
  for (int i = 0; i < c.n; ++i) {
    c.candidates[static_cast<size_t>(i) * 2] = sims[static_cast<size_t>(i)];
  }
  c.y_gt = y_gt;
  c.valid.assign(static_cast<size_t>(c.n), 1);
  return c;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("stabilized contrastive loss matches direct summation") {
  SplitMix64 rng(2024);
  LossConfig cfg;
  cfg.clamp_floor = -1e18;
  int checked = 0;
  for (int it = 0; it < 250; ++it) {
    Case c = random_case(rng);
    cfg.tau = rng.uniform(0.05, 2.0);
    for (auto variant : {ContrastiveVariant::denominator_neg,
                         ContrastiveVariant::denominator_all}) {
      for (auto sim : {SimilarityKind::dot, SimilarityKind::cosine}) {
        cfg.contrastive_variant = variant;
        cfg.similarity = sim;
        const double want = naive_loss(c, cfg);
        const ContrastiveResult got = run_single(c, cfg);
        REQUIRE(got.used == 1);
        CHECK(std::abs(got.loss.item() - want) <= 1e-10);
        ++checked;
      }
    }
  }
  CHECK(checked == 1000);
}

TEST_CASE("four-candidate value is reproduced exactly") {
  LossConfig cfg;
  cfg.tau = 1.0;
  cfg.contrastive_variant = ContrastiveVariant::denominator_neg;
  cfg.similarity = SimilarityKind::dot;
  cfg.clamp_floor = -1e18;
  const Case c = sims_case({2.0, 1.0, 0.5, -1.0}, {1.0, 0.0, 0.0, 0.0});
  const ContrastiveResult r = run_single(c, cfg);
  CHECK(std::abs(r.loss.item() - (-0.4450430803580094)) <= 1e-12);
}

TEST_CASE("two candidates reduce to a similarity difference") {
  LossConfig cfg;
  cfg.contrastive_variant = ContrastiveVariant::denominator_neg;
  cfg.similarity = SimilarityKind::dot;
  cfg.clamp_floor = -1e18;
  SplitMix64 rng(11);
  for (int it = 0; it < 50; ++it) {
    const double s_pos = rng.uniform(-3.0, 3.0);
    const double s_neg = rng.uniform(-3.0, 3.0);
    cfg.tau = rng.uniform(0.1, 1.5);
    const Case c = sims_case({s_pos, s_neg}, {1.0, 0.0});
    const ContrastiveResult r = run_single(c, cfg);
    CHECK(std::abs(r.loss.item() - (-(s_pos - s_neg) / cfg.tau)) <= 1e-9);

    LossConfig doubled = cfg;
    doubled.tau = 2.0 * cfg.tau;
    const ContrastiveResult half = run_single(c, doubled);
    CHECK(std::abs(half.loss.item() - 0.5 * r.loss.item()) <= 1e-9);
  }

  // Equal similarities with one positive and one negative cancel to zero.
  cfg.tau = 0.3;
  const Case tie = sims_case({0.75, 0.75}, {1.0, 0.0});
  CHECK(std::abs(run_single(tie, cfg).loss.item()) <= 1e-12);
}

TEST_CASE("cosine similarity normalizes both sides") {
  LossConfig cfg;
  cfg.tau = 0.5;
  cfg.similarity = SimilarityKind::cosine;
  cfg.contrastive_variant = ContrastiveVariant::denominator_neg;
  cfg.clamp_floor = -1e18;
  Case c;
  c.n = 2;
  c.d = 2;
  c.pred = {3.0, 4.0};
  c.candidates = {6.0, 8.0, -8.0, 6.0};  // cos = 1 and 0
  c.y_gt = {1.0, 0.0};
  c.valid = {1, 1};
  const ContrastiveResult r = run_single(c, cfg);
  CHECK(std::abs(r.loss.item() - (-(1.0 - 0.0) / 0.5)) <= 1e-9);
}

TEST_CASE("instances without both classes are skipped, never scored") {
  LossConfig cfg;
  cfg.clamp_floor = -1e18;
  const Case ok = sims_case({1.0, 0.0}, {1.0, 0.0});
  const Case no_pos = sims_case({1.0, 0.0}, {0.0, 0.0});
  const Case no_neg = sims_case({1.0, 0.5}, {1.0, 1.0});
  Case masked_pos = sims_case({1.0, 0.0, 2.0}, {0.0, 0.0, 1.0});
  masked_pos.valid[2] = 0;  // its only positive is invalid

  std::vector<ContrastiveInputs> batch;
  const Case* cases[] = {&ok, &no_pos, &no_neg, &masked_pos};
  for (const Case* c : cases) {
    ContrastiveInputs in;
    in.pred_semantic = Tensor::leaf({1, c->d}, c->pred);
    in.candidates = &c->candidates;
    in.y_gt = &c->y_gt;
    in.valid = &c->valid;
    batch.push_back(in);
  }
  const ContrastiveResult r = contrastive_loss(batch, cfg);
  CHECK(r.used == 1);
  CHECK(r.skipped == 3);
  CHECK(r.used + r.skipped == static_cast<int>(batch.size()));
  // The mean over used instances equals the one live instance's loss.
  const ContrastiveResult solo = run_single(ok, cfg);
  CHECK(r.loss.item() == doctest::Approx(solo.loss.item()).epsilon(1e-12));
}

TEST_CASE("per-instance floor clamps and counts") {
  LossConfig cfg;
  cfg.tau = 1.0;
  cfg.clamp_floor = -0.1;
  // Raw loss -(5 - 0) / 1 = -5, far below the floor.
  const Case c = sims_case({5.0, 0.0}, {1.0, 0.0});
  const ContrastiveResult r = run_single(c, cfg);
  CHECK(r.clamped == 1);
  CHECK(r.loss.item() == doctest::Approx(-0.1).epsilon(1e-12));

  LossConfig loose = cfg;
  loose.clamp_floor = -100.0;
  const ContrastiveResult r2 = run_single(c, loose);
  CHECK(r2.clamped == 0);
  CHECK(r2.loss.item() == doctest::Approx(-5.0).epsilon(1e-10));
}

TEST_CASE("bce at zero logits is log two") {
  std::vector<double> targets = {1.0, 0.0, 1.0, 1.0, 0.0, 0.0};
  std::vector<std::uint8_t> valid(6, 1);
  BceBatch bce;
  bce.add(Tensor::leaf({2, 3}, std::vector<double>(6, 0.0)), targets, valid);
  CHECK(std::abs(bce.mean().item() - std::log(2.0)) <= 1e-12);
}

TEST_CASE("bce saturation stays finite in loss and gradient") {
  std::vector<std::uint8_t> valid(4, 1);
  {
    // Confident and correct: essentially zero loss.
    BceBatch bce;
    bce.add(Tensor::leaf({1, 4}, {40.0, -40.0, 40.0, -40.0}),
            {1.0, 0.0, 1.0, 0.0}, valid);
    CHECK(bce.mean().item() < 1e-15);
  }
  {
    // Confident and wrong at extreme magnitude: finite loss, finite grads.
    Tensor logits =
        Tensor::leaf({1, 4}, {1e4, -1e4, 1e4, -1e4}, true);
    BceBatch bce;
    bce.add(logits, {0.0, 1.0, 0.0, 1.0}, valid);
    const Tensor loss = bce.mean();
    CHECK(std::isfinite(loss.item()));
    CHECK(loss.item() == doctest::Approx(1e4).epsilon(1e-12));
    loss.backward();
    for (double g : logits.grad()) CHECK(std::isfinite(g));
  }
}

TEST_CASE("bce grand mean pools elements across instances") {
  SplitMix64 rng(5);
  std::vector<double> l1(6), l2(4), t1(6), t2(4);
  for (auto* v : {&l1, &l2}) {
    for (double& x : *v) x = rng.normal();
  }
  for (auto* v : {&t1, &t2}) {
    for (double& x : *v) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  std::vector<std::uint8_t> v1 = {1, 1, 0, 1, 1, 1};
  std::vector<std::uint8_t> v2 = {1, 0, 1, 1};

  BceBatch bce;
  bce.add(Tensor::leaf({2, 3}, l1), t1, v1);
  bce.add(Tensor::leaf({1, 4}, l2), t2, v2);
  CHECK(bce.count == 8);

  double sum = 0;
  const auto elem = [](double x, double y) {
    return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  };
  for (size_t i = 0; i < l1.size(); ++i) {
    if (v1[i]) sum += elem(l1[i], t1[i]);
  }
  for (size_t i = 0; i < l2.size(); ++i) {
    if (v2[i]) sum += elem(l2[i], t2[i]);
  }
  CHECK(std::abs(bce.mean().item() - sum / 8.0) <= 1e-12);
}

TEST_CASE("total loss composes the two terms linearly") {
  LossConfig cfg;
  cfg.alpha_semantic = 0.1;
  const Tensor combined =
      total_loss(Tensor::scalar(0.7), Tensor::scalar(-0.2), cfg);
  CHECK(std::abs(combined.item() - 0.68) <= 1e-15);

  cfg.alpha_semantic = 0.0;
  const Tensor bce_only =
      total_loss(Tensor::scalar(0.7), Tensor::scalar(-0.2), cfg);
  CHECK(bce_only.item() == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("contrastive gradient points downhill") {
  LossConfig cfg;
  cfg.tau = 1.0;
  cfg.clamp_floor = -1e18;
  SplitMix64 rng(77);
  Case c = random_case(rng);

  Tensor pred = Tensor::leaf({1, c.d}, c.pred, true);
  ContrastiveInputs in;
  in.pred_semantic = pred;
  in.candidates = &c.candidates;
  in.y_gt = &c.y_gt;
  in.valid = &c.valid;
  const ContrastiveResult r0 = contrastive_loss({in}, cfg);
  r0.loss.backward();

  Case moved = c;
  double gnorm = 0;
  for (int j = 0; j < c.d; ++j) {
    const double g = pred.grad()[static_cast<size_t>(j)];
    gnorm += g * g;
    moved.pred[static_cast<size_t>(j)] -= 1e-3 * g;
  }
  REQUIRE(gnorm > 0.0);
  const ContrastiveResult r1 = run_single(moved, cfg);
  CHECK(r1.loss.item() < r0.loss.item());
}

TEST_CASE("identical inputs give bit-identical losses") {
  SplitMix64 rng(303);
  const Case c = random_case(rng);
  LossConfig cfg;
  const double a = run_single(c, cfg).loss.item();
  const double b = run_single(c, cfg).loss.item();
  CHECK(a == b);
}

}  // TEST_SUITE
