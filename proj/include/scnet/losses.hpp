#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scnet/tensor.hpp"

namespace scnet {

enum class ContrastiveVariant {
  denominator_neg,      // -log(pos-sum / neg-sum)
  denominator_all,   // -log(pos-sum / all-valid-sum)
};

enum class SimilarityKind { dot, cosine };

struct LossConfig {
  double alpha_semantic = 0.1;
  double tau = 0.1;
  ContrastiveVariant contrastive_variant = ContrastiveVariant::denominator_neg;
  SimilarityKind similarity = SimilarityKind::dot;
  double clamp_floor = -20.0;  // per-instance floor; every clamp is counted
};

ContrastiveVariant parse_contrastive_variant(const std::string& name);
std::string to_string(ContrastiveVariant v);
SimilarityKind parse_similarity(const std::string& name);
std::string to_string(SimilarityKind k);

// One instance of the instance-level contrastive objective: a predicted
// semantic vector against the word vectors of every answer-space slot.
struct ContrastiveInputs {
  Tensor pred_semantic;                     // [1, d_ft]
  const std::vector<double>* candidates;    // (N+M) x d_ft
  const std::vector<double>* y_gt;          // N+M multi-hot
  const std::vector<std::uint8_t>* valid;   // N+M
};

struct ContrastiveResult {
  Tensor loss;      // scalar mean over used instances; constant 0 if none
  int used = 0;
  int skipped = 0;  // instances without a positive or without a negative
  int clamped = 0;  // instances whose raw loss fell below the floor
};

// Log-sum-exp stabilized in both numerator and denominator. used + skipped
// always equals batch.size().
ContrastiveResult contrastive_loss(const std::vector<ContrastiveInputs>& batch,
                                   const LossConfig& cfg);

// Grand-mean binary cross-entropy from logits: element sums accumulate per
// instance, one division by the total valid-element count at the end.
struct BceBatch {
  std::vector<Tensor> sums;
  long long count = 0;

  void add(const Tensor& scores, const std::vector<double>& targets,
           const std::vector<std::uint8_t>& valid);
  Tensor mean() const;  // constant 0 when no valid elements were added
};

// L_final = L_bce + alpha_semantic * L_s.
Tensor total_loss(const Tensor& l_bce, const Tensor& l_s,
                  const LossConfig& cfg);

}  // namespace scnet
