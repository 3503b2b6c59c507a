#include "scnet/losses.hpp"

#include <cmath>

#include "scnet/errors.hpp"

namespace scnet {

ContrastiveVariant parse_contrastive_variant(const std::string& name) {
  if (name == "denominator_neg") return ContrastiveVariant::denominator_neg;
  if (name == "denominator_all") return ContrastiveVariant::denominator_all;
  throw UsageError("unknown contrastive_variant: " + name);
}

std::string to_string(ContrastiveVariant v) {
  return v == ContrastiveVariant::denominator_neg ? "denominator_neg"
                                               : "denominator_all";
}

SimilarityKind parse_similarity(const std::string& name) {
  if (name == "dot") return SimilarityKind::dot;
  if (name == "cosine") return SimilarityKind::cosine;
  throw UsageError("unknown similarity: " + name);
}

std::string to_string(SimilarityKind k) {
  return k == SimilarityKind::dot ? "dot" : "cosine";
}

ContrastiveResult contrastive_loss(const std::vector<ContrastiveInputs>& batch,
                                   const LossConfig& cfg) {
  ContrastiveResult result;
  if (!(cfg.tau > 0.0)) throw UsageError("contrastive temperature must be > 0");
  std::vector<Tensor> terms;
  for (const ContrastiveInputs& inst : batch) {
    const int d_ft = inst.pred_semantic.dim(1);
    const int cols = static_cast<int>(inst.valid->size());

    std::vector<std::uint8_t> pos(cols, 0), neg(cols, 0);
    bool any_pos = false, any_neg = false;
    for (int j = 0; j < cols; ++j) {
      if (!(*inst.valid)[j]) continue;
      if ((*inst.y_gt)[j] != 0.0) {
        pos[j] = 1;
        any_pos = true;
      } else {
        neg[j] = 1;
        any_neg = true;
      }
    }
    if (!any_pos || !any_neg) {
      ++result.skipped;
      continue;
    }

    std::vector<double> cand = *inst.candidates;
    Tensor pred = inst.pred_semantic;
    if (cfg.similarity == SimilarityKind::cosine) {
      pred = l2_normalize_rows(pred);
      for (int j = 0; j < cols; ++j) {
        double ss = 0.0;
        for (int k = 0; k < d_ft; ++k) {
          const double v = cand[static_cast<std::size_t>(j) * d_ft + k];
          ss += v * v;
        }
        const double norm = std::sqrt(ss);
        if (norm > 1e-12) {
          for (int k = 0; k < d_ft; ++k) {
            cand[static_cast<std::size_t>(j) * d_ft + k] /= norm;
          }
        }
      }
    }
    const Tensor cand_t = Tensor::leaf({cols, d_ft}, std::move(cand));
    const Tensor logits =
        scale(matmul_nt(pred, cand_t), 1.0 / cfg.tau);  // [1, cols]
    const Tensor lse_pos = masked_logsumexp(logits, pos);
    const Tensor denom_mask_lse = masked_logsumexp(
        logits, cfg.contrastive_variant == ContrastiveVariant::denominator_neg
                    ? neg
                    : *inst.valid);
    Tensor inst_loss = sub(denom_mask_lse, lse_pos);
    if (inst_loss.values()[0] < cfg.clamp_floor) {
      ++result.clamped;
      inst_loss = clamp_min(inst_loss, cfg.clamp_floor);
    }
    terms.push_back(inst_loss);
    ++result.used;
  }
  if (result.used == 0) {
    result.loss = Tensor::scalar(0.0);
  } else {
    result.loss = scale(add_n(terms), 1.0 / result.used);
  }
  return result;
}

void BceBatch::add(const Tensor& scores, const std::vector<double>& targets,
                   const std::vector<std::uint8_t>& valid) {
  long long n = 0;
  sums.push_back(bce_with_logits_sum(scores, targets, valid, &n));
  count += n;
}

Tensor BceBatch::mean() const {
  if (count == 0) return Tensor::scalar(0.0);
  return scale(add_n(sums), 1.0 / static_cast<double>(count));
}

Tensor total_loss(const Tensor& l_bce, const Tensor& l_s,
                  const LossConfig& cfg) {
  return add(l_bce, scale(l_s, cfg.alpha_semantic));
}

}  // namespace scnet
