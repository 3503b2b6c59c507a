#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scnet/dataset.hpp"
#include "scnet/features.hpp"
#include "scnet/model.hpp"

namespace scnet {

// Score vectors over the combined answer space use the fixed layout
// [OCR slot 0 .. max_ocr-1 | vocab word 0 .. M-1]; masked OCR slots carry a
// large negative sentinel in selection views.
inline constexpr double kMaskedScore = -1e30;

// Per-step supervision derived from one ground-truth answer string.
struct TargetInfo {
  std::vector<std::string> words;      // normalized answer words, truncated
  int n_steps = 0;                     // supervised steps incl. the end step
  std::vector<double> targets;         // max_decode x (max_ocr+M) multi-hot
  std::vector<std::uint8_t> valid;     // same shape; 0 on masked OCR slots
                                       // and on steps >= n_steps
  std::vector<int> teacher_ids;        // max_decode input slots, answer-space
                                       // indexing; begin at step 0
  bool unreachable = false;            // some word had an all-zero target row
};

TargetInfo answer_targets(const std::string& gt_answer,
                          const Vocabulary& vocab,
                          const InstanceFeatures& feats,
                          const ModelConfig& cfg);

// Candidate-side inputs of the instance-level contrastive loss: word vectors
// for every answer-space slot, the answer multi-hot, and slot validity
// (unmasked OCR slots and non-special vocab words).
struct ContrastiveTargets {
  std::vector<double> candidates;    // (max_ocr+M) x d_ft
  std::vector<double> y_gt;          // max_ocr+M
  std::vector<std::uint8_t> valid;   // max_ocr+M
};

ContrastiveTargets contrastive_targets(const TargetInfo& info,
                                       const Vocabulary& vocab,
                                       const InstanceFeatures& feats,
                                       const ModelConfig& cfg);

// Eq-level pieces, exposed for direct testing.
Tensor predict_answer_semantics(const Tensor& cls, const ModelConfig& cfg,
                                ParameterStore& params);       // [1, d_ft]
Tensor fuse_semantic_guidance(const Tensor& y_dec, const Tensor& ans_se,
                              ParameterStore& params);         // [T, d]
Tensor score_candidates(const Tensor& z_ans, const Tensor& z_ocr,
                        ParameterStore& params);               // [T, N+M]

// Selection view: copy of raw scores with kMaskedScore on masked OCR slots.
std::vector<double> masked_score_view(const std::vector<double>& scores,
                                      int cols,
                                      const std::vector<std::uint8_t>& ocr_mask);

// Argmax over one masked score row; pad and begin vocab slots are never
// selectable, ties go to the lowest index (so OCR copies win exact ties).
int select_answer(const double* row, int n_ocr, int vocab_size);

enum class DecodeMode { teacher_forced, free_running };

struct DecodeResult {
  Tensor scores;                       // [steps, max_ocr+M], raw values
  std::vector<double> masked_scores;   // selection view of scores
  Tensor ans_se;                       // defined only when ICSP is on
  int steps = 0;                       // score rows computed
  std::vector<int> emitted_ids;        // free running: chosen slot per step
  std::vector<std::string> emitted_words;
  std::vector<std::string> per_step_source;  // "ocr" | "vocab" per word
  std::string answer;                  // words joined with single spaces
};

// Teacher-forced mode scores all max_decode positions from the ground-truth
// alignment; free-running mode feeds back its own argmax and stops at the end
// token or max_decode. Teacher-forced mode without an alignment is a usage
// error.
DecodeResult decode_answer(const EncoderRun& enc,
                           const InstanceFeatures& feats,
                           const Vocabulary& vocab, DecodeMode mode,
                           const TargetInfo* alignment, const ModelConfig& cfg,
                           ParameterStore& params);

}  // namespace scnet
