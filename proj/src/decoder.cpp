#include "scnet/decoder.hpp"

#include <algorithm>

#include "scnet/errors.hpp"
#include "scnet/text_norm.hpp"

namespace scnet {

namespace {

// First unmasked OCR slot whose normalized text equals `word`, else -1.
int find_ocr_slot(const std::string& word, const InstanceFeatures& feats) {
  for (std::size_t i = 0; i < feats.ocr_text.size(); ++i) {
    if (feats.ocr_mask[i] && feats.ocr_text[i] == word) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

// One decode input row: OCR slots read the token's final encoder state,
// vocab slots read the learned embedding row.
Tensor input_row(int slot, const Tensor& z_ocr, const ModelConfig& cfg,
                 ParameterStore& params) {
  if (slot < cfg.max_ocr) {
    return slice_rows(z_ocr, slot, 1);
  }
  return embedding_lookup(params.get("decoder.vocab_emb"),
                          {slot - cfg.max_ocr});
}

}  // namespace

TargetInfo answer_targets(const std::string& gt_answer,
                          const Vocabulary& vocab,
                          const InstanceFeatures& feats,
                          const ModelConfig& cfg) {
  TargetInfo info;
  const int n = cfg.max_ocr;
  const int m = vocab.size();
  const int cols = n + m;

  std::vector<std::string> words = split_words(normalize_answer(gt_answer));
  const bool truncated = static_cast<int>(words.size()) >= cfg.max_decode;
  if (truncated) words.resize(cfg.max_decode);
  info.words = words;
  info.n_steps = static_cast<int>(words.size()) + (truncated ? 0 : 1);

  info.targets.assign(static_cast<std::size_t>(cfg.max_decode) * cols, 0.0);
  info.valid.assign(static_cast<std::size_t>(cfg.max_decode) * cols, 0);
  info.teacher_ids.assign(cfg.max_decode, n + kPadId);
  info.teacher_ids[0] = n + kBeginId;

  for (int t = 0; t < info.n_steps; ++t) {
    double* row = info.targets.data() + static_cast<std::size_t>(t) * cols;
    std::uint8_t* val = info.valid.data() + static_cast<std::size_t>(t) * cols;
    for (int j = 0; j < cols; ++j) {
      val[j] = (j < n) ? feats.ocr_mask[j] : 1;
    }
    if (t < static_cast<int>(words.size())) {
      const std::string& word = words[t];
      bool any = false;
      const int vid = vocab.index_of(word);
      if (vid >= 0) {
        row[n + vid] = 1.0;
        any = true;
      }
      for (int s = 0; s < n; ++s) {
        if (feats.ocr_mask[s] && feats.ocr_text[s] == word) {
          row[s] = 1.0;
          any = true;
        }
      }
      if (!any) info.unreachable = true;
      if (t + 1 < cfg.max_decode) {
        const int ocr_slot = find_ocr_slot(word, feats);
        if (ocr_slot >= 0) {
          info.teacher_ids[t + 1] = ocr_slot;
        } else if (vid >= 0) {
          info.teacher_ids[t + 1] = n + vid;
        } else {
          info.teacher_ids[t + 1] = n + kPadId;
        }
      }
    } else {
      row[n + kEndId] = 1.0;
    }
  }
  return info;
}

ContrastiveTargets contrastive_targets(const TargetInfo& info,
                                       const Vocabulary& vocab,
                                       const InstanceFeatures& feats,
                                       const ModelConfig& cfg) {
  ContrastiveTargets out;
  const int n = cfg.max_ocr;
  const int m = vocab.size();
  const int cols = n + m;
  out.candidates.assign(static_cast<std::size_t>(cols) * cfg.d_ft, 0.0);
  out.y_gt.assign(cols, 0.0);
  out.valid.assign(cols, 0);

  for (int s = 0; s < n; ++s) {
    if (!feats.ocr_mask[s]) continue;
    out.valid[s] = 1;
    std::copy(feats.ocr_ft.begin() + static_cast<std::size_t>(s) * cfg.d_ft,
              feats.ocr_ft.begin() + static_cast<std::size_t>(s + 1) * cfg.d_ft,
              out.candidates.begin() + static_cast<std::size_t>(s) * cfg.d_ft);
  }
  for (int v = 3; v < m; ++v) {
    out.valid[n + v] = 1;
    std::copy(
        vocab.embeddings.begin() + static_cast<std::size_t>(v) * vocab.d_ft,
        vocab.embeddings.begin() + static_cast<std::size_t>(v + 1) * vocab.d_ft,
        out.candidates.begin() + static_cast<std::size_t>(n + v) * cfg.d_ft);
  }
  for (const std::string& word : info.words) {
    const int vid = vocab.index_of(word);
    if (vid >= 3) out.y_gt[n + vid] = 1.0;
    for (int s = 0; s < n; ++s) {
      if (feats.ocr_mask[s] && feats.ocr_text[s] == word) out.y_gt[s] = 1.0;
    }
  }
  return out;
}

Tensor predict_answer_semantics(const Tensor& cls, const ModelConfig& cfg,
                                ParameterStore& params) {
  Tensor h = linear(cls, params.get("icsp.w2"), params.get("icsp.b2"));
  if (cfg.icsp_mlp_gelu) h = gelu(h);
  return linear(h, params.get("icsp.w1"), params.get("icsp.b1"));
}

Tensor fuse_semantic_guidance(const Tensor& y_dec, const Tensor& ans_se,
                              ParameterStore& params) {
  const Tensor g = linear(ans_se, params.get("icsp.w_se"),
                          params.get("icsp.b_se"));
  const Tensor gate = reshape(params.get("icsp.alpha_se"), {1, y_dec.dim(1)});
  return add_rowwise(y_dec, mul(g, gate));
}

Tensor score_candidates(const Tensor& z_ans, const Tensor& z_ocr,
                        ParameterStore& params) {
  const Tensor ans_proj = linear(z_ans, params.get("decoder.w_ans"),
                                 params.get("decoder.b_ans"));
  const Tensor ocr_proj = linear(z_ocr, params.get("decoder.w_ocr"),
                                 params.get("decoder.b_ocr"));
  const Tensor s_ocr = matmul_nt(ans_proj, ocr_proj);
  const Tensor s_voc = linear(z_ans, params.get("decoder.w_voc"),
                              params.get("decoder.b_voc"));
  return concat_cols({s_ocr, s_voc});
}

std::vector<double> masked_score_view(
    const std::vector<double>& scores, int cols,
    const std::vector<std::uint8_t>& ocr_mask) {
  std::vector<double> out = scores;
  const int n = static_cast<int>(ocr_mask.size());
  const std::size_t rows = scores.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int s = 0; s < n; ++s) {
      if (!ocr_mask[s]) out[r * cols + s] = kMaskedScore;
    }
  }
  return out;
}

int select_answer(const double* row, int n_ocr, int vocab_size) {
  int best = -1;
  double best_score = 0.0;
  for (int j = 0; j < n_ocr + vocab_size; ++j) {
    if (j == n_ocr + kPadId || j == n_ocr + kBeginId) continue;
    if (best < 0 || row[j] > best_score) {
      best = j;
      best_score = row[j];
    }
  }
  return best;
}

DecodeResult decode_answer(const EncoderRun& enc,
                           const InstanceFeatures& feats,
                           const Vocabulary& vocab, DecodeMode mode,
                           const TargetInfo* alignment, const ModelConfig& cfg,
                           ParameterStore& params) {
  DecodeResult result;
  const int n = cfg.max_ocr;
  const int cols = n + vocab.size();

  // ans_se is computed once and reused by every step below
  if (cfg.use_icsp) {
    result.ans_se = predict_answer_semantics(enc.cls, cfg, params);
  }

  const Tensor& step_emb = params.get("decoder.step_emb");
  const auto finish_scores = [&](const Tensor& y_dec) {
    const Tensor z_ans = cfg.use_icsp
                             ? fuse_semantic_guidance(y_dec, result.ans_se,
                                                      params)
                             : y_dec;
    return score_candidates(z_ans, enc.z_ocr, params);
  };

  if (mode == DecodeMode::teacher_forced) {
    if (alignment == nullptr) {
      throw UsageError("teacher-forced decoding requires a target alignment");
    }
    std::vector<Tensor> rows;
    rows.reserve(cfg.max_decode);
    for (int t = 0; t < cfg.max_decode; ++t) {
      rows.push_back(input_row(alignment->teacher_ids[t], enc.z_ocr, cfg,
                               params));
    }
    const Tensor inputs = add(concat_rows(rows), step_emb);
    const Tensor y_dec = run_decode_rows(enc, inputs, cfg, params);
    result.scores = finish_scores(y_dec);
    result.steps = cfg.max_decode;
    result.masked_scores =
        masked_score_view(result.scores.values(), cols, feats.ocr_mask);
    return result;
  }

  std::vector<int> input_slots = {n + kBeginId};
  for (int t = 0; t < cfg.max_decode; ++t) {
    std::vector<Tensor> rows;
    rows.reserve(input_slots.size());
    for (std::size_t u = 0; u < input_slots.size(); ++u) {
      rows.push_back(add(input_row(input_slots[u], enc.z_ocr, cfg, params),
                         slice_rows(step_emb, static_cast<int>(u), 1)));
    }
    const Tensor inputs = concat_rows(rows);
    const Tensor y_dec = run_decode_rows(enc, inputs, cfg, params);
    const Tensor scores = finish_scores(y_dec);
    result.scores = scores;
    result.steps = t + 1;
    result.masked_scores =
        masked_score_view(scores.values(), cols, feats.ocr_mask);
    const int pick =
        select_answer(result.masked_scores.data() +
                          static_cast<std::size_t>(t) * cols,
                      n, vocab.size());
    result.emitted_ids.push_back(pick);
    if (pick == n + kEndId) break;
    if (pick < n) {
      result.emitted_words.push_back(feats.ocr_raw[pick]);
      result.per_step_source.push_back("ocr");
    } else {
      result.emitted_words.push_back(vocab.words[pick - n]);
      result.per_step_source.push_back("vocab");
    }
    if (t + 1 < cfg.max_decode) input_slots.push_back(pick);
  }
  for (std::size_t i = 0; i < result.emitted_words.size(); ++i) {
    if (i) result.answer += ' ';
    result.answer += result.emitted_words[i];
  }
  return result;
}

}  // namespace scnet
