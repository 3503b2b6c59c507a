#include "scnet/features.hpp"

#include <stdexcept>

#include "scnet/errors.hpp"
#include "scnet/model.hpp"
#include "scnet/text_norm.hpp"

namespace scnet {

namespace {

void require_dim(std::size_t got, int want, const std::string& what,
                 const std::string& where) {
  if (got != static_cast<std::size_t>(want)) {
    throw IoError(where + ": " + what + " has dim " + std::to_string(got) +
                  ", expected " + std::to_string(want));
  }
}

}  // namespace

InstanceFeatures build_instance_features(const VqaInstance& inst,
                                         const QuestionVocab& qvocab,
                                         const ModelConfig& cfg) {
  InstanceFeatures f;
  const std::string where = "instance " + inst.instance_id;
  if (inst.image_w <= 0.0 || inst.image_h <= 0.0) {
    throw IoError(where + ": non-positive image size");
  }

  const int n_tok = std::min<int>(static_cast<int>(inst.question_tokens.size()),
                                  cfg.max_q - 1);
  f.n_q = n_tok + 1;
  f.q_ids.assign(cfg.max_q, kQPadId);
  f.q_mask.assign(cfg.max_q, 0);
  f.q_ids[0] = kQClsId;
  f.q_mask[0] = 1;
  for (int i = 0; i < n_tok; ++i) {
    f.q_ids[i + 1] = qvocab.id(inst.question_tokens[i]);
    f.q_mask[i + 1] = 1;
  }

  f.n_ocr = std::min<int>(static_cast<int>(inst.ocr.size()), cfg.max_ocr);
  f.n_obj = std::min<int>(static_cast<int>(inst.objects.size()), cfg.max_obj);

  std::vector<BoundingBox> ocr_boxes(cfg.max_ocr);
  std::vector<BoundingBox> obj_boxes(cfg.max_obj);
  f.ocr_mask.assign(cfg.max_ocr, 0);
  f.obj_mask.assign(cfg.max_obj, 0);
  for (int i = 0; i < f.n_ocr; ++i) {
    const auto& b = inst.ocr[i].box;
    ocr_boxes[i] = normalize_box(b.xmin, b.ymin, b.xmax, b.ymax, inst.image_w,
                                 inst.image_h);
    f.ocr_mask[i] = 1;
  }
  for (int i = 0; i < f.n_obj; ++i) {
    const auto& b = inst.objects[i].box;
    obj_boxes[i] = normalize_box(b.xmin, b.ymin, b.xmax, b.ymax, inst.image_w,
                                 inst.image_h);
    f.obj_mask[i] = 1;
  }

  f.ocr_app.assign(static_cast<std::size_t>(cfg.max_ocr) * cfg.d_fr, 0.0);
  f.ocr_ft.assign(static_cast<std::size_t>(cfg.max_ocr) * cfg.d_ft, 0.0);
  f.ocr_ph.assign(static_cast<std::size_t>(cfg.max_ocr) * cfg.phoc_dim, 0.0);
  f.ocr_box.assign(static_cast<std::size_t>(cfg.max_ocr) * 4, 0.0);
  f.ocr_iou.assign(
      static_cast<std::size_t>(cfg.max_ocr) * (cfg.max_ocr + cfg.max_obj),
      0.0);
  f.ocr_text.assign(cfg.max_ocr, "");
  f.ocr_raw.assign(cfg.max_ocr, "");
  for (int i = 0; i < f.n_ocr; ++i) {
    const auto& token = inst.ocr[i];
    const std::string at = where + ", ocr[" + std::to_string(i) + "]";
    require_dim(token.appearance.size(), cfg.d_fr, "appearance", at);
    require_dim(token.fasttext.size(), cfg.d_ft, "fasttext", at);
    require_dim(token.phoc.size(), cfg.phoc_dim, "phoc", at);
    std::copy(token.appearance.begin(), token.appearance.end(),
              f.ocr_app.begin() + static_cast<std::size_t>(i) * cfg.d_fr);
    std::copy(token.fasttext.begin(), token.fasttext.end(),
              f.ocr_ft.begin() + static_cast<std::size_t>(i) * cfg.d_ft);
    for (int b = 0; b < cfg.phoc_dim; ++b) {
      f.ocr_ph[static_cast<std::size_t>(i) * cfg.phoc_dim + b] =
          static_cast<double>(token.phoc[b]);
    }
    const BoundingBox& nb = ocr_boxes[i];
    f.ocr_box[static_cast<std::size_t>(i) * 4 + 0] = nb.xmin;
    f.ocr_box[static_cast<std::size_t>(i) * 4 + 1] = nb.ymin;
    f.ocr_box[static_cast<std::size_t>(i) * 4 + 2] = nb.xmax;
    f.ocr_box[static_cast<std::size_t>(i) * 4 + 3] = nb.ymax;
    const auto iou_vec = iou_features(ocr_boxes[i], ocr_boxes, f.ocr_mask,
                                      obj_boxes, f.obj_mask);
    std::copy(iou_vec.begin(), iou_vec.end(),
              f.ocr_iou.begin() +
                  static_cast<std::size_t>(i) * (cfg.max_ocr + cfg.max_obj));
    f.ocr_text[i] = normalize_answer(token.text);
    f.ocr_raw[i] = token.text;
  }

  f.obj_app.assign(static_cast<std::size_t>(cfg.max_obj) * cfg.d_fr, 0.0);
  f.obj_box.assign(static_cast<std::size_t>(cfg.max_obj) * 4, 0.0);
  f.obj_iou.assign(
      static_cast<std::size_t>(cfg.max_obj) * (cfg.max_ocr + cfg.max_obj),
      0.0);
  for (int i = 0; i < f.n_obj; ++i) {
    const auto& region = inst.objects[i];
    const std::string at = where + ", objects[" + std::to_string(i) + "]";
    require_dim(region.appearance.size(), cfg.d_fr, "appearance", at);
    std::copy(region.appearance.begin(), region.appearance.end(),
              f.obj_app.begin() + static_cast<std::size_t>(i) * cfg.d_fr);
    const BoundingBox& nb = obj_boxes[i];
    f.obj_box[static_cast<std::size_t>(i) * 4 + 0] = nb.xmin;
    f.obj_box[static_cast<std::size_t>(i) * 4 + 1] = nb.ymin;
    f.obj_box[static_cast<std::size_t>(i) * 4 + 2] = nb.xmax;
    f.obj_box[static_cast<std::size_t>(i) * 4 + 3] = nb.ymax;
    const auto iou_vec = iou_features(obj_boxes[i], ocr_boxes, f.ocr_mask,
                                      obj_boxes, f.obj_mask);
    std::copy(iou_vec.begin(), iou_vec.end(),
              f.obj_iou.begin() +
                  static_cast<std::size_t>(i) * (cfg.max_ocr + cfg.max_obj));
  }
  return f;
}

OcrEmbeddings embed_ocr_tokens(const InstanceFeatures& feats,
                               const ModelConfig& cfg,
                               ParameterStore& params) {
  const Tensor fr = Tensor::leaf({cfg.max_ocr, cfg.d_fr}, feats.ocr_app);
  const Tensor ft = Tensor::leaf({cfg.max_ocr, cfg.d_ft}, feats.ocr_ft);
  const Tensor ph = Tensor::leaf({cfg.max_ocr, cfg.phoc_dim}, feats.ocr_ph);
  const Tensor bx = Tensor::leaf({cfg.max_ocr, 4}, feats.ocr_box);
  const Tensor iou = Tensor::leaf({cfg.max_ocr, cfg.max_ocr + cfg.max_obj},
                                  feats.ocr_iou);

  const Tensor fr_term = layer_norm(
      linear_nobias(fr, params.get("feat.ocr.w_fr")),
      params.get("feat.ocr.ln_fr.gamma"), params.get("feat.ocr.ln_fr.beta"),
      cfg.ln_eps);
  // shared between both parts: one projection, one norm
  const Tensor bx_term = layer_norm(
      linear_nobias(bx, params.get("feat.ocr.w_bx")),
      params.get("feat.ocr.ln_bx.gamma"), params.get("feat.ocr.ln_bx.beta"),
      cfg.ln_eps);
  const Tensor fts_term = layer_norm(
      add(linear_nobias(ft, params.get("feat.ocr.w_ft")),
          linear_nobias(ph, params.get("feat.ocr.w_ph"))),
      params.get("feat.ocr.ln_fts.gamma"), params.get("feat.ocr.ln_fts.beta"),
      cfg.ln_eps);

  OcrEmbeddings out;
  out.v_part = add(fr_term, bx_term);
  out.s_part = add(fts_term, bx_term);
  out.iou_part = linear_nobias(iou, params.get("feat.ocr.w_iou"));
  return out;
}

ObjectEmbeddings embed_object_regions(const InstanceFeatures& feats,
                                      const ModelConfig& cfg,
                                      ParameterStore& params) {
  const Tensor fr = Tensor::leaf({cfg.max_obj, cfg.d_fr}, feats.obj_app);
  const Tensor bx = Tensor::leaf({cfg.max_obj, 4}, feats.obj_box);
  const Tensor iou = Tensor::leaf({cfg.max_obj, cfg.max_ocr + cfg.max_obj},
                                  feats.obj_iou);

  const Tensor fr_term = layer_norm(
      linear_nobias(fr, params.get("feat.obj.w_fr")),
      params.get("feat.obj.ln_fr.gamma"), params.get("feat.obj.ln_fr.beta"),
      cfg.ln_eps);
  const Tensor bx_term = layer_norm(
      linear_nobias(bx, params.get("feat.obj.w_bx")),
      params.get("feat.obj.ln_bx.gamma"), params.get("feat.obj.ln_bx.beta"),
      cfg.ln_eps);

  ObjectEmbeddings out;
  out.feat = add(fr_term, bx_term);
  out.iou_part = linear_nobias(iou, params.get("feat.obj.w_iou"));
  return out;
}

OcrEmbeddingValues embed_ocr(const OcrTokenInput& token,
                             const std::vector<double>& iou_vec,
                             double image_w, double image_h,
                             const ModelConfig& cfg, ParameterStore& params) {
  NoGradGuard guard;
  VqaInstance inst;
  inst.instance_id = "single";
  inst.image_w = image_w;
  inst.image_h = image_h;
  inst.ocr.push_back(token);
  QuestionVocab qv;
  qv.words = {"<pad>", "<unk>", "<cls>"};
  for (int i = 0; i < 3; ++i) qv.word_to_index[qv.words[i]] = i;
  InstanceFeatures feats = build_instance_features(inst, qv, cfg);
  require_dim(iou_vec.size(), cfg.max_ocr + cfg.max_obj, "iou vector",
              "single token");
  std::copy(iou_vec.begin(), iou_vec.end(), feats.ocr_iou.begin());
  const OcrEmbeddings emb = embed_ocr_tokens(feats, cfg, params);
  OcrEmbeddingValues out;
  out.v_part.assign(emb.v_part.values().begin(),
                    emb.v_part.values().begin() + cfg.d);
  out.s_part.assign(emb.s_part.values().begin(),
                    emb.s_part.values().begin() + cfg.d);
  out.iou_part.assign(emb.iou_part.values().begin(),
                      emb.iou_part.values().begin() + cfg.d);
  return out;
}

ObjectEmbeddingValues embed_object(const ObjectRegionInput& region,
                                   const std::vector<double>& iou_vec,
                                   double image_w, double image_h,
                                   const ModelConfig& cfg,
                                   ParameterStore& params) {
  NoGradGuard guard;
  VqaInstance inst;
  inst.instance_id = "single";
  inst.image_w = image_w;
  inst.image_h = image_h;
  inst.objects.push_back(region);
  QuestionVocab qv;
  qv.words = {"<pad>", "<unk>", "<cls>"};
  for (int i = 0; i < 3; ++i) qv.word_to_index[qv.words[i]] = i;
  InstanceFeatures feats = build_instance_features(inst, qv, cfg);
  require_dim(iou_vec.size(), cfg.max_ocr + cfg.max_obj, "iou vector",
              "single region");
  std::copy(iou_vec.begin(), iou_vec.end(), feats.obj_iou.begin());
  const ObjectEmbeddings emb = embed_object_regions(feats, cfg, params);
  ObjectEmbeddingValues out;
  out.feat.assign(emb.feat.values().begin(),
                  emb.feat.values().begin() + cfg.d);
  out.iou_part.assign(emb.iou_part.values().begin(),
                      emb.iou_part.values().begin() + cfg.d);
  return out;
}

QuestionEncoding encode_question(const InstanceFeatures& feats,
                                 const ModelConfig& cfg,
                                 ParameterStore& params) {
  const Tensor emb =
      embedding_lookup(params.get("question.tok_emb"), feats.q_ids);
  Tensor h = add(emb, params.get("question.pos_emb"));
  const AttentionMask mask =
      AttentionMask::from_key_mask(cfg.max_q, feats.q_mask);
  for (int i = 0; i < cfg.question_layers; ++i) {
    h = transformer_layer(h, mask, "question.layer" + std::to_string(i), cfg,
                          params);
  }
  QuestionEncoding out;
  out.base = layer_norm(h, params.get("question.final_ln.gamma"),
                        params.get("question.final_ln.beta"), cfg.ln_eps);
  if (cfg.use_sct) {
    out.q_v = transformer_layer(out.base, mask, "question.branch_v", cfg,
                                params);
    out.q_s = transformer_layer(out.base, mask, "question.branch_s", cfg,
                                params);
  }
  return out;
}

}  // namespace scnet
