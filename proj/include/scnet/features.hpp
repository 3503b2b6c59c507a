#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scnet/dataset.hpp"
#include "scnet/model_config.hpp"
#include "scnet/param_store.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

// Dense, padded per-instance arrays. Built once per instance, outside the
// autodiff graph; the embedding ops below wrap them into leaf tensors.
struct InstanceFeatures {
  std::vector<int> q_ids;             // max_q, <cls> at position 0
  std::vector<std::uint8_t> q_mask;   // max_q
  std::vector<double> ocr_app;        // max_ocr x d_fr
  std::vector<double> ocr_ft;         // max_ocr x d_ft
  std::vector<double> ocr_ph;         // max_ocr x phoc_dim
  std::vector<double> ocr_box;        // max_ocr x 4, normalized
  std::vector<double> ocr_iou;        // max_ocr x (max_ocr + max_obj)
  std::vector<std::uint8_t> ocr_mask; // max_ocr
  std::vector<std::string> ocr_text;  // normalized text, "" when padded
  std::vector<std::string> ocr_raw;   // recognized text as given
  std::vector<double> obj_app;        // max_obj x d_fr
  std::vector<double> obj_box;        // max_obj x 4, normalized
  std::vector<double> obj_iou;        // max_obj x (max_ocr + max_obj)
  std::vector<std::uint8_t> obj_mask; // max_obj
  int n_ocr = 0;
  int n_obj = 0;
  int n_q = 0;  // question tokens incl. <cls>, after truncation
};

InstanceFeatures build_instance_features(const VqaInstance& inst,
                                         const QuestionVocab& qvocab,
                                         const ModelConfig& cfg);

// OCR token embeddings, all [max_ocr, d]. The box projection and its layer
// norm are shared between the visual and semantic parts: that term is
// computed once and added to both.
struct OcrEmbeddings {
  Tensor v_part;
  Tensor s_part;
  Tensor iou_part;
};
OcrEmbeddings embed_ocr_tokens(const InstanceFeatures& feats,
                               const ModelConfig& cfg,
                               ParameterStore& params);

// Object region embeddings, all [max_obj, d]. Distinct parameters from the
// OCR side throughout.
struct ObjectEmbeddings {
  Tensor feat;
  Tensor iou_part;
};
ObjectEmbeddings embed_object_regions(const InstanceFeatures& feats,
                                      const ModelConfig& cfg,
                                      ParameterStore& params);

// Single-token conveniences over the batched ops; plain value vectors, no
// gradients recorded.
struct OcrEmbeddingValues {
  std::vector<double> v_part, s_part, iou_part;
};
OcrEmbeddingValues embed_ocr(const OcrTokenInput& token,
                             const std::vector<double>& iou_vec,
                             double image_w, double image_h,
                             const ModelConfig& cfg, ParameterStore& params);

struct ObjectEmbeddingValues {
  std::vector<double> feat, iou_part;
};
ObjectEmbeddingValues embed_object(const ObjectRegionInput& region,
                                   const std::vector<double>& iou_vec,
                                   double image_w, double image_h,
                                   const ModelConfig& cfg,
                                   ParameterStore& params);

// Question encoding: token + position embeddings through a small transformer
// stack with a final layer norm, then one extra layer per branch. `base` is
// the shared trunk output used when the two-branch stage is disabled.
struct QuestionEncoding {
  Tensor base;  // [max_q, d]
  Tensor q_v;   // [max_q, d]
  Tensor q_s;   // [max_q, d]
};
QuestionEncoding encode_question(const InstanceFeatures& feats,
                                 const ModelConfig& cfg,
                                 ParameterStore& params);

}  // namespace scnet
