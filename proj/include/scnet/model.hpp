#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scnet/features.hpp"
#include "scnet/model_config.hpp"
#include "scnet/param_store.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

// Creates every trainable tensor for the configured model. Weights are
// Gaussian (stddev 0.02) from per-name forked streams, biases zero, layer
// norm gains one. The two-branch fusion ratios start at alpha_init and the
// semantic guidance gate at alpha_se_init.
void init_model_params(ParameterStore& params, const ModelConfig& cfg,
                       std::uint64_t seed);

// Standard pre-norm transformer layer over `prefix`.* parameters:
// x + proj(att(ln1(x))) followed by x + ff(ln2(x)).
Tensor transformer_layer(const Tensor& x, const AttentionMask& mask,
                         const std::string& prefix, const ModelConfig& cfg,
                         ParameterStore& params);

// Attention sublayer with separate query rows and key/value rows, both passed
// through the same ln1. Used to run appended decode rows against cached
// encoder rows without recomputing the encoder.
Tensor transformer_layer_rows(const Tensor& q_rows, const Tensor& kv_rows,
                              const AttentionMask& mask,
                              const std::string& prefix,
                              const ModelConfig& cfg, ParameterStore& params);

// IoU-keyed aggregation of object features into OCR slots: attention with OCR
// iou parts as queries, object iou parts as keys and object features as
// values, single head. The result is added to both branch inputs.
Tensor enhance_ocr_with_objects(const Tensor& ocr_iou_part,
                                const Tensor& obj_iou_part,
                                const Tensor& obj_feat,
                                const std::vector<std::uint8_t>& obj_mask,
                                std::vector<double>* weights_out = nullptr);

// One two-branch layer: each branch applies its own pre-norm attention with a
// residual, the branch outputs are fused as out_s + alpha * out_v, and a
// shared feed-forward block finishes the layer. The fused output feeds both
// branches of the next layer.
Tensor sct_layer(const Tensor& h_s, const Tensor& h_v,
                 const AttentionMask& mask, const std::string& prefix,
                 const ModelConfig& cfg, ParameterStore& params);

struct EncoderRun {
  std::vector<Tensor> plain_inputs;     // input to each shared layer
  Tensor enc_final;                     // [enc_len, d] after the final norm
  Tensor cls;                           // [1, d], summary position
  Tensor z_ocr;                         // [max_ocr, d], final OCR states
  std::vector<std::uint8_t> enc_key_mask;
  int enc_len = 0;
};

// Full encoder pass. With the two-branch stage enabled the sequence is
// question + OCR with objects folded in through IoU-keyed attention; without
// it the sequence is the flat question + OCR + objects concatenation through
// standard layers. The shared stage and final norm run in both modes.
EncoderRun run_encoder(const InstanceFeatures& feats, const ModelConfig& cfg,
                       ParameterStore& params);

// Runs appended decode rows through the shared stage against the cached
// per-layer encoder inputs. Row t may attend every unmasked encoder position
// and decode rows <= t; encoder rows are never influenced. Returns the decode
// rows after the final norm.
Tensor run_decode_rows(const EncoderRun& enc, const Tensor& decode_inputs,
                       const ModelConfig& cfg, ParameterStore& params);

}  // namespace scnet
