#include "scnet/model.hpp"

#include <stdexcept>

namespace scnet {

ModelConfig paper_model_preset() {
  ModelConfig cfg;
  cfg.d = 768;
  cfg.num_heads = 12;
  cfg.sct_layers = 2;
  cfg.plain_layers = 2;
  cfg.max_q = 20;
  cfg.max_ocr = 50;
  cfg.max_obj = 100;
  cfg.max_decode = 12;
  cfg.d_ft = 300;
  cfg.d_fr = 2048;
  cfg.vocab_size = 5000;
  return cfg;
}

ModelConfig toy_model_preset() {
  ModelConfig cfg;
  cfg.d = 64;
  cfg.num_heads = 4;
  cfg.sct_layers = 2;
  cfg.plain_layers = 2;
  cfg.max_q = 8;
  cfg.max_ocr = 10;
  cfg.max_obj = 16;
  cfg.max_decode = 4;
  cfg.d_ft = 16;
  cfg.d_fr = 32;
  cfg.vocab_size = 100;
  return cfg;
}

std::pair<int, int> input_lengths(const ModelConfig& cfg) {
  const int enc = cfg.use_sct ? cfg.max_q + cfg.max_ocr
                              : cfg.max_q + cfg.max_ocr + cfg.max_obj;
  return {enc, enc + cfg.max_decode};
}

namespace {

void create_layer_norm(ParameterStore& p, const std::string& prefix, int d) {
  p.create_full(prefix + ".gamma", {d}, 1.0);
  p.create_zeros(prefix + ".beta", {d});
}

void create_attention(ParameterStore& p, const std::string& prefix, int d,
                      const SplitMix64& rng) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    p.create_normal(prefix + "." + w, {d, d}, rng, 0.02);
  }
  for (const char* b : {"bq", "bk", "bv", "bo"}) {
    p.create_zeros(prefix + "." + b, {d});
  }
}

void create_feed_forward(ParameterStore& p, const std::string& prefix, int d,
                         const SplitMix64& rng) {
  p.create_normal(prefix + ".w1", {d, 4 * d}, rng, 0.02);
  p.create_zeros(prefix + ".b1", {4 * d});
  p.create_normal(prefix + ".w2", {4 * d, d}, rng, 0.02);
  p.create_zeros(prefix + ".b2", {d});
}

void create_transformer_layer(ParameterStore& p, const std::string& prefix,
                              int d, const SplitMix64& rng) {
  create_attention(p, prefix + ".att", d, rng);
  create_layer_norm(p, prefix + ".ln1", d);
  create_feed_forward(p, prefix + ".ff", d, rng);
  create_layer_norm(p, prefix + ".ln2", d);
}

Tensor feed_forward(const Tensor& x, const std::string& prefix,
                    ParameterStore& p) {
  const Tensor h = gelu(linear(x, p.get(prefix + ".w1"), p.get(prefix + ".b1")));
  return linear(h, p.get(prefix + ".w2"), p.get(prefix + ".b2"));
}

// Pre-norm attention block: both query and key/value rows go through the same
// layer norm; returns the output projection, not the residual sum.
Tensor attention_block(const Tensor& x_q, const Tensor& x_kv,
                       const AttentionMask& mask, const std::string& att,
                       const std::string& ln, const ModelConfig& cfg,
                       ParameterStore& p) {
  const Tensor& gamma = p.get(ln + ".gamma");
  const Tensor& beta = p.get(ln + ".beta");
  const Tensor nq = layer_norm(x_q, gamma, beta, cfg.ln_eps);
  const Tensor nkv = x_q.node() == x_kv.node()
                         ? nq
                         : layer_norm(x_kv, gamma, beta, cfg.ln_eps);
  const Tensor q = linear(nq, p.get(att + ".wq"), p.get(att + ".bq"));
  const Tensor k = linear(nkv, p.get(att + ".wk"), p.get(att + ".bk"));
  const Tensor v = linear(nkv, p.get(att + ".wv"), p.get(att + ".bv"));
  const Tensor a = attention(q, k, v, mask, cfg.num_heads);
  return linear(a, p.get(att + ".wo"), p.get(att + ".bo"));
}

}  // namespace

void init_model_params(ParameterStore& p, const ModelConfig& cfg,
                       std::uint64_t seed) {
  if (cfg.d % cfg.num_heads != 0) {
    throw std::invalid_argument("model dim must be divisible by head count");
  }
  const SplitMix64 rng(seed);
  const int d = cfg.d;

  p.create_normal("question.tok_emb", {cfg.question_vocab, d}, rng, 0.02);
  p.create_normal("question.pos_emb", {cfg.max_q, d}, rng, 0.02);
  for (int i = 0; i < cfg.question_layers; ++i) {
    create_transformer_layer(p, "question.layer" + std::to_string(i), d, rng);
  }
  create_layer_norm(p, "question.final_ln", d);
  if (cfg.use_sct) {
    create_transformer_layer(p, "question.branch_v", d, rng);
    create_transformer_layer(p, "question.branch_s", d, rng);
  }

  p.create_normal("feat.ocr.w_fr", {cfg.d_fr, d}, rng, 0.02);
  create_layer_norm(p, "feat.ocr.ln_fr", d);
  p.create_normal("feat.ocr.w_bx", {4, d}, rng, 0.02);
  create_layer_norm(p, "feat.ocr.ln_bx", d);
  p.create_normal("feat.ocr.w_ft", {cfg.d_ft, d}, rng, 0.02);
  p.create_normal("feat.ocr.w_ph", {cfg.phoc_dim, d}, rng, 0.02);
  create_layer_norm(p, "feat.ocr.ln_fts", d);
  p.create_normal("feat.ocr.w_iou", {cfg.max_ocr + cfg.max_obj, d}, rng, 0.02);

  p.create_normal("feat.obj.w_fr", {cfg.d_fr, d}, rng, 0.02);
  create_layer_norm(p, "feat.obj.ln_fr", d);
  p.create_normal("feat.obj.w_bx", {4, d}, rng, 0.02);
  create_layer_norm(p, "feat.obj.ln_bx", d);
  p.create_normal("feat.obj.w_iou", {cfg.max_ocr + cfg.max_obj, d}, rng, 0.02);

  if (cfg.use_sct) {
    for (int i = 0; i < cfg.sct_layers; ++i) {
      const std::string pre = "sct.layer" + std::to_string(i);
      create_attention(p, pre + ".att_s", d, rng);
      create_layer_norm(p, pre + ".ln_s", d);
      create_attention(p, pre + ".att_v", d, rng);
      create_layer_norm(p, pre + ".ln_v", d);
      p.create_full(pre + ".alpha", {1}, cfg.alpha_init);
      create_feed_forward(p, pre + ".ff", d, rng);
      create_layer_norm(p, pre + ".ln_ff", d);
    }
  } else {
    for (int i = 0; i < cfg.sct_layers; ++i) {
      create_transformer_layer(p, "base.layer" + std::to_string(i), d, rng);
    }
  }
  for (int i = 0; i < cfg.plain_layers; ++i) {
    create_transformer_layer(p, "plain.layer" + std::to_string(i), d, rng);
  }
  create_layer_norm(p, "plain.final_ln", d);

  p.create_normal("decoder.vocab_emb", {cfg.vocab_size, d}, rng, 0.02);
  p.create_normal("decoder.step_emb", {cfg.max_decode, d}, rng, 0.02);
  p.create_normal("decoder.w_ans", {d, d}, rng, 0.02);
  p.create_zeros("decoder.b_ans", {d});
  p.create_normal("decoder.w_ocr", {d, d}, rng, 0.02);
  p.create_zeros("decoder.b_ocr", {d});
  p.create_normal("decoder.w_voc", {d, cfg.vocab_size}, rng, 0.02);
  p.create_zeros("decoder.b_voc", {cfg.vocab_size});

  if (cfg.use_icsp) {
    const int hidden = cfg.icsp_hidden_dim();
    p.create_normal("icsp.w2", {d, hidden}, rng, 0.02);
    p.create_zeros("icsp.b2", {hidden});
    p.create_normal("icsp.w1", {hidden, cfg.d_ft}, rng, 0.02);
    p.create_zeros("icsp.b1", {cfg.d_ft});
    p.create_normal("icsp.w_se", {cfg.d_ft, d}, rng, 0.02);
    p.create_zeros("icsp.b_se", {d});
    p.create_full("icsp.alpha_se", {d}, cfg.alpha_se_init);
  }
}

Tensor transformer_layer(const Tensor& x, const AttentionMask& mask,
                         const std::string& prefix, const ModelConfig& cfg,
                         ParameterStore& params) {
  const Tensor x1 = add(
      x, attention_block(x, x, mask, prefix + ".att", prefix + ".ln1", cfg,
                         params));
  const Tensor n2 = layer_norm(x1, params.get(prefix + ".ln2.gamma"),
                               params.get(prefix + ".ln2.beta"), cfg.ln_eps);
  return add(x1, feed_forward(n2, prefix + ".ff", params));
}

Tensor transformer_layer_rows(const Tensor& q_rows, const Tensor& kv_rows,
                              const AttentionMask& mask,
                              const std::string& prefix,
                              const ModelConfig& cfg, ParameterStore& params) {
  const Tensor x1 = add(
      q_rows, attention_block(q_rows, kv_rows, mask, prefix + ".att",
                              prefix + ".ln1", cfg, params));
  const Tensor n2 = layer_norm(x1, params.get(prefix + ".ln2.gamma"),
                               params.get(prefix + ".ln2.beta"), cfg.ln_eps);
  return add(x1, feed_forward(n2, prefix + ".ff", params));
}

Tensor enhance_ocr_with_objects(const Tensor& ocr_iou_part,
                                const Tensor& obj_iou_part,
                                const Tensor& obj_feat,
                                const std::vector<std::uint8_t>& obj_mask,
                                std::vector<double>* weights_out) {
  return attention(ocr_iou_part, obj_iou_part, obj_feat, obj_mask, 1,
                   weights_out);
}

Tensor sct_layer(const Tensor& h_s, const Tensor& h_v,
                 const AttentionMask& mask, const std::string& prefix,
                 const ModelConfig& cfg, ParameterStore& params) {
  const Tensor out_s = add(
      h_s, attention_block(h_s, h_s, mask, prefix + ".att_s", prefix + ".ln_s",
                           cfg, params));
  const Tensor out_v = add(
      h_v, attention_block(h_v, h_v, mask, prefix + ".att_v", prefix + ".ln_v",
                           cfg, params));
  const Tensor z_fuse = add(out_s, scale_by(out_v, params.get(prefix + ".alpha")));
  const Tensor nf = layer_norm(z_fuse, params.get(prefix + ".ln_ff.gamma"),
                               params.get(prefix + ".ln_ff.beta"), cfg.ln_eps);
  return add(z_fuse, feed_forward(nf, prefix + ".ff", params));
}

EncoderRun run_encoder(const InstanceFeatures& feats, const ModelConfig& cfg,
                       ParameterStore& params) {
  EncoderRun run;
  Tensor seq;

  if (cfg.use_sct) {
    const QuestionEncoding question = encode_question(feats, cfg, params);
    const OcrEmbeddings ocr = embed_ocr_tokens(feats, cfg, params);
    const ObjectEmbeddings obj = embed_object_regions(feats, cfg, params);
    const Tensor enhanced = enhance_ocr_with_objects(
        ocr.iou_part, obj.iou_part, obj.feat, feats.obj_mask);
    const Tensor input_v = concat_rows({question.q_v, add(ocr.v_part, enhanced)});
    const Tensor input_s = concat_rows({question.q_s, add(ocr.s_part, enhanced)});

    run.enc_len = cfg.max_q + cfg.max_ocr;
    run.enc_key_mask = feats.q_mask;
    run.enc_key_mask.insert(run.enc_key_mask.end(), feats.ocr_mask.begin(),
                            feats.ocr_mask.end());
    const AttentionMask mask =
        AttentionMask::from_key_mask(run.enc_len, run.enc_key_mask);

    Tensor h_s = input_s;
    Tensor h_v = input_v;
    for (int i = 0; i < cfg.sct_layers; ++i) {
      const Tensor out =
          sct_layer(h_s, h_v, mask, "sct.layer" + std::to_string(i), cfg,
                    params);
      h_s = out;
      h_v = out;
    }
    seq = h_s;
  } else {
    const QuestionEncoding question = encode_question(feats, cfg, params);
    const OcrEmbeddings ocr = embed_ocr_tokens(feats, cfg, params);
    const ObjectEmbeddings obj = embed_object_regions(feats, cfg, params);
    seq = concat_rows(
        {question.base, add(ocr.v_part, ocr.s_part), obj.feat});

    run.enc_len = cfg.max_q + cfg.max_ocr + cfg.max_obj;
    run.enc_key_mask = feats.q_mask;
    run.enc_key_mask.insert(run.enc_key_mask.end(), feats.ocr_mask.begin(),
                            feats.ocr_mask.end());
    run.enc_key_mask.insert(run.enc_key_mask.end(), feats.obj_mask.begin(),
                            feats.obj_mask.end());
    const AttentionMask mask =
        AttentionMask::from_key_mask(run.enc_len, run.enc_key_mask);
    for (int i = 0; i < cfg.sct_layers; ++i) {
      seq = transformer_layer(seq, mask, "base.layer" + std::to_string(i), cfg,
                              params);
    }
  }

  const AttentionMask enc_mask =
      AttentionMask::from_key_mask(run.enc_len, run.enc_key_mask);
  for (int i = 0; i < cfg.plain_layers; ++i) {
    run.plain_inputs.push_back(seq);
    seq = transformer_layer(seq, enc_mask, "plain.layer" + std::to_string(i),
                            cfg, params);
  }
  run.enc_final = layer_norm(seq, params.get("plain.final_ln.gamma"),
                             params.get("plain.final_ln.beta"), cfg.ln_eps);
  run.cls = slice_rows(run.enc_final, 0, 1);
  run.z_ocr = slice_rows(run.enc_final, cfg.max_q, cfg.max_ocr);
  return run;
}

Tensor run_decode_rows(const EncoderRun& enc, const Tensor& decode_inputs,
                       const ModelConfig& cfg, ParameterStore& params) {
  const int t_max = decode_inputs.dim(0);
  AttentionMask mask;
  mask.lq = t_max;
  mask.lk = enc.enc_len + t_max;
  mask.allowed.assign(static_cast<size_t>(mask.lq) * mask.lk, 0);
  for (int t = 0; t < t_max; ++t) {
    for (int k = 0; k < enc.enc_len; ++k) {
      mask.allowed[static_cast<size_t>(t) * mask.lk + k] = enc.enc_key_mask[k];
    }
    for (int u = 0; u <= t; ++u) {
      mask.allowed[static_cast<size_t>(t) * mask.lk + enc.enc_len + u] = 1;
    }
  }

  Tensor rows = decode_inputs;
  for (int i = 0; i < cfg.plain_layers; ++i) {
    const Tensor kv = concat_rows({enc.plain_inputs[i], rows});
    rows = transformer_layer_rows(rows, kv, mask,
                                  "plain.layer" + std::to_string(i), cfg,
                                  params);
  }
  return layer_norm(rows, params.get("plain.final_ln.gamma"),
                    params.get("plain.final_ln.beta"), cfg.ln_eps);
}

}  // namespace scnet
