#pragma once

#include <utility>

namespace scnet {

struct ModelConfig {
  int d = 768;
  int num_heads = 12;
  int sct_layers = 2;
  int plain_layers = 2;
  int max_q = 20;
  int max_ocr = 50;
  int max_obj = 100;
  int max_decode = 12;
  int d_ft = 300;
  int d_fr = 2048;
  int phoc_dim = 604;
  int vocab_size = 5000;       // answer vocabulary including specials
  int question_vocab = 3;      // set after building the question vocab
  int question_layers = 3;
  int icsp_hidden = 0;         // 0 selects d
  bool icsp_mlp_gelu = false;  // optional nonlinearity between the two affines
  double alpha_init = 0.5;
  double alpha_se_init = 0.1;
  double ln_eps = 1e-6;
  bool use_sct = true;
  bool use_icsp = true;

  int icsp_hidden_dim() const { return icsp_hidden > 0 ? icsp_hidden : d; }
};

ModelConfig paper_model_preset();
ModelConfig toy_model_preset();

// (encoder_len, total_len): with the two-branch stage the encoder sequence is
// question + OCR tokens; without it the object regions are concatenated in as
// well. total_len appends the decoding positions.
std::pair<int, int> input_lengths(const ModelConfig& cfg);

}  // namespace scnet
