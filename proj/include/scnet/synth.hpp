#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scnet/dataset.hpp"
#include "scnet/model_config.hpp"
#include "scnet/word_vectors.hpp"

namespace scnet {

// Deterministic generator of reading-based QA instances. Two trap families
// are planted: frequent distractor words that co-occur with a question noun
// (language-bias traps) and character-corrupted recognized text whose true
// form stays in the answer vocabulary (recognition-error traps).
struct SynthConfig {
  std::uint64_t seed = 7;
  int n_instances = 256;
  int n_eval_instances = 64;
  int n_vocab = 40;               // generator word pool size
  double ocr_error_rate = 0.0;    // per-character corruption probability
  double bias_strength = 0.0;     // probability the distractor IS the answer
  double feature_noise_sigma = 0.05;
};

struct SynthAnnotations {
  std::string true_answer;
  std::string distractor;       // the noun's habitual co-occurring word
  int answer_ocr_slot = -1;
  bool bias_trap = false;       // distractor planted but answer differs
  bool ocr_corrupted = false;   // answer token's recognized text was altered
};

// The words the generator can use as answers, a pure function of the config.
std::vector<std::string> synth_word_pool(const SynthConfig& cfg);

// Word vectors for everything the generator can emit; stored vectors equal
// the subword-hash embedding, so corrupted out-of-table words live in the
// same space.
WordVectorTable build_synth_word_table(const SynthConfig& cfg, int d_ft);

// Pure function of (cfg, index); model_cfg supplies feature dims. Train
// instances use indices [0, n_instances), the eval split continues after.
std::pair<VqaInstance, SynthAnnotations> generate_instance(
    const SynthConfig& cfg, const ModelConfig& model_cfg,
    const WordVectorTable& table, long long index);

std::vector<VqaInstance> generate_dataset(
    const SynthConfig& cfg, const ModelConfig& model_cfg,
    const WordVectorTable& table, long long start, int count,
    std::vector<SynthAnnotations>* annotations = nullptr);

}  // namespace scnet
