#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "scnet/losses.hpp"
#include "scnet/model_config.hpp"
#include "scnet/optim.hpp"

namespace scnet {

// Flat run configuration. A resolved RunConfig answers every hyperparameter
// question: presets only choose defaults, the serialized form always carries
// every field. alpha_semantic and tau must appear explicitly in config files.
struct RunConfig {
  std::string preset = "toy";  // "toy" | "paper"
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string train_path;
  std::string eval_path;
  std::string word_vectors_path;
  std::string vocab_path;      // optional; built from training answers if ""
  std::string bigrams_path;    // optional; builtin list if ""

  ModelConfig model;
  OptimConfig optim;

  double alpha_semantic = 0.1;
  double tau = 0.1;
  std::string contrastive_variant = "denominator_neg";
  std::string similarity = "dot";
  double contrastive_clamp_floor = -20.0;

  long long eval_interval = 200;
  long long checkpoint_interval = 1000;
  long long log_interval = 50;
  double anls_threshold = 0.0;
  double early_stop_accuracy = 0.0;  // stop when teacher-forced accuracy and
                                     // loss-ratio targets are both met; 0 off
  double early_stop_loss_ratio = 0.0;
  int scores_topk = 0;

  int gradcheck_instances = 2;
  int gradcheck_samples = 6;
  double gradcheck_tolerance = 1e-3;

  std::uint64_t synth_seed = 7;
  int synth_instances = 256;
  int synth_eval_instances = 64;
  int synth_vocab = 40;
  double ocr_error_rate = 0.0;
  double bias_strength = 0.0;
  double feature_noise_sigma = 0.05;

  LossConfig loss_config() const;
  std::string canonical_json() const;  // every field, fixed order
  std::string hash() const;            // FNV-1a of canonical_json, hex
};

struct CliOverrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool no_sct = false;
  bool no_icsp = false;
};

// Builds the preset defaults for a preset name ("toy" or "paper").
RunConfig preset_run_config(const std::string& preset);

// Reads a flat JSON config: preset defaults first, file fields over them,
// CLI overrides last. Unknown fields and type mismatches are schema errors.
RunConfig load_run_config(const std::string& path, const CliOverrides& cli);

void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace scnet
