#include "scnet/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scnet/errors.hpp"
#include "scnet/model.hpp"
#include "scnet/rng.hpp"

namespace scnet {

using ordered_json = nlohmann::ordered_json;

LossConfig RunConfig::loss_config() const {
  LossConfig cfg;
  cfg.alpha_semantic = alpha_semantic;
  cfg.tau = tau;
  cfg.contrastive_variant = parse_contrastive_variant(contrastive_variant);
  cfg.similarity = parse_similarity(similarity);
  cfg.clamp_floor = contrastive_clamp_floor;
  return cfg;
}

namespace {

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["train_path"] = c.train_path;
  j["eval_path"] = c.eval_path;
  j["word_vectors_path"] = c.word_vectors_path;
  j["vocab_path"] = c.vocab_path;
  j["bigrams_path"] = c.bigrams_path;

  j["d"] = c.model.d;
  j["num_heads"] = c.model.num_heads;
  j["sct_layers"] = c.model.sct_layers;
  j["plain_layers"] = c.model.plain_layers;
  j["max_q"] = c.model.max_q;
  j["max_ocr"] = c.model.max_ocr;
  j["max_obj"] = c.model.max_obj;
  j["max_decode"] = c.model.max_decode;
  j["d_ft"] = c.model.d_ft;
  j["d_fr"] = c.model.d_fr;
  j["phoc_dim"] = c.model.phoc_dim;
  j["vocab_size"] = c.model.vocab_size;
  j["question_layers"] = c.model.question_layers;
  j["icsp_hidden"] = c.model.icsp_hidden;
  j["icsp_mlp_gelu"] = c.model.icsp_mlp_gelu;
  j["alpha_init"] = c.model.alpha_init;
  j["alpha_se_init"] = c.model.alpha_se_init;
  j["ln_eps"] = c.model.ln_eps;
  j["use_sct"] = c.model.use_sct;
  j["use_icsp"] = c.model.use_icsp;

  j["base_lr"] = c.optim.base_lr;
  j["lr_decay"] = c.optim.lr_decay;
  j["warmup_iters"] = c.optim.warmup_iters;
  j["warmup_factor"] = c.optim.warmup_factor;
  j["batch_size"] = c.optim.batch_size;
  j["max_iters"] = c.optim.max_iters;
  j["decay_steps"] = c.optim.decay_steps;
  j["adam_beta1"] = c.optim.adam_beta1;
  j["adam_beta2"] = c.optim.adam_beta2;
  j["adam_eps"] = c.optim.adam_eps;

  j["alpha_semantic"] = c.alpha_semantic;
  j["tau"] = c.tau;
  j["contrastive_variant"] = c.contrastive_variant;
  j["similarity"] = c.similarity;
  j["contrastive_clamp_floor"] = c.contrastive_clamp_floor;

  j["eval_interval"] = c.eval_interval;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["log_interval"] = c.log_interval;
  j["anls_threshold"] = c.anls_threshold;
  j["early_stop_accuracy"] = c.early_stop_accuracy;
  j["early_stop_loss_ratio"] = c.early_stop_loss_ratio;
  j["scores_topk"] = c.scores_topk;

  j["gradcheck_instances"] = c.gradcheck_instances;
  j["gradcheck_samples"] = c.gradcheck_samples;
  j["gradcheck_tolerance"] = c.gradcheck_tolerance;

  j["synth_seed"] = c.synth_seed;
  j["synth_instances"] = c.synth_instances;
  j["synth_eval_instances"] = c.synth_eval_instances;
  j["synth_vocab"] = c.synth_vocab;
  j["ocr_error_rate"] = c.ocr_error_rate;
  j["bias_strength"] = c.bias_strength;
  j["feature_noise_sigma"] = c.feature_noise_sigma;
  return j;
}

template <typename T>
void read_field(const ordered_json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const std::exception&) {
    throw IoError(std::string("config field '") + key + "' has the wrong type");
  }
}

void apply_json(const RunConfig& defaults, const ordered_json& j,
                RunConfig& c) {
  const ordered_json known = config_to_json(defaults);
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.contains(key)) {
      throw IoError("unknown config field '" + key + "'");
    }
  }
  read_field(j, "seed", c.seed);
  read_field(j, "out_dir", c.out_dir);
  read_field(j, "train_path", c.train_path);
  read_field(j, "eval_path", c.eval_path);
  read_field(j, "word_vectors_path", c.word_vectors_path);
  read_field(j, "vocab_path", c.vocab_path);
  read_field(j, "bigrams_path", c.bigrams_path);

  read_field(j, "d", c.model.d);
  read_field(j, "num_heads", c.model.num_heads);
  read_field(j, "sct_layers", c.model.sct_layers);
  read_field(j, "plain_layers", c.model.plain_layers);
  read_field(j, "max_q", c.model.max_q);
  read_field(j, "max_ocr", c.model.max_ocr);
  read_field(j, "max_obj", c.model.max_obj);
  read_field(j, "max_decode", c.model.max_decode);
  read_field(j, "d_ft", c.model.d_ft);
  read_field(j, "d_fr", c.model.d_fr);
  read_field(j, "phoc_dim", c.model.phoc_dim);
  read_field(j, "vocab_size", c.model.vocab_size);
  read_field(j, "question_layers", c.model.question_layers);
  read_field(j, "icsp_hidden", c.model.icsp_hidden);
  read_field(j, "icsp_mlp_gelu", c.model.icsp_mlp_gelu);
  read_field(j, "alpha_init", c.model.alpha_init);
  read_field(j, "alpha_se_init", c.model.alpha_se_init);
  read_field(j, "ln_eps", c.model.ln_eps);
  read_field(j, "use_sct", c.model.use_sct);
  read_field(j, "use_icsp", c.model.use_icsp);

  read_field(j, "base_lr", c.optim.base_lr);
  read_field(j, "lr_decay", c.optim.lr_decay);
  read_field(j, "warmup_iters", c.optim.warmup_iters);
  read_field(j, "warmup_factor", c.optim.warmup_factor);
  read_field(j, "batch_size", c.optim.batch_size);
  read_field(j, "max_iters", c.optim.max_iters);
  read_field(j, "decay_steps", c.optim.decay_steps);
  read_field(j, "adam_beta1", c.optim.adam_beta1);
  read_field(j, "adam_beta2", c.optim.adam_beta2);
  read_field(j, "adam_eps", c.optim.adam_eps);

  read_field(j, "alpha_semantic", c.alpha_semantic);
  read_field(j, "tau", c.tau);
  read_field(j, "contrastive_variant", c.contrastive_variant);
  read_field(j, "similarity", c.similarity);
  read_field(j, "contrastive_clamp_floor", c.contrastive_clamp_floor);

  read_field(j, "eval_interval", c.eval_interval);
  read_field(j, "checkpoint_interval", c.checkpoint_interval);
  read_field(j, "log_interval", c.log_interval);
  read_field(j, "anls_threshold", c.anls_threshold);
  read_field(j, "early_stop_accuracy", c.early_stop_accuracy);
  read_field(j, "early_stop_loss_ratio", c.early_stop_loss_ratio);
  read_field(j, "scores_topk", c.scores_topk);

  read_field(j, "gradcheck_instances", c.gradcheck_instances);
  read_field(j, "gradcheck_samples", c.gradcheck_samples);
  read_field(j, "gradcheck_tolerance", c.gradcheck_tolerance);

  read_field(j, "synth_seed", c.synth_seed);
  read_field(j, "synth_instances", c.synth_instances);
  read_field(j, "synth_eval_instances", c.synth_eval_instances);
  read_field(j, "synth_vocab", c.synth_vocab);
  read_field(j, "ocr_error_rate", c.ocr_error_rate);
  read_field(j, "bias_strength", c.bias_strength);
  read_field(j, "feature_noise_sigma", c.feature_noise_sigma);
}

void validate(const RunConfig& c) {
  if (!(c.tau > 0.0)) throw UsageError("tau must be > 0");
  if (c.alpha_semantic < 0.0 || !std::isfinite(c.alpha_semantic)) {
    throw UsageError("alpha_semantic must be finite and >= 0");
  }
  if (c.model.d % c.model.num_heads != 0) {
    throw UsageError("d must be divisible by num_heads");
  }
  if (c.model.max_decode < 1 || c.model.max_q < 1 || c.model.max_ocr < 1) {
    throw UsageError("sequence maxima must be positive");
  }
  if (c.model.vocab_size < 3) {
    throw UsageError("vocab_size must be at least 3");
  }
  parse_contrastive_variant(c.contrastive_variant);
  parse_similarity(c.similarity);
  for (double p : {c.ocr_error_rate, c.bias_strength}) {
    if (p < 0.0 || p > 1.0) {
      throw UsageError("probabilities must lie in [0,1]");
    }
  }
}

}  // namespace

RunConfig preset_run_config(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == "paper") {
    c.model = paper_model_preset();
    c.optim = OptimConfig{};
  } else if (preset == "toy") {
    c.model = toy_model_preset();
    c.optim.base_lr = 1e-3;
    c.optim.lr_decay = 0.1;
    c.optim.warmup_iters = 50;
    c.optim.warmup_factor = 0.2;
    c.optim.batch_size = 16;
    c.optim.max_iters = 1000;
    c.optim.decay_steps = {600, 850};
  } else {
    throw UsageError("unknown preset '" + preset + "' (expected toy or paper)");
  }
  return c;
}

std::string RunConfig::canonical_json() const {
  return config_to_json(*this).dump(2) + "\n";
}

std::string RunConfig::hash() const {
  const std::uint64_t h = SplitMix64::fnv1a(canonical_json());
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

RunConfig load_run_config(const std::string& path, const CliOverrides& cli) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("invalid JSON in config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw IoError("config file must hold a JSON object");

  std::string preset = "toy";
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) {
      throw IoError("config field 'preset' has the wrong type");
    }
    preset = j["preset"].get<std::string>();
  }
  if (cli.preset.has_value()) preset = *cli.preset;

  RunConfig c = preset_run_config(preset);
  apply_json(c, j, c);

  if (!j.contains("alpha_semantic") || !j.contains("tau")) {
    throw IoError(
        "config files must set alpha_semantic and tau explicitly: " + path);
  }

  if (cli.seed.has_value()) c.seed = *cli.seed;
  if (cli.out_dir.has_value()) c.out_dir = *cli.out_dir;
  if (cli.no_sct) c.model.use_sct = false;
  if (cli.no_icsp) c.model.use_icsp = false;

  validate(c);
  return c;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open config file for writing: " + path);
  out << cfg.canonical_json();
  if (!out) throw IoError("failed while writing config file: " + path);
}

}  // namespace scnet
