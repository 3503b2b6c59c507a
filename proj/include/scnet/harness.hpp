#pragma once

#include <string>
#include <vector>

#include "scnet/dataset.hpp"
#include "scnet/decoder.hpp"
#include "scnet/grad_check.hpp"
#include "scnet/metrics.hpp"
#include "scnet/run_config.hpp"

namespace scnet {

// One instance with everything the training loop needs precomputed.
struct PreparedInstance {
  InstanceFeatures feats;
  TargetInfo targets;
  ContrastiveTargets contrast;
  std::string instance_id;
  std::vector<std::string> references;  // normalized, padded to 10
  bool padded_references = false;
};

struct PreparedData {
  std::vector<PreparedInstance> instances;
  double reachability_rate = 0.0;  // fraction with every word reachable
};

PreparedData prepare_instances(const std::vector<VqaInstance>& raw,
                               const Vocabulary& vocab,
                               const QuestionVocab& qvocab,
                               const ModelConfig& cfg);

struct TrainResult {
  long long iters_run = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_tf_accuracy = 0.0;  // teacher-forced per-step accuracy
  double best_tf_accuracy = 0.0;
  double reachability_rate = 0.0;
  long long skipped_total = 0;
  long long clamped_total = 0;
  bool aborted_non_finite = false;
  long long abort_iter = -1;
  std::string final_checkpoint;
  std::string best_checkpoint;
  std::string last_checkpoint;
};

// Teacher-forced training with the warmup/decay schedule; logs JSON records,
// saves rolling/best/final checkpoints and train_report.json under out_dir.
// A non-finite loss writes the report, then throws ToleranceError naming the
// iteration and the last good checkpoint.
TrainResult cmd_train(const RunConfig& cfg);

// Free-running evaluation of a checkpoint; writes predictions.jsonl,
// metrics.json and metrics.csv under out_dir. Empty checkpoint path means
// freshly initialized parameters.
MetricsReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                       const std::string& dataset_path);

struct GradCheckSummary {
  GradCheckReport report;
  double seconds = 0.0;
  long long n_params = 0;
};

// Finite-difference check of the full objective on a few generated
// instances; writes gradcheck_report.json, throws ToleranceError on breach.
GradCheckSummary cmd_gradcheck(const RunConfig& cfg);

// Writes train.jsonl, eval.jsonl, annotations.jsonl and word_vectors.txt
// under out_dir.
void cmd_synth(const RunConfig& cfg);

struct AblateCell {
  bool use_sct = false;
  bool use_icsp = false;
  int enc_len = 0;
  int total_len = 0;
  MetricsReport metrics;
  SourceSplit split;
};

// Trains and evaluates the four encoder/guidance combinations under one
// shared seed; writes ablation.json and a rendered table under out_dir.
std::vector<AblateCell> cmd_ablate(const RunConfig& cfg);

// Teacher-forced per-step accuracy over prepared instances.
double teacher_forced_accuracy(const PreparedData& data,
                               const ModelConfig& cfg, ParameterStore& params,
                               const Vocabulary& vocab);

}  // namespace scnet
