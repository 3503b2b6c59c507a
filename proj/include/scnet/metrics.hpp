#pragma once

#include <optional>
#include <string>
#include <vector>

namespace scnet {

// Unit-cost edit distance.
int levenshtein(const std::string& a, const std::string& b);

// 1 - d_L(pred, gt) / max(|pred|, |gt|) on normalized strings. Both empty
// gives 1.0 by convention.
double anls_score(const std::string& pred, const std::string& gt);

// Maximum over references; scores below `threshold` are zeroed (0 = off).
double anls_best(const std::string& pred,
                 const std::vector<std::string>& references,
                 double threshold = 0.0);

struct EvalRecord {
  std::string instance_id;
  std::string prediction;               // normalized
  std::vector<std::string> references;  // exactly 10, normalized
  std::string source;                   // "ocr" | "vocab" | "mixed"
  bool padded_references = false;       // fewer than 10 given, repeated
};

// Soft voting against 10 references: min(matches / 3, 1).
double vqa_accuracy(const EvalRecord& record);

// Per-source accuracy contributions, each divided by the TOTAL record count;
// a mixed-source prediction counts toward ocr. total_acc is defined as
// vocab_acc + ocr_acc so the partition identity is exact.
struct SourceSplit {
  double vocab_acc = 0.0;
  double ocr_acc = 0.0;
  double total_acc = 0.0;
};
SourceSplit answer_source_split(const std::vector<EvalRecord>& records);

struct MetricsReport {
  std::optional<double> accuracy;
  std::optional<double> anls;
  std::optional<double> vocab_acc;
  std::optional<double> ocr_acc;
  long long n_instances = 0;
  std::string config_hash;
};

MetricsReport compute_metrics(const std::vector<EvalRecord>& records,
                              const std::string& config_hash,
                              double anls_threshold = 0.0);

std::string metrics_to_json(const MetricsReport& report);
std::string metrics_csv_header();
std::string metrics_to_csv_row(const MetricsReport& report);

}  // namespace scnet
