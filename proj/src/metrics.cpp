#include "scnet/metrics.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "scnet/text_norm.hpp"

namespace scnet {

int levenshtein(const std::string& a, const std::string& b) {
  const std::size_t la = a.size(), lb = b.size();
  std::vector<int> prev(lb + 1), cur(lb + 1);
  for (std::size_t j = 0; j <= lb; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= la; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= lb; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[lb];
}

double anls_score(const std::string& pred, const std::string& gt) {
  const std::string p = normalize_answer(pred);
  const std::string g = normalize_answer(gt);
  if (p.empty() && g.empty()) return 1.0;
  const double denom = static_cast<double>(std::max(p.size(), g.size()));
  return 1.0 - static_cast<double>(levenshtein(p, g)) / denom;
}

double anls_best(const std::string& pred,
                 const std::vector<std::string>& references,
                 double threshold) {
  double best = 0.0;
  for (const auto& ref : references) {
    best = std::max(best, anls_score(pred, ref));
  }
  if (threshold > 0.0 && best < threshold) return 0.0;
  return best;
}

double vqa_accuracy(const EvalRecord& record) {
  int matches = 0;
  for (const auto& ref : record.references) {
    if (ref == record.prediction) ++matches;
  }
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

SourceSplit answer_source_split(const std::vector<EvalRecord>& records) {
  SourceSplit split;
  if (records.empty()) return split;
  double vocab_sum = 0.0, ocr_sum = 0.0;
  for (const auto& record : records) {
    const double acc = vqa_accuracy(record);
    if (record.source == "vocab") {
      vocab_sum += acc;
    } else {
      ocr_sum += acc;
    }
  }
  const double n = static_cast<double>(records.size());
  split.vocab_acc = vocab_sum / n;
  split.ocr_acc = ocr_sum / n;
  split.total_acc = split.vocab_acc + split.ocr_acc;
  return split;
}

MetricsReport compute_metrics(const std::vector<EvalRecord>& records,
                              const std::string& config_hash,
                              double anls_threshold) {
  MetricsReport report;
  report.config_hash = config_hash;
  report.n_instances = static_cast<long long>(records.size());
  if (records.empty()) return report;

  const SourceSplit split = answer_source_split(records);
  double anls_sum = 0.0;
  for (const auto& record : records) {
    anls_sum += anls_best(record.prediction, record.references, anls_threshold);
  }
  report.accuracy = split.total_acc;
  report.anls = anls_sum / static_cast<double>(records.size());
  report.vocab_acc = split.vocab_acc;
  report.ocr_acc = split.ocr_acc;
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  const auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v.has_value()) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("accuracy", report.accuracy);
  put("anls", report.anls);
  put("vocab_acc", report.vocab_acc);
  put("ocr_acc", report.ocr_acc);
  j["n_instances"] = report.n_instances;
  j["config_hash"] = report.config_hash;
  return j.dump(2) + "\n";
}

std::string metrics_csv_header() {
  return "accuracy,anls,vocab_acc,ocr_acc,n_instances,config_hash";
}

std::string metrics_to_csv_row(const MetricsReport& report) {
  const auto cell = [](const std::optional<double>& v) -> std::string {
    if (!v.has_value()) return "";
    return nlohmann::json(*v).dump();
  };
  return cell(report.accuracy) + "," + cell(report.anls) + "," +
         cell(report.vocab_acc) + "," + cell(report.ocr_acc) + "," +
         std::to_string(report.n_instances) + "," + report.config_hash;
}

}  // namespace scnet
