#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scnet/metrics.hpp"
#include "scnet/rng.hpp"

namespace {

using namespace scnet;

// Independent full-matrix reference implementation.
int edit_distance_oracle(const std::string& a, const std::string& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int sub = dp[i - 1][j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0);
      dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1, sub});
    }
  }
  return dp[n][m];
}

std::string random_word(SplitMix64& rng, int max_len) {
  const int len = rng.uniform_int(0, max_len);
  std::string s;
  for (int i = 0; i < len; ++i) {
    s.push_back(static_cast<char>('a' + rng.uniform_int(0, 5)));
  }
  return s;
}

EvalRecord make_record(const std::string& pred,
                       const std::vector<std::string>& refs,
                       const std::string& source) {
  EvalRecord r;
  r.instance_id = "r";
  r.prediction = pred;
  r.references = refs;
  while (r.references.size() < 10) {
    r.references.push_back(r.references[r.references.size() % refs.size()]);
  }
  r.source = source;
  return r;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("edit distance pins the known values") {
  CHECK(levenshtein("", "") == 0);
  CHECK(levenshtein("", "abc") == 3);
  CHECK(levenshtein("abc", "") == 3);
  CHECK(levenshtein("kitten", "kitten") == 0);
  CHECK(levenshtein("georgh", "georgia") == 2);
  CHECK(levenshtein("kitten", "sitting") == 3);
}

TEST_CASE("edit distance agrees with the matrix oracle") {
  SplitMix64 rng(99);
  for (int it = 0; it < 2000; ++it) {
    const std::string a = random_word(rng, 12);
    const std::string b = random_word(rng, 12);
    const int d = levenshtein(a, b);
    CHECK(d == edit_distance_oracle(a, b));
    CHECK(d == levenshtein(b, a));
    CHECK(d >= std::abs(static_cast<int>(a.size()) -
                        static_cast<int>(b.size())));
    CHECK(d <= static_cast<int>(std::max(a.size(), b.size())));
    const std::string c = random_word(rng, 12);
    CHECK(levenshtein(a, c) <= d + levenshtein(b, c));
  }
}

TEST_CASE("similarity score follows the normalized distance") {
  CHECK(std::abs(anls_score("georgh", "georgia") - (1.0 - 2.0 / 7.0)) <= 1e-12);
  CHECK(anls_score("same", "same") == 1.0);
  CHECK(anls_score("", "") == 1.0);
  CHECK(anls_score("", "abc") == 0.0);
  SplitMix64 rng(7);
  for (int it = 0; it < 200; ++it) {
    const double s = anls_score(random_word(rng, 8), random_word(rng, 8));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("reference maximum and threshold zeroing") {
  const std::vector<std::string> refs = {"georgia", "atlanta"};
  const double best = anls_best("georgh", refs, 0.0);
  CHECK(std::abs(best - (1.0 - 2.0 / 7.0)) <= 1e-12);
  // 5/7 < 0.75, so the thresholded score drops to zero.
  CHECK(anls_best("georgh", refs, 0.75) == 0.0);
  CHECK(anls_best("georgia", refs, 0.75) == 1.0);
}

TEST_CASE("soft voting takes values in quarters of three") {
  const std::vector<std::string> base(10, "no");
  auto with = [&](int matches) {
    std::vector<std::string> refs = base;
    for (int i = 0; i < matches; ++i) refs[static_cast<size_t>(i)] = "yes";
    return make_record("yes", refs, "vocab");
  };
  CHECK(vqa_accuracy(with(0)) == 0.0);
  CHECK(vqa_accuracy(with(1)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(vqa_accuracy(with(2)) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(vqa_accuracy(with(3)) == 1.0);
  CHECK(vqa_accuracy(with(7)) == 1.0);

  SplitMix64 rng(13);
  for (int it = 0; it < 100; ++it) {
    const int m = rng.uniform_int(0, 10);
    const double acc = vqa_accuracy(with(m));
    CHECK(acc == doctest::Approx(std::min(m / 3.0, 1.0)).epsilon(1e-15));
  }
}

TEST_CASE("source split partitions accuracy exactly") {
  const std::vector<std::string> yes(10, "yes");
  const std::vector<std::string> no(10, "no");
  std::vector<EvalRecord> records = {
      make_record("yes", yes, "vocab"),  // 1.0 from vocab
      make_record("yes", yes, "ocr"),    // 1.0 from ocr
      make_record("yes", yes, "mixed"),  // 1.0, counts toward ocr
      make_record("yes", no, "vocab"),   // 0.0
  };
  const SourceSplit split = answer_source_split(records);
  CHECK(split.vocab_acc == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(split.ocr_acc == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(split.total_acc == split.vocab_acc + split.ocr_acc);

  // All predictions drawn from one source leave the other share at zero.
  std::vector<EvalRecord> vocab_only = {make_record("yes", yes, "vocab"),
                                        make_record("no", no, "vocab")};
  const SourceSplit vs = answer_source_split(vocab_only);
  CHECK(vs.ocr_acc == 0.0);
  CHECK(vs.vocab_acc == 1.0);
  CHECK(vs.total_acc == 1.0);

  // Published-style headline split: the shares add to the total.
  const double vocab_share = 13.48, ocr_share = 25.92;
  CHECK(std::abs(vocab_share + ocr_share - 39.40) <= 1e-12);
}

TEST_CASE("random records keep the partition identity") {
  SplitMix64 rng(31);
  std::vector<EvalRecord> records;
  const char* sources[] = {"vocab", "ocr", "mixed"};
  for (int i = 0; i < 60; ++i) {
    std::vector<std::string> refs;
    for (int j = 0; j < 10; ++j) refs.push_back(random_word(rng, 3));
    EvalRecord r = make_record(random_word(rng, 3), refs,
                               sources[rng.uniform_int(0, 2)]);
    records.push_back(r);
  }
  const SourceSplit split = answer_source_split(records);
  double total = 0;
  for (const auto& r : records) total += vqa_accuracy(r);
  total /= static_cast<double>(records.size());
  CHECK(split.total_acc == doctest::Approx(total).epsilon(1e-12));
  CHECK(split.total_acc == split.vocab_acc + split.ocr_acc);
}

TEST_CASE("report serialization has a fixed field set") {
  const std::vector<std::string> yes(10, "yes");
  std::vector<EvalRecord> records = {make_record("yes", yes, "ocr")};
  const MetricsReport report = compute_metrics(records, "deadbeef", 0.5);
  REQUIRE(report.accuracy.has_value());
  REQUIRE(report.anls.has_value());
  CHECK(report.n_instances == 1);
  CHECK(*report.accuracy == 1.0);
  CHECK(*report.anls == 1.0);
  CHECK(*report.vocab_acc == 0.0);
  CHECK(*report.ocr_acc == 1.0);

  const std::string json = metrics_to_json(report);
  for (const char* key : {"\"accuracy\"", "\"anls\"", "\"vocab_acc\"",
                          "\"ocr_acc\"", "\"n_instances\"", "\"config_hash\"",
                          "\"deadbeef\""}) {
    CHECK(json.find(key) != std::string::npos);
  }

  const MetricsReport empty = compute_metrics({}, "cafe", 0.0);
  CHECK_FALSE(empty.accuracy.has_value());
  CHECK(empty.n_instances == 0);
  const std::string empty_json = metrics_to_json(empty);
  CHECK(empty_json.find("null") != std::string::npos);

  const std::string header = metrics_csv_header();
  const std::string row = metrics_to_csv_row(report);
  CHECK(std::count(header.begin(), header.end(), ',') ==
        std::count(row.begin(), row.end(), ','));
  CHECK(header.find("accuracy") != std::string::npos);
  CHECK(row.find("deadbeef") != std::string::npos);
}

TEST_CASE("identical record sets give identical reports") {
  const std::vector<std::string> refs(10, "word");
  std::vector<EvalRecord> records = {make_record("word", refs, "vocab"),
                                     make_record("other", refs, "ocr")};
  const std::string a = metrics_to_json(compute_metrics(records, "h", 0.0));
  const std::string b = metrics_to_json(compute_metrics(records, "h", 0.0));
  CHECK(a == b);
}

}  // TEST_SUITE
