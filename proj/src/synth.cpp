#include "scnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "scnet/errors.hpp"
#include "scnet/phoc.hpp"
#include "scnet/rng.hpp"
#include "scnet/text_norm.hpp"

namespace scnet {

namespace {

constexpr double kImageW = 800.0;
constexpr double kImageH = 600.0;

const std::vector<std::string>& nouns() {
  static const std::vector<std::string> list = {
      "clock", "sign",   "bottle", "jersey", "book",   "train",
      "plane", "shop",   "card",   "screen", "poster", "van"};
  return list;
}

const std::vector<std::string>& attrs() {
  static const std::vector<std::string> list = {"word", "name", "number",
                                                "brand"};
  return list;
}

std::string make_pseudo_word(SplitMix64& rng) {
  static const std::string cons = "bcdfghjklmnpqrstvwz";
  static const std::string vowels = "aeiou";
  const int len = static_cast<int>(4 + rng.uniform_int(0, 3));
  std::string word;
  for (int i = 0; i < len; ++i) {
    if (i % 2 == 0) {
      word += cons[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(cons.size()) - 1))];
    } else {
      word += vowels[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(vowels.size()) - 1))];
    }
  }
  return word;
}

// Zipf-like head-heavy index: log-uniform over [0, n), P(k) ~ 1/(k+1).
int zipf_index(SplitMix64& rng, int n) {
  const double u = rng.next_double();
  const int k = static_cast<int>(std::exp(u * std::log(n + 1.0))) - 1;
  return std::clamp(k, 0, n - 1);
}

std::string distractor_for(const std::string& noun,
                           const std::vector<std::string>& pool) {
  const int head = std::min<int>(8, static_cast<int>(pool.size()));
  return pool[SplitMix64::fnv1a(noun) % static_cast<std::uint64_t>(head)];
}

std::string corrupt_word(const std::string& word, double rate,
                         SplitMix64& rng) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
  std::string out = word;
  for (auto& c : out) {
    if (!rng.bernoulli(rate)) continue;
    const std::size_t orig = alphabet.find(c);
    int pick = static_cast<int>(rng.uniform_int(0, 24));
    if (orig != std::string::npos && pick >= static_cast<int>(orig)) ++pick;
    c = alphabet[static_cast<std::size_t>(pick)];
  }
  return out;
}

std::vector<double> class_mean(const std::string& key, int dim,
                               const SynthConfig& cfg, double amp) {
  SplitMix64 rng = SplitMix64(cfg.seed).fork("class").fork(key);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = rng.bernoulli(0.5) ? amp : -amp;
  return v;
}

BoundingBox clamp_box(double xmin, double ymin, double xmax, double ymax) {
  BoundingBox b;
  b.xmin = std::clamp(xmin, 0.0, kImageW);
  b.ymin = std::clamp(ymin, 0.0, kImageH);
  b.xmax = std::clamp(xmax, b.xmin, kImageW);
  b.ymax = std::clamp(ymax, b.ymin, kImageH);
  return b;
}

BoundingBox random_box(SplitMix64& rng, double min_w, double max_w,
                       double min_h, double max_h) {
  const double w = rng.uniform(min_w, max_w);
  const double h = rng.uniform(min_h, max_h);
  const double cx = rng.uniform(w / 2, kImageW - w / 2);
  const double cy = rng.uniform(h / 2, kImageH - h / 2);
  return clamp_box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2);
}

}  // namespace

std::vector<std::string> synth_word_pool(const SynthConfig& cfg) {
  if (cfg.n_vocab < 1) throw UsageError("n_vocab must be positive");
  std::set<std::string> reserved(nouns().begin(), nouns().end());
  reserved.insert(attrs().begin(), attrs().end());
  reserved.insert({"what", "is", "the"});

  SplitMix64 rng = SplitMix64(cfg.seed).fork("wordpool");
  std::vector<std::string> pool;
  std::set<std::string> seen;
  while (static_cast<int>(pool.size()) < cfg.n_vocab) {
    const std::string word = make_pseudo_word(rng);
    if (reserved.count(word) || !seen.insert(word).second) continue;
    pool.push_back(word);
  }
  return pool;
}

WordVectorTable build_synth_word_table(const SynthConfig& cfg, int d_ft) {
  WordVectorTable table;
  table.dim = d_ft;
  std::set<std::string> words(nouns().begin(), nouns().end());
  words.insert(attrs().begin(), attrs().end());
  words.insert({"what", "is", "the"});
  for (const auto& word : synth_word_pool(cfg)) words.insert(word);
  for (const auto& word : words) {
    table.vectors[word] = hash_embed_word(word, d_ft);
  }
  return table;
}

std::pair<VqaInstance, SynthAnnotations> generate_instance(
    const SynthConfig& cfg, const ModelConfig& model_cfg,
    const WordVectorTable& table, long long index) {
  const std::vector<std::string> pool = synth_word_pool(cfg);
  SplitMix64 rng =
      SplitMix64(cfg.seed).fork("instance").fork(static_cast<std::uint64_t>(index));

  VqaInstance inst;
  SynthAnnotations notes;
  inst.instance_id = "synth-" + std::to_string(index);
  inst.image_w = kImageW;
  inst.image_h = kImageH;

  const std::string& noun = nouns()[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(nouns().size()) - 1))];
  const std::string& attr = attrs()[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(attrs().size()) - 1))];
  inst.question_tokens = {"what", attr, "is", "the", noun};

  notes.distractor = distractor_for(noun, pool);
  const bool answer_is_distractor = rng.bernoulli(cfg.bias_strength);
  if (answer_is_distractor) {
    notes.true_answer = notes.distractor;
  } else {
    notes.true_answer = pool[static_cast<std::size_t>(
        zipf_index(rng, static_cast<int>(pool.size())))];
    notes.bias_trap = notes.true_answer != notes.distractor;
  }

  const int n_ocr =
      static_cast<int>(rng.uniform_int(4, std::min(7, model_cfg.max_ocr)));
  notes.answer_ocr_slot = static_cast<int>(rng.uniform_int(0, n_ocr - 1));
  std::vector<std::string> truths(static_cast<std::size_t>(n_ocr));
  for (int i = 0; i < n_ocr; ++i) {
    if (i == notes.answer_ocr_slot) {
      truths[static_cast<std::size_t>(i)] = notes.true_answer;
    } else {
      std::string word;
      do {
        word = pool[static_cast<std::size_t>(
            zipf_index(rng, static_cast<int>(pool.size())))];
      } while (word == notes.true_answer);
      truths[static_cast<std::size_t>(i)] = word;
    }
  }
  // bait: the habitual co-occurring word shows up even when it is wrong
  if (notes.bias_trap && n_ocr >= 2) {
    int slot = static_cast<int>(rng.uniform_int(0, n_ocr - 1));
    if (slot == notes.answer_ocr_slot) slot = (slot + 1) % n_ocr;
    truths[static_cast<std::size_t>(slot)] = notes.distractor;
  }

  const BoundingBox subject_box = random_box(rng, 160.0, 300.0, 120.0, 240.0);
  const std::vector<double> role_marker =
      class_mean("role-marker", model_cfg.d_fr, cfg, 0.35);
  const std::vector<double> subject_marker =
      class_mean("subject-marker", model_cfg.d_fr, cfg, 0.35);

  for (int i = 0; i < n_ocr; ++i) {
    OcrTokenInput token;
    const std::string& truth = truths[static_cast<std::size_t>(i)];
    std::string recognized = corrupt_word(truth, cfg.ocr_error_rate, rng);
    if (i == notes.answer_ocr_slot) {
      notes.ocr_corrupted = recognized != truth;
    }
    token.text = recognized;

    token.appearance = class_mean("ocr:" + truth, model_cfg.d_fr, cfg, 0.5);
    if (i == notes.answer_ocr_slot) {
      for (int k = 0; k < model_cfg.d_fr; ++k) {
        token.appearance[static_cast<std::size_t>(k)] +=
            role_marker[static_cast<std::size_t>(k)];
      }
    }
    for (int k = 0; k < model_cfg.d_fr; ++k) {
      token.appearance[static_cast<std::size_t>(k)] +=
          cfg.feature_noise_sigma * rng.normal();
    }

    token.fasttext = embed_word(table, normalize_answer(recognized));
    token.phoc = phoc_encode(normalize_answer(recognized));

    if (i == notes.answer_ocr_slot) {
      const double cx = (subject_box.xmin + subject_box.xmax) / 2 +
                        rng.uniform(-20.0, 20.0);
      const double cy = (subject_box.ymin + subject_box.ymax) / 2 +
                        rng.uniform(-20.0, 20.0);
      const double w = rng.uniform(60.0, 120.0);
      const double h = rng.uniform(24.0, 48.0);
      token.box = clamp_box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2);
    } else {
      token.box = random_box(rng, 60.0, 120.0, 24.0, 48.0);
    }
    inst.ocr.push_back(std::move(token));
  }

  const int n_obj =
      static_cast<int>(rng.uniform_int(3, std::min(6, model_cfg.max_obj)));
  const int subject_slot = static_cast<int>(rng.uniform_int(0, n_obj - 1));
  for (int i = 0; i < n_obj; ++i) {
    ObjectRegionInput region;
    std::string obj_noun = noun;
    if (i != subject_slot) {
      obj_noun = nouns()[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(nouns().size()) - 1))];
    }
    region.appearance = class_mean("obj:" + obj_noun, model_cfg.d_fr, cfg, 0.5);
    if (i == subject_slot) {
      for (int k = 0; k < model_cfg.d_fr; ++k) {
        region.appearance[static_cast<std::size_t>(k)] +=
            subject_marker[static_cast<std::size_t>(k)];
      }
    }
    for (int k = 0; k < model_cfg.d_fr; ++k) {
      region.appearance[static_cast<std::size_t>(k)] +=
          cfg.feature_noise_sigma * rng.normal();
    }
    region.box = i == subject_slot ? subject_box
                                   : random_box(rng, 120.0, 260.0, 90.0, 200.0);
    inst.objects.push_back(std::move(region));
  }

  inst.answers.assign(10, notes.true_answer);
  return {std::move(inst), std::move(notes)};
}

std::vector<VqaInstance> generate_dataset(
    const SynthConfig& cfg, const ModelConfig& model_cfg,
    const WordVectorTable& table, long long start, int count,
    std::vector<SynthAnnotations>* annotations) {
  std::vector<VqaInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto [inst, notes] = generate_instance(cfg, model_cfg, table, start + i);
    out.push_back(std::move(inst));
    if (annotations) annotations->push_back(std::move(notes));
  }
  return out;
}

}  // namespace scnet
