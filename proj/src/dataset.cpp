#include "scnet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scnet/errors.hpp"
#include "scnet/text_norm.hpp"

namespace scnet {

using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw IoError("line " + std::to_string(line) + ": " + what);
}

const ordered_json& require_field(const ordered_json& obj, const char* name,
                                  std::size_t line, const std::string& path) {
  const auto it = obj.find(name);
  if (it == obj.end()) {
    line_error(line, "missing field '" + path + name + "'");
  }
  return *it;
}

double as_number(const ordered_json& value, std::size_t line,
                 const std::string& path) {
  if (!value.is_number()) {
    line_error(line, "field '" + path + "' must be a number");
  }
  return value.get<double>();
}

std::string as_string(const ordered_json& value, std::size_t line,
                      const std::string& path) {
  if (!value.is_string()) {
    line_error(line, "field '" + path + "' must be a string");
  }
  return value.get<std::string>();
}

std::vector<double> as_double_array(const ordered_json& value, std::size_t line,
                                    const std::string& path) {
  if (!value.is_array()) {
    line_error(line, "field '" + path + "' must be an array");
  }
  std::vector<double> out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    out.push_back(
        as_number(value[i], line, path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

ordered_json box_to_json(const BoundingBox& box) {
  ordered_json j;
  j["xmin"] = box.xmin;
  j["ymin"] = box.ymin;
  j["xmax"] = box.xmax;
  j["ymax"] = box.ymax;
  return j;
}

BoundingBox box_from_json(const ordered_json& value, std::size_t line,
                          const std::string& path) {
  if (!value.is_object()) {
    line_error(line, "field '" + path + "' must be an object");
  }
  BoundingBox box;
  box.xmin = as_number(require_field(value, "xmin", line, path + "."), line,
                       path + ".xmin");
  box.ymin = as_number(require_field(value, "ymin", line, path + "."), line,
                       path + ".ymin");
  box.xmax = as_number(require_field(value, "xmax", line, path + "."), line,
                       path + ".xmax");
  box.ymax = as_number(require_field(value, "ymax", line, path + "."), line,
                       path + ".ymax");
  return box;
}

ordered_json instance_to_json(const VqaInstance& inst) {
  ordered_json j;
  j["instance_id"] = inst.instance_id;
  j["image_w"] = inst.image_w;
  j["image_h"] = inst.image_h;
  j["question_tokens"] = inst.question_tokens;
  ordered_json ocr = ordered_json::array();
  for (const auto& token : inst.ocr) {
    ordered_json t;
    t["text"] = token.text;
    t["appearance"] = token.appearance;
    t["fasttext"] = token.fasttext;
    ordered_json bits = ordered_json::array();
    for (const auto bit : token.phoc) bits.push_back(static_cast<int>(bit));
    t["phoc"] = std::move(bits);
    t["box"] = box_to_json(token.box);
    ocr.push_back(std::move(t));
  }
  j["ocr"] = std::move(ocr);
  ordered_json objects = ordered_json::array();
  for (const auto& region : inst.objects) {
    ordered_json o;
    o["appearance"] = region.appearance;
    o["box"] = box_to_json(region.box);
    objects.push_back(std::move(o));
  }
  j["objects"] = std::move(objects);
  j["answers"] = inst.answers;
  return j;
}

VqaInstance instance_from_json(const ordered_json& j, std::size_t line) {
  if (!j.is_object()) {
    line_error(line, "expected a JSON object");
  }
  VqaInstance inst;
  inst.instance_id =
      as_string(require_field(j, "instance_id", line, ""), line, "instance_id");
  inst.image_w =
      as_number(require_field(j, "image_w", line, ""), line, "image_w");
  inst.image_h =
      as_number(require_field(j, "image_h", line, ""), line, "image_h");
  if (inst.image_w <= 0.0 || inst.image_h <= 0.0) {
    line_error(line, "field 'image_w'/'image_h' must be positive");
  }

  const auto& toks = require_field(j, "question_tokens", line, "");
  if (!toks.is_array()) {
    line_error(line, "field 'question_tokens' must be an array");
  }
  for (std::size_t i = 0; i < toks.size(); ++i) {
    inst.question_tokens.push_back(as_string(
        toks[i], line, "question_tokens[" + std::to_string(i) + "]"));
  }

  const auto& ocr = require_field(j, "ocr", line, "");
  if (!ocr.is_array()) {
    line_error(line, "field 'ocr' must be an array");
  }
  for (std::size_t i = 0; i < ocr.size(); ++i) {
    const std::string path = "ocr[" + std::to_string(i) + "]";
    const auto& t = ocr[i];
    if (!t.is_object()) {
      line_error(line, "field '" + path + "' must be an object");
    }
    OcrTokenInput token;
    token.text = as_string(require_field(t, "text", line, path + "."), line,
                           path + ".text");
    token.appearance = as_double_array(
        require_field(t, "appearance", line, path + "."), line,
        path + ".appearance");
    token.fasttext =
        as_double_array(require_field(t, "fasttext", line, path + "."), line,
                        path + ".fasttext");
    const auto& bits = require_field(t, "phoc", line, path + ".");
    if (!bits.is_array()) {
      line_error(line, "field '" + path + ".phoc' must be an array");
    }
    for (std::size_t b = 0; b < bits.size(); ++b) {
      const std::string bpath =
          path + ".phoc[" + std::to_string(b) + "]";
      if (!bits[b].is_number_integer()) {
        line_error(line, "field '" + bpath + "' must be 0 or 1");
      }
      const auto v = bits[b].get<int>();
      if (v != 0 && v != 1) {
        line_error(line, "field '" + bpath + "' must be 0 or 1");
      }
      token.phoc.push_back(static_cast<std::uint8_t>(v));
    }
    token.box = box_from_json(require_field(t, "box", line, path + "."), line,
                              path + ".box");
    if (!token.box.valid()) {
      line_error(line, "field '" + path + ".box' is inverted");
    }
    inst.ocr.push_back(std::move(token));
  }

  const auto& objects = require_field(j, "objects", line, "");
  if (!objects.is_array()) {
    line_error(line, "field 'objects' must be an array");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string path = "objects[" + std::to_string(i) + "]";
    const auto& o = objects[i];
    if (!o.is_object()) {
      line_error(line, "field '" + path + "' must be an object");
    }
    ObjectRegionInput region;
    region.appearance = as_double_array(
        require_field(o, "appearance", line, path + "."), line,
        path + ".appearance");
    region.box = box_from_json(require_field(o, "box", line, path + "."), line,
                               path + ".box");
    if (!region.box.valid()) {
      line_error(line, "field '" + path + ".box' is inverted");
    }
    inst.objects.push_back(std::move(region));
  }

  const auto& answers = require_field(j, "answers", line, "");
  if (!answers.is_array()) {
    line_error(line, "field 'answers' must be an array");
  }
  for (std::size_t i = 0; i < answers.size(); ++i) {
    inst.answers.push_back(
        as_string(answers[i], line, "answers[" + std::to_string(i) + "]"));
  }
  return inst;
}

}  // namespace

void save_dataset(const std::string& path,
                  const std::vector<VqaInstance>& instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open dataset file for writing: " + path);
  }
  for (const auto& inst : instances) {
    out << instance_to_json(inst).dump() << '\n';
  }
  if (!out) {
    throw IoError("failed while writing dataset file: " + path);
  }
}

std::vector<VqaInstance> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open dataset file: " + path);
  }
  std::vector<VqaInstance> instances;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      line_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    instances.push_back(instance_from_json(j, line_no));
  }
  return instances;
}

Vocabulary build_vocabulary(const std::vector<std::string>& answers, int m,
                            const WordVectorTable& table) {
  if (m < 3) {
    throw UsageError("vocabulary size must be at least 3");
  }
  std::map<std::string, long long> counts;
  for (const auto& answer : answers) {
    for (const auto& word : split_words(normalize_answer(answer))) {
      ++counts[word];
    }
  }
  std::vector<std::pair<std::string, long long>> ranked(counts.begin(),
                                                        counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.d_ft = table.dim;
  vocab.words = {kPadWord, kBeginWord, kEndWord};
  const std::size_t keep = static_cast<std::size_t>(m - 3);
  for (std::size_t i = 0; i < ranked.size() && i < keep; ++i) {
    vocab.words.push_back(ranked[i].first);
  }
  vocab.truncated_warning = ranked.size() < keep;
  for (int i = 0; i < vocab.size(); ++i) {
    vocab.word_to_index[vocab.words[i]] = i;
  }
  vocab.embeddings.assign(
      static_cast<std::size_t>(vocab.size()) * table.dim, 0.0);
  for (int i = 3; i < vocab.size(); ++i) {
    const auto vec = embed_word(table, vocab.words[i]);
    std::copy(vec.begin(), vec.end(),
              vocab.embeddings.begin() +
                  static_cast<std::size_t>(i) * table.dim);
  }
  return vocab;
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open vocabulary file for writing: " + path);
  }
  for (const auto& word : vocab.words) {
    out << word << '\n';
  }
  if (!out) {
    throw IoError("failed while writing vocabulary file: " + path);
  }
}

Vocabulary load_vocabulary(const std::string& path,
                           const WordVectorTable& table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open vocabulary file: " + path);
  }
  Vocabulary vocab;
  vocab.d_ft = table.dim;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    vocab.words.push_back(line);
  }
  if (vocab.words.size() < 3 || vocab.words[0] != kPadWord ||
      vocab.words[1] != kBeginWord || vocab.words[2] != kEndWord) {
    throw IoError("vocabulary file must start with " + std::string(kPadWord) +
                  ", " + kBeginWord + ", " + kEndWord + ": " + path);
  }
  for (int i = 0; i < vocab.size(); ++i) {
    if (!vocab.word_to_index.emplace(vocab.words[i], i).second) {
      throw IoError("duplicate word in vocabulary file: " + vocab.words[i]);
    }
  }
  vocab.embeddings.assign(
      static_cast<std::size_t>(vocab.size()) * table.dim, 0.0);
  for (int i = 3; i < vocab.size(); ++i) {
    const auto vec = embed_word(table, vocab.words[i]);
    std::copy(vec.begin(), vec.end(),
              vocab.embeddings.begin() +
                  static_cast<std::size_t>(i) * table.dim);
  }
  return vocab;
}

int QuestionVocab::id(const std::string& word) const {
  std::string lowered = word;
  for (auto& c : lowered) {
    c = static_cast<char>(
        std::tolower(static_cast<unsigned char>(c)));
  }
  const auto it = word_to_index.find(lowered);
  return it == word_to_index.end() ? kQUnkId : it->second;
}

QuestionVocab build_question_vocab(const std::vector<VqaInstance>& instances) {
  std::map<std::string, int> unique;
  for (const auto& inst : instances) {
    for (const auto& token : inst.question_tokens) {
      std::string lowered = token;
      for (auto& c : lowered) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      if (!lowered.empty()) unique[lowered] = 1;
    }
  }
  QuestionVocab vocab;
  vocab.words = {"<pad>", "<unk>", "<cls>"};
  for (const auto& [word, _] : unique) {
    vocab.words.push_back(word);
  }
  for (int i = 0; i < vocab.size(); ++i) {
    vocab.word_to_index[vocab.words[i]] = i;
  }
  return vocab;
}

void save_question_vocab(const std::string& path, const QuestionVocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open question vocab file for writing: " + path);
  }
  for (const auto& word : vocab.words) {
    out << word << '\n';
  }
  if (!out) {
    throw IoError("failed while writing question vocab file: " + path);
  }
}

QuestionVocab load_question_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open question vocab file: " + path);
  }
  QuestionVocab vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    vocab.words.push_back(line);
  }
  if (vocab.words.size() < 3 || vocab.words[0] != "<pad>" ||
      vocab.words[1] != "<unk>" || vocab.words[2] != "<cls>") {
    throw IoError(
        "question vocab file must start with <pad>, <unk>, <cls>: " + path);
  }
  for (int i = 0; i < vocab.size(); ++i) {
    if (!vocab.word_to_index.emplace(vocab.words[i], i).second) {
      throw IoError("duplicate word in question vocab file: " +
                    vocab.words[i]);
    }
  }
  return vocab;
}

}  // namespace scnet
