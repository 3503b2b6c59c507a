#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "scnet/geometry.hpp"
#include "scnet/word_vectors.hpp"

namespace scnet {

struct OcrTokenInput {
  std::string text;
  std::vector<double> appearance;    // dim d_fr
  std::vector<double> fasttext;      // dim d_ft
  std::vector<std::uint8_t> phoc;    // dim 604
  BoundingBox box;
};

struct ObjectRegionInput {
  std::vector<double> appearance;    // dim d_fr
  BoundingBox box;
};

struct VqaInstance {
  std::string instance_id;
  double image_w = 0.0;
  double image_h = 0.0;
  std::vector<std::string> question_tokens;
  std::vector<OcrTokenInput> ocr;
  std::vector<ObjectRegionInput> objects;
  std::vector<std::string> answers;  // 10 references
};

// JSON Lines, one instance per line, field names matching VqaInstance.
// Round trips are value-exact; malformed lines raise IoError naming the line
// and field path.
void save_dataset(const std::string& path,
                  const std::vector<VqaInstance>& instances);
std::vector<VqaInstance> load_dataset(const std::string& path);

// Fixed answer vocabulary. Index layout: 0 = <pad>, 1 = <begin>, 2 = <end>,
// then the top answer words by frequency.
struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> word_to_index;
  std::vector<double> embeddings;  // words.size() x d_ft, specials zero
  int d_ft = 0;

  int size() const { return static_cast<int>(words.size()); }
  int index_of(const std::string& word) const {
    const auto it = word_to_index.find(word);
    return it == word_to_index.end() ? -1 : it->second;
  }
  bool truncated_warning = false;  // fewer unique words than requested
};

inline constexpr int kPadId = 0;
inline constexpr int kBeginId = 1;
inline constexpr int kEndId = 2;
inline constexpr const char* kPadWord = "<pad>";
inline constexpr const char* kBeginWord = "<begin>";
inline constexpr const char* kEndWord = "<end>";

// Tokenizes normalized answers on whitespace, counts words, keeps the top
// M-3 by frequency (ties broken lexicographically) and prepends the specials.
Vocabulary build_vocabulary(const std::vector<std::string>& answers, int m,
                            const WordVectorTable& table);

// Plain text, one word per line, line number = index (specials included).
void save_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& path,
                           const WordVectorTable& table);

// Question-side token ids: 0 = <pad>, 1 = <unk>, 2 = <cls>, then sorted
// unique lowercased question tokens.
struct QuestionVocab {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> word_to_index;

  int size() const { return static_cast<int>(words.size()); }
  int id(const std::string& word) const;
};

inline constexpr int kQPadId = 0;
inline constexpr int kQUnkId = 1;
inline constexpr int kQClsId = 2;

QuestionVocab build_question_vocab(const std::vector<VqaInstance>& instances);
void save_question_vocab(const std::string& path, const QuestionVocab& vocab);
QuestionVocab load_question_vocab(const std::string& path);

}  // namespace scnet
