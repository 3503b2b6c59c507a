#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace scnet {

struct WordVectorTable {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

// Text format: header "count dim", then one word plus dim floats per line,
// all space-separated. Malformed lines throw IoError with the line number.
WordVectorTable load_word_vectors(const std::string& path);

// Words written in sorted order so identical tables produce identical files.
void save_word_vectors(const std::string& path, const WordVectorTable& table);

// Deterministic subword fallback: character n-grams (n=3..6) hashed into dim
// buckets with +-1 contributions, scaled by 1/sqrt(#grams). A word with no
// grams (length < 3) embeds to the zero vector.
std::vector<double> hash_embed_word(const std::string& word, int dim);

// Stored vector when present, hash fallback otherwise.
std::vector<double> embed_word(const WordVectorTable& table,
                               const std::string& word);

}  // namespace scnet
