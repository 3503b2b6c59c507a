#include "scnet/word_vectors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "scnet/errors.hpp"
#include "scnet/rng.hpp"

namespace scnet {

WordVectorTable load_word_vectors(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open word vectors: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw IoError("word vectors missing header: " + path);
  std::istringstream header(line);
  long long count = 0;
  int dim = 0;
  if (!(header >> count >> dim) || count < 0 || dim <= 0)
    throw IoError("bad word-vector header at " + path + ":1");
  WordVectorTable table;
  table.dim = dim;
  table.vectors.reserve(static_cast<size_t>(count));
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> vec(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      if (!(ls >> vec[static_cast<size_t>(i)]))
        throw IoError("bad word-vector line at " + path + ":" +
                      std::to_string(line_no) + " (expected " +
                      std::to_string(dim) + " floats)");
    }
    double extra;
    if (ls >> extra)
      throw IoError("bad word-vector line at " + path + ":" +
                    std::to_string(line_no) + " (more than " +
                    std::to_string(dim) + " floats)");
    table.vectors[word] = std::move(vec);
  }
  if (static_cast<long long>(table.vectors.size()) != count)
    throw IoError("word-vector count mismatch in " + path + ": header says " +
                  std::to_string(count) + ", file has " +
                  std::to_string(table.vectors.size()));
  return table;
}

void save_word_vectors(const std::string& path, const WordVectorTable& table) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write word vectors: " + path);
  os << table.vectors.size() << " " << table.dim << "\n";
  std::vector<std::string> words;
  words.reserve(table.vectors.size());
  for (const auto& [w, v] : table.vectors) words.push_back(w);
  std::sort(words.begin(), words.end());
  os << std::setprecision(17);
  for (const std::string& w : words) {
    os << w;
    for (double v : table.vectors.at(w)) os << " " << v;
    os << "\n";
  }
  if (!os) throw IoError("write failed for word vectors: " + path);
}

std::vector<double> hash_embed_word(const std::string& word, int dim) {
  std::vector<double> out(static_cast<size_t>(dim), 0.0);
  int grams = 0;
  for (int n = 3; n <= 6; ++n) {
    if (static_cast<int>(word.size()) < n) break;
    for (size_t i = 0; i + static_cast<size_t>(n) <= word.size(); ++i) {
      const std::uint64_t h =
          SplitMix64::fnv1a(std::string_view(word).substr(i, static_cast<size_t>(n)));
      const size_t bucket = static_cast<size_t>(h % static_cast<std::uint64_t>(dim));
      out[bucket] += (h >> 32) & 1 ? 1.0 : -1.0;
      ++grams;
    }
  }
  if (grams > 0) {
    const double s = 1.0 / std::sqrt(static_cast<double>(grams));
    for (double& v : out) v *= s;
  }
  return out;
}

std::vector<double> embed_word(const WordVectorTable& table,
                               const std::string& word) {
  const auto it = table.vectors.find(word);
  if (it != table.vectors.end()) return it->second;
  return hash_embed_word(word, table.dim);
}

}  // namespace scnet
