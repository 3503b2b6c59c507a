#include "scnet/phoc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_map>

#include "scnet/errors.hpp"

namespace scnet {

namespace {

constexpr const char* kAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";

int alphabet_index(char c) {
  if (c >= 'a' && c <= 'z') return c - 'a';
  if (c >= '0' && c <= '9') return 26 + (c - '0');
  return -1;
}

std::string filter_word(const std::string& word) {
  std::string out;
  out.reserve(word.size());
  for (char raw : word) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (alphabet_index(c) >= 0) out.push_back(c);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& standard_bigrams() {
  static const std::vector<std::string> kBigrams = {
      "th", "he", "in", "er", "an", "re", "es", "on", "st", "nt",
      "en", "at", "ed", "nd", "to", "or", "ea", "ti", "ar", "te",
      "ng", "al", "it", "as", "is", "ha", "et", "se", "ou", "of",
      "le", "sa", "ve", "ro", "ra", "ri", "hi", "ne", "me", "de",
      "co", "ta", "ec", "si", "ll", "so", "na", "li", "la", "el"};
  return kBigrams;
}

std::vector<std::string> load_bigrams(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open bigram list: " + path);
  std::vector<std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    if (line.size() != 2 || alphabet_index(line[0]) < 0 ||
        alphabet_index(line[1]) < 0)
      throw IoError("bad bigram at " + path + ":" + std::to_string(line_no) +
                    ": '" + line + "'");
    if (std::find(out.begin(), out.end(), line) != out.end())
      throw IoError("duplicate bigram at " + path + ":" +
                    std::to_string(line_no) + ": '" + line + "'");
    out.push_back(line);
  }
  return out;
}

std::vector<std::uint8_t> phoc_encode(const std::string& word,
                                      const std::vector<std::string>& bigrams) {
  const int unigram_dims = (2 + 3 + 4 + 5) * 36;
  std::vector<std::uint8_t> bits(
      static_cast<size_t>(unigram_dims + 2 * bigrams.size()), 0);
  const std::string w = filter_word(word);
  const int n = static_cast<int>(w.size());
  if (n == 0) return bits;

  // A span [s0,s1] marks region [r0,r1] when their overlap covers at least
  // half the span's own width.
  const auto overlaps = [](double s0, double s1, double r0, double r1) {
    const double ov = std::min(s1, r1) - std::max(s0, r0);
    return ov >= 0.5 * (s1 - s0);
  };

  int offset = 0;
  for (int level : {2, 3, 4, 5}) {
    for (int i = 0; i < n; ++i) {
      const double c0 = static_cast<double>(i) / n;
      const double c1 = static_cast<double>(i + 1) / n;
      const int ci = alphabet_index(w[static_cast<size_t>(i)]);
      for (int r = 0; r < level; ++r) {
        if (overlaps(c0, c1, static_cast<double>(r) / level,
                     static_cast<double>(r + 1) / level))
          bits[static_cast<size_t>(offset + r * 36 + ci)] = 1;
      }
    }
    offset += level * 36;
  }

  std::unordered_map<std::string, int> bigram_index;
  for (size_t b = 0; b < bigrams.size(); ++b)
    bigram_index.emplace(bigrams[b], static_cast<int>(b));
  const int nb = static_cast<int>(bigrams.size());
  for (int i = 0; i + 1 < n; ++i) {
    const auto it = bigram_index.find(w.substr(static_cast<size_t>(i), 2));
    if (it == bigram_index.end()) continue;
    const double b0 = static_cast<double>(i) / n;
    const double b1 = static_cast<double>(i + 2) / n;
    for (int r = 0; r < 2; ++r) {
      if (overlaps(b0, b1, r * 0.5, (r + 1) * 0.5))
        bits[static_cast<size_t>(unigram_dims + r * nb + it->second)] = 1;
    }
  }
  return bits;
}

std::vector<std::uint8_t> phoc_encode(const std::string& word) {
  return phoc_encode(word, standard_bigrams());
}

}  // namespace scnet
