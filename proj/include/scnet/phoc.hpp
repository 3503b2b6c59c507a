#pragma once

#include <string>
#include <vector>

namespace scnet {

// Pyramidal histogram of characters over a lowercased a-z0-9 alphabet:
// unigram levels 2..5 (2+3+4+5 = 14 regions x 36 chars = 504 bits) followed by
// a 2-region level over the 50 most frequent English bigrams (100 bits),
// 604 bits total. A character occupying [i/n,(i+1)/n) of the word counts for a
// region when their overlap is at least half the character interval's width.
inline constexpr int kPhocDim = 604;

// The bigram list, in bit order. Must match resources/bigrams_50.txt.
const std::vector<std::string>& standard_bigrams();

// Reads a bigram list, one per line, order-significant. Throws IoError on a
// missing file, a non-2-letter entry, or a duplicate.
std::vector<std::string> load_bigrams(const std::string& path);

// Input is matched case-insensitively; characters outside [a-z0-9] are ignored
// for unigram levels and break bigram adjacency.
std::vector<std::uint8_t> phoc_encode(const std::string& word,
                                      const std::vector<std::string>& bigrams);
std::vector<std::uint8_t> phoc_encode(const std::string& word);

}  // namespace scnet
