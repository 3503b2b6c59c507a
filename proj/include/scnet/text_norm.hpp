#pragma once

#include <string>
#include <vector>

namespace scnet {

// Shared text canonicalization: lowercase, trim, collapse internal whitespace,
// strip leading/trailing ASCII punctuation from each word (inner punctuation
// like apostrophes survives). Applied identically to ground-truth answers,
// vocabulary entries and OCR text so string equality means answer equality.
std::string normalize_answer(const std::string& s);

std::vector<std::string> split_words(const std::string& s);

}  // namespace scnet
