#pragma once

#include <string>
#include <vector>

namespace envforge::synth {

// Built-in seed topics for environment synthesis.
const std::vector<std::string>& builtin_keywords();

struct KeywordSeed {
  std::vector<std::string> keywords;
  std::vector<std::string> dropped;  // extras rejected as empty or longer than three words
};

// Built-ins followed by the extras, deduplicated case-insensitively with
// whitespace collapsed; the first spelling wins.
KeywordSeed seed_keywords(const std::vector<std::string>& extra, bool include_builtin = true);

}  // namespace envforge::synth
