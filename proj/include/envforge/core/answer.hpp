#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace envforge {

struct AnswerPattern {
  std::string open_tag = "<answer>";
  std::string close_tag = "</answer>";
};

// Which well-formed block wins when a response contains several. Models
// often restate the answer, so the default is the last one.
enum class AnswerSelection { first, last };

// Contents of the selected well-formed open/close block, or nullopt. A block
// is well-formed when no other open tag appears between its open and close
// tags.
std::optional<std::string> extract_answer(std::string_view text,
                                          const AnswerPattern& pattern = {},
                                          AnswerSelection selection = AnswerSelection::last);

std::string_view trim(std::string_view text);

}  // namespace envforge
