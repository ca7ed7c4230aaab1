#include "envforge/core/answer.hpp"

namespace envforge {

std::string_view trim(std::string_view text) {
  constexpr std::string_view kSpace = " \t\r\n\f\v";
  const auto begin = text.find_first_not_of(kSpace);
  if (begin == std::string_view::npos) return {};
  const auto end = text.find_last_not_of(kSpace);
  return text.substr(begin, end - begin + 1);
}

std::optional<std::string> extract_answer(std::string_view text, const AnswerPattern& pattern,
                                          AnswerSelection selection) {
  if (pattern.open_tag.empty() || pattern.close_tag.empty()) return std::nullopt;
  std::optional<std::string> found;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find(pattern.open_tag, pos);
    if (open == std::string_view::npos) break;
    auto content_begin = open + pattern.open_tag.size();
    auto close = text.find(pattern.close_tag, content_begin);
    if (close == std::string_view::npos) break;
    // Re-anchor on the innermost open tag preceding this close tag.
    auto inner = text.find(pattern.open_tag, content_begin);
    while (inner != std::string_view::npos && inner < close) {
      open = inner;
      content_begin = open + pattern.open_tag.size();
      inner = text.find(pattern.open_tag, content_begin);
    }
    found = std::string(text.substr(content_begin, close - content_begin));
    if (selection == AnswerSelection::first) return found;
    pos = close + pattern.close_tag.size();
  }
  return found;
}

}  // namespace envforge
