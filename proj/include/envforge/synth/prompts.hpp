#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace envforge::synth {

// Versioned prompt templates. The built-in set is compiled in from
// prompts/*.txt; a directory of same-named .txt files overrides it.
class PromptLibrary {
 public:
  PromptLibrary();
  // Files in `dir` replace built-ins with the same stem. Throws
  // std::invalid_argument when the directory does not exist.
  explicit PromptLibrary(const std::filesystem::path& dir);

  // Throws std::out_of_range for unknown names.
  const std::string& get(const std::string& name) const;
  std::vector<std::string> names() const;

  // Replaces each {key} of `vars` in one pass; other braces are left alone,
  // and substituted text is never rescanned.
  std::string render(const std::string& name, const std::map<std::string, std::string>& vars) const;

 private:
  std::map<std::string, std::string> templates_;
};

std::string fill_template(std::string_view text, const std::map<std::string, std::string>& vars);

// Template names used by the pipeline.
inline constexpr const char* kSynthesizePrompt = "synthesize_v1";
inline constexpr const char* kJudgeCodePrompt = "judge_code_v1";
inline constexpr const char* kJudgeQuestionPrompt = "judge_question_v1";
inline constexpr const char* kRevisePrompt = "revise_v1";

}  // namespace envforge::synth
