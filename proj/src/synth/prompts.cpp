#include "envforge/synth/prompts.hpp"

#include <stdexcept>

#include "envforge/core/document.hpp"
#include "envforge/synth/embedded_prompts.hpp"

namespace envforge::synth {

PromptLibrary::PromptLibrary() {
  for (const auto& [name, text] : embedded::kPrompts) templates_[std::string(name)] = std::string(text);
}

PromptLibrary::PromptLibrary(const std::filesystem::path& dir) : PromptLibrary() {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("prompt directory " + dir.string() + " does not exist");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    templates_[entry.path().stem().string()] = read_file(entry.path());
  }
}

const std::string& PromptLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw std::out_of_range("unknown prompt template " + name);
  return it->second;
}

std::vector<std::string> PromptLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : templates_) out.push_back(name);
  return out;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& vars) const {
  return fill_template(get(name), vars);
}

std::string fill_template(std::string_view text, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = vars.find(std::string(text.substr(i + 1, close - i - 1)));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

}  // namespace envforge::synth
