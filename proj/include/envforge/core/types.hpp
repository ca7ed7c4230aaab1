#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "envforge/core/document.hpp"

namespace envforge {

inline constexpr int kMinDifficulty = 1;
inline constexpr int kMaxDifficulty = 5;
inline constexpr int kDifficultyLevels = kMaxDifficulty - kMinDifficulty + 1;

class DifficultyLevel {
 public:
  // Throws std::invalid_argument outside [1, 5].
  explicit DifficultyLevel(int level);

  int value() const { return level_; }
  auto operator<=>(const DifficultyLevel&) const = default;

 private:
  int level_;
};

// Structured parameters of one problem instance. The payload alone must be
// enough to verify a response.
struct InstanceParams {
  std::string env_id;
  DifficultyLevel difficulty{kMinDifficulty};
  std::uint64_t seed = 0;
  Document payload = Document::object();

  Document to_document() const;
  static InstanceParams from_document(const Document& doc);
  bool operator==(const InstanceParams&) const = default;
};

std::string serialize(const InstanceParams& instance);

struct Observation {
  std::string question_text;
  std::string answer_format_hint;
};

struct Response {
  std::string text;
};

enum class ErrorKind { none, extraction_failed, runner_error, timeout, resource_limit };

std::string_view to_string(ErrorKind kind);
ErrorKind error_kind_from_string(std::string_view name);

struct Verdict {
  int reward = 0;
  bool errored = false;
  ErrorKind error_kind = ErrorKind::none;
  std::chrono::milliseconds latency{0};
  std::string detail;

  static Verdict correct() { return {1, false, ErrorKind::none, {}, {}}; }
  static Verdict incorrect() { return {0, false, ErrorKind::none, {}, {}}; }
  static Verdict failure(ErrorKind kind, std::string detail = {});

  bool valid() const;
};

}  // namespace envforge
