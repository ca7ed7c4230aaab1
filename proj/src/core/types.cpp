#include "envforge/core/types.hpp"

#include <stdexcept>

namespace envforge {

DifficultyLevel::DifficultyLevel(int level) : level_(level) {
  if (level < kMinDifficulty || level > kMaxDifficulty) {
    throw std::invalid_argument("difficulty must be in [1, 5], got " + std::to_string(level));
  }
}

Document InstanceParams::to_document() const {
  return Document{{"env_id", env_id},
                  {"difficulty", difficulty.value()},
                  {"seed", seed},
                  {"payload", payload}};
}

InstanceParams InstanceParams::from_document(const Document& doc) {
  try {
    InstanceParams out;
    out.env_id = doc.at("env_id").get<std::string>();
    out.difficulty = DifficultyLevel(doc.at("difficulty").get<int>());
    out.seed = doc.at("seed").get<std::uint64_t>();
    out.payload = doc.at("payload");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid instance document: ") + e.what());
  }
}

std::string serialize(const InstanceParams& instance) {
  return canonical_dump(instance.to_document());
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::none: return "none";
    case ErrorKind::extraction_failed: return "extraction_failed";
    case ErrorKind::runner_error: return "runner_error";
    case ErrorKind::timeout: return "timeout";
    case ErrorKind::resource_limit: return "resource_limit";
  }
  return "runner_error";
}

ErrorKind error_kind_from_string(std::string_view name) {
  if (name == "none") return ErrorKind::none;
  if (name == "extraction_failed") return ErrorKind::extraction_failed;
  if (name == "timeout") return ErrorKind::timeout;
  if (name == "resource_limit") return ErrorKind::resource_limit;
  return ErrorKind::runner_error;
}

Verdict Verdict::failure(ErrorKind kind, std::string detail) {
  if (kind == ErrorKind::none) kind = ErrorKind::runner_error;
  return {0, true, kind, {}, std::move(detail)};
}

bool Verdict::valid() const {
  if (reward != 0 && reward != 1) return false;
  if (errored && reward != 0) return false;
  return (error_kind == ErrorKind::none) == !errored;
}

}  // namespace envforge
