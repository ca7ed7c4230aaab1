#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "envforge/core/environment.hpp"

namespace envforge::reward {

// Instruction prepended to every training and evaluation question.
inline constexpr std::string_view kPromptPrefix =
    "Solve the following problem step by step. First, think about the reasoning process in the "
    "mind and then provide the answer. The reasoning process is enclosed within <think> </think> "
    "and the final answer is enclosed within <answer> </answer> tags, respectively, i.e., "
    "<think> reasoning process here </think> <answer> answer here</answer>.";

struct TagParse {
  std::optional<std::string> think_text;
  std::optional<std::string> answer_text;
  bool format_ok = false;
};

// format_ok iff the text holds exactly one <think>...</think> block followed by
// exactly one <answer>...</answer> block with only whitespace between them.
// Text before the think block and after the answer block is tolerated.
TagParse parse_tags(std::string_view text);

struct RewardBreakdown {
  int format_score = 0;
  int answer_score = 0;
  int total = 0;

  Document to_document() const;
  bool operator==(const RewardBreakdown&) const = default;
};

// Prefix, blank line, question. Throws std::invalid_argument when the
// question already carries the prefix.
std::string attach_prompt_prefix(const Observation& question);

// The verifier is only consulted when the format is right; verifier errors
// score 0. Never throws.
RewardBreakdown score(const Environment& env, const InstanceParams& instance,
                      const Response& response) noexcept;

// Maps an env_id to a live environment; throws when it cannot.
using EnvironmentResolver = std::function<EnvironmentPtr(const std::string& env_id)>;

// Stateless scoring of {record_id, response_text} frames against a fixed
// record index. Thread-safe.
class RewardService {
 public:
  RewardService(std::map<std::string, InstanceParams> records, EnvironmentResolver resolver);

  // One request line in, one reply line out. Malformed or unknown requests
  // produce {"error": ...} replies. Throws only when a known record's
  // environment cannot be resolved.
  std::string handle(std::string_view line) const;

  std::size_t size() const { return records_.size(); }

  // Serves newline-delimited frames until EOF or `stop` is set.
  void serve_stream(std::istream& in, std::ostream& out, const std::atomic<bool>* stop = nullptr) const;

  // Binds 127.0.0.1:port (0 picks a free port, reported through on_bound) and
  // serves each connection on its own thread until `stop` is set. In-flight
  // connections are drained before returning. Throws std::system_error when
  // the port cannot be bound.
  void serve_tcp(int port, const std::atomic<bool>& stop,
                 const std::function<void(int)>& on_bound = {}) const;

 private:
  std::map<std::string, InstanceParams> records_;
  EnvironmentResolver resolver_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, EnvironmentPtr> cache_;

  EnvironmentPtr resolve(const std::string& env_id) const;
};

}  // namespace envforge::reward
