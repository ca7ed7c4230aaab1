#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "envforge/core/document.hpp"

namespace envforge::synth {

struct SamplingParams {
  double temperature = 0.7;
  int max_tokens = 8192;

  // Throws std::invalid_argument on negative temperature or non-positive max_tokens.
  void validate() const;
  Document to_document() const;
  static SamplingParams from_document(const Document& doc);
  bool operator==(const SamplingParams&) const = default;
};

// Transport-level failure. Transient errors are worth one retry.
class ProviderError : public std::runtime_error {
 public:
  explicit ProviderError(const std::string& what, bool transient = true)
      : std::runtime_error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

// Quota or budget exhausted; the pipeline stops and leaves resumable state.
class ProviderExhausted : public ProviderError {
 public:
  explicit ProviderExhausted(const std::string& what) : ProviderError(what, false) {}
};

// Text completion capability. Implementations must be safe to call from
// several threads at once.
class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual std::string complete(const std::string& prompt, const SamplingParams& params) = 0;
  virtual std::string id() const = 0;
};

using ProviderPtr = std::shared_ptr<LlmProvider>;

// ---------------------------------------------------------------------------
// Audit log

struct AuditEntry {
  std::string stage;
  std::string keyword;
  std::string provider;
  SamplingParams params;
  std::string prompt;
  std::string response;

  Document to_document() const;
  static AuditEntry from_document(const Document& doc);
};

// Append-only JSONL log of provider calls. Thread-safe.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(std::filesystem::path file);

  void record(AuditEntry entry);
  std::vector<AuditEntry> entries() const;

  static std::vector<AuditEntry> read(const std::filesystem::path& file);

 private:
  mutable std::mutex mutex_;
  std::optional<std::filesystem::path> file_;
  std::vector<AuditEntry> entries_;
};

// Calls provider.complete and records the exchange when `log` is set.
std::string ask(LlmProvider& provider, AuditLog* log, const std::string& stage,
                const std::string& keyword, const std::string& prompt,
                const SamplingParams& params);

// ---------------------------------------------------------------------------
// Mock provider

// Deterministic canned responses. Rules are checked in order; the first rule
// whose `match` substring occurs in the prompt answers. A rule either carries
// a literal response or names a handler:
//   grid_solver      parses a grid-path question and answers it, correct with
//                    probability accuracy[size] keyed on the prompt hash
//   descriptor_echo  answers a descriptor prompt with one descriptor per task
//   constant         alias for a literal response
class MockProvider final : public LlmProvider {
 public:
  using Handler = std::function<std::string(const std::string& prompt)>;

  struct Rule {
    std::string match;
    std::string response;
    Handler handler;
  };

  MockProvider() = default;
  explicit MockProvider(std::vector<Rule> rules, std::optional<std::string> fallback = {});

  // {"rules":[{"match", "response"|"handler", ...handler options}], "default",
  //  "exhaust_after", "fail_first"}
  static std::shared_ptr<MockProvider> from_document(const Document& doc);
  static std::shared_ptr<MockProvider> load(const std::filesystem::path& file);

  std::string complete(const std::string& prompt, const SamplingParams& params) override;
  std::string id() const override { return "mock"; }

  void add_rule(Rule rule);
  // After this many successful calls every call throws ProviderExhausted.
  void exhaust_after(std::optional<std::uint64_t> calls) { exhaust_after_ = calls; }
  // The first n calls throw a transient ProviderError.
  void fail_first(std::uint64_t n) { fail_first_ = n; }
  std::uint64_t calls() const { return calls_.load(); }

  static Handler grid_solver(std::map<int, double> accuracy_by_size);
  static Handler descriptor_echo();

 private:
  mutable std::mutex mutex_;
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
  std::optional<std::uint64_t> exhaust_after_;
  std::uint64_t fail_first_ = 0;
  std::atomic<std::uint64_t> calls_{0};
  std::uint64_t attempts_ = 0;
};

// ---------------------------------------------------------------------------
// Decorators

// Answers from a recorded audit log. Identical prompts are served in the
// order they were recorded; a prompt missing from the log throws
// ProviderError (non-transient).
class ReplayProvider final : public LlmProvider {
 public:
  explicit ReplayProvider(const std::vector<AuditEntry>& entries);
  std::string complete(const std::string& prompt, const SamplingParams& params) override;
  std::string id() const override { return "replay"; }

 private:
  std::mutex mutex_;
  std::map<std::string, std::deque<std::string>> responses_;
};

// One retry on transient errors, with exponential backoff.
class RetryingProvider final : public LlmProvider {
 public:
  RetryingProvider(ProviderPtr inner, int max_retries = 1,
                   std::chrono::milliseconds base_delay = std::chrono::milliseconds(500));
  std::string complete(const std::string& prompt, const SamplingParams& params) override;
  std::string id() const override { return inner_->id(); }

 private:
  ProviderPtr inner_;
  int max_retries_;
  std::chrono::milliseconds base_delay_;
};

// Token bucket: at most `rate` requests per second with bursts up to `burst`.
class RateLimitedProvider final : public LlmProvider {
 public:
  RateLimitedProvider(ProviderPtr inner, double rate, double burst = 1.0);
  std::string complete(const std::string& prompt, const SamplingParams& params) override;
  std::string id() const override { return inner_->id(); }

 private:
  void acquire();

  ProviderPtr inner_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Live provider

struct LiveProviderConfig {
  std::string base_url = "https://api.anthropic.com";
  std::string model;
  std::string api_key_env = "ANTHROPIC_API_KEY";
  double timeout_seconds = 600.0;

  Document to_document() const;
  static LiveProviderConfig from_document(const Document& doc);
};

// Messages-API client. HTTP 429/5xx and connection errors are transient;
// other 4xx are not. A 402 or an insufficient-quota error is exhaustion.
class LiveProvider final : public LlmProvider {
 public:
  // Throws std::invalid_argument when the model is empty or the key variable is unset.
  explicit LiveProvider(LiveProviderConfig config);
  std::string complete(const std::string& prompt, const SamplingParams& params) override;
  std::string id() const override { return "live:" + config_.model; }

 private:
  LiveProviderConfig config_;
  std::string api_key_;
};

}  // namespace envforge::synth
