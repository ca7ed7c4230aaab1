#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "envforge/core/environment.hpp"
#include "envforge/synth/prompts.hpp"
#include "envforge/synth/provider.hpp"
#include "envforge/synth/spec.hpp"

namespace envforge::synth {

// Shared inputs of the synthesis and judging calls.
struct StageContext {
  LlmProvider* provider = nullptr;
  const PromptLibrary* prompts = nullptr;
  SamplingParams sampling{};
  AuditLog* audit = nullptr;
};

struct SynthesisOutcome {
  std::vector<EnvironmentSpec> drafts;
  int provider_calls = 0;
  int parse_failures = 0;
  int provider_errors = 0;
  bool exhausted = false;
  std::vector<std::string> errors;
};

// One provider call per attempt; responses that do not define the three
// required functions are dropped and counted. Exhaustion stops early.
SynthesisOutcome synthesize_environments(const std::string& keyword, const StageContext& ctx,
                                         int attempts = 8);

// Parses a judge reply: the first JSON object (fenced or bare) holding every
// flag of the stage as a boolean. Returns nullopt when that fails.
std::optional<JudgeVerdict> parse_judge_reply(std::string_view reply, JudgeStage stage);

// Code review. Requires status draft or revised (std::logic_error). An
// incomplete bundle fails without a provider call; an unparseable reply is
// asked again once and then fails with "judge output unparseable". The
// verdict is appended to spec.judge_records.
JudgeVerdict judge_stage1(EnvironmentSpec& spec, const StageContext& ctx);

// Question review over probes_per_level questions at each level 1..5,
// rendered by `env`. Requires a passing code review as the last record
// (std::logic_error). Runner failures fail with "probe generation failed".
JudgeVerdict judge_stage2(EnvironmentSpec& spec, const Environment& env, const StageContext& ctx,
                          int probes_per_level = 3, std::uint64_t seed = 0);

// Asks for a corrected bundle given the original source and the accumulated
// issues. Requires status judged_fail and revision_count 0 (std::logic_error).
// Provider errors propagate and leave the spec unchanged.
void revise(EnvironmentSpec& spec, const StageContext& ctx);

struct SmokeResult {
  bool ok = false;
  std::string detail;
};

// One generate/observe/verify round trip at difficulty 1.
SmokeResult smoke_test(const Environment& env, std::uint64_t seed = 0);

}  // namespace envforge::synth
