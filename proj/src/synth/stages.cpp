#include "envforge/synth/stages.hpp"

namespace envforge::synth {
namespace {

constexpr const char* kUnparseable = "judge output unparseable";

std::string judge_once(const StageContext& ctx, const std::string& keyword,
                       const std::string& prompt, const char* stage) {
  return ask(*ctx.provider, ctx.audit, stage, keyword, prompt, ctx.sampling);
}

// Ask, and ask once more when the reply does not parse.
std::optional<JudgeVerdict> judge_with_retry(const StageContext& ctx, const std::string& keyword,
                                             const std::string& prompt, JudgeStage stage,
                                             const char* audit_stage) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto verdict = parse_judge_reply(judge_once(ctx, keyword, prompt, audit_stage), stage);
    if (verdict) return verdict;
  }
  return std::nullopt;
}

JudgeVerdict failed(JudgeStage stage, std::string issue) {
  JudgeVerdict v;
  v.stage = stage;
  v.issues.push_back(std::move(issue));
  v.pass = false;
  return v;
}

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += "- " + i + "\n";
  return out.empty() ? "- (none recorded)\n" : out;
}

}  // namespace

SynthesisOutcome synthesize_environments(const std::string& keyword, const StageContext& ctx,
                                         int attempts) {
  if (attempts < 1) throw std::invalid_argument("attempts must be >= 1");
  SynthesisOutcome out;
  const auto prompt = ctx.prompts->render(kSynthesizePrompt, {{"keyword", keyword}});
  for (int attempt = 0; attempt < attempts; ++attempt) {
    std::string reply;
    try {
      ++out.provider_calls;
      reply = ask(*ctx.provider, ctx.audit, "synth", keyword, prompt, ctx.sampling);
    } catch (const ProviderExhausted& e) {
      out.exhausted = true;
      out.errors.push_back(e.what());
      break;
    } catch (const ProviderError& e) {
      ++out.provider_errors;
      out.errors.push_back(e.what());
      continue;
    }
    auto bundle = parse_bundle(reply);
    if (!bundle.complete()) {
      ++out.parse_failures;
      continue;
    }
    EnvironmentSpec spec;
    spec.env_id = make_env_id(keyword, attempt, bundle.source);
    spec.keyword = keyword;
    spec.title = bundle.title.empty() ? keyword : bundle.title;
    spec.attempt = attempt;
    spec.bundle = std::move(bundle);
    out.drafts.push_back(std::move(spec));
  }
  return out;
}

std::optional<JudgeVerdict> parse_judge_reply(std::string_view reply, JudgeStage stage) {
  const std::vector<std::string> flags =
      stage == JudgeStage::code_review
          ? std::vector<std::string>{"reference_free", "computational_advantage",
                                     "implementation_complete", "difficulty_scales"}
          : std::vector<std::string>{"well_specified", "loophole_free"};
  for (auto open = reply.find('{'); open != std::string_view::npos; open = reply.find('{', open + 1)) {
    for (auto close = reply.rfind('}'); close != std::string_view::npos && close > open;
         close = reply.rfind('}', close - 1)) {
      Document doc;
      try {
        doc = parse_document(reply.substr(open, close - open + 1));
      } catch (const std::exception&) {
        continue;
      }
      if (!doc.is_object()) break;
      bool ok = true;
      for (const auto& f : flags) ok = ok && doc.contains(f) && doc[f].is_boolean();
      if (!ok) break;
      JudgeVerdict v;
      v.stage = stage;
      if (stage == JudgeStage::code_review) {
        v.reference_free = doc["reference_free"].get<bool>();
        v.computational_advantage = doc["computational_advantage"].get<bool>();
        v.implementation_complete = doc["implementation_complete"].get<bool>();
        v.difficulty_scales = doc["difficulty_scales"].get<bool>();
      } else {
        v.well_specified = doc["well_specified"].get<bool>();
        v.loophole_free = doc["loophole_free"].get<bool>();
      }
      if (doc.contains("issues") && doc["issues"].is_array()) {
        for (const auto& i : doc["issues"]) {
          if (i.is_string()) v.issues.push_back(i.get<std::string>());
        }
      }
      v.pass = judge_pass(v);
      return v;
    }
  }
  return std::nullopt;
}

JudgeVerdict judge_stage1(EnvironmentSpec& spec, const StageContext& ctx) {
  if (spec.status != SpecStatus::draft && spec.status != SpecStatus::revised) {
    throw std::logic_error("judge_stage1 needs a draft or revised spec, " + spec.env_id + " is " +
                           std::string(to_string(spec.status)));
  }
  JudgeVerdict verdict;
  if (!spec.bundle.complete()) {
    std::string missing;
    for (const auto& m : spec.bundle.missing) missing += (missing.empty() ? "" : ", ") + m;
    verdict = failed(JudgeStage::code_review,
                     "bundle does not follow the code structure (missing: " + missing + ")");
  } else {
    const auto prompt = ctx.prompts->render(
        kJudgeCodePrompt,
        {{"keyword", spec.keyword}, {"title", spec.title}, {"source", spec.bundle.source}});
    auto parsed = judge_with_retry(ctx, spec.keyword, prompt, JudgeStage::code_review, "judge_code");
    verdict = parsed ? *parsed : failed(JudgeStage::code_review, kUnparseable);
  }
  spec.judge_records.push_back(verdict);
  return verdict;
}

JudgeVerdict judge_stage2(EnvironmentSpec& spec, const Environment& env, const StageContext& ctx,
                          int probes_per_level, std::uint64_t seed) {
  if (probes_per_level < 1) throw std::invalid_argument("probes_per_level must be >= 1");
  if (spec.judge_records.empty() || spec.judge_records.back().stage != JudgeStage::code_review ||
      !spec.judge_records.back().pass) {
    throw std::logic_error("judge_stage2 needs a passing code review for " + spec.env_id);
  }
  JudgeVerdict verdict;
  verdict.stage = JudgeStage::question_review;
  verdict.well_specified = true;
  verdict.loophole_free = true;
  for (int d = kMinDifficulty; d <= kMaxDifficulty; ++d) {
    std::vector<std::string> questions;
    try {
      auto sampled = sample_instances(env, DifficultyLevel(d),
                                      static_cast<std::size_t>(probes_per_level), seed);
      if (!sampled.ok()) throw EnvironmentError(ErrorKind::runner_error, *sampled.error);
      for (const auto& instance : sampled.instances) {
        questions.push_back(render_observation(env, instance).question_text);
      }
    } catch (const std::exception& e) {
      verdict = failed(JudgeStage::question_review, "probe generation failed");
      verdict.issues.push_back("level " + std::to_string(d) + ": " + e.what());
      spec.judge_records.push_back(verdict);
      return verdict;
    }
    for (const auto& q : questions) {
      const auto prompt = ctx.prompts->render(
          kJudgeQuestionPrompt,
          {{"keyword", spec.keyword}, {"difficulty", std::to_string(d)}, {"question", q}});
      auto parsed =
          judge_with_retry(ctx, spec.keyword, prompt, JudgeStage::question_review, "judge_question");
      if (!parsed) {
        verdict = failed(JudgeStage::question_review, kUnparseable);
        spec.judge_records.push_back(verdict);
        return verdict;
      }
      if (!parsed->pass) {
        verdict.well_specified = verdict.well_specified && parsed->well_specified;
        verdict.loophole_free = verdict.loophole_free && parsed->loophole_free;
        std::string issue = "level " + std::to_string(d) + ": ";
        for (const auto& i : parsed->issues) issue += i + "; ";
        issue += "question: " + q;
        verdict.issues.push_back(std::move(issue));
      }
    }
  }
  verdict.pass = judge_pass(verdict);
  spec.judge_records.push_back(verdict);
  return verdict;
}

void revise(EnvironmentSpec& spec, const StageContext& ctx) {
  if (spec.status != SpecStatus::judged_fail) {
    throw std::logic_error("revise needs a judged_fail spec, " + spec.env_id + " is " +
                           std::string(to_string(spec.status)));
  }
  if (spec.revision_count != 0) {
    throw std::logic_error("spec " + spec.env_id + " was already revised");
  }
  const auto prompt = ctx.prompts->render(
      kRevisePrompt, {{"keyword", spec.keyword},
                      {"issues", bullet_list(spec.accumulated_issues())},
                      {"source", spec.bundle.source}});
  const auto reply = ask(*ctx.provider, ctx.audit, "revise", spec.keyword, prompt, ctx.sampling);
  auto bundle = parse_bundle(reply);
  if (!bundle.title.empty()) spec.title = bundle.title;
  spec.bundle = std::move(bundle);
  spec.revision_count += 1;
  spec.advance(SpecStatus::revised);
}

SmokeResult smoke_test(const Environment& env, std::uint64_t seed) {
  try {
    auto sampled = sample_instances(env, DifficultyLevel(kMinDifficulty), 1, seed);
    if (!sampled.ok()) return {false, "generate failed: " + *sampled.error};
    const auto obs = render_observation(env, sampled.instances.front());
    if (obs.question_text.empty()) return {false, "observe returned an empty question"};
    const auto verdict = verify(env, sampled.instances.front(), Response{"<answer>0</answer>"});
    if (verdict.error_kind != ErrorKind::none && verdict.error_kind != ErrorKind::extraction_failed) {
      return {false, "verify failed: " + std::string(to_string(verdict.error_kind)) + " " +
                         verdict.detail};
    }
    return {true, "ok"};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

}  // namespace envforge::synth
