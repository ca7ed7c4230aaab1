#include "envforge/core/environment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <charconv>

namespace envforge {

SampleOutcome sample_instances(const Environment& env, DifficultyLevel difficulty,
                               std::size_t count, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("sample_instances: count must be >= 1");
  SampleOutcome out;
  try {
    out.instances = env.sample(difficulty, count, seed);
    if (out.instances.size() != count) {
      out.error = "environment returned " + std::to_string(out.instances.size()) +
                  " instances, expected " + std::to_string(count);
      out.instances.clear();
    }
  } catch (const std::exception& e) {
    out.instances.clear();
    out.error = e.what();
  }
  return out;
}

Observation render_observation(const Environment& env, const InstanceParams& instance) {
  if (instance.env_id != env.id()) {
    throw std::invalid_argument("instance belongs to '" + instance.env_id + "', not '" +
                                env.id() + "'");
  }
  return env.observe(instance);
}

Verdict verify(const Environment& env, const InstanceParams& instance,
               const Response& response) noexcept {
  const auto start = std::chrono::steady_clock::now();
  Verdict verdict;
  try {
    if (instance.env_id != env.id()) {
      verdict = Verdict::failure(ErrorKind::runner_error, "instance env_id mismatch");
    } else {
      verdict = env.verify(instance, response);
      if (!verdict.valid()) {
        verdict = Verdict::failure(ErrorKind::runner_error, "verifier produced an invalid verdict");
      }
    }
  } catch (const EnvironmentError& e) {
    verdict = Verdict::failure(e.kind(), e.what());
  } catch (const std::bad_alloc&) {
    verdict = Verdict::failure(ErrorKind::resource_limit, "allocation failed");
  } catch (const std::exception& e) {
    verdict = Verdict::failure(ErrorKind::runner_error, e.what());
  } catch (...) {
    verdict = Verdict::failure(ErrorKind::runner_error, "unknown exception");
  }
  verdict.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  return verdict;
}

InstanceParams make_instance(const std::string& env_id, DifficultyLevel difficulty,
                             std::uint64_t index, std::uint64_t seed, Document payload) {
  InstanceParams instance;
  instance.env_id = env_id;
  instance.difficulty = difficulty;
  instance.seed = derive_instance_seed(env_id, difficulty.value(), index, seed);
  instance.payload = std::move(payload);
  return instance;
}

Verdict verify_integer_answer(const Response& response, std::int64_t expected,
                              const AnswerPattern& pattern, AnswerSelection selection) {
  const auto answer = extract_answer(response.text, pattern, selection);
  if (!answer) return Verdict::failure(ErrorKind::extraction_failed, "no answer block");
  const auto digits = trim(*answer);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                     [](unsigned char c) { return std::isdigit(c) != 0; })) {
    return Verdict::failure(ErrorKind::extraction_failed, "answer is not a non-negative integer");
  }
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    // Out of range for int64: cannot equal any cost we compute.
    return Verdict::incorrect();
  }
  return value == expected ? Verdict::correct() : Verdict::incorrect();
}

}  // namespace envforge
