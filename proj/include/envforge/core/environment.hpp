#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "envforge/core/answer.hpp"
#include "envforge/core/types.hpp"

namespace envforge {

// Raised by environments whose backing process or generator failed.
class EnvironmentError : public std::runtime_error {
 public:
  EnvironmentError(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// A reasoning environment: an instance sampler parameterized by difficulty,
// an observation renderer, and a verifier. Implementations must be read-only
// after construction so one object can serve concurrent workers.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const std::string& id() const = 0;

  // Exactly `count` instances tagged with `difficulty`; instance i carries
  // derive_instance_seed(id(), difficulty, i, seed).
  virtual std::vector<InstanceParams> sample(DifficultyLevel difficulty, std::size_t count,
                                             std::uint64_t seed) const = 0;

  virtual Observation observe(const InstanceParams& instance) const = 0;

  // May throw; callers go through envforge::verify() which never does.
  virtual Verdict verify(const InstanceParams& instance, const Response& response) const = 0;

  // A response the verifier accepts, when the environment has a native
  // solver. Used by closure checks and oracle-backed mock solvers.
  virtual std::optional<std::string> reference_answer(const InstanceParams&) const {
    return std::nullopt;
  }
};

using EnvironmentPtr = std::shared_ptr<const Environment>;

struct SampleOutcome {
  std::vector<InstanceParams> instances;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

// Precondition n >= 1 (std::invalid_argument). Runner failures come back as
// an empty list plus the error text.
SampleOutcome sample_instances(const Environment& env, DifficultyLevel difficulty,
                               std::size_t count, std::uint64_t seed);

// Throws std::invalid_argument when the instance belongs to another env.
Observation render_observation(const Environment& env, const InstanceParams& instance);

// Total: every failure mode, including exceptions and env mismatch, is
// encoded as a zero-reward errored Verdict. Latency is filled in here.
Verdict verify(const Environment& env, const InstanceParams& instance,
               const Response& response) noexcept;

// Builds the instance for `index` of a native generator; shared by the
// native environments and the protocol runner so both derive identical seeds.
InstanceParams make_instance(const std::string& env_id, DifficultyLevel difficulty,
                             std::uint64_t index, std::uint64_t seed, Document payload);

// Helper for the common integer-answer verifier: extracts the selected
// answer block and compares it as a non-negative decimal integer.
Verdict verify_integer_answer(const Response& response, std::int64_t expected,
                              const AnswerPattern& pattern, AnswerSelection selection);

}  // namespace envforge
