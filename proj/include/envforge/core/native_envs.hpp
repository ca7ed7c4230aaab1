#pragma once

// Reference environments implemented natively. They serve as golden oracles
// and as the backends of the protocol conformance fixtures.

#include <cstdint>
#include <string>
#include <vector>

#include "envforge/core/environment.hpp"

namespace envforge {

using Grid = std::vector<std::vector<std::int64_t>>;

// Minimum right/down path sum from the top-left to the bottom-right cell.
// Throws std::invalid_argument for empty, non-square, or non-positive grids.
std::int64_t grid_min_cost(const Grid& grid);

Grid grid_from_document(const Document& doc);

struct NativeOptions {
  AnswerPattern pattern{};
  AnswerSelection selection = AnswerSelection::last;
};

// Grid path cost optimisation: an (d+2)x(d+2) grid of integers in [1, 9].
class GridPathEnvironment final : public Environment {
 public:
  static constexpr const char* kKind = "grid_path_cost";

  explicit GridPathEnvironment(std::string env_id = kKind, NativeOptions options = {});

  const std::string& id() const override { return id_; }
  std::vector<InstanceParams> sample(DifficultyLevel difficulty, std::size_t count,
                                     std::uint64_t seed) const override;
  Observation observe(const InstanceParams& instance) const override;
  Verdict verify(const InstanceParams& instance, const Response& response) const override;
  std::optional<std::string> reference_answer(const InstanceParams& instance) const override;

  static Document generate_payload(DifficultyLevel difficulty, std::uint64_t instance_seed);

 private:
  std::string id_;
  NativeOptions options_;
};

// Dependency ordering. Some instances contain a cycle, in which case the only
// accepted answer is CYCLE; otherwise any order respecting every dependency is
// accepted.
class TopologicalOrderEnvironment final : public Environment {
 public:
  static constexpr const char* kKind = "topological_order";

  explicit TopologicalOrderEnvironment(std::string env_id = kKind, NativeOptions options = {});

  const std::string& id() const override { return id_; }
  std::vector<InstanceParams> sample(DifficultyLevel difficulty, std::size_t count,
                                     std::uint64_t seed) const override;
  Observation observe(const InstanceParams& instance) const override;
  Verdict verify(const InstanceParams& instance, const Response& response) const override;
  std::optional<std::string> reference_answer(const InstanceParams& instance) const override;

  static Document generate_payload(DifficultyLevel difficulty, std::uint64_t instance_seed);

 private:
  std::string id_;
  NativeOptions options_;
};

// Planted 3-SAT: every instance is satisfiable and any satisfying assignment
// is accepted.
class BooleanCspEnvironment final : public Environment {
 public:
  static constexpr const char* kKind = "boolean_csp";

  explicit BooleanCspEnvironment(std::string env_id = kKind, NativeOptions options = {});

  const std::string& id() const override { return id_; }
  std::vector<InstanceParams> sample(DifficultyLevel difficulty, std::size_t count,
                                     std::uint64_t seed) const override;
  Observation observe(const InstanceParams& instance) const override;
  Verdict verify(const InstanceParams& instance, const Response& response) const override;
  std::optional<std::string> reference_answer(const InstanceParams& instance) const override;

  static Document generate_payload(DifficultyLevel difficulty, std::uint64_t instance_seed);

 private:
  std::string id_;
  NativeOptions options_;
};

// Native environment kinds, in registration order.
std::vector<std::string> native_kinds();

// Accepts "<kind>" or "<kind>@<variant>"; the whole string becomes the env id.
// Throws std::invalid_argument for unknown kinds.
EnvironmentPtr make_native_environment(const std::string& env_id, NativeOptions options = {});
// Same, with the kind given separately so any id can carry a native backend.
EnvironmentPtr make_native_environment(const std::string& kind, const std::string& env_id,
                                       NativeOptions options);

std::string native_kind_of(const std::string& env_id);

}  // namespace envforge
