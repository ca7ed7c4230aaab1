#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "envforge/core/environment.hpp"
#include "envforge/synth/provider.hpp"

namespace envforge::calib {

struct SolveTrial {
  std::string env_id;
  DifficultyLevel difficulty{kMinDifficulty};
  std::uint64_t instance_seed = 0;
  bool correct = false;
  ErrorKind error_kind = ErrorKind::none;

  Document to_document() const;
  static SolveTrial from_document(const Document& doc);
};

struct CurvePoint {
  int difficulty = 0;
  int trials = 0;
  int successes = 0;
  double rate = 0.0;
};

// One point per level 1..5; levels without trials have trials = 0, rate = 0.
struct SolveRateCurve {
  std::vector<CurvePoint> points;

  static SolveRateCurve from_trials(const std::vector<SolveTrial>& trials);
  Document to_document() const;
  // difficulty,trials,successes,rate
  std::string to_csv() const;
};

enum class Degeneracy { none, all_correct, all_incorrect, separation };
std::string_view to_string(Degeneracy d);

enum class TestMethod { logistic, ols };
std::string_view to_string(TestMethod m);
TestMethod test_method_from_string(std::string_view name);

struct WaldTestResult {
  double beta_hat = 0.0;
  double intercept = 0.0;
  double std_err = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool reject_null = false;
  Degeneracy degenerate = Degeneracy::none;
  int iterations = 0;
  TestMethod method = TestMethod::logistic;

  Document to_document() const;
};

// Standard normal CDF.
double normal_cdf(double z);

// One-sided test of H0: slope >= 0 against slope < 0 for correct ~ difficulty.
// The logistic fit uses iteratively reweighted least squares until the step
// is below 1e-10 or 100 iterations. The OLS variant regresses the per-level
// rates on difficulty. Throws std::invalid_argument unless trials cover at
// least two levels.
WaldTestResult wald_test(const std::vector<SolveTrial>& trials, double alpha = 0.05,
                         TestMethod method = TestMethod::logistic);

enum class Decision { keep, discard, inconclusive };
std::string_view to_string(Decision d);

struct CalibrationParams {
  int samples_per_level = 16;
  double alpha = 0.05;
  TestMethod method = TestMethod::logistic;
  double min_coverage = 0.8;  // share of planned trials required to decide
  std::uint64_t seed = 0;
  synth::SamplingParams sampling{};

  Document to_document() const;
  static CalibrationParams from_document(const Document& doc);
};

struct SolveOutcome {
  std::vector<SolveTrial> trials;
  int planned = 0;
  int provider_errors = 0;
  bool exhausted = false;
  std::optional<std::string> error;
};

// samples_per_level instances at each level, one provider call each, scored
// by the verifier. Provider failures shorten the trial list; exhaustion stops
// early and sets `exhausted`.
SolveOutcome solve_environment(const Environment& env, synth::LlmProvider& provider,
                               const CalibrationParams& params, synth::AuditLog* audit = nullptr);

struct CalibrationReport {
  std::string env_id;
  SolveRateCurve curve;
  std::optional<WaldTestResult> test;
  Decision decision = Decision::inconclusive;
  int planned_trials = 0;
  int completed_trials = 0;
  int provider_errors = 0;
  bool exhausted = false;
  std::string note;

  Document to_document() const;
  static CalibrationReport from_document(const Document& doc);
};

// Decision from a set of trials: inconclusive below the coverage threshold,
// otherwise keep iff the test rejects.
CalibrationReport decide(const std::string& env_id, const std::vector<SolveTrial>& trials,
                         int planned, const CalibrationParams& params);

CalibrationReport calibrate(const Environment& env, synth::LlmProvider& provider,
                            const CalibrationParams& params, synth::AuditLog* audit = nullptr);

}  // namespace envforge::calib
