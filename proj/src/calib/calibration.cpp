#include "envforge/calib/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "envforge/reward/harness.hpp"

namespace envforge::calib {
namespace {

constexpr double kTolerance = 1e-10;
constexpr int kMaxIterations = 100;

struct LevelCounts {
  double d;
  double n;
  double s;
};

std::vector<LevelCounts> level_counts(const std::vector<SolveTrial>& trials) {
  std::array<LevelCounts, kDifficultyLevels> acc{};
  for (int i = 0; i < kDifficultyLevels; ++i) acc[i].d = kMinDifficulty + i;
  for (const auto& t : trials) {
    auto& c = acc[t.difficulty.value() - kMinDifficulty];
    c.n += 1;
    if (t.correct) c.s += 1;
  }
  std::vector<LevelCounts> out;
  for (const auto& c : acc) {
    if (c.n > 0) out.push_back(c);
  }
  return out;
}

Degeneracy classify(const std::vector<LevelCounts>& levels) {
  double succ = 0, total = 0;
  double min_s = 1e9, max_s = -1e9, min_f = 1e9, max_f = -1e9;
  for (const auto& c : levels) {
    succ += c.s;
    total += c.n;
    if (c.s > 0) {
      min_s = std::min(min_s, c.d);
      max_s = std::max(max_s, c.d);
    }
    if (c.n - c.s > 0) {
      min_f = std::min(min_f, c.d);
      max_f = std::max(max_f, c.d);
    }
  }
  if (succ == total) return Degeneracy::all_correct;
  if (succ == 0) return Degeneracy::all_incorrect;
  if (max_s <= min_f || min_s >= max_f) return Degeneracy::separation;
  return Degeneracy::none;
}

void fit_logistic(const std::vector<LevelCounts>& levels, WaldTestResult& r) {
  double b0 = 0.0, b1 = 0.0;
  auto information = [&](double& i00, double& i01, double& i11, double& g0, double& g1) {
    i00 = i01 = i11 = g0 = g1 = 0.0;
    for (const auto& c : levels) {
      const double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * c.d)));
      const double w = c.n * p * (1.0 - p);
      i00 += w;
      i01 += w * c.d;
      i11 += w * c.d * c.d;
      g0 += c.s - c.n * p;
      g1 += (c.s - c.n * p) * c.d;
    }
  };
  double i00, i01, i11, g0, g1;
  int it = 0;
  while (it < kMaxIterations) {
    ++it;
    information(i00, i01, i11, g0, g1);
    const double det = i00 * i11 - i01 * i01;
    const double s0 = (i11 * g0 - i01 * g1) / det;
    const double s1 = (i00 * g1 - i01 * g0) / det;
    b0 += s0;
    b1 += s1;
    if (std::max(std::abs(s0), std::abs(s1)) < kTolerance) break;
  }
  information(i00, i01, i11, g0, g1);
  r.intercept = b0;
  r.beta_hat = b1;
  r.std_err = std::sqrt(i00 / (i00 * i11 - i01 * i01));
  r.iterations = it;
}

void fit_ols(const std::vector<LevelCounts>& levels, WaldTestResult& r) {
  const double k = static_cast<double>(levels.size());
  double mx = 0, my = 0;
  for (const auto& c : levels) {
    mx += c.d / k;
    my += c.s / c.n / k;
  }
  double sxx = 0, sxy = 0;
  for (const auto& c : levels) {
    sxx += (c.d - mx) * (c.d - mx);
    sxy += (c.d - mx) * (c.s / c.n - my);
  }
  r.beta_hat = sxy / sxx;
  r.intercept = my - r.beta_hat * mx;
  double ssr = 0, syy = 0;
  for (const auto& c : levels) {
    const double e = c.s / c.n - (r.intercept + r.beta_hat * c.d);
    ssr += e * e;
    syy += (c.s / c.n - my) * (c.s / c.n - my);
  }
  // An exact fit leaves rounding residue; treat it as zero residual.
  if (ssr <= 1e-14 * syy) ssr = 0.0;
  r.std_err = levels.size() > 2 ? std::sqrt(ssr / (k - 2) / sxx) : 0.0;
  r.iterations = 1;
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace

Document SolveTrial::to_document() const {
  return Document{{"env_id", env_id},
                  {"difficulty", difficulty.value()},
                  {"instance_seed", instance_seed},
                  {"correct", correct},
                  {"error_kind", std::string(to_string(error_kind))}};
}

SolveTrial SolveTrial::from_document(const Document& doc) {
  SolveTrial t;
  t.env_id = doc.at("env_id").get<std::string>();
  t.difficulty = DifficultyLevel(doc.at("difficulty").get<int>());
  t.instance_seed = doc.at("instance_seed").get<std::uint64_t>();
  t.correct = doc.at("correct").get<bool>();
  t.error_kind = error_kind_from_string(doc.value("error_kind", std::string("none")));
  return t;
}

SolveRateCurve SolveRateCurve::from_trials(const std::vector<SolveTrial>& trials) {
  SolveRateCurve curve;
  for (int d = kMinDifficulty; d <= kMaxDifficulty; ++d) curve.points.push_back({d, 0, 0, 0.0});
  for (const auto& t : trials) {
    auto& p = curve.points[t.difficulty.value() - kMinDifficulty];
    ++p.trials;
    if (t.correct) ++p.successes;
  }
  for (auto& p : curve.points) {
    p.rate = p.trials > 0 ? static_cast<double>(p.successes) / p.trials : 0.0;
  }
  return curve;
}

Document SolveRateCurve::to_document() const {
  Document out = Document::array();
  for (const auto& p : points) {
    out.push_back(
        {{"difficulty", p.difficulty}, {"trials", p.trials}, {"successes", p.successes}, {"rate", p.rate}});
  }
  return out;
}

std::string SolveRateCurve::to_csv() const {
  std::ostringstream out;
  out << "difficulty,trials,successes,rate\n";
  for (const auto& p : points) {
    out << p.difficulty << ',' << p.trials << ',' << p.successes << ',' << fmt(p.rate) << '\n';
  }
  return out.str();
}

std::string_view to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::none: return "none";
    case Degeneracy::all_correct: return "all_correct";
    case Degeneracy::all_incorrect: return "all_incorrect";
    case Degeneracy::separation: return "separation";
  }
  return "none";
}

std::string_view to_string(TestMethod m) { return m == TestMethod::ols ? "ols" : "logistic"; }

TestMethod test_method_from_string(std::string_view name) {
  if (name == "logistic") return TestMethod::logistic;
  if (name == "ols") return TestMethod::ols;
  throw std::invalid_argument("unknown test method '" + std::string(name) + "'");
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::keep: return "keep";
    case Decision::discard: return "discard";
    case Decision::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

Document WaldTestResult::to_document() const {
  return Document{{"beta_hat", beta_hat},     {"intercept", intercept},
                  {"std_err", std_err},       {"z", z},
                  {"p_value", p_value},       {"reject_null", reject_null},
                  {"degenerate", std::string(to_string(degenerate))},
                  {"iterations", iterations}, {"method", std::string(to_string(method))}};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

WaldTestResult wald_test(const std::vector<SolveTrial>& trials, double alpha, TestMethod method) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const auto levels = level_counts(trials);
  if (levels.size() < 2) {
    throw std::invalid_argument("wald_test needs trials at two or more difficulty levels");
  }
  WaldTestResult r;
  r.method = method;
  r.degenerate = classify(levels);
  if (r.degenerate == Degeneracy::all_correct || r.degenerate == Degeneracy::all_incorrect) {
    return r;
  }
  if (method == TestMethod::logistic) {
    if (r.degenerate == Degeneracy::separation) return r;
    fit_logistic(levels, r);
  } else {
    r.degenerate = Degeneracy::none;
    fit_ols(levels, r);
    if (!(r.std_err > 0.0) || !std::isfinite(r.std_err)) {
      r.degenerate = Degeneracy::separation;
      return r;
    }
  }
  r.z = r.beta_hat / r.std_err;
  r.p_value = normal_cdf(r.z);
  r.reject_null = r.beta_hat < 0.0 && r.p_value < alpha;
  return r;
}

Document CalibrationParams::to_document() const {
  return Document{{"samples_per_level", samples_per_level},
                  {"alpha", alpha},
                  {"method", std::string(to_string(method))},
                  {"min_coverage", min_coverage},
                  {"seed", seed},
                  {"sampling", sampling.to_document()}};
}

CalibrationParams CalibrationParams::from_document(const Document& doc) {
  CalibrationParams p;
  for (const auto& [key, value] : doc.items()) {
    if (key == "samples_per_level") {
      p.samples_per_level = value.get<int>();
    } else if (key == "alpha") {
      p.alpha = value.get<double>();
    } else if (key == "method") {
      p.method = test_method_from_string(value.get<std::string>());
    } else if (key == "min_coverage") {
      p.min_coverage = value.get<double>();
    } else if (key == "seed") {
      p.seed = value.get<std::uint64_t>();
    } else if (key == "sampling") {
      p.sampling = synth::SamplingParams::from_document(value);
    } else {
      throw std::invalid_argument("unknown calibration key '" + key + "'");
    }
  }
  if (p.samples_per_level < 1) throw std::invalid_argument("samples_per_level must be >= 1");
  if (!(p.alpha > 0.0 && p.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(p.min_coverage > 0.0 && p.min_coverage <= 1.0)) {
    throw std::invalid_argument("min_coverage must lie in (0, 1]");
  }
  return p;
}

SolveOutcome solve_environment(const Environment& env, synth::LlmProvider& provider,
                               const CalibrationParams& params, synth::AuditLog* audit) {
  SolveOutcome out;
  out.planned = kDifficultyLevels * params.samples_per_level;
  for (int d = kMinDifficulty; d <= kMaxDifficulty && !out.exhausted; ++d) {
    const DifficultyLevel level(d);
    auto sampled = sample_instances(env, level, static_cast<std::size_t>(params.samples_per_level),
                                    params.seed);
    if (!sampled.ok()) {
      spdlog::warn("{}: sampling level {} failed: {}", env.id(), d, *sampled.error);
      out.error = *sampled.error;
      continue;
    }
    for (const auto& instance : sampled.instances) {
      SolveTrial trial{env.id(), level, instance.seed, false, ErrorKind::none};
      std::string prompt;
      try {
        prompt = reward::attach_prompt_prefix(render_observation(env, instance));
      } catch (const std::exception& e) {
        trial.error_kind = ErrorKind::runner_error;
        out.trials.push_back(trial);
        continue;
      }
      std::string response;
      try {
        response = synth::ask(provider, audit, "calibrate", env.id(), prompt, params.sampling);
      } catch (const synth::ProviderExhausted& e) {
        out.exhausted = true;
        out.error = e.what();
        break;
      } catch (const synth::ProviderError& e) {
        ++out.provider_errors;
        out.error = e.what();
        continue;
      }
      const auto verdict = verify(env, instance, Response{response});
      trial.correct = verdict.reward == 1;
      trial.error_kind = verdict.error_kind;
      out.trials.push_back(trial);
    }
  }
  return out;
}

Document CalibrationReport::to_document() const {
  Document doc{{"env_id", env_id},
               {"curve", curve.to_document()},
               {"decision", std::string(to_string(decision))},
               {"planned_trials", planned_trials},
               {"completed_trials", completed_trials},
               {"provider_errors", provider_errors},
               {"exhausted", exhausted},
               {"note", note}};
  doc["test"] = test ? test->to_document() : Document(nullptr);
  return doc;
}

CalibrationReport CalibrationReport::from_document(const Document& doc) {
  CalibrationReport r;
  r.env_id = doc.at("env_id").get<std::string>();
  for (const auto& p : doc.at("curve")) {
    r.curve.points.push_back({p.at("difficulty").get<int>(), p.at("trials").get<int>(),
                              p.at("successes").get<int>(), p.at("rate").get<double>()});
  }
  const auto decision = doc.at("decision").get<std::string>();
  r.decision = decision == "keep"      ? Decision::keep
               : decision == "discard" ? Decision::discard
                                       : Decision::inconclusive;
  r.planned_trials = doc.at("planned_trials").get<int>();
  r.completed_trials = doc.at("completed_trials").get<int>();
  r.provider_errors = doc.value("provider_errors", 0);
  r.exhausted = doc.value("exhausted", false);
  r.note = doc.value("note", std::string());
  if (doc.contains("test") && !doc["test"].is_null()) {
    const auto& t = doc["test"];
    WaldTestResult w;
    w.beta_hat = t.at("beta_hat").get<double>();
    w.intercept = t.at("intercept").get<double>();
    w.std_err = t.at("std_err").get<double>();
    w.z = t.at("z").get<double>();
    w.p_value = t.at("p_value").get<double>();
    w.reject_null = t.at("reject_null").get<bool>();
    const auto deg = t.at("degenerate").get<std::string>();
    w.degenerate = deg == "all_correct"     ? Degeneracy::all_correct
                   : deg == "all_incorrect" ? Degeneracy::all_incorrect
                   : deg == "separation"    ? Degeneracy::separation
                                            : Degeneracy::none;
    w.iterations = t.at("iterations").get<int>();
    w.method = test_method_from_string(t.at("method").get<std::string>());
    r.test = w;
  }
  return r;
}

CalibrationReport decide(const std::string& env_id, const std::vector<SolveTrial>& trials,
                         int planned, const CalibrationParams& params) {
  CalibrationReport report;
  report.env_id = env_id;
  report.curve = SolveRateCurve::from_trials(trials);
  report.planned_trials = planned;
  report.completed_trials = static_cast<int>(trials.size());
  if (report.completed_trials < params.min_coverage * planned) {
    report.decision = Decision::inconclusive;
    report.note = "only " + std::to_string(report.completed_trials) + " of " +
                  std::to_string(planned) + " planned trials completed";
    return report;
  }
  try {
    report.test = wald_test(trials, params.alpha, params.method);
  } catch (const std::invalid_argument& e) {
    report.decision = Decision::inconclusive;
    report.note = e.what();
    return report;
  }
  report.decision = report.test->reject_null ? Decision::keep : Decision::discard;
  switch (report.test->degenerate) {
    case Degeneracy::all_correct: report.note = "trivial: every trial solved"; break;
    case Degeneracy::all_incorrect: report.note = "impossible: no trial solved"; break;
    case Degeneracy::separation: report.note = "outcomes separated by difficulty"; break;
    case Degeneracy::none:
      report.note = report.test->reject_null ? "solve rate falls with difficulty"
                                             : "no significant decrease with difficulty";
      break;
  }
  return report;
}

CalibrationReport calibrate(const Environment& env, synth::LlmProvider& provider,
                            const CalibrationParams& params, synth::AuditLog* audit) {
  auto outcome = solve_environment(env, provider, params, audit);
  auto report = decide(env.id(), outcome.trials, outcome.planned, params);
  report.provider_errors = outcome.provider_errors;
  report.exhausted = outcome.exhausted;
  if (outcome.exhausted && report.decision != Decision::inconclusive) {
    // A partial run may not be the run the seed would produce; re-run later.
    report.decision = Decision::inconclusive;
    report.note = "provider exhausted: " + outcome.error.value_or("");
  }
  return report;
}

}  // namespace envforge::calib
