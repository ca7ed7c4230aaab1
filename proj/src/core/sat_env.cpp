#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "envforge/core/native_envs.hpp"
#include "envforge/core/rng.hpp"

namespace envforge {
namespace {

struct Formula {
  int variables = 0;
  std::vector<std::vector<int>> clauses;  // signed 1-based literals
};

Formula formula_from_document(const Document& payload) {
  try {
    Formula f;
    f.variables = payload.at("variables").get<int>();
    f.clauses = payload.at("clauses").get<std::vector<std::vector<int>>>();
    if (f.variables < 1 || f.variables > 30) throw std::invalid_argument("variable count out of range");
    for (const auto& clause : f.clauses) {
      for (int lit : clause) {
        if (lit == 0 || std::abs(lit) > f.variables) {
          throw std::invalid_argument("literal out of range");
        }
      }
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid formula payload: ") + e.what());
  }
}

bool satisfies(const Formula& f, const std::vector<bool>& assignment) {
  for (const auto& clause : f.clauses) {
    bool sat = false;
    for (int lit : clause) {
      const bool value = assignment[std::abs(lit) - 1];
      if ((lit > 0) == value) {
        sat = true;
        break;
      }
    }
    if (!sat) return false;
  }
  return true;
}

}  // namespace

BooleanCspEnvironment::BooleanCspEnvironment(std::string env_id, NativeOptions options)
    : id_(std::move(env_id)), options_(std::move(options)) {}

Document BooleanCspEnvironment::generate_payload(DifficultyLevel difficulty,
                                                 std::uint64_t instance_seed) {
  Rng rng(instance_seed);
  const int n = 2 + 2 * difficulty.value();
  const int m = 4 * n;
  std::vector<bool> planted(n);
  for (int i = 0; i < n; ++i) planted[i] = rng.bernoulli(0.5);

  Document clauses = Document::array();
  while (static_cast<int>(clauses.size()) < m) {
    std::vector<int> vars;
    while (vars.size() < 3) {
      const int v = static_cast<int>(rng.uniform_int(1, n));
      if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
    }
    std::vector<int> clause;
    bool sat = false;
    for (int v : vars) {
      const bool positive = rng.bernoulli(0.5);
      clause.push_back(positive ? v : -v);
      sat = sat || (positive == planted[v - 1]);
    }
    if (sat) clauses.push_back(clause);
  }
  return Document{{"variables", n}, {"clauses", clauses}};
}

std::vector<InstanceParams> BooleanCspEnvironment::sample(DifficultyLevel difficulty,
                                                          std::size_t count,
                                                          std::uint64_t seed) const {
  std::vector<InstanceParams> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto instance = make_instance(id_, difficulty, i, seed, {});
    instance.payload = generate_payload(difficulty, instance.seed);
    out.push_back(std::move(instance));
  }
  return out;
}

Observation BooleanCspEnvironment::observe(const InstanceParams& instance) const {
  const auto f = formula_from_document(instance.payload);
  std::ostringstream q;
  q << "Find a truth assignment for the boolean variables x1.." << "x" << f.variables
    << " that satisfies every clause below. A clause is satisfied when at least one of its "
       "literals is true; NOT xk is true exactly when xk is false.\nClauses:\n";
  for (const auto& clause : f.clauses) {
    q << '(';
    for (std::size_t i = 0; i < clause.size(); ++i) {
      if (i) q << " OR ";
      if (clause[i] < 0) q << "NOT ";
      q << 'x' << std::abs(clause[i]);
    }
    q << ")\n";
  }
  q << "\nAnswer with a string of " << f.variables
    << " bits where the k-th bit is the value of xk (1 = true, 0 = false).\n\n";
  const std::string hint = options_.pattern.open_tag + "BITS" + options_.pattern.close_tag;
  q << "Answer: " << hint;
  return {q.str(), hint};
}

Verdict BooleanCspEnvironment::verify(const InstanceParams& instance,
                                      const Response& response) const {
  const auto f = formula_from_document(instance.payload);
  const auto answer = extract_answer(response.text, options_.pattern, options_.selection);
  if (!answer) return Verdict::failure(ErrorKind::extraction_failed, "no answer block");
  std::vector<bool> assignment;
  for (char c : *answer) {
    if (c == '0' || c == '1') {
      assignment.push_back(c == '1');
    } else if (!std::isspace(static_cast<unsigned char>(c)) && c != ',') {
      return Verdict::failure(ErrorKind::extraction_failed, "answer is not a bit string");
    }
  }
  if (static_cast<int>(assignment.size()) != f.variables) return Verdict::incorrect();
  return satisfies(f, assignment) ? Verdict::correct() : Verdict::incorrect();
}

std::optional<std::string> BooleanCspEnvironment::reference_answer(
    const InstanceParams& instance) const {
  const auto f = formula_from_document(instance.payload);
  std::vector<bool> assignment(f.variables);
  for (std::uint64_t mask = 0; mask < (1ULL << f.variables); ++mask) {
    for (int i = 0; i < f.variables; ++i) assignment[i] = (mask >> i) & 1U;
    if (satisfies(f, assignment)) {
      std::string bits;
      for (bool b : assignment) bits.push_back(b ? '1' : '0');
      return bits;
    }
  }
  return std::nullopt;
}

}  // namespace envforge
