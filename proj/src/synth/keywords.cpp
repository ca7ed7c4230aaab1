#include "envforge/synth/keywords.hpp"

#include <cctype>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace envforge::synth {
namespace {

std::vector<std::string> words_of(const std::string& phrase) {
  std::istringstream in(phrase);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string normalize(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    for (char c : w) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

const std::vector<std::string>& builtin_keywords() {
  static const std::vector<std::string> kKeywords = {
    "Array traversal", "Backtracking", "Boolean Evaluation", "Boolean Logic",
    "Chain of Dependencies", "Circuit Design", "Connected Components (graph)",
    "Constraint Satisfaction", "Coordinate System", "Counting", "Custom Operators",
    "Date Calculation", "Deductive Reasoning", "Direction Tracking", "Dyck Words", "Enumeration",
    "Expression Evaluation", "Expression Transformation", "First-Order Logic", "Geometry", "Grid",
    "Grid Search", "Grid Traversal", "Information Extraction", "Information Retrieval",
    "Interval Analysis", "Knowledge Base", "Lexicographical Order", "Linear Ordering",
    "Linear Search", "Logic Expressions", "Math Operations", "Matrix", "Modal Logic",
    "Number Theory", "Order of Operations", "Parentheses Matching", "Path Finding",
    "Pattern Matching", "Pattern Recognition", "Permutation", "Permutation Cipher",
    "Position Tracking", "Propositional Logic", "Rotation", "Rule-based Reasoning",
    "Sequence Arrangement", "Set Classification", "Set Theory", "Sorting", "Stack",
    "State Transition", "String Manipulation", "String Matching", "Table Analysis",
    "Time Scheduling", "Topological Sort", "Transposition Cipher", "Truth Table", "Word Search",
    "Shortest Paths", "Connected Components", "Stable Matching", "Dynamic Programming",
    "Recursion", "Greedy Algorithms", "Divide and Conquer", "Breadth-First Search",
    "Depth-First Search", "Path Optimization", "Minimum Spanning Tree", "Network Flow",
    "Topological Sorting", "Sliding Window", "Union Find", "Priority Queues", "Linear Programming",
    "Tree Traversal", "Graph Coloring", "Knapsack Problem", "Combinatorial Optimization",
    "Cycle Detection", "Interval Scheduling", "Minimum/Maximum Flow", "Edit Distance",
    "Euler Tours", "Traveling Salesman", "Longest Common Subsequence",
    "Longest Increasing Subsequence", "Item Assignment", "Boolean Satisfiability", "Tabular Data"
  };
  return kKeywords;
}

KeywordSeed seed_keywords(const std::vector<std::string>& extra, bool include_builtin) {
  KeywordSeed seed;
  std::set<std::string> seen;
  auto offer = [&](const std::string& phrase, bool is_extra) {
    const auto words = words_of(phrase);
    if (words.empty() || words.size() > 3) {
      if (is_extra) {
        spdlog::warn("dropping keyword '{}': expected 1-3 words", phrase);
        seed.dropped.push_back(phrase);
      }
      return;
    }
    if (!seen.insert(normalize(words)).second) return;
    std::string joined;
    for (const auto& w : words) joined += (joined.empty() ? "" : " ") + w;
    seed.keywords.push_back(joined);
  };
  if (include_builtin) {
    for (const auto& k : builtin_keywords()) offer(k, false);
  }
  for (const auto& k : extra) offer(k, true);
  return seed;
}

}  // namespace envforge::synth
