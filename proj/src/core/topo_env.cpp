#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "envforge/core/native_envs.hpp"
#include "envforge/core/rng.hpp"

namespace envforge {
namespace {

struct TaskGraph {
  std::vector<std::string> tasks;
  std::vector<std::pair<std::string, std::string>> edges;
};

TaskGraph graph_from_document(const Document& payload) {
  try {
    TaskGraph g;
    g.tasks = payload.at("tasks").get<std::vector<std::string>>();
    for (const auto& e : payload.at("dependencies")) {
      g.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid task graph payload: ") + e.what());
  }
}

// Kahn's algorithm taking the alphabetically smallest ready task; nullopt on
// a cycle.
std::optional<std::vector<std::string>> kahn_order(const TaskGraph& g) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& t : g.tasks) indegree[t] = 0;
  for (const auto& [from, to] : g.edges) {
    if (!indegree.count(from) || !indegree.count(to)) {
      throw std::invalid_argument("dependency references an unknown task");
    }
    succ[from].push_back(to);
    ++indegree[to];
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [t, deg] : indegree) {
    if (deg == 0) ready.push(t);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    auto t = ready.top();
    ready.pop();
    order.push_back(t);
    for (const auto& s : succ[t]) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }
  if (order.size() != indegree.size()) return std::nullopt;
  return order;
}

std::vector<std::string> split_order(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.emplace_back(t);
    current.clear();
  };
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\n' || c == '\t' || c == '>') {
      flush();
    } else if (c != '-') {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

TopologicalOrderEnvironment::TopologicalOrderEnvironment(std::string env_id,
                                                         NativeOptions options)
    : id_(std::move(env_id)), options_(std::move(options)) {}

Document TopologicalOrderEnvironment::generate_payload(DifficultyLevel difficulty,
                                                       std::uint64_t instance_seed) {
  Rng rng(instance_seed);
  const int n = 3 + 2 * difficulty.value();
  std::vector<std::string> tasks;
  for (int i = 0; i < n; ++i) tasks.emplace_back(1, static_cast<char>('A' + i));

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  std::set<std::pair<int, int>> edges;
  std::vector<std::vector<int>> preds(n);
  for (int pos = 1; pos < n; ++pos) {
    const int picks = static_cast<int>(rng.uniform_int(1, std::min(2, pos)));
    for (int k = 0; k < picks; ++k) {
      const int from = order[rng.uniform_int(0, pos - 1)];
      if (edges.insert({from, order[pos]}).second) preds[order[pos]].push_back(from);
    }
  }
  if (rng.bernoulli(0.25)) {
    // Close a cycle t -> u -> v -> t when a two-step chain exists.
    for (int pos = n - 1; pos > 0; --pos) {
      const int v = order[pos];
      bool closed = false;
      for (int u : preds[v]) {
        if (!preds[u].empty()) {
          edges.insert({v, preds[u].front()});
          closed = true;
          break;
        }
      }
      if (closed) break;
      if (pos == 1) edges.insert({v, preds[v].front()});
    }
  }
  Document deps = Document::array();
  for (const auto& [from, to] : edges) deps.push_back({tasks[from], tasks[to]});
  return Document{{"tasks", tasks}, {"dependencies", deps}};
}

std::vector<InstanceParams> TopologicalOrderEnvironment::sample(DifficultyLevel difficulty,
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

Observation TopologicalOrderEnvironment::observe(const InstanceParams& instance) const {
  const auto g = graph_from_document(instance.payload);
  std::ostringstream q;
  q << "Schedule the following " << g.tasks.size() << " tasks: ";
  for (std::size_t i = 0; i < g.tasks.size(); ++i) q << (i ? ", " : "") << g.tasks[i];
  q << ".\nEach dependency \"X -> Y\" means task X must be completed before task Y starts.\n"
    << "Dependencies:\n";
  for (const auto& [from, to] : g.edges) q << from << " -> " << to << '\n';
  q << "\nGive an order of all tasks that respects every dependency, as a comma-separated "
       "list. If no such order exists because the dependencies contain a cycle, answer "
       "CYCLE.\n\n";
  const std::string hint =
      options_.pattern.open_tag + "A, B, C, ... or CYCLE" + options_.pattern.close_tag;
  q << "Answer: " << hint;
  return {q.str(), hint};
}

Verdict TopologicalOrderEnvironment::verify(const InstanceParams& instance,
                                            const Response& response) const {
  const auto g = graph_from_document(instance.payload);
  const auto answer = extract_answer(response.text, options_.pattern, options_.selection);
  if (!answer) return Verdict::failure(ErrorKind::extraction_failed, "no answer block");
  const auto reference = kahn_order(g);
  const std::string claimed = upper(trim(*answer));
  if (!reference) return claimed == "CYCLE" ? Verdict::correct() : Verdict::incorrect();
  if (claimed == "CYCLE") return Verdict::incorrect();

  const auto proposed = split_order(*answer);
  if (proposed.size() != g.tasks.size()) return Verdict::incorrect();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < proposed.size(); ++i) {
    if (!position.emplace(proposed[i], i).second) return Verdict::incorrect();
  }
  for (const auto& t : g.tasks) {
    if (!position.count(t)) return Verdict::incorrect();
  }
  for (const auto& [from, to] : g.edges) {
    if (position[from] > position[to]) return Verdict::incorrect();
  }
  return Verdict::correct();
}

std::optional<std::string> TopologicalOrderEnvironment::reference_answer(
    const InstanceParams& instance) const {
  const auto order = kahn_order(graph_from_document(instance.payload));
  if (!order) return "CYCLE";
  std::string out;
  for (std::size_t i = 0; i < order->size(); ++i) out += (i ? ", " : "") + (*order)[i];
  return out;
}

}  // namespace envforge
