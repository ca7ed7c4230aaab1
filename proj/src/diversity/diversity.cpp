#include "envforge/diversity/diversity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <queue>
#include <sstream>

#include <spdlog/spdlog.h>

#include "envforge/core/answer.hpp"

namespace envforge::diversity {
namespace {

struct UnionFind {
  std::vector<std::size_t> parent, size;
  explicit UnionFind(std::size_t n) : parent(n), size(n, 1) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size[a] < size[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
  }
};

struct Edge {
  double d;
  std::size_t i, j;
};

double norm(const Embedding& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_embeddings(const std::vector<Embedding>& e) {
  for (const auto& v : e) {
    if (v.size() != e.front().size()) throw std::invalid_argument("embedding dimensions differ");
    for (double x : v) {
      if (!std::isfinite(x)) throw std::invalid_argument("embedding has a non-finite entry");
    }
  }
}

std::vector<Edge> sorted_edges(const std::vector<Embedding>& e) {
  std::vector<double> norms;
  for (const auto& v : e) {
    norms.push_back(norm(v));
    if (norms.back() == 0.0) throw std::invalid_argument("cosine distance of a zero vector");
  }
  std::vector<Edge> edges;
  edges.reserve(e.size() * (e.size() - 1) / 2);
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < e[i].size(); ++k) dot += e[i][k] * e[j][k];
      edges.push_back({1.0 - dot / (norms[i] * norms[j]), i, j});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.d < b.d; });
  return edges;
}

ClusterAssignment assignment_from(UnionFind& uf) {
  ClusterAssignment a;
  std::map<std::size_t, int> label_of_root;
  for (std::size_t i = 0; i < uf.parent.size(); ++i) {
    const auto root = uf.find(i);
    auto [it, inserted] = label_of_root.emplace(root, static_cast<int>(a.sizes.size()));
    if (inserted) a.sizes.push_back(0);
    a.labels.push_back(it->second);
    ++a.sizes[it->second];
  }
  return a;
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(12) << v;
  return o.str();
}

}  // namespace

const std::string_view kDescriptorPrompt =
    R"(You are an expert at analyzing reasoning tasks and categorizing them by their specific logical patterns and problem structures.

{task_section}

TASK: For each task, provide a detailed descriptor that captures the specific core reasoning pattern and problem structure.

INSTRUCTIONS:
1. Describe the exact logical operations required (e.g., "Grid pathfinding with sum constraints", "Sequence alternation pattern detection", "Combinatorial placement with mutual exclusion")
2. Include key constraints and problem mechanics, not just high-level categories
3. Distinguish between tasks that might share keywords but have different reasoning patterns
4. Be specific enough to differentiate similar-seeming tasks
5. Focus on what makes each task's reasoning unique

RESPONSE FORMAT:
Return a JSON object where each key is the task identifier and the value is the detailed descriptor.

Example:
{
  "TASK_0": "Grid pathfinding with cumulative sum optimization and directional movement constraints",
  "TASK_1": "Sequential pattern recognition with alternating increase-decrease validation",
  "TASK_2": "Constraint satisfaction with backtracking and mutual exclusion rules"
}

RESPONSE:)";

std::string task_section(const std::vector<std::string>& tasks, std::size_t first_index) {
  std::string out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "TASK_" + std::to_string(first_index + i) + ": " + tasks[i];
  }
  return out;
}

std::string descriptor_prompt(const std::vector<std::string>& tasks, std::size_t first_index) {
  std::string prompt(kDescriptorPrompt);
  const std::string marker = "{task_section}";
  prompt.replace(prompt.find(marker), marker.size(), task_section(tasks, first_index));
  return prompt;
}

std::map<std::string, std::string> parse_descriptor_response(std::string_view response) {
  // Try every '{' from the left against the last '}' first, then shorter spans.
  const auto last = response.rfind('}');
  if (last == std::string_view::npos) throw std::invalid_argument("no JSON object in response");
  for (auto open = response.find('{'); open != std::string_view::npos && open < last;
       open = response.find('{', open + 1)) {
    Document doc;
    try {
      doc = parse_document(response.substr(open, last - open + 1));
    } catch (const std::exception&) {
      continue;
    }
    if (!doc.is_object()) continue;
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : doc.items()) {
      if (value.is_string()) out[key] = value.get<std::string>();
    }
    return out;
  }
  throw std::invalid_argument("no JSON object in response");
}

DescriptorCache::DescriptorCache(std::filesystem::path file) : file_(std::move(file)) {
  if (std::filesystem::exists(*file_)) {
    const auto doc = parse_document(read_file(*file_));
    for (const auto& [key, value] : doc.items()) entries_[key] = value.get<std::string>();
  }
}

std::optional<std::string> DescriptorCache::get(const std::string& task_text) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(sha256_hex(task_text));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void DescriptorCache::put(const std::string& task_text, const std::string& descriptor) {
  std::lock_guard lock(mutex_);
  entries_[sha256_hex(task_text)] = descriptor;
}

void DescriptorCache::save() const {
  if (!file_) return;
  std::lock_guard lock(mutex_);
  write_file_atomic(*file_, Document(entries_).dump(2) + "\n");
}

DescriptorRun generate_descriptors(const std::vector<std::string>& tasks,
                                   synth::LlmProvider& provider, std::size_t batch_size,
                                   const synth::SamplingParams& params, synth::AuditLog* audit,
                                   DescriptorCache* cache) {
  if (tasks.empty()) throw std::invalid_argument("generate_descriptors needs at least one task");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  DescriptorRun run;
  std::vector<std::optional<std::string>> found(tasks.size());
  if (cache != nullptr) {
    for (std::size_t i = 0; i < tasks.size(); ++i) found[i] = cache->get(tasks[i]);
  }
  for (std::size_t start = 0; start < tasks.size(); start += batch_size) {
    const std::size_t end = std::min(tasks.size(), start + batch_size);
    bool cached = true;
    for (std::size_t i = start; i < end; ++i) cached = cached && found[i].has_value();
    if (cached) continue;
    const std::vector<std::string> batch(tasks.begin() + start, tasks.begin() + end);
    const auto prompt = descriptor_prompt(batch, start);
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
      problem.clear();
      std::map<std::string, std::string> parsed;
      try {
        ++run.provider_calls;
        parsed = parse_descriptor_response(
            synth::ask(provider, audit, "descriptors", "", prompt, params));
      } catch (const synth::ProviderExhausted&) {
        throw;
      } catch (const std::exception& e) {
        problem = e.what();
        continue;
      }
      for (std::size_t i = start; i < end; ++i) {
        auto it = parsed.find("TASK_" + std::to_string(i));
        if (it != parsed.end() && !trim(it->second).empty()) found[i] = it->second;
      }
      std::size_t missing = 0;
      for (std::size_t i = start; i < end; ++i) missing += found[i] ? 0 : 1;
      if (missing == 0) break;
      problem = std::to_string(missing) + " task(s) without a descriptor";
    }
    if (cache != nullptr) {
      for (std::size_t i = start; i < end; ++i) {
        if (found[i]) cache->put(tasks[i], *found[i]);
      }
    }
    if (!problem.empty()) {
      run.errors.push_back("batch TASK_" + std::to_string(start) + "..TASK_" +
                           std::to_string(end - 1) + ": " + problem);
    }
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!found[i]) continue;
    run.descriptors.push_back({"TASK_" + std::to_string(i), *found[i]});
  }
  return run;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<Embedding> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<std::string> words;
    std::string word;
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else if (!word.empty()) {
        words.push_back(std::move(word));
        word.clear();
      }
    }
    if (!word.empty()) words.push_back(std::move(word));
    Embedding v(dimension_, 0.0);
    auto add = [&](const std::string& feature, double weight) {
      const auto h = hash64(feature);
      v[h % dimension_] += (h >> 63) ? -weight : weight;
    };
    for (std::size_t i = 0; i < words.size(); ++i) {
      add(words[i], 1.0);
      if (i + 1 < words.size()) add(words[i] + ' ' + words[i + 1], 0.5);
    }
    const double n = norm(v);
    if (n > 0) {
      for (double& x : v) x /= n;
    }
    out.push_back(std::move(v));
  }
  return out;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw std::invalid_argument("embedding dimensions differ");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine distance of a zero vector");
  double dot = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (na * nb);
}

double cosine_distance(const Embedding& a, const Embedding& b) {
  return 1.0 - cosine_similarity(a, b);
}

Linkage linkage_from_string(std::string_view name) {
  if (name == "single") return Linkage::single;
  throw std::invalid_argument("unsupported linkage '" + std::string(name) +
                              "'; only single linkage is implemented");
}

ClusterAssignment cluster(const std::vector<Embedding>& embeddings, double tau, Linkage) {
  if (embeddings.empty()) throw std::invalid_argument("cluster needs at least one embedding");
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be >= 0");
  check_embeddings(embeddings);
  UnionFind uf(embeddings.size());
  for (const auto& e : sorted_edges(embeddings)) {
    if (!(e.d < tau)) break;
    uf.unite(e.i, e.j);
  }
  return assignment_from(uf);
}

double shannon_entropy(const std::vector<std::size_t>& sizes) {
  double n = 0;
  for (auto s : sizes) n += static_cast<double>(s);
  double h = 0;
  for (auto s : sizes) {
    if (s == 0) continue;
    const double p = static_cast<double>(s) / n;
    h -= p * std::log2(p);
  }
  return h == 0.0 ? 0.0 : h;
}

double shannon_entropy(const ClusterAssignment& assignment) {
  return shannon_entropy(assignment.sizes);
}

std::vector<EntropyCurvePoint> entropy_curve(const std::vector<Embedding>& embeddings,
                                             const std::vector<double>& taus, Linkage) {
  if (embeddings.empty()) throw std::invalid_argument("entropy_curve needs embeddings");
  if (!std::is_sorted(taus.begin(), taus.end())) {
    throw std::invalid_argument("taus must be ascending");
  }
  for (double t : taus) {
    if (!(t >= 0.0)) throw std::invalid_argument("tau must be >= 0");
  }
  check_embeddings(embeddings);
  const auto edges = sorted_edges(embeddings);
  UnionFind uf(embeddings.size());
  std::size_t next = 0;
  std::vector<EntropyCurvePoint> curve;
  for (double tau : taus) {
    while (next < edges.size() && edges[next].d < tau) {
      uf.unite(edges[next].i, edges[next].j);
      ++next;
    }
    const auto a = assignment_from(uf);
    curve.push_back({tau, a.count(), shannon_entropy(a)});
  }
  return curve;
}

std::vector<double> default_taus() {
  std::vector<double> taus;
  for (int s = 95; s >= 50; s -= 5) taus.push_back((100 - s) / 100.0);
  return taus;
}

std::string curve_csv(const std::vector<EntropyCurvePoint>& curve) {
  std::ostringstream out;
  out << "tau,clusters,entropy_bits\n";
  for (const auto& p : curve) out << fmt(p.tau) << ',' << p.cluster_count << ',' << fmt(p.entropy_bits) << '\n';
  return out.str();
}

Document curve_series(const std::vector<EntropyCurvePoint>& curve) {
  Document doc{{"tau", Document::array()},
               {"similarity", Document::array()},
               {"clusters", Document::array()},
               {"entropy_bits", Document::array()}};
  for (const auto& p : curve) {
    doc["tau"].push_back(p.tau);
    doc["similarity"].push_back(1.0 - p.tau);
    doc["clusters"].push_back(p.cluster_count);
    doc["entropy_bits"].push_back(p.entropy_bits);
  }
  return doc;
}

Document SimilaritySummary::to_document() const {
  return Document{{"mean", mean},           {"top_threshold", top_threshold},
                  {"top_mean", top_mean},   {"pairs", pairs},
                  {"embedded_a", embedded_a}, {"embedded_b", embedded_b},
                  {"errors", errors}};
}

namespace {

class TopK {
 public:
  explicit TopK(std::size_t k) : k_(std::max<std::size_t>(1, k)) {}
  void push(double v) {
    if (heap_.size() < k_) {
      heap_.push(v);
    } else if (v > heap_.top()) {
      heap_.pop();
      heap_.push(v);
    }
  }
  // Keeps only the largest `k` values and returns them ascending.
  std::vector<double> take(std::size_t k) {
    std::vector<double> out;
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    if (out.size() > k) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(k));
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<double, std::vector<double>, std::greater<>> heap_;
};

std::size_t top_count(std::size_t pairs, double fraction) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pairs) - 1e-9)));
}

void finish(SimilaritySummary& s, double sum, TopK& top, double fraction) {
  if (s.pairs == 0) return;
  s.mean = sum / static_cast<double>(s.pairs);
  const auto values = top.take(top_count(s.pairs, fraction));
  s.top_threshold = values.front();
  s.top_mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace

SimilaritySummary similarity_summary(const std::vector<Embedding>& a,
                                     const std::vector<Embedding>& b, double top_fraction) {
  if (a.empty() || b.empty()) throw std::invalid_argument("similarity needs two non-empty sets");
  SimilaritySummary s;
  s.embedded_a = a.size();
  s.embedded_b = b.size();
  TopK top(top_count(a.size() * b.size(), top_fraction));
  double sum = 0;
  for (const auto& x : a) {
    for (const auto& y : b) {
      const double v = cosine_similarity(x, y);
      sum += v;
      top.push(v);
      ++s.pairs;
    }
  }
  finish(s, sum, top, top_fraction);
  return s;
}

SimilaritySummary cross_dataset_similarity(const std::vector<std::string>& captions_a,
                                           const std::vector<std::string>& captions_b,
                                           Embedder& embedder, double top_fraction,
                                           std::size_t batch_size) {
  if (captions_a.empty() || captions_b.empty()) {
    throw std::invalid_argument("similarity needs two non-empty caption lists");
  }
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw std::invalid_argument("top_fraction must lie in (0, 1]");
  }
  batch_size = std::max<std::size_t>(1, batch_size);
  SimilaritySummary s;
  std::vector<Embedding> a;
  for (std::size_t start = 0; start < captions_a.size(); start += batch_size) {
    const std::vector<std::string> batch(
        captions_a.begin() + start, captions_a.begin() + std::min(captions_a.size(), start + batch_size));
    try {
      for (auto& e : embedder.embed(batch)) a.push_back(std::move(e));
      s.embedded_a += batch.size();
    } catch (const std::exception& e) {
      s.errors.push_back("a[" + std::to_string(start) + "]: " + e.what());
    }
  }
  if (a.empty()) return s;
  TopK top(top_count(a.size() * captions_b.size(), top_fraction));
  double sum = 0;
  for (std::size_t start = 0; start < captions_b.size(); start += batch_size) {
    const std::vector<std::string> batch(
        captions_b.begin() + start, captions_b.begin() + std::min(captions_b.size(), start + batch_size));
    std::vector<Embedding> b;
    try {
      b = embedder.embed(batch);
    } catch (const std::exception& e) {
      s.errors.push_back("b[" + std::to_string(start) + "]: " + e.what());
      continue;
    }
    s.embedded_b += b.size();
    for (const auto& x : a) {
      for (const auto& y : b) {
        const double v = cosine_similarity(x, y);
        sum += v;
        top.push(v);
        ++s.pairs;
      }
    }
  }
  finish(s, sum, top, top_fraction);
  return s;
}

}  // namespace envforge::diversity
