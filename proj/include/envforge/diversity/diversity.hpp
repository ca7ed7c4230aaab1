#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "envforge/core/document.hpp"
#include "envforge/synth/provider.hpp"

namespace envforge::diversity {

using Embedding = std::vector<double>;

// ---------------------------------------------------------------------------
// Descriptors

struct Descriptor {
  std::string task_id;
  std::string text;
};

// The descriptor prompt, with {task_section} standing for the task listing.
extern const std::string_view kDescriptorPrompt;

// "TASK_<i>: <text>" lines, one per task, i counting from `first_index`.
std::string task_section(const std::vector<std::string>& tasks, std::size_t first_index);
std::string descriptor_prompt(const std::vector<std::string>& tasks, std::size_t first_index);

// Extracts the JSON object from a descriptor response (bare or fenced) and
// returns its string values. Throws std::invalid_argument when no object parses.
std::map<std::string, std::string> parse_descriptor_response(std::string_view response);

// Descriptors keyed by sha256 of the task text, persisted as one JSON file.
class DescriptorCache {
 public:
  DescriptorCache() = default;
  explicit DescriptorCache(std::filesystem::path file);

  std::optional<std::string> get(const std::string& task_text) const;
  void put(const std::string& task_text, const std::string& descriptor);
  void save() const;

 private:
  std::optional<std::filesystem::path> file_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> entries_;
};

struct DescriptorRun {
  std::vector<Descriptor> descriptors;  // in task order; missing tasks omitted
  std::vector<std::string> errors;
  std::size_t provider_calls = 0;
};

// Task i gets id TASK_<i>. Batches whose response does not cover every task
// are retried once; remaining gaps are reported in `errors`.
DescriptorRun generate_descriptors(const std::vector<std::string>& tasks,
                                   synth::LlmProvider& provider, std::size_t batch_size,
                                   const synth::SamplingParams& params = {},
                                   synth::AuditLog* audit = nullptr,
                                   DescriptorCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Embeddings

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string id() const = 0;
};

// Signed feature hashing of lower-cased word unigrams and bigrams, L2
// normalised. Deterministic and offline.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 768);
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
  std::string id() const override { return "hashing-" + std::to_string(dimension_); }

 private:
  std::size_t dimension_;
};

struct RemoteEmbedderConfig {
  std::string base_url;
  std::string path = "/v1/embeddings";
  std::string model;
  std::string api_key_env;  // optional bearer token variable
  double timeout_seconds = 120.0;

  Document to_document() const;
  static RemoteEmbedderConfig from_document(const Document& doc);
};

// POSTs {"model", "input": [...]} and reads data[i].embedding.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
  std::string id() const override { return "remote:" + config_.model; }

 private:
  RemoteEmbedderConfig config_;
};

// ---------------------------------------------------------------------------
// Clustering and entropy

// 1 - a.b / (|a||b|). Throws std::invalid_argument on a dimension mismatch or
// a zero vector.
double cosine_distance(const Embedding& a, const Embedding& b);
double cosine_similarity(const Embedding& a, const Embedding& b);

enum class Linkage { single };
Linkage linkage_from_string(std::string_view name);

struct ClusterAssignment {
  std::vector<int> labels;  // labels[i] = cluster of task i, numbered by first appearance
  std::vector<std::size_t> sizes;

  std::size_t count() const { return sizes.size(); }
};

// Tasks i and j share a cluster iff a chain of pairwise distances < tau
// connects them.
ClusterAssignment cluster(const std::vector<Embedding>& embeddings, double tau,
                          Linkage linkage = Linkage::single);

// -sum p log2 p over cluster proportions.
double shannon_entropy(const std::vector<std::size_t>& sizes);
double shannon_entropy(const ClusterAssignment& assignment);

struct EntropyCurvePoint {
  double tau = 0.0;
  std::size_t cluster_count = 0;
  double entropy_bits = 0.0;
};

// One point per tau; taus must be ascending (std::invalid_argument otherwise).
std::vector<EntropyCurvePoint> entropy_curve(const std::vector<Embedding>& embeddings,
                                             const std::vector<double>& taus,
                                             Linkage linkage = Linkage::single);

// Distance thresholds 1 - s for similarity s = 0.95, 0.90, ..., 0.50, ascending.
std::vector<double> default_taus();

// tau,clusters,entropy_bits
std::string curve_csv(const std::vector<EntropyCurvePoint>& curve);
// {"tau": [...], "similarity": [...], "clusters": [...], "entropy_bits": [...]}
Document curve_series(const std::vector<EntropyCurvePoint>& curve);

// ---------------------------------------------------------------------------
// Cross-dataset similarity

struct SimilaritySummary {
  double mean = 0.0;
  double top_threshold = 0.0;  // smallest similarity inside the top fraction
  double top_mean = 0.0;       // mean similarity inside the top fraction
  std::size_t pairs = 0;
  std::size_t embedded_a = 0;
  std::size_t embedded_b = 0;
  std::vector<std::string> errors;

  Document to_document() const;
};

// Cosine similarity over every (a, b) pair, streamed over batches of b; only
// the top ceil(top_fraction * pairs) values are retained. Batches whose
// embedding fails are skipped and reported.
SimilaritySummary cross_dataset_similarity(const std::vector<std::string>& captions_a,
                                           const std::vector<std::string>& captions_b,
                                           Embedder& embedder, double top_fraction = 0.01,
                                           std::size_t batch_size = 256);

// Same statistics over precomputed embeddings.
SimilaritySummary similarity_summary(const std::vector<Embedding>& a,
                                     const std::vector<Embedding>& b, double top_fraction = 0.01);

}  // namespace envforge::diversity
