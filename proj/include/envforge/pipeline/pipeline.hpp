#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "envforge/calib/calibration.hpp"
#include "envforge/dataset/catalog.hpp"
#include "envforge/dataset/dataset.hpp"
#include "envforge/diversity/diversity.hpp"
#include "envforge/protocol/sandbox.hpp"
#include "envforge/synth/provider.hpp"

namespace envforge::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigInvalid = 2;
inline constexpr int kExitProviderExhausted = 3;
inline constexpr int kExitPortUnavailable = 4;

enum class Stage { keywords, synth, judge, calibrate, gen, entropy, all };
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view name);
// The concrete stages `all` runs, in order.
const std::vector<Stage>& pipeline_stages();

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ProviderSettings {
  std::string kind = "mock";  // mock | live
  std::filesystem::path mock_file;
  synth::LiveProviderConfig live;
  int max_retries = 1;
  int retry_backoff_ms = 500;
  double rate_per_second = 0.0;  // 0 disables rate limiting
  double burst = 1.0;
};

struct EmbedderSettings {
  std::string kind = "hashing";  // hashing | remote
  std::size_t dimension = 768;
  diversity::RemoteEmbedderConfig remote;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 4;
  std::optional<std::filesystem::path> workspace;
  ProviderSettings provider;
  synth::SamplingParams sampling;
  protocol::SandboxPolicy sandbox;

  bool include_builtin_keywords = true;
  std::vector<std::string> extra_keywords;

  int attempts_per_keyword = 8;
  std::vector<std::string> script_host{"python3", "-m", "envforge_shim"};
  std::optional<std::filesystem::path> prompt_dir;

  bool smoke_test = true;
  int probes_per_level = 3;

  calib::CalibrationParams calibration;
  bool calibration_seed_set = false;

  // Keyed by file stem; a dataset without dataset_seed takes `seed`.
  std::map<std::string, dataset::DatasetConfig> datasets;
  std::map<std::string, bool> dataset_seed_set;

  std::string entropy_dataset = "train";
  std::size_t descriptor_batch = 20;
  EmbedderSettings embedder;
  std::vector<double> taus = diversity::default_taus();

  int serve_port = 8000;
  std::string serve_dataset = "train";

  // Relative paths resolve against `base_dir`. Unknown keys and invalid
  // values throw ConfigError.
  static PipelineConfig from_document(const Document& doc, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& file);

  // Replaces the seed everywhere it was defaulted.
  void override_seed(std::uint64_t value);

  // Resolved settings, excluding the workspace path and credentials.
  Document to_document() const;
};

// Layout of a workspace directory.
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path keywords_file() const { return root_ / "keywords.json"; }
  std::filesystem::path specs_dir() const { return root_ / "specs"; }
  std::filesystem::path calibration_file(const std::string& env_id) const;
  std::filesystem::path curve_file(const std::string& env_id) const;
  std::filesystem::path datasets_dir() const { return root_ / "datasets"; }
  std::filesystem::path dataset_manifest(const std::string& name) const;
  std::filesystem::path entropy_dir() const { return root_ / "entropy"; }
  std::filesystem::path state_dir() const { return root_ / "state"; }
  std::filesystem::path scratch_dir() const { return root_ / "tmp"; }
  std::filesystem::path report_file() const { return root_ / "report.json"; }
  // A fresh (truncated) audit file for one work unit.
  std::filesystem::path audit_file(const std::string& stage, const std::string& unit) const;

 private:
  std::filesystem::path root_;
};

// sha256 over the sorted (relative path, content hash) list of the
// workspace, skipping report.json, audit/, logs/ and tmp/.
std::string workspace_hash(const std::filesystem::path& root);

synth::ProviderPtr make_provider(const ProviderSettings& settings);
std::unique_ptr<diversity::Embedder> make_embedder(const EmbedderSettings& settings);

struct StageSummary {
  int processed = 0;
  int skipped = 0;
  bool exhausted = false;
  std::vector<std::string> errors;
};

struct RunReport {
  std::string stage;
  std::uint64_t seed = 0;
  std::string provider;
  std::map<std::string, StageSummary> stages;
  std::map<std::string, int> spec_status;  // persisted counts per lifecycle status
  std::map<std::string, int> calibration;  // persisted counts per decision
  std::map<std::string, std::size_t> datasets;  // records per dataset file
  std::size_t entropy_points = 0;
  std::string workspace_hash;
  int exit_code = kExitOk;

  Document to_document() const;
};

// Counts read back from a workspace.
void fill_persisted_counts(const Workspace& ws, RunReport& report);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path workspace, synth::ProviderPtr provider);

  // Runs the stage (every stage in order for `all`), writes report.json and
  // returns it. Stops at the first stage that exhausts the provider
  // (exit 3) or fails (exit 1).
  RunReport run(Stage stage);

  // Work units each stage would process next, without touching the workspace.
  Document plan(Stage stage) const;

  StageSummary run_keywords();
  StageSummary run_synth();
  StageSummary run_judge();
  StageSummary run_calibrate();
  StageSummary run_gen();
  StageSummary run_entropy();

  // Accepted specs as bundle references under the workspace.
  std::shared_ptr<dataset::Catalog> catalog() const;
  // Accepted specs whose calibration decision is keep, sorted.
  std::vector<std::string> kept_env_ids() const;

 private:
  PipelineConfig config_;
  Workspace ws_;
  synth::ProviderPtr provider_;
};

// Catalog over the environments a dataset manifest lists.
std::shared_ptr<dataset::Catalog> catalog_from_manifest(const Document& manifest, const std::filesystem::path& root,
                                       const protocol::SandboxPolicy& policy);

}  // namespace envforge::pipeline
