#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "envforge/core/document.hpp"
#include "envforge/protocol/sandbox.hpp"

namespace envforge::synth {

// ---------------------------------------------------------------------------
// Bundles

// A source line of this form makes the bundle run on the native runner with
// the named kind instead of the script host.
inline constexpr std::string_view kNativeDirective = "# envforge-native:";

struct Bundle {
  std::string source;
  std::string title;
  std::optional<std::string> native_kind;
  std::vector<std::string> missing;  // required definitions not found

  bool complete() const { return missing.empty() && !source.empty(); }
  Document to_document() const;
  static Bundle from_document(const Document& doc);
};

// Definitions every bundle must provide.
const std::vector<std::string>& required_definitions();

// Takes the first ```python block (or the first fenced block, or the whole
// text), records the "# title:" line and native directive, and lists
// missing required definitions. Never throws.
Bundle parse_bundle(std::string_view text);

// Entry command for a bundle: the native runner for directive bundles,
// otherwise `script_host` followed by bundle.py.
protocol::BundleManifest make_manifest(const std::string& env_id, const Bundle& bundle,
                                       const std::vector<std::string>& script_host);

// ---------------------------------------------------------------------------
// Judging

enum class JudgeStage { code_review, question_review };
std::string_view to_string(JudgeStage s);

struct JudgeVerdict {
  JudgeStage stage = JudgeStage::code_review;
  bool reference_free = false;
  bool computational_advantage = false;
  bool implementation_complete = false;
  bool difficulty_scales = false;
  bool well_specified = false;
  bool loophole_free = false;
  std::vector<std::string> issues;
  bool pass = false;

  Document to_document() const;
  static JudgeVerdict from_document(const Document& doc);
};

// code_review: (reference_free or computational_advantage) and
// implementation_complete and difficulty_scales. question_review:
// well_specified and loophole_free.
bool judge_pass(const JudgeVerdict& v);

// ---------------------------------------------------------------------------
// Environment specs

enum class SpecStatus { draft, judged_fail, revised, accepted, rejected };
std::string_view to_string(SpecStatus s);
SpecStatus spec_status_from_string(std::string_view name);

// draft -> accepted | judged_fail; judged_fail -> revised;
// revised -> accepted | rejected.
bool transition_allowed(SpecStatus from, SpecStatus to);

struct EnvironmentSpec {
  std::string env_id;
  std::string keyword;
  std::string title;
  int attempt = 0;
  Bundle bundle;
  SpecStatus status = SpecStatus::draft;
  std::vector<JudgeVerdict> judge_records;
  int revision_count = 0;
  std::vector<std::string> notes;

  // Throws std::logic_error on an edge outside the lifecycle.
  void advance(SpecStatus to);
  // Issues from every failed verdict so far, in order.
  std::vector<std::string> accumulated_issues() const;

  Document to_document() const;
  static EnvironmentSpec from_document(const Document& doc);
};

// "env-" + 16 hex digits of sha256 over (keyword, attempt, source).
std::string make_env_id(const std::string& keyword, int attempt, const std::string& source);

// Persists specs/<env_id>.json and bundles/<env_id>/{bundle.py,manifest.json}
// under a workspace root.
class SpecStore {
 public:
  SpecStore(std::filesystem::path root, std::vector<std::string> script_host);

  void save(const EnvironmentSpec& spec) const;
  EnvironmentSpec load(const std::string& env_id) const;
  bool exists(const std::string& env_id) const;
  std::vector<std::string> ids() const;  // sorted
  std::vector<EnvironmentSpec> load_all() const;

  std::filesystem::path bundle_dir(const std::string& env_id) const;
  // bundle_dir relative to the root, as stored in verifier references.
  std::string bundle_ref(const std::string& env_id) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> script_host_;
};

}  // namespace envforge::synth
