#include "envforge/synth/spec.hpp"

#include <algorithm>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace envforge::synth {
namespace {

std::string_view fenced_body(std::string_view text) {
  for (std::string_view opener : {"```python", "```py\n", "```"}) {
    const auto start = text.find(opener);
    if (start == std::string_view::npos) continue;
    const auto body = text.find('\n', start);
    if (body == std::string_view::npos) continue;
    const auto end = text.find("```", body + 1);
    if (end == std::string_view::npos) return text.substr(body + 1);
    return text.substr(body + 1, end - body - 1);
  }
  return text;
}

}  // namespace

const std::vector<std::string>& required_definitions() {
  static const std::vector<std::string> kNames = {"generate_instance", "render_question", "verify"};
  return kNames;
}

Document Bundle::to_document() const {
  Document doc{{"source", source}, {"title", title}, {"missing", missing}};
  doc["native_kind"] = native_kind ? Document(*native_kind) : Document(nullptr);
  return doc;
}

Bundle Bundle::from_document(const Document& doc) {
  Bundle b;
  b.source = doc.at("source").get<std::string>();
  b.title = doc.value("title", std::string());
  if (doc.contains("native_kind") && !doc["native_kind"].is_null()) {
    b.native_kind = doc["native_kind"].get<std::string>();
  }
  b.missing = doc.value("missing", std::vector<std::string>{});
  return b;
}

Bundle parse_bundle(std::string_view text) {
  Bundle b;
  b.source = std::string(fenced_body(text));
  if (!b.source.empty() && b.source.back() != '\n') b.source.push_back('\n');
  for (const auto& name : required_definitions()) {
    const std::regex def("(^|\\n)[ \\t]*def[ \\t]+" + name + "[ \\t]*\\(");
    if (!std::regex_search(b.source, def)) b.missing.push_back(name);
  }
  std::istringstream in(b.source);
  std::string line;
  const std::regex title(R"(^#\s*title:\s*(.*\S)\s*$)");
  const std::regex native(R"(^# envforge-native:\s*(\S+)\s*$)");
  std::smatch m;
  while (std::getline(in, line)) {
    if (b.title.empty() && std::regex_match(line, m, title)) b.title = m[1].str();
    if (!b.native_kind && std::regex_match(line, m, native)) b.native_kind = m[1].str();
  }
  if (b.source == "\n") b.source.clear();
  return b;
}

protocol::BundleManifest make_manifest(const std::string& env_id, const Bundle& bundle,
                                       const std::vector<std::string>& script_host) {
  protocol::BundleManifest m;
  m.env_id = env_id;
  if (bundle.native_kind) {
    m.entry_command = {"envforge-runner", "--id", env_id, "--kind", *bundle.native_kind};
  } else {
    m.entry_command = script_host;
    m.entry_command.push_back("bundle.py");
  }
  return m;
}

std::string_view to_string(JudgeStage s) {
  return s == JudgeStage::code_review ? "code_review" : "question_review";
}

bool judge_pass(const JudgeVerdict& v) {
  if (v.stage == JudgeStage::code_review) {
    return (v.reference_free || v.computational_advantage) && v.implementation_complete &&
           v.difficulty_scales;
  }
  return v.well_specified && v.loophole_free;
}

Document JudgeVerdict::to_document() const {
  return Document{{"stage", std::string(to_string(stage))},
                  {"reference_free", reference_free},
                  {"computational_advantage", computational_advantage},
                  {"implementation_complete", implementation_complete},
                  {"difficulty_scales", difficulty_scales},
                  {"well_specified", well_specified},
                  {"loophole_free", loophole_free},
                  {"issues", issues},
                  {"pass", pass}};
}

JudgeVerdict JudgeVerdict::from_document(const Document& doc) {
  JudgeVerdict v;
  v.stage = doc.at("stage").get<std::string>() == "code_review" ? JudgeStage::code_review
                                                                 : JudgeStage::question_review;
  v.reference_free = doc.value("reference_free", false);
  v.computational_advantage = doc.value("computational_advantage", false);
  v.implementation_complete = doc.value("implementation_complete", false);
  v.difficulty_scales = doc.value("difficulty_scales", false);
  v.well_specified = doc.value("well_specified", false);
  v.loophole_free = doc.value("loophole_free", false);
  v.issues = doc.value("issues", std::vector<std::string>{});
  v.pass = doc.value("pass", false);
  return v;
}

std::string_view to_string(SpecStatus s) {
  switch (s) {
    case SpecStatus::draft: return "draft";
    case SpecStatus::judged_fail: return "judged_fail";
    case SpecStatus::revised: return "revised";
    case SpecStatus::accepted: return "accepted";
    case SpecStatus::rejected: return "rejected";
  }
  return "draft";
}

SpecStatus spec_status_from_string(std::string_view name) {
  for (auto s : {SpecStatus::draft, SpecStatus::judged_fail, SpecStatus::revised,
                 SpecStatus::accepted, SpecStatus::rejected}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown spec status '" + std::string(name) + "'");
}

bool transition_allowed(SpecStatus from, SpecStatus to) {
  switch (from) {
    case SpecStatus::draft: return to == SpecStatus::accepted || to == SpecStatus::judged_fail;
    case SpecStatus::judged_fail: return to == SpecStatus::revised;
    case SpecStatus::revised: return to == SpecStatus::accepted || to == SpecStatus::rejected;
    case SpecStatus::accepted:
    case SpecStatus::rejected: return false;
  }
  return false;
}

void EnvironmentSpec::advance(SpecStatus to) {
  if (!transition_allowed(status, to)) {
    throw std::logic_error("illegal lifecycle transition " + std::string(to_string(status)) +
                           " -> " + std::string(to_string(to)) + " for " + env_id);
  }
  status = to;
}

std::vector<std::string> EnvironmentSpec::accumulated_issues() const {
  std::vector<std::string> out;
  for (const auto& v : judge_records) {
    if (v.pass) continue;
    out.insert(out.end(), v.issues.begin(), v.issues.end());
  }
  return out;
}

Document EnvironmentSpec::to_document() const {
  Document records = Document::array();
  for (const auto& v : judge_records) records.push_back(v.to_document());
  return Document{{"env_id", env_id},
                  {"keyword", keyword},
                  {"title", title},
                  {"attempt", attempt},
                  {"bundle", bundle.to_document()},
                  {"status", std::string(to_string(status))},
                  {"judge_records", records},
                  {"revision_count", revision_count},
                  {"notes", notes}};
}

EnvironmentSpec EnvironmentSpec::from_document(const Document& doc) {
  EnvironmentSpec s;
  s.env_id = doc.at("env_id").get<std::string>();
  s.keyword = doc.at("keyword").get<std::string>();
  s.title = doc.value("title", std::string());
  s.attempt = doc.value("attempt", 0);
  s.bundle = Bundle::from_document(doc.at("bundle"));
  s.status = spec_status_from_string(doc.at("status").get<std::string>());
  for (const auto& v : doc.value("judge_records", Document::array())) {
    s.judge_records.push_back(JudgeVerdict::from_document(v));
  }
  s.revision_count = doc.value("revision_count", 0);
  s.notes = doc.value("notes", std::vector<std::string>{});
  if (s.revision_count > 1) throw std::invalid_argument("spec " + s.env_id + " revised twice");
  return s;
}

std::string make_env_id(const std::string& keyword, int attempt, const std::string& source) {
  return "env-" +
         sha256_hex(canonical_dump(Document::array({keyword, attempt, source}))).substr(0, 16);
}

SpecStore::SpecStore(std::filesystem::path root, std::vector<std::string> script_host)
    : root_(std::move(root)), script_host_(std::move(script_host)) {}

std::filesystem::path SpecStore::bundle_dir(const std::string& env_id) const {
  return root_ / bundle_ref(env_id);
}

std::string SpecStore::bundle_ref(const std::string& env_id) const { return "bundles/" + env_id; }

void SpecStore::save(const EnvironmentSpec& spec) const {
  const auto dir = bundle_dir(spec.env_id);
  write_file_atomic(dir / "bundle.py", spec.bundle.source);
  const auto manifest = make_manifest(spec.env_id, spec.bundle, script_host_);
  write_file_atomic(dir / "manifest.json", manifest.to_document().dump(2) + "\n");
  write_file_atomic(root_ / "specs" / (spec.env_id + ".json"), spec.to_document().dump(2) + "\n");
}

EnvironmentSpec SpecStore::load(const std::string& env_id) const {
  return EnvironmentSpec::from_document(
      parse_document(read_file(root_ / "specs" / (env_id + ".json"))));
}

bool SpecStore::exists(const std::string& env_id) const {
  return std::filesystem::exists(root_ / "specs" / (env_id + ".json"));
}

std::vector<std::string> SpecStore::ids() const {
  std::vector<std::string> out;
  const auto dir = root_ / "specs";
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    // Skip sibling reports such as <id>.calibration.json.
    if (entry.path().extension() == ".json" && entry.path().stem().extension().empty()) {
      out.push_back(entry.path().stem().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<EnvironmentSpec> SpecStore::load_all() const {
  std::vector<EnvironmentSpec> out;
  for (const auto& id : ids()) out.push_back(load(id));
  return out;
}

}  // namespace envforge::synth
