#include "envforge/pipeline/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <mutex>

#include "envforge/core/parallel.hpp"
#include "envforge/protocol/protocol_env.hpp"
#include "envforge/reward/harness.hpp"
#include "envforge/synth/keywords.hpp"
#include "envforge/synth/spec.hpp"
#include "envforge/synth/stages.hpp"

namespace envforge::pipeline {
namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::keywords: return "keywords";
    case Stage::synth: return "synth";
    case Stage::judge: return "judge";
    case Stage::calibrate: return "calibrate";
    case Stage::gen: return "gen";
    case Stage::entropy: return "entropy";
    case Stage::all: return "all";
  }
  return "all";
}

Stage stage_from_string(std::string_view name) {
  for (auto s : {Stage::keywords, Stage::synth, Stage::judge, Stage::calibrate, Stage::gen,
                 Stage::entropy, Stage::all}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> kStages = {Stage::keywords, Stage::synth, Stage::judge,
                                             Stage::calibrate, Stage::gen, Stage::entropy};
  return kStages;
}

// ---------------------------------------------------------------------------

Workspace::Workspace(fs::path root) : root_(std::move(root)) {}

fs::path Workspace::calibration_file(const std::string& env_id) const {
  return specs_dir() / (env_id + ".calibration.json");
}

fs::path Workspace::curve_file(const std::string& env_id) const {
  return specs_dir() / (env_id + ".curve.csv");
}

fs::path Workspace::dataset_manifest(const std::string& name) const {
  return datasets_dir() / (name + ".manifest.json");
}

fs::path Workspace::audit_file(const std::string& stage, const std::string& unit) const {
  const auto file = root_ / "audit" / stage / (unit + ".jsonl");
  fs::create_directories(file.parent_path());
  fs::remove(file);
  return file;
}

std::string workspace_hash(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
       ++it) {
    const auto rel = fs::relative(it->path(), root).generic_string();
    if (it->is_directory()) {
      if (rel == "logs" || rel == "tmp" || rel == "audit") it.disable_recursion_pending();
      continue;
    }
    if (rel == "report.json") continue;
    files.emplace_back(rel, sha256_hex(read_file(it->path())));
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& [rel, digest] : files) listing += rel + '\t' + digest + '\n';
  return sha256_hex(listing);
}

synth::ProviderPtr make_provider(const ProviderSettings& settings) {
  synth::ProviderPtr provider;
  if (settings.kind == "mock") {
    if (settings.mock_file.empty()) throw ConfigError("mock provider needs provider.mock_file");
    try {
      provider = synth::MockProvider::load(settings.mock_file);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  } else if (settings.kind == "live") {
    try {
      provider = std::make_shared<synth::LiveProvider>(settings.live);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else {
    throw ConfigError("unknown provider kind '" + settings.kind + "'");
  }
  if (settings.rate_per_second > 0) {
    provider = std::make_shared<synth::RateLimitedProvider>(provider, settings.rate_per_second,
                                                            settings.burst);
  }
  if (settings.max_retries > 0) {
    provider = std::make_shared<synth::RetryingProvider>(
        provider, settings.max_retries, std::chrono::milliseconds(settings.retry_backoff_ms));
  }
  return provider;
}

std::unique_ptr<diversity::Embedder> make_embedder(const EmbedderSettings& settings) {
  if (settings.kind == "remote") return std::make_unique<diversity::RemoteEmbedder>(settings.remote);
  return std::make_unique<diversity::HashingEmbedder>(settings.dimension);
}

// ---------------------------------------------------------------------------

Document RunReport::to_document() const {
  Document stages_doc = Document::object();
  for (const auto& [name, s] : stages) {
    stages_doc[name] = Document{{"processed", s.processed},
                                {"skipped", s.skipped},
                                {"exhausted", s.exhausted},
                                {"errors", s.errors}};
  }
  return Document{{"stage", stage},
                  {"seed", seed},
                  {"provider", provider},
                  {"stages", stages_doc},
                  {"spec_status", spec_status},
                  {"calibration", calibration},
                  {"datasets", datasets},
                  {"entropy_points", entropy_points},
                  {"workspace_hash", workspace_hash},
                  {"exit_code", exit_code}};
}

void fill_persisted_counts(const Workspace& ws, RunReport& report) {
  report.spec_status.clear();
  for (auto s : {synth::SpecStatus::draft, synth::SpecStatus::judged_fail, synth::SpecStatus::revised,
                 synth::SpecStatus::accepted, synth::SpecStatus::rejected}) {
    report.spec_status[std::string(synth::to_string(s))] = 0;
  }
  report.calibration = {{"keep", 0}, {"discard", 0}, {"inconclusive", 0}};
  const synth::SpecStore store(ws.root(), {});
  for (const auto& spec : store.load_all()) {
    ++report.spec_status[std::string(synth::to_string(spec.status))];
    if (fs::exists(ws.calibration_file(spec.env_id))) {
      const auto cal = calib::CalibrationReport::from_document(
          parse_document(read_file(ws.calibration_file(spec.env_id))));
      ++report.calibration[std::string(calib::to_string(cal.decision))];
    }
  }
  report.datasets.clear();
  if (fs::exists(ws.datasets_dir())) {
    for (const auto& entry : fs::directory_iterator(ws.datasets_dir())) {
      const auto name = entry.path().filename().string();
      const std::string suffix = ".manifest.json";
      if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        continue;
      }
      const auto manifest = parse_document(read_file(entry.path()));
      report.datasets[name.substr(0, name.size() - suffix.size())] =
          manifest.at("record_count").get<std::size_t>();
    }
  }
  report.entropy_points = 0;
  const auto curve = ws.entropy_dir() / "curve.json";
  if (fs::exists(curve)) {
    report.entropy_points = parse_document(read_file(curve)).at("series").at("tau").size();
  }
}

std::shared_ptr<dataset::Catalog> catalog_from_manifest(const Document& manifest,
                                                       const fs::path& root,
                                                       const protocol::SandboxPolicy& policy) {
  auto catalog = std::make_shared<dataset::Catalog>(root, policy);
  for (const auto& env : manifest.at("environments")) {
    catalog->add(env.at("env_id").get<std::string>(),
                dataset::VerifierRef::parse(env.at("verifier_ref").get<std::string>()));
  }
  return catalog;
}

// ---------------------------------------------------------------------------

namespace {

std::string unit_key(const std::string& text) { return sha256_hex(text).substr(0, 16); }

// Runs one unit per index on the worker pool. Exhaustion stops the remaining
// units; any other failure is recorded against its unit.
template <typename Fn>
void run_units(std::size_t n, std::size_t workers, StageSummary& summary, Fn&& unit) {
  std::atomic<bool> exhausted{false};
  std::mutex mutex;
  parallel_for(n, workers, [&](std::size_t i) {
    if (exhausted) return;
    std::string error;
    try {
      unit(i);
      std::lock_guard lock(mutex);
      ++summary.processed;
      return;
    } catch (const synth::ProviderExhausted& e) {
      exhausted = true;
      error = std::string("provider exhausted: ") + e.what();
    } catch (const std::exception& e) {
      error = e.what();
    }
    spdlog::warn("{}", error);
    std::lock_guard lock(mutex);
    summary.errors.push_back(error);
  });
  summary.exhausted = exhausted;
  std::sort(summary.errors.begin(), summary.errors.end());
}

synth::JudgeVerdict smoke_failure(const std::string& detail) {
  synth::JudgeVerdict v;
  v.stage = synth::JudgeStage::code_review;
  v.issues.push_back("smoke test failed: " + detail);
  return v;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, fs::path workspace, synth::ProviderPtr provider)
    : config_(std::move(config)), ws_(std::move(workspace)), provider_(std::move(provider)) {}

std::shared_ptr<dataset::Catalog> Pipeline::catalog() const {
  auto catalog = std::make_shared<dataset::Catalog>(ws_.root(), config_.sandbox);
  const synth::SpecStore store(ws_.root(), config_.script_host);
  for (const auto& spec : store.load_all()) {
    if (spec.status != synth::SpecStatus::accepted) continue;
    catalog->add(spec.env_id, {dataset::VerifierRef::Kind::bundle, store.bundle_ref(spec.env_id)});
  }
  return catalog;
}

std::vector<std::string> Pipeline::kept_env_ids() const {
  std::vector<std::string> out;
  const synth::SpecStore store(ws_.root(), config_.script_host);
  for (const auto& spec : store.load_all()) {
    if (spec.status != synth::SpecStatus::accepted) continue;
    const auto file = ws_.calibration_file(spec.env_id);
    if (!fs::exists(file)) continue;
    const auto report = calib::CalibrationReport::from_document(parse_document(read_file(file)));
    if (report.decision == calib::Decision::keep) out.push_back(spec.env_id);
  }
  return out;
}

StageSummary Pipeline::run_keywords() {
  StageSummary summary;
  const auto seeded = synth::seed_keywords(config_.extra_keywords, config_.include_builtin_keywords);
  for (const auto& d : seeded.dropped) spdlog::warn("dropping keyword '{}'", d);
  write_file_atomic(ws_.keywords_file(),
                    Document{{"keywords", seeded.keywords}, {"dropped", seeded.dropped}}.dump(2) + "\n");
  summary.processed = 1;
  return summary;
}

StageSummary Pipeline::run_synth() {
  StageSummary summary;
  if (!fs::exists(ws_.keywords_file())) {
    throw std::runtime_error("no keywords.json in the workspace; run the keywords stage first");
  }
  const auto keywords =
      parse_document(read_file(ws_.keywords_file())).at("keywords").get<std::vector<std::string>>();
  const auto prompts =
      config_.prompt_dir ? synth::PromptLibrary(*config_.prompt_dir) : synth::PromptLibrary();
  const synth::SpecStore store(ws_.root(), config_.script_host);
  const auto marker_dir = ws_.state_dir() / "synth";

  std::vector<std::string> pending;
  for (const auto& k : keywords) {
    if (fs::exists(marker_dir / (unit_key(k) + ".json"))) {
      ++summary.skipped;
    } else {
      pending.push_back(k);
    }
  }
  run_units(pending.size(), config_.workers, summary, [&](std::size_t i) {
    const auto& keyword = pending[i];
    synth::AuditLog audit(ws_.audit_file("synth", unit_key(keyword)));
    synth::StageContext ctx{provider_.get(), &prompts, config_.sampling, &audit};
    auto outcome = synth::synthesize_environments(keyword, ctx, config_.attempts_per_keyword);
    if (outcome.exhausted) {
      throw synth::ProviderExhausted(outcome.errors.empty() ? "exhausted" : outcome.errors.back());
    }
    std::vector<std::string> ids;
    for (const auto& draft : outcome.drafts) {
      ids.push_back(draft.env_id);
      if (!store.exists(draft.env_id)) store.save(draft);
    }
    write_file_atomic(marker_dir / (unit_key(keyword) + ".json"),
                      Document{{"keyword", keyword},
                               {"env_ids", ids},
                               {"provider_calls", outcome.provider_calls},
                               {"parse_failures", outcome.parse_failures},
                               {"provider_errors", outcome.provider_errors},
                               {"errors", outcome.errors}}
                              .dump(2) + "\n");
  });
  return summary;
}

StageSummary Pipeline::run_judge() {
  StageSummary summary;
  const auto prompts =
      config_.prompt_dir ? synth::PromptLibrary(*config_.prompt_dir) : synth::PromptLibrary();
  const synth::SpecStore store(ws_.root(), config_.script_host);
  const dataset::Catalog aliases(ws_.root(), config_.sandbox);

  std::vector<synth::EnvironmentSpec> pending;
  for (auto& spec : store.load_all()) {
    if (spec.status == synth::SpecStatus::accepted || spec.status == synth::SpecStatus::rejected) {
      ++summary.skipped;
    } else {
      pending.push_back(std::move(spec));
    }
  }
  run_units(pending.size(), config_.workers, summary, [&](std::size_t i) {
    // Work on a copy and persist only the terminal state, so an interrupted
    // unit restarts from its draft.
    auto spec = pending[i];
    synth::AuditLog audit(ws_.audit_file("judge", spec.env_id));
    synth::StageContext ctx{provider_.get(), &prompts, config_.sampling, &audit};
    const auto scratch = ws_.scratch_dir() / "judge" / spec.env_id;

    auto check = [&]() -> bool {
      std::shared_ptr<Environment> env;
      if (spec.bundle.complete()) {
        fs::remove_all(scratch);
        auto manifest = synth::make_manifest(spec.env_id, spec.bundle, config_.script_host);
        write_file_atomic(scratch / "bundle.py", spec.bundle.source);
        write_file_atomic(scratch / "manifest.json", manifest.to_document().dump(2) + "\n");
        std::string failure;
        try {
          env = std::make_shared<protocol::ProtocolEnvironment>(aliases.manifest_for(scratch),
                                                                config_.sandbox, 1);
        } catch (const std::exception& e) {
          failure = e.what();
        }
        if (env && config_.smoke_test) {
          auto smoke = synth::smoke_test(*env, config_.seed);
          if (!smoke.ok) failure = smoke.detail;
        }
        if (!failure.empty()) {
          spec.judge_records.push_back(smoke_failure(failure));
          return false;
        }
      }
      if (!synth::judge_stage1(spec, ctx).pass) return false;
      return synth::judge_stage2(spec, *env, ctx, config_.probes_per_level, config_.seed).pass;
    };

    if (check()) {
      spec.advance(synth::SpecStatus::accepted);
    } else {
      spec.advance(synth::SpecStatus::judged_fail);
      synth::revise(spec, ctx);
      spec.advance(check() ? synth::SpecStatus::accepted : synth::SpecStatus::rejected);
    }
    fs::remove_all(scratch);
    store.save(spec);
  });
  fs::remove_all(ws_.scratch_dir());
  return summary;
}

StageSummary Pipeline::run_calibrate() {
  StageSummary summary;
  const auto catalog = this->catalog();
  std::vector<std::string> pending;
  for (const auto& id : catalog->ids()) {
    if (fs::exists(ws_.calibration_file(id))) {
      ++summary.skipped;
    } else {
      pending.push_back(id);
    }
  }
  run_units(pending.size(), config_.workers, summary, [&](std::size_t i) {
    const auto& env_id = pending[i];
    const auto env = catalog->resolve(env_id);
    synth::AuditLog audit(ws_.audit_file("calibrate", env_id));
    const auto report = calib::calibrate(*env, *provider_, config_.calibration, &audit);
    if (report.exhausted) throw synth::ProviderExhausted(report.note);
    write_file_atomic(ws_.curve_file(env_id), report.curve.to_csv());
    write_file_atomic(ws_.calibration_file(env_id), report.to_document().dump(2) + "\n");
  });
  return summary;
}

StageSummary Pipeline::run_gen() {
  StageSummary summary;
  const auto catalog = this->catalog();
  const auto kept = kept_env_ids();
  for (const auto& [name, ds_config] : config_.datasets) {
    if (fs::exists(ws_.dataset_manifest(name))) {
      ++summary.skipped;
      continue;
    }
    if (kept.size() < static_cast<std::size_t>(ds_config.env_count)) {
      throw std::runtime_error("dataset " + name + " needs " + std::to_string(ds_config.env_count) +
                               " calibrated environments, " + std::to_string(kept.size()) +
                               " available");
    }
    const auto ds = dataset::build_dataset(ds_config, *catalog, kept, config_.workers);
    dataset::write_dataset(ds, *catalog, ws_.datasets_dir(), name);
    spdlog::info("dataset {}: {} records", name, ds.records.size());
    ++summary.processed;
  }
  return summary;
}

StageSummary Pipeline::run_entropy() {
  StageSummary summary;
  const auto curve_file = ws_.entropy_dir() / "curve.json";
  if (fs::exists(curve_file)) {
    summary.skipped = 1;
    return summary;
  }
  const auto records_file = ws_.datasets_dir() / (config_.entropy_dataset + ".jsonl");
  if (!fs::exists(records_file)) {
    throw std::runtime_error("dataset " + config_.entropy_dataset + " has not been generated");
  }
  const std::string prefix = std::string(reward::kPromptPrefix) + "\n\n";
  std::vector<std::string> tasks;
  for (const auto& r : dataset::load_records(records_file)) {
    tasks.push_back(r.prompt.rfind(prefix, 0) == 0 ? r.prompt.substr(prefix.size()) : r.prompt);
  }
  diversity::DescriptorCache cache(ws_.entropy_dir() / "descriptors.json");
  synth::AuditLog audit(ws_.audit_file("entropy", "descriptors"));
  diversity::DescriptorRun run;
  try {
    run = diversity::generate_descriptors(tasks, *provider_, config_.descriptor_batch,
                                          config_.sampling, &audit, &cache);
  } catch (const synth::ProviderExhausted& e) {
    cache.save();
    summary.exhausted = true;
    summary.errors.push_back(std::string("provider exhausted: ") + e.what());
    return summary;
  }
  cache.save();
  summary.errors = run.errors;
  if (run.descriptors.size() < 2) {
    throw std::runtime_error("entropy needs at least two descriptors, got " +
                             std::to_string(run.descriptors.size()));
  }
  std::vector<std::string> texts;
  for (const auto& d : run.descriptors) texts.push_back(d.text);
  const auto embedder = make_embedder(config_.embedder);
  const auto curve = diversity::entropy_curve(embedder->embed(texts), config_.taus);
  write_file_atomic(ws_.entropy_dir() / "curve.csv", diversity::curve_csv(curve));
  write_file_atomic(curve_file, Document{{"dataset", config_.entropy_dataset},
                                         {"tasks", tasks.size()},
                                         {"descriptors", run.descriptors.size()},
                                         {"embedder", embedder->id()},
                                         {"linkage", "single"},
                                         {"series", diversity::curve_series(curve)},
                                         {"errors", run.errors}}
                                        .dump(2) + "\n");
  summary.processed = 1;
  return summary;
}

RunReport Pipeline::run(Stage stage) {
  fs::create_directories(ws_.root());
  write_file_atomic(ws_.root() / "config.json", config_.to_document().dump(2) + "\n");
  RunReport report;
  report.stage = std::string(to_string(stage));
  report.seed = config_.seed;
  report.provider = provider_ ? provider_->id() : "none";

  const std::vector<Stage> stages =
      stage == Stage::all ? pipeline_stages() : std::vector<Stage>{stage};
  for (auto s : stages) {
    const std::string name(to_string(s));
    spdlog::info("stage {}", name);
    StageSummary summary;
    try {
      switch (s) {
        case Stage::keywords: summary = run_keywords(); break;
        case Stage::synth: summary = run_synth(); break;
        case Stage::judge: summary = run_judge(); break;
        case Stage::calibrate: summary = run_calibrate(); break;
        case Stage::gen: summary = run_gen(); break;
        case Stage::entropy: summary = run_entropy(); break;
        case Stage::all: break;
      }
    } catch (const std::exception& e) {
      summary.errors.push_back(e.what());
      spdlog::error("stage {} failed: {}", name, e.what());
      report.exit_code = kExitFailure;
    }
    report.stages[name] = summary;
    if (summary.exhausted) {
      report.exit_code = kExitProviderExhausted;
      spdlog::error("provider exhausted during {}; rerun to resume", name);
    }
    if (report.exit_code != kExitOk) break;
  }
  fill_persisted_counts(ws_, report);
  report.workspace_hash = workspace_hash(ws_.root());
  write_file_atomic(ws_.report_file(), report.to_document().dump(2) + "\n");
  return report;
}

Document Pipeline::plan(Stage stage) const {
  const synth::SpecStore store(ws_.root(), config_.script_host);
  const auto keywords = synth::seed_keywords(config_.extra_keywords, config_.include_builtin_keywords);
  int synth_pending = 0;
  for (const auto& k : keywords.keywords) {
    if (!fs::exists(ws_.state_dir() / "synth" / (unit_key(k) + ".json"))) ++synth_pending;
  }
  int judge_pending = 0;
  int calibrate_pending = 0;
  for (const auto& spec : store.load_all()) {
    if (spec.status == synth::SpecStatus::accepted) {
      if (!fs::exists(ws_.calibration_file(spec.env_id))) ++calibrate_pending;
    } else if (spec.status != synth::SpecStatus::rejected) {
      ++judge_pending;
    }
  }
  Document datasets = Document::array();
  for (const auto& [name, _] : config_.datasets) {
    if (!fs::exists(ws_.dataset_manifest(name))) datasets.push_back(name);
  }
  Document pending{{"keywords", keywords.keywords.size()},
                   {"synth", synth_pending},
                   {"judge", judge_pending},
                   {"calibrate", calibrate_pending},
                   {"gen", datasets},
                   {"entropy", !fs::exists(ws_.entropy_dir() / "curve.json")}};
  Document stages = Document::array();
  for (auto s : stage == Stage::all ? pipeline_stages() : std::vector<Stage>{stage}) {
    stages.push_back(std::string(to_string(s)));
  }
  return Document{{"stages", stages},
                  {"pending", pending},
                  {"dropped_keywords", keywords.dropped},
                  {"config", config_.to_document()}};
}

}  // namespace envforge::pipeline
