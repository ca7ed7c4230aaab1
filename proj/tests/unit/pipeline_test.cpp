#include <doctest.h>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "envforge/core/native_envs.hpp"
#include "envforge/pipeline/pipeline.hpp"

using namespace envforge;
using namespace envforge::pipeline;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ENVFORGE_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("envforge-pipeline-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig fixture_config() { return PipelineConfig::load(kFixtures / "pipeline_config.json"); }

std::shared_ptr<synth::MockProvider> fixture_mock() {
  return synth::MockProvider::load(kFixtures / "mock_provider.json");
}

RunReport run_with(const fs::path& ws, synth::ProviderPtr provider, Stage stage = Stage::all) {
  Pipeline pipeline(fixture_config(), ws, std::move(provider));
  return pipeline.run(stage);
}

// A copy of the fixture config in `dir` whose mock file is `mock`.
fs::path write_config(const fs::path& dir, const Document& mock, const Document& overrides = Document::object()) {
  write_file_atomic(dir / "mock_provider.json", mock.dump(2));
  auto config = parse_document(read_file(kFixtures / "pipeline_config.json"));
  config.merge_patch(overrides);
  write_file_atomic(dir / "config.json", config.dump(2));
  return dir / "config.json";
}

struct Child {
  pid_t pid = -1;
  int wait() const {
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return 128 + WTERMSIG(status);
  }
};

Child spawn_cli(const std::vector<std::string>& args, const fs::path& stdin_file = {},
                const fs::path& stdout_file = {}) {
  std::vector<std::string> argv{ENVFORGE_CLI_PATH};
  argv.insert(argv.end(), args.begin(), args.end());
  Child child;
  child.pid = ::fork();
  REQUIRE(child.pid >= 0);
  if (child.pid == 0) {
    const int in = ::open(stdin_file.empty() ? "/dev/null" : stdin_file.c_str(), O_RDONLY);
    const int out = ::open(stdout_file.empty() ? "/dev/null" : stdout_file.c_str(),
                           O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int err = ::open("/dev/null", O_WRONLY);
    ::dup2(in, 0);
    ::dup2(out, 1);
    ::dup2(err, 2);
    std::vector<char*> raw;
    for (auto& a : argv) raw.push_back(a.data());
    raw.push_back(nullptr);
    ::execv(raw[0], raw.data());
    ::_exit(127);
  }
  return child;
}

int run_cli(const std::vector<std::string>& args, const fs::path& stdout_file = {}) {
  return spawn_cli(args, {}, stdout_file).wait();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing is strict") {
  const auto base = parse_document(read_file(kFixtures / "pipeline_config.json"));
  CHECK_NOTHROW(PipelineConfig::from_document(base, kFixtures));

  for (const char* patch : {R"({"bogus": 1})", R"({"provider": {"kind": "oracle"}})",
                            R"({"judge": {"probes_per_level": 0}})", R"({"workers": "four"})",
                            R"({"datasets": {"train": {"env_count": 0, "per_env": 1}}})",
                            R"({"entropy": {"linkage": "average"}})", R"({"calibration": {"alpha": 2}})",
                            R"({"sampling": {"max_tokens": -1}})", R"({"entropy": {"taus": [0.3, 0.1]}})",
                            R"({"synthesis": {"nonsense": true}})"}) {
    CAPTURE(patch);
    auto doc = base;
    doc.merge_patch(parse_document(patch));
    CHECK_THROWS_AS(PipelineConfig::from_document(doc, kFixtures), ConfigError);
  }
  CHECK_THROWS_AS(PipelineConfig::load(kFixtures / "absent.json"), ConfigError);
}

TEST_CASE("config defaults, round trip and seed override") {
  const auto c = PipelineConfig::from_document(parse_document(R"({"provider": {"mock_file": "m.json"}})"), ".");
  CHECK_THROWS_AS(PipelineConfig::from_document(Document::object(), "."), ConfigError);
  CHECK(c.datasets.at("train").env_count == 400);
  CHECK(c.datasets.at("train").per_env == 40);
  CHECK(c.datasets.at("val").split == dataset::Split::val);
  CHECK(c.attempts_per_keyword == 8);
  CHECK(c.include_builtin_keywords);
  CHECK(c.taus == diversity::default_taus());
  CHECK(c.calibration.sampling == c.sampling);

  auto f = fixture_config();
  CHECK(f.seed == 7);
  CHECK(f.provider.mock_file == kFixtures / "mock_provider.json");
  const auto again = PipelineConfig::from_document(f.to_document(), kFixtures);
  CHECK(again.to_document() == f.to_document());

  f.override_seed(99);
  CHECK(f.seed == 99);
  for (const auto& [name, ds] : f.datasets) CHECK(ds.dataset_seed == 99);
  CHECK(f.calibration.seed == 99);
}

TEST_CASE("stage names") {
  for (auto s : pipeline_stages()) CHECK(stage_from_string(to_string(s)) == s);
  CHECK(stage_from_string("all") == Stage::all);
  CHECK_THROWS(stage_from_string("train"));
  CHECK(pipeline_stages().size() == 6);
}

TEST_CASE("workspace hash ignores reports, audit, logs and scratch") {
  const auto ws = scratch("hash");
  write_file_atomic(ws / "a.json", "1");
  write_file_atomic(ws / "sub" / "b.json", "2");
  const auto h = workspace_hash(ws);
  write_file_atomic(ws / "report.json", "x");
  write_file_atomic(ws / "logs" / "run.log", "x");
  write_file_atomic(ws / "tmp" / "judge" / "x", "x");
  write_file_atomic(ws / "audit" / "synth" / "k.jsonl", "x");
  CHECK(workspace_hash(ws) == h);
  write_file_atomic(ws / "sub" / "b.json", "3");
  CHECK(workspace_hash(ws) != h);
  fs::remove_all(ws);
}

TEST_CASE("end-to-end run is deterministic and its report matches the workspace") {
  const auto a = scratch("e2e-a");
  const auto b = scratch("e2e-b");
  const auto ra = run_with(a, fixture_mock());
  const auto rb = run_with(b, fixture_mock());
  CHECK(ra.exit_code == kExitOk);
  CHECK(ra.workspace_hash == rb.workspace_hash);
  CHECK(ra.workspace_hash == workspace_hash(a));
  CHECK(ra.spec_status.at("accepted") >= 1);
  CHECK(ra.datasets.at("train") == 20);
  CHECK(fs::exists(a / "datasets" / "train.jsonl"));
  CHECK(fs::exists(a / "entropy" / "curve.csv"));
  CHECK(ra.entropy_points == fixture_config().taus.size());

  // Audit logs are not hashed but are still reproduced byte for byte.
  std::vector<std::pair<std::string, std::string>> audit_a, audit_b;
  for (const auto& e : fs::recursive_directory_iterator(a / "audit"))
    if (e.is_regular_file()) audit_a.emplace_back(fs::relative(e.path(), a), read_file(e.path()));
  for (const auto& e : fs::recursive_directory_iterator(b / "audit"))
    if (e.is_regular_file()) audit_b.emplace_back(fs::relative(e.path(), b), read_file(e.path()));
  std::sort(audit_a.begin(), audit_a.end());
  std::sort(audit_b.begin(), audit_b.end());
  CHECK(audit_a.size() > 5);
  CHECK(audit_a == audit_b);

  // Report counts are the persisted counts.
  RunReport fresh;
  fill_persisted_counts(Workspace(a), fresh);
  CHECK(fresh.spec_status == ra.spec_status);
  CHECK(fresh.calibration == ra.calibration);
  CHECK(fresh.datasets == ra.datasets);
  int specs = 0;
  for (const auto& e : fs::directory_iterator(a / "specs")) {
    const auto name = e.path().filename().string();
    if (name.size() > 5 && name.find('.') == name.rfind('.') && e.path().extension() == ".json") ++specs;
  }
  int total = 0;
  for (const auto& [status, n] : ra.spec_status) total += n;
  CHECK(total == specs);
  int kept = 0;
  for (const auto& [decision, n] : ra.calibration) kept += decision == "keep" ? n : 0;
  CHECK(static_cast<std::size_t>(kept) == Pipeline(fixture_config(), a, nullptr).kept_env_ids().size());
  CHECK_FALSE(fs::exists(a / "tmp" / "judge"));

  // A rerun over a finished workspace does no work and changes nothing.
  auto idle = fixture_mock();
  const auto rerun = run_with(a, idle);
  CHECK(rerun.exit_code == kExitOk);
  CHECK(rerun.workspace_hash == ra.workspace_hash);
  CHECK(idle->calls() == 0);
  CHECK(rerun.stages.at("synth").processed == 0);
  CHECK(rerun.stages.at("synth").skipped == 5);

  // A different seed changes the datasets.
  auto other = fixture_config();
  other.override_seed(8);
  const auto c = scratch("e2e-c");
  CHECK(Pipeline(other, c, fixture_mock()).run(Stage::all).workspace_hash != ra.workspace_hash);
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("judging an empty workspace is a no-op") {
  const auto ws = scratch("empty-judge");
  auto mock = fixture_mock();
  const auto report = run_with(ws, mock, Stage::judge);
  CHECK(report.exit_code == kExitOk);
  CHECK(report.stages.at("judge").processed == 0);
  CHECK(report.stages.at("judge").errors.empty());
  CHECK(mock->calls() == 0);
  const auto synth = run_with(ws, mock, Stage::synth);
  CHECK(synth.exit_code == kExitFailure);
  fs::remove_all(ws);
}

TEST_CASE("plan lists pending work without touching the workspace") {
  const auto ws = scratch("plan");
  const auto before = workspace_hash(ws);
  const auto plan = Pipeline(fixture_config(), ws, nullptr).plan(Stage::all);
  CHECK(plan.at("pending").at("synth") == 5);
  CHECK(plan.at("pending").at("gen").size() == 2);
  CHECK(plan.at("stages").size() == 6);
  CHECK(workspace_hash(ws) == before);
  CHECK(fs::is_empty(ws));
  fs::remove_all(ws);
}

TEST_CASE("exhaustion at any point resumes to the uninterrupted state") {
  const auto clean = scratch("resume-clean");
  const auto expected = run_with(clean, fixture_mock()).workspace_hash;
  auto probe = fixture_mock();
  run_with(scratch("resume-count"), probe);
  const auto total_calls = probe->calls();
  REQUIRE(total_calls > 50);

  for (std::uint64_t cut : {std::uint64_t{0}, std::uint64_t{3}, std::uint64_t{11}, total_calls / 3,
                            total_calls / 2, total_calls - 20, total_calls - 1}) {
    CAPTURE(cut);
    const auto ws = scratch("resume");
    auto limited = fixture_mock();
    limited->exhaust_after(cut);
    const auto first = run_with(ws, limited);
    CHECK(first.exit_code == kExitProviderExhausted);
    const auto second = run_with(ws, fixture_mock());
    CHECK(second.exit_code == kExitOk);
    CHECK(second.workspace_hash == expected);
    fs::remove_all(ws);
  }
  fs::remove_all(clean);
  fs::remove_all(scratch("resume-count"));
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli-codes");
  const auto mock = parse_document(read_file(kFixtures / "mock_provider.json"));
  CHECK(run_cli({"run", "--config", write_config(dir, mock, parse_document(R"({"bogus": true})")).string(),
                 "--workspace", (dir / "ws").string()}) == kExitConfigInvalid);
  CHECK(run_cli({"run", "--frobnicate"}) == kExitConfigInvalid);
  CHECK(run_cli({"run", "--config", (kFixtures / "pipeline_config.json").string(), "--workspace",
                 (dir / "ws").string(), "--stage", "everything"}) == kExitConfigInvalid);

  auto limited = mock;
  limited["exhaust_after"] = 30;
  const auto limited_config = write_config(dir, limited);
  CHECK(run_cli({"run", "--config", limited_config.string(), "--workspace", (dir / "ws").string()}) ==
        kExitProviderExhausted);
  const auto report = parse_document(read_file(dir / "ws" / "report.json"));
  CHECK(report.at("exit_code") == kExitProviderExhausted);

  const auto healthy = write_config(dir, mock);
  CHECK(run_cli({"run", "--config", healthy.string(), "--workspace", (dir / "ws").string()}) == kExitOk);
  CHECK(run_cli({"run", "--config", healthy.string(), "--workspace", (dir / "ws").string(), "--dry-run"},
                dir / "plan.json") == kExitOk);
  CHECK(parse_document(read_file(dir / "plan.json")).at("pending").at("synth") == 0);

  // Port already taken.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  REQUIRE(::listen(fd, 1) == 0);
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  CHECK(run_cli({"serve", "--config", healthy.string(), "--workspace", (dir / "ws").string(), "--port",
                 std::to_string(ntohs(addr.sin_port))}) == kExitPortUnavailable);
  ::close(fd);

  CHECK(run_cli({"serve", "--config", healthy.string(), "--workspace", (dir / "ws").string(), "--dataset",
                 "missing"}) == kExitFailure);
  CHECK(run_cli({"hash", "--workspace", (dir / "ws").string()}, dir / "hash.txt") == kExitOk);
  CHECK(read_file(dir / "hash.txt") == workspace_hash(dir / "ws") + "\n");
  fs::remove_all(dir);
}

TEST_CASE("killing the cli at arbitrary points converges on rerun") {
  const auto dir = scratch("cli-kill");
  const auto config = write_config(dir, parse_document(read_file(kFixtures / "mock_provider.json")));
  REQUIRE(run_cli({"run", "--config", config.string(), "--workspace", (dir / "clean").string()}) == kExitOk);
  const auto expected = workspace_hash(dir / "clean");

  for (int delay_ms : {5, 40, 90, 150, 250, 400}) {
    CAPTURE(delay_ms);
    const auto ws = dir / ("ws-" + std::to_string(delay_ms));
    auto child = spawn_cli({"run", "--config", config.string(), "--workspace", ws.string()});
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    ::kill(child.pid, SIGKILL);
    child.wait();
    CHECK(run_cli({"run", "--config", config.string(), "--workspace", ws.string()}) == kExitOk);
    CHECK(workspace_hash(ws) == expected);
  }
  fs::remove_all(dir);
}

TEST_CASE("served rewards give oracle answers full credit") {
  const auto dir = scratch("serve");
  const auto config = write_config(dir, parse_document(read_file(kFixtures / "mock_provider.json")));
  const auto ws = dir / "ws";
  REQUIRE(run_cli({"run", "--config", config.string(), "--workspace", ws.string()}) == kExitOk);

  const auto manifest = parse_document(read_file(ws / "datasets" / "train.manifest.json"));
  const auto records = dataset::load_records(ws / "datasets" / "train.jsonl");
  REQUIRE_FALSE(records.empty());
  std::ofstream frames(dir / "frames.ndjson");
  for (const auto& r : records) {
    const auto bundle = ws / dataset::VerifierRef::parse(r.verifier_ref).target;
    const auto entry = parse_document(read_file(bundle / "manifest.json")).at("entry_command");
    std::string kind;
    for (std::size_t i = 0; i + 1 < entry.size(); ++i)
      if (entry[i] == "--kind") kind = entry[i + 1].get<std::string>();
    const auto oracle = make_native_environment(kind, r.env_id, {});
    const auto answer = oracle->reference_answer(r.instance);
    REQUIRE(answer);
    frames << Document{{"record_id", r.record_id},
                       {"response_text", "<think>solved</think> <answer>" + *answer + "</answer>"}}
                  .dump()
           << '\n';
    frames << Document{{"record_id", r.record_id}, {"response_text", *answer}}.dump() << '\n';
  }
  frames.close();

  auto child = spawn_cli({"serve", "--config", config.string(), "--workspace", ws.string(), "--stdio"},
                         dir / "frames.ndjson", dir / "replies.ndjson");
  CHECK(child.wait() == kExitOk);
  std::ifstream replies(dir / "replies.ndjson");
  std::size_t n = 0;
  for (std::string line; std::getline(replies, line); ++n) {
    const auto reply = parse_document(line);
    CAPTURE(line);
    CHECK(reply.at("total") == (n % 2 == 0 ? 1 : 0));
  }
  CHECK(n == 2 * records.size());
  CHECK(manifest.at("record_count") == records.size());
  fs::remove_all(dir);
}

}  // TEST_SUITE
