#include <doctest.h>

#include <httplib.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <thread>

#include "envforge/core/native_envs.hpp"
#include "envforge/core/rng.hpp"
#include "envforge/synth/keywords.hpp"
#include "envforge/synth/prompts.hpp"
#include "envforge/synth/provider.hpp"
#include "envforge/synth/spec.hpp"
#include "envforge/synth/stages.hpp"

using namespace envforge;
using namespace envforge::synth;
namespace fs = std::filesystem;

namespace {

const char* const kGridSource = R"(# title: Grid Path Cost
import random


def generate_instance(difficulty):
    return {"grid": [[1]]}


def render_question(instance):
    return "q"


def verify(instance, answer):
    return True
)";

std::shared_ptr<MockProvider> fixture_mock() {
  return MockProvider::load(fs::path(ENVFORGE_FIXTURE_DIR) / "mock_provider.json");
}

struct Harness {
  std::shared_ptr<LlmProvider> provider;
  PromptLibrary prompts;
  AuditLog audit;
  StageContext ctx() {
    StageContext c;
    c.provider = provider.get();
    c.prompts = &prompts;
    c.audit = &audit;
    return c;
  }
};

EnvironmentSpec draft_for(const std::string& keyword, Harness& h) {
  auto out = synthesize_environments(keyword, h.ctx(), 1);
  REQUIRE(out.drafts.size() == 1);
  return out.drafts.front();
}

class BrokenSampler final : public Environment {
 public:
  const std::string& id() const override { return id_; }
  std::vector<InstanceParams> sample(DifficultyLevel d, std::size_t count, std::uint64_t seed) const override {
    if (d.value() >= 3) throw EnvironmentError(ErrorKind::runner_error, "generator crashed");
    return grid_.sample(d, count, seed);
  }
  Observation observe(const InstanceParams& s) const override { return grid_.observe(s); }
  Verdict verify(const InstanceParams& s, const Response& r) const override { return grid_.verify(s, r); }

 private:
  std::string id_ = GridPathEnvironment::kKind;
  GridPathEnvironment grid_;
};

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("envforge-synth-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("judge pass over every flag combination") {
  for (int mask = 0; mask < 64; ++mask) {
    const bool rf = mask & 1, ca = mask & 2, ic = mask & 4, ds = mask & 8, ws = mask & 16, lf = mask & 32;
    JudgeVerdict code;
    code.stage = JudgeStage::code_review;
    code.reference_free = rf;
    code.computational_advantage = ca;
    code.implementation_complete = ic;
    code.difficulty_scales = ds;
    code.well_specified = ws;
    code.loophole_free = lf;
    JudgeVerdict question = code;
    question.stage = JudgeStage::question_review;
    CAPTURE(mask);
    CHECK(judge_pass(code) == ((rf || ca) && ic && ds));
    CHECK(judge_pass(question) == (ws && lf));
  }
}

TEST_CASE("lifecycle edges") {
  const std::vector<SpecStatus> all{SpecStatus::draft, SpecStatus::judged_fail, SpecStatus::revised,
                                    SpecStatus::accepted, SpecStatus::rejected};
  const std::set<std::pair<SpecStatus, SpecStatus>> allowed{
      {SpecStatus::draft, SpecStatus::accepted},
      {SpecStatus::draft, SpecStatus::judged_fail},
      {SpecStatus::judged_fail, SpecStatus::revised},
      {SpecStatus::revised, SpecStatus::accepted},
      {SpecStatus::revised, SpecStatus::rejected}};
  for (auto from : all)
    for (auto to : all) CHECK(transition_allowed(from, to) == (allowed.count({from, to}) == 1));
  for (auto s : all) CHECK(spec_status_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(spec_status_from_string("pending"), std::invalid_argument);

  // Random walks always terminate within three edges, revising at most once.
  Rng rng(3);
  for (int walk = 0; walk < 500; ++walk) {
    EnvironmentSpec spec;
    int steps = 0;
    while (spec.status != SpecStatus::accepted && spec.status != SpecStatus::rejected) {
      const auto to = all[rng.uniform_int(0, all.size() - 1)];
      if (transition_allowed(spec.status, to)) {
        spec.advance(to);
        ++steps;
      } else {
        CHECK_THROWS_AS(spec.advance(to), std::logic_error);
      }
    }
    CHECK(steps <= 3);
    for (auto to : all) CHECK_THROWS_AS(spec.advance(to), std::logic_error);
  }
}

TEST_CASE("parse_bundle extracts code, title, directive and missing definitions") {
  auto b = parse_bundle(std::string("Intro\n```python\n") + kGridSource + "```\nOutro ```x```");
  CHECK(b.complete());
  CHECK(b.title == "Grid Path Cost");
  CHECK_FALSE(b.native_kind.has_value());
  CHECK(b.source.find("Intro") == std::string::npos);

  b = parse_bundle(std::string("```\n# envforge-native: grid_path_cost\n") + kGridSource + "```");
  CHECK(b.complete());
  CHECK(b.native_kind == "grid_path_cost");

  b = parse_bundle(kGridSource);
  CHECK(b.complete());

  b = parse_bundle("```python\ndef generate_instance(d):\n    pass\n\ndef verify_all(x):\n    pass\n```");
  CHECK(b.missing == std::vector<std::string>{"render_question", "verify"});
  CHECK_FALSE(b.complete());

  b = parse_bundle("A word search hides words in a grid.");
  CHECK(b.missing == required_definitions());
  CHECK_FALSE(parse_bundle("").complete());

  Rng rng(8);
  const std::string alphabet = "`pythondef ():\n#title-envforge_native";
  for (int i = 0; i < 500; ++i) {
    std::string junk;
    for (int k = rng.uniform_int(0, 80); k > 0; --k) junk += alphabet[rng.uniform_int(0, alphabet.size() - 1)];
    CHECK_NOTHROW(parse_bundle(junk));
  }
  const auto round = Bundle::from_document(parse_bundle(kGridSource).to_document());
  CHECK(round.to_document() == parse_bundle(kGridSource).to_document());
}

TEST_CASE("manifests pick the native runner or the script host") {
  auto native = parse_bundle(std::string("# envforge-native: boolean_csp\n") + kGridSource);
  const auto m = make_manifest("env-1", native, {"python3", "-m", "shim"});
  CHECK(m.entry_command == std::vector<std::string>{"envforge-runner", "--id", "env-1", "--kind", "boolean_csp"});
  const auto s = make_manifest("env-2", parse_bundle(kGridSource), {"python3", "-m", "shim"});
  CHECK(s.entry_command == std::vector<std::string>{"python3", "-m", "shim", "bundle.py"});
}

TEST_CASE("judge replies parse only with every flag present as a boolean") {
  auto v = parse_judge_reply(
      "```json\n{\"reference_free\": true, \"computational_advantage\": false, "
      "\"implementation_complete\": true, \"difficulty_scales\": true, \"issues\": [\"minor\"]}\n```",
      JudgeStage::code_review);
  REQUIRE(v);
  CHECK(v->pass);
  CHECK(v->issues == std::vector<std::string>{"minor"});

  v = parse_judge_reply(R"(Note {"x": 1} then {"well_specified": true, "loophole_free": false})",
                        JudgeStage::question_review);
  REQUIRE(v);
  CHECK_FALSE(v->pass);
  CHECK(v->stage == JudgeStage::question_review);

  CHECK_FALSE(parse_judge_reply(R"({"well_specified": true})", JudgeStage::question_review));
  CHECK_FALSE(parse_judge_reply(R"({"well_specified": "yes", "loophole_free": true})", JudgeStage::question_review));
  CHECK_FALSE(parse_judge_reply(R"({"well_specified": true, "loophole_free": true})", JudgeStage::code_review));
  CHECK_FALSE(parse_judge_reply("looks good to me", JudgeStage::code_review));
  const auto doc = v->to_document();
  CHECK(JudgeVerdict::from_document(doc).to_document() == doc);
}

TEST_CASE("templates fill in one pass") {
  CHECK(fill_template("a {x} b {y} {z}", {{"x", "{y}"}, {"y", "2"}}) == "a {y} b 2 {z}");
  CHECK(fill_template("{{x}}", {{"x", "1"}}) == "{1}");
  const PromptLibrary lib;
  for (const char* name : {kSynthesizePrompt, kJudgeCodePrompt, kJudgeQuestionPrompt, kRevisePrompt}) {
    CHECK_NOTHROW(lib.get(name));
  }
  CHECK(lib.render(kSynthesizePrompt, {{"keyword", "Sorting"}}).find("topic \"Sorting\"") != std::string::npos);
  CHECK_THROWS_AS(lib.get("missing_v9"), std::out_of_range);

  const auto dir = scratch("prompts");
  write_file_atomic(dir / "synthesize_v1.txt", "custom {keyword}");
  const PromptLibrary custom(dir);
  CHECK(custom.render(kSynthesizePrompt, {{"keyword", "k"}}) == "custom k");
  CHECK(custom.get(kRevisePrompt) == lib.get(kRevisePrompt));
  CHECK_THROWS_AS(PromptLibrary(dir / "absent"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("keyword seeding") {
  const auto& builtin = builtin_keywords();
  CHECK(builtin.size() == 92);
  std::set<std::string> unique(builtin.begin(), builtin.end());
  CHECK(unique.size() == builtin.size());

  const auto seed = seed_keywords({"  sorting ", "Graph   Isomorphism", "a b c d", "", "New Topic", "new  topic"});
  CHECK(seed.keywords.size() == 94);
  CHECK(seed.keywords[92] == "Graph Isomorphism");
  CHECK(seed.keywords[93] == "New Topic");
  CHECK(seed.dropped == std::vector<std::string>{"a b c d", ""});

  const auto only = seed_keywords({"X", "x"}, false);
  CHECK(only.keywords == std::vector<std::string>{"X"});
}

TEST_CASE("retry, replay and rate limiting decorators") {
  auto flaky = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "ok");
  flaky->fail_first(1);
  RetryingProvider once(flaky, 1, std::chrono::milliseconds(1));
  CHECK(once.complete("p", {}) == "ok");

  auto flakier = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "ok");
  flakier->fail_first(2);
  RetryingProvider short_of(flakier, 1, std::chrono::milliseconds(1));
  CHECK_THROWS_AS(short_of.complete("p", {}), ProviderError);

  auto dry = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "ok");
  dry->exhaust_after(0);
  RetryingProvider no_retry(dry, 3, std::chrono::milliseconds(1));
  CHECK_THROWS_AS(no_retry.complete("p", {}), ProviderExhausted);

  ReplayProvider replay({AuditEntry{"s", "k", "mock", {}, "p", "first"},
                         AuditEntry{"s", "k", "mock", {}, "q", "other"},
                         AuditEntry{"s", "k", "mock", {}, "p", "second"}});
  CHECK(replay.complete("p", {}) == "first");
  CHECK(replay.complete("p", {}) == "second");
  CHECK(replay.complete("q", {}) == "other");
  try {
    replay.complete("p", {});
    FAIL("replay should run dry");
  } catch (const ProviderError& e) {
    CHECK_FALSE(e.transient());
  }

  auto fast = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "ok");
  RateLimitedProvider limited(fast, 50.0, 1.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) limited.complete("p", {});
  CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(90));
}

TEST_CASE("mock provider rules, handlers and budgets") {
  MockProvider mock({{"alpha", "A", nullptr}, {"al", "B", nullptr}}, "fallback");
  CHECK(mock.complete("xx alpha", {}) == "A");
  CHECK(mock.complete("al", {}) == "B");
  CHECK(mock.complete("zzz", {}) == "fallback");
  MockProvider strict;
  CHECK_THROWS_AS(strict.complete("zzz", {}), ProviderError);
  mock.exhaust_after(4);
  CHECK(mock.complete("alpha", {}) == "A");
  CHECK_THROWS_AS(mock.complete("alpha", {}), ProviderExhausted);

  const auto solver = MockProvider::grid_solver({{4, 1.0}});
  const std::string question = GridPathEnvironment().observe(
      GridPathEnvironment().sample(DifficultyLevel(2), 1, 0).front()).question_text;
  const auto instance = GridPathEnvironment().sample(DifficultyLevel(2), 1, 0).front();
  const auto reply = solver(question);
  CHECK(envforge::verify(GridPathEnvironment(), instance, {reply}).reward == 1);

  CHECK_THROWS(MockProvider::from_document(Document{{"rules", Document::array({{{"match", "x"}, {"handler", "oracle"}}})}}));
  CHECK_THROWS(MockProvider::from_document(Document{{"bogus", 1}}));
}

TEST_CASE("audit log persists exchanges") {
  const auto dir = scratch("audit");
  const auto file = dir / "audit.jsonl";
  {
    AuditLog log(file);
    MockProvider mock({}, "reply");
    ask(mock, &log, "synth", "Sorting", "prompt text", {0.2, 100});
    ask(mock, &log, "judge_code", "Sorting", "second", {});
    CHECK(log.entries().size() == 2);
  }
  const auto entries = AuditLog::read(file);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].stage == "synth");
  CHECK(entries[0].provider == "mock");
  CHECK(entries[0].params == SamplingParams{0.2, 100});
  CHECK(entries[1].response == "reply");
  fs::remove_all(dir);
}

TEST_CASE("live provider maps HTTP outcomes") {
  httplib::Server server;
  server.Post("/v1/messages", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_document(req.body);
    const auto prompt = body.at("messages")[0].at("content").get<std::string>();
    if (req.get_header_value("x-api-key") != "test-key") {
      res.status = 401;
    } else if (prompt == "ok") {
      res.set_content(R"({"content":[{"type":"text","text":"hel"},{"type":"tool_use"},{"type":"text","text":"lo"}]})",
                      "application/json");
    } else if (prompt == "busy") {
      res.status = 429;
    } else if (prompt == "broke") {
      res.status = 402;
    } else if (prompt == "quota") {
      res.status = 400;
      res.set_content(R"({"error":{"message":"Your credit balance is too low"}})", "application/json");
    } else if (prompt == "bad") {
      res.status = 400;
      res.set_content(R"({"error":"invalid"})", "application/json");
    } else {
      res.status = 200;
      res.set_content("not json", "text/plain");
    }
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("ENVFORGE_TEST_KEY", "test-key", 1);
  LiveProviderConfig config;
  config.base_url = "http://127.0.0.1:" + std::to_string(port);
  config.model = "test-model";
  config.api_key_env = "ENVFORGE_TEST_KEY";
  config.timeout_seconds = 5;
  LiveProvider live(config);
  CHECK(live.id() == "live:test-model");
  CHECK(live.complete("ok", {}) == "hello");
  auto transient = [&](const std::string& prompt) {
    try {
      live.complete(prompt, {});
    } catch (const ProviderExhausted&) {
      return std::string("exhausted");
    } catch (const ProviderError& e) {
      return std::string(e.transient() ? "transient" : "permanent");
    }
    return std::string("ok");
  };
  CHECK(transient("busy") == "transient");
  CHECK(transient("broke") == "exhausted");
  CHECK(transient("quota") == "exhausted");
  CHECK(transient("bad") == "permanent");
  CHECK(transient("garbage") == "transient");

  ::setenv("ENVFORGE_TEST_KEY", "wrong", 1);
  CHECK_THROWS_AS(LiveProvider(config).complete("x", {}), ProviderError);
  server.stop();
  thread.join();

  config.api_key_env = "ENVFORGE_TEST_KEY_UNSET";
  ::unsetenv("ENVFORGE_TEST_KEY_UNSET");
  CHECK_THROWS_AS(LiveProvider{config}, std::invalid_argument);
  config.model.clear();
  CHECK_THROWS_AS(LiveProvider{config}, std::invalid_argument);
}

TEST_CASE("synthesis keeps only bundles with the required definitions") {
  Harness h{fixture_mock()};
  const auto grid = synthesize_environments("Grid Traversal", h.ctx(), 3);
  CHECK(grid.provider_calls == 3);
  CHECK(grid.parse_failures == 0);
  REQUIRE(grid.drafts.size() == 3);
  std::set<std::string> ids;
  for (const auto& d : grid.drafts) {
    CHECK(d.status == SpecStatus::draft);
    CHECK(d.keyword == "Grid Traversal");
    CHECK(d.title == "Grid Path Cost");
    CHECK(d.bundle.native_kind == "grid_path_cost");
    CHECK(d.env_id == make_env_id(d.keyword, d.attempt, d.bundle.source));
    ids.insert(d.env_id);
  }
  CHECK(ids.size() == 3);
  CHECK(make_env_id("k", 0, "s").size() == 20);

  const auto prose = synthesize_environments("Word Search", h.ctx(), 2);
  CHECK(prose.drafts.empty());
  CHECK(prose.parse_failures == 2);

  auto limited = fixture_mock();
  limited->exhaust_after(1);
  Harness hl{limited};
  const auto cut = synthesize_environments("Grid Traversal", hl.ctx(), 4);
  CHECK(cut.exhausted);
  CHECK(cut.drafts.size() == 1);
  CHECK(h.audit.entries().size() == 5);
}

TEST_CASE("code review passes, fails without a call, and gives up on unparseable output") {
  Harness h{fixture_mock()};
  auto spec = draft_for("Grid Traversal", h);
  CHECK(judge_stage1(spec, h.ctx()).pass);
  CHECK(spec.judge_records.size() == 1);

  auto mock = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "I like it.");
  Harness hm{mock};
  auto incomplete = spec;
  incomplete.judge_records.clear();
  incomplete.bundle = parse_bundle("def verify(x):\n    pass\n");
  const auto v = judge_stage1(incomplete, hm.ctx());
  CHECK_FALSE(v.pass);
  CHECK(v.issues.front() == "bundle does not follow the code structure (missing: generate_instance, render_question)");
  CHECK(mock->calls() == 0);

  auto unclear = spec;
  unclear.judge_records.clear();
  const auto u = judge_stage1(unclear, hm.ctx());
  CHECK_FALSE(u.pass);
  CHECK(u.issues == std::vector<std::string>{"judge output unparseable"});
  CHECK(mock->calls() == 2);

  spec.advance(SpecStatus::accepted);
  CHECK_THROWS_AS(judge_stage1(spec, h.ctx()), std::logic_error);
}

TEST_CASE("question review probes every level") {
  Harness h{fixture_mock()};
  auto spec = draft_for("Grid Traversal", h);
  const GridPathEnvironment env;
  CHECK_THROWS_AS(judge_stage2(spec, env, h.ctx()), std::logic_error);
  REQUIRE(judge_stage1(spec, h.ctx()).pass);
  const auto before = h.audit.entries().size();
  const auto v = judge_stage2(spec, env, h.ctx(), 2, 5);
  CHECK(v.pass);
  CHECK(v.stage == JudgeStage::question_review);
  CHECK(h.audit.entries().size() - before == 10);

  auto picky = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{
      {"QUESTION REVIEW", R"({"well_specified": true, "loophole_free": false, "issues": ["answer leaks"]})", nullptr}});
  Harness hp{picky};
  auto spec2 = spec;
  spec2.judge_records.resize(1);
  const auto f = judge_stage2(spec2, env, hp.ctx(), 1, 5);
  CHECK_FALSE(f.pass);
  CHECK(f.well_specified);
  CHECK_FALSE(f.loophole_free);
  REQUIRE(f.issues.size() == 5);
  CHECK(f.issues[0].rfind("level 1: answer leaks; question: ", 0) == 0);
  CHECK(f.issues[4].rfind("level 5: ", 0) == 0);

  auto spec3 = spec;
  spec3.judge_records.resize(1);
  const auto broken = judge_stage2(spec3, BrokenSampler(), h.ctx(), 1, 5);
  CHECK_FALSE(broken.pass);
  REQUIRE(broken.issues.size() == 2);
  CHECK(broken.issues[0] == "probe generation failed");
  CHECK(broken.issues[1].rfind("level 3: ", 0) == 0);
}

TEST_CASE("a failed draft is revised once and judged again") {
  Harness h{fixture_mock()};
  auto spec = draft_for("Topological Sort", h);
  CHECK_THROWS_AS(revise(spec, h.ctx()), std::logic_error);
  const auto v = judge_stage1(spec, h.ctx());
  CHECK_FALSE(v.pass);
  spec.advance(SpecStatus::judged_fail);
  const auto issues = spec.accumulated_issues();
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].find("stored reference order") != std::string::npos);

  revise(spec, h.ctx());
  CHECK(spec.status == SpecStatus::revised);
  CHECK(spec.revision_count == 1);
  CHECK(spec.bundle.complete());
  CHECK(spec.bundle.source.find("# draft:") == std::string::npos);
  const auto last = h.audit.entries().back();
  CHECK(last.stage == "revise");
  CHECK(last.prompt.find("- " + issues[0]) != std::string::npos);

  CHECK(judge_stage1(spec, h.ctx()).pass);
  spec.advance(SpecStatus::accepted);
  CHECK_THROWS_AS(revise(spec, h.ctx()), std::logic_error);

  auto dry = fixture_mock();
  dry->exhaust_after(0);
  Harness hd{dry};
  auto spec2 = draft_for("Topological Sort", h);
  judge_stage1(spec2, h.ctx());
  spec2.advance(SpecStatus::judged_fail);
  const auto saved = spec2.to_document();
  CHECK_THROWS_AS(revise(spec2, hd.ctx()), ProviderExhausted);
  CHECK(spec2.to_document() == saved);
}

TEST_CASE("smoke test round trip") {
  CHECK(smoke_test(GridPathEnvironment()).ok);
  CHECK(smoke_test(TopologicalOrderEnvironment()).ok);
  const auto bad = smoke_test(BrokenSampler{}, 0);
  CHECK(bad.ok);  // level 1 still samples
  struct NoVerify final : public Environment {
    const std::string& id() const override { return grid.id(); }
    std::vector<InstanceParams> sample(DifficultyLevel d, std::size_t n, std::uint64_t s) const override {
      return grid.sample(d, n, s);
    }
    Observation observe(const InstanceParams& s) const override { return grid.observe(s); }
    Verdict verify(const InstanceParams&, const Response&) const override {
      throw EnvironmentError(ErrorKind::runner_error, "verifier died");
    }
    GridPathEnvironment grid;
  };
  const auto nv = smoke_test(NoVerify{});
  CHECK_FALSE(nv.ok);
  CHECK(nv.detail.find("verify failed") == 0);
}

TEST_CASE("spec store round trip") {
  const auto dir = scratch("store");
  Harness h{fixture_mock()};
  SpecStore store(dir, {"python3", "-m", "shim"});
  auto a = draft_for("Grid Traversal", h);
  auto b = draft_for("Boolean Satisfiability", h);
  judge_stage1(a, h.ctx());
  a.advance(SpecStatus::accepted);
  store.save(a);
  store.save(b);
  auto ids = std::vector<std::string>{a.env_id, b.env_id};
  std::sort(ids.begin(), ids.end());
  CHECK(store.ids() == ids);
  CHECK(store.exists(a.env_id));
  CHECK_FALSE(store.exists("env-0000000000000000"));
  CHECK(store.load(a.env_id).to_document() == a.to_document());
  CHECK(fs::exists(store.bundle_dir(a.env_id) / "bundle.py"));
  CHECK(read_file(store.bundle_dir(a.env_id) / "bundle.py") == a.bundle.source);
  const auto manifest = parse_document(read_file(store.bundle_dir(a.env_id) / "manifest.json"));
  CHECK(manifest.at("env_id") == a.env_id);
  CHECK(fs::path(store.bundle_ref(a.env_id)).is_relative());
  CHECK(store.load_all().size() == 2);
  fs::remove_all(dir);
}

}  // TEST_SUITE
