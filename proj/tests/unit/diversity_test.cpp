#include <doctest.h>

#include <httplib.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <thread>

#include "envforge/core/rng.hpp"
#include "envforge/diversity/diversity.hpp"

using namespace envforge;
using namespace envforge::diversity;
namespace fs = std::filesystem;

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); }

std::vector<Embedding> random_embeddings(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<Embedding> out(n, Embedding(dim));
  // A few loose centres so that thresholds produce non-trivial partitions.
  std::vector<Embedding> centres(1 + rng.uniform_int(0, 4), Embedding(dim));
  for (auto& c : centres)
    for (auto& x : c) x = uniform(rng, -1, 1);
  for (auto& v : out) {
    const auto& c = centres[rng.uniform_int(0, centres.size() - 1)];
    const double spread = uniform(rng, 0.05, 0.8);
    for (std::size_t k = 0; k < dim; ++k) v[k] = c[k] + uniform(rng, -spread, spread);
  }
  return out;
}

double oracle_cosine(const Embedding& a, const Embedding& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += static_cast<long double>(a[k]) * b[k];
    na += static_cast<long double>(a[k]) * a[k];
    nb += static_cast<long double>(b[k]) * b[k];
  }
  return static_cast<double>(1.0L - dot / std::sqrt(na * nb));
}

// Single linkage via minimax path distances: i and j merge below tau iff the
// bottleneck distance between them is < tau. Labels numbered by first appearance.
std::vector<int> oracle_labels(const std::vector<Embedding>& e, double tau) {
  const auto n = e.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) d[i][j] = oracle_cosine(e[i], e[j]);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], std::max(d[i][k], d[k][j]));
  std::vector<int> labels(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= 0) continue;
    for (std::size_t j = i; j < n; ++j)
      if (labels[j] < 0 && (j == i || d[i][j] < tau)) labels[j] = next;
    ++next;
  }
  return labels;
}

class FlakyDescriptors final : public synth::LlmProvider {
 public:
  // Omits TASK_<skip> from the first `omissions` replies.
  FlakyDescriptors(int skip, int omissions) : skip_(skip), omissions_(omissions) {}
  std::string complete(const std::string& prompt, const synth::SamplingParams&) override {
    ++calls;
    auto reply = synth::MockProvider::descriptor_echo()(prompt);
    if (omissions_ > 0) {
      --omissions_;
      auto doc = parse_document(reply.substr(reply.find('{'), reply.rfind('}') - reply.find('{') + 1));
      doc.erase("TASK_" + std::to_string(skip_));
      return doc.dump();
    }
    return reply;
  }
  std::string id() const override { return "flaky"; }
  int calls = 0;

 private:
  int skip_;
  int omissions_;
};

}  // namespace

TEST_SUITE("diversity") {

TEST_CASE("entropy of fixed partitions") {
  CHECK(shannon_entropy(std::vector<std::size_t>{10}) == 0.0);
  CHECK(shannon_entropy(std::vector<std::size_t>{5, 5, 5, 5}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(shannon_entropy(std::vector<std::size_t>{1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shannon_entropy(std::vector<std::size_t>{3, 1}) ==
        doctest::Approx(-(0.75 * std::log2(0.75) + 0.25 * std::log2(0.25))).epsilon(1e-12));
  CHECK(shannon_entropy(std::vector<std::size_t>(64, 1)) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("clustering of well separated groups") {
  std::vector<Embedding> e;
  for (int g = 0; g < 4; ++g)
    for (int i = 0; i < 5; ++i) {
      Embedding v(4, 0.0);
      v[g] = 1.0;
      v[(g + 1) % 4] = 0.01 * i;
      e.push_back(v);
    }
  const auto four = cluster(e, 0.05);
  CHECK(four.count() == 4);
  CHECK(shannon_entropy(four) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(four.labels[0] == 0);
  CHECK(four.labels[5] == 1);
  const auto one = cluster(e, 1.5);
  CHECK(one.count() == 1);
  CHECK(shannon_entropy(one) == 0.0);
  CHECK(cluster(e, 0.0).count() == e.size());
}

TEST_CASE("cluster matches the minimax-distance oracle for n <= 50") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 50));
    const auto e = random_embeddings(rng, n, static_cast<std::size_t>(rng.uniform_int(2, 12)));
    for (double tau : {0.001, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.8, 1.2}) {
      CAPTURE(trial);
      CAPTURE(tau);
      const auto got = cluster(e, tau);
      CHECK(got.labels == oracle_labels(e, tau));
      std::size_t total = 0;
      for (auto s : got.sizes) total += s;
      CHECK(total == n);
    }
  }
}

TEST_CASE("entropy curve is monotone and bounded by log2 n") {
  Rng rng(77);
  const auto taus = default_taus();
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 80));
    const auto e = random_embeddings(rng, n, 8);
    const auto curve = entropy_curve(e, taus);
    REQUIRE(curve.size() == taus.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
      CHECK(curve[i].entropy_bits >= 0.0);
      CHECK(curve[i].entropy_bits <= std::log2(static_cast<double>(n)) + 1e-12);
      CHECK(curve[i].cluster_count == cluster(e, taus[i]).count());
      CHECK(curve[i].entropy_bits == doctest::Approx(shannon_entropy(cluster(e, taus[i]))).epsilon(1e-12));
      if (i > 0) {
        CHECK(curve[i].cluster_count <= curve[i - 1].cluster_count);
        CHECK(curve[i].entropy_bits <= curve[i - 1].entropy_bits + 1e-12);
      }
    }
  }
}

TEST_CASE("thresholds and their serialisation") {
  const auto taus = default_taus();
  REQUIRE(taus.size() == 10);
  CHECK(taus.front() == doctest::Approx(0.05));
  CHECK(taus.back() == doctest::Approx(0.5));
  CHECK(std::is_sorted(taus.begin(), taus.end()));
  CHECK_THROWS_AS(entropy_curve({{1.0, 0.0}}, {0.3, 0.1}), std::invalid_argument);
  const std::vector<EntropyCurvePoint> curve{{0.1, 3, 1.5}, {0.2, 1, 0.0}};
  CHECK(curve_csv(curve) == "tau,clusters,entropy_bits\n0.1,3,1.5\n0.2,1,0\n");
  const auto series = curve_series(curve);
  CHECK(series.at("clusters") == Document::array({3, 1}));
  CHECK(series.at("similarity")[0].get<double>() == doctest::Approx(0.9));
  CHECK(linkage_from_string("single") == Linkage::single);
  CHECK_THROWS_AS(linkage_from_string("average"), std::invalid_argument);
}

TEST_CASE("cosine distance rejects bad inputs") {
  CHECK(cosine_distance({1, 0}, {0, 1}) == doctest::Approx(1.0));
  CHECK(cosine_distance({1, 1}, {2, 2}) == doctest::Approx(0.0));
  CHECK(cosine_distance({1, 0}, {-1, 0}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(cosine_distance({1, 0}, {1, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(cosine_distance({0, 0}, {1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(cluster({{1, 0}, {0, 0}}, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(cluster({}, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(cluster({{1, std::nan("")}}, 0.2), std::invalid_argument);
}

TEST_CASE("hashing embedder is deterministic and normalised") {
  HashingEmbedder embedder(64);
  const auto a = embedder.embed({"Grid pathfinding with sum constraints", "grid PATHFINDING, with sum constraints"});
  CHECK(a[0] == a[1]);
  double n = 0;
  for (double x : a[0]) n += x * x;
  CHECK(n == doctest::Approx(1.0));
  const auto b = embedder.embed({"Boolean satisfiability over clauses"});
  CHECK(cosine_distance(a[0], b[0]) > 0.5);
  CHECK(embedder.id() == "hashing-64");
  CHECK_THROWS_AS(HashingEmbedder(0), std::invalid_argument);
}

TEST_CASE("descriptor prompt and task section") {
  CHECK(task_section({"alpha", "beta"}, 4) == "TASK_4: alpha\n\nTASK_5: beta");
  const auto prompt = descriptor_prompt({"alpha"}, 0);
  CHECK(prompt.rfind("You are an expert at analyzing reasoning tasks", 0) == 0);
  CHECK(prompt.find("TASK_0: alpha") != std::string::npos);
  CHECK(prompt.find("{task_section}") == std::string::npos);
  CHECK(std::string_view(kDescriptorPrompt).find("{task_section}") != std::string_view::npos);
  CHECK(prompt.size() >= 9);
  CHECK(prompt.substr(prompt.size() - 9) == "RESPONSE:");
}

TEST_CASE("descriptor responses parse bare or fenced") {
  CHECK(parse_descriptor_response(R"({"TASK_0": "a", "TASK_1": "b"})") ==
        std::map<std::string, std::string>{{"TASK_0", "a"}, {"TASK_1", "b"}});
  CHECK(parse_descriptor_response("Here:\n```json\n{\"TASK_3\": \"x {y}\"}\n```\nDone.").at("TASK_3") == "x {y}");
  CHECK(parse_descriptor_response(R"({"TASK_0": 5, "TASK_1": "ok"})").size() == 1);
  CHECK_THROWS_AS(parse_descriptor_response("no json here"), std::invalid_argument);
  CHECK_THROWS_AS(parse_descriptor_response("{broken"), std::invalid_argument);
}

TEST_CASE("descriptor generation batches, retries and caches") {
  std::vector<std::string> tasks;
  for (int i = 0; i < 7; ++i) tasks.push_back("task number " + std::to_string(i) + " about graphs");

  synth::MockProvider mock({{"categorizing them by", "", synth::MockProvider::descriptor_echo()}});
  const auto run = generate_descriptors(tasks, mock, 3);
  CHECK(run.provider_calls == 3);
  CHECK(run.errors.empty());
  REQUIRE(run.descriptors.size() == 7);
  CHECK(run.descriptors[6].task_id == "TASK_6");
  CHECK(run.descriptors[6].text == "Reasoning pattern: task number 6 about graphs");

  FlakyDescriptors once(1, 1);
  CHECK(generate_descriptors(tasks, once, 3).errors.empty());
  CHECK(once.calls == 4);

  FlakyDescriptors always(4, 100);
  const auto partial = generate_descriptors(tasks, always, 3);
  CHECK(partial.descriptors.size() == 6);
  REQUIRE(partial.errors.size() == 1);
  CHECK(partial.errors[0].find("TASK_3..TASK_5") != std::string::npos);

  const auto file = fs::temp_directory_path() / ("envforge-descriptors-" + std::to_string(::getpid()) + ".json");
  fs::remove(file);
  {
    DescriptorCache cache(file);
    synth::MockProvider fresh({{"categorizing them by", "", synth::MockProvider::descriptor_echo()}});
    generate_descriptors(tasks, fresh, 3, {}, nullptr, &cache);
    cache.save();
  }
  DescriptorCache reloaded(file);
  CHECK(reloaded.get(tasks[2]) == "Reasoning pattern: task number 2 about graphs");
  synth::MockProvider unused;
  unused.exhaust_after(0);
  const auto cached = generate_descriptors(tasks, unused, 3, {}, nullptr, &reloaded);
  CHECK(cached.provider_calls == 0);
  CHECK(cached.descriptors.size() == 7);
  fs::remove(file);

  synth::MockProvider dry;
  dry.exhaust_after(0);
  CHECK_THROWS_AS(generate_descriptors(tasks, dry, 3), synth::ProviderExhausted);
}

TEST_CASE("similarity summary over every pair") {
  const std::vector<Embedding> a{{1, 0}, {0, 1}};
  const std::vector<Embedding> b{{1, 0}, {1, 1}, {0, 1}, {-1, 0}};
  const auto s = similarity_summary(a, b, 0.25);
  CHECK(s.pairs == 8);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(s.mean == doctest::Approx((1 + r + 0 - 1 + 0 + r + 1 + 0) / 8.0));
  CHECK(s.top_threshold == doctest::Approx(1.0));
  CHECK(s.top_mean == doctest::Approx(1.0));
  const auto top_half = similarity_summary(a, b, 0.5);
  CHECK(top_half.top_threshold == doctest::Approx(r));
  CHECK(top_half.top_mean == doctest::Approx((2 + 2 * r) / 4.0));

  Rng rng(4);
  const auto x = random_embeddings(rng, 30, 6);
  const auto y = random_embeddings(rng, 40, 6);
  std::vector<double> all;
  for (const auto& u : x)
    for (const auto& v : y) all.push_back(1.0 - oracle_cosine(u, v));
  std::sort(all.rbegin(), all.rend());
  const auto big = similarity_summary(x, y, 0.01);
  CHECK(big.pairs == 1200);
  CHECK(big.top_threshold == doctest::Approx(all[11]).epsilon(1e-9));
  CHECK(big.top_mean == doctest::Approx(std::accumulate(all.begin(), all.begin() + 12, 0.0) / 12).epsilon(1e-9));

  HashingEmbedder embedder(128);
  const auto streamed = cross_dataset_similarity({"grid path", "word search"}, {"grid path", "sat"}, embedder, 0.25, 1);
  CHECK(streamed.pairs == 4);
  CHECK(streamed.top_threshold == doctest::Approx(1.0));
  CHECK(streamed.errors.empty());
}

TEST_CASE("remote embedder posts texts and orders vectors by index") {
  httplib::Server server;
  server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_document(req.body);
    if (body.at("model") != "m" || req.get_header_value("Authorization") != "Bearer k") {
      res.status = 403;
      return;
    }
    const auto& input = body.at("input");
    if (input.size() == 3) {
      res.set_content(R"({"data":[{"index":0,"embedding":[1,0]}]})", "application/json");
      return;
    }
    Document data = Document::array();
    for (std::size_t i = input.size(); i-- > 0;) {
      data.push_back({{"index", i}, {"embedding", {static_cast<double>(input[i].get<std::string>().size()), 1.0}}});
    }
    res.set_content(Document{{"data", data}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("ENVFORGE_TEST_EMBED_KEY", "k", 1);
  RemoteEmbedderConfig config;
  config.base_url = "http://127.0.0.1:" + std::to_string(port);
  config.model = "m";
  config.api_key_env = "ENVFORGE_TEST_EMBED_KEY";
  config.timeout_seconds = 5;
  CHECK(RemoteEmbedderConfig::from_document(config.to_document()).to_document() == config.to_document());
  RemoteEmbedder embedder(config);
  CHECK(embedder.id() == "remote:m");
  const auto out = embedder.embed({"a", "bbb"});
  CHECK(out == std::vector<Embedding>{{1, 1}, {3, 1}});
  CHECK_THROWS_AS(embedder.embed({"a", "b", "c"}), std::runtime_error);
  config.model = "other";
  CHECK_THROWS_AS(RemoteEmbedder(config).embed({"a"}), std::runtime_error);

  const auto s = cross_dataset_similarity({"a", "b", "c"}, {"dd"}, embedder, 1.0, 8);
  CHECK(s.errors.size() == 1);
  server.stop();
  thread.join();
  CHECK_THROWS_AS(RemoteEmbedder(RemoteEmbedderConfig{}), std::invalid_argument);
}

}  // TEST_SUITE
