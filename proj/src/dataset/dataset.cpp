#include "envforge/dataset/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "envforge/core/parallel.hpp"
#include "envforge/core/rng.hpp"
#include "envforge/reward/harness.hpp"

namespace envforge::dataset {
namespace {

struct EnvResult {
  std::vector<DatasetRecord> records;
  std::optional<std::string> error;
};

EnvResult generate_env(const Catalog& catalog, const std::string& env_id, const LevelSplit& split,
                       std::uint64_t base_seed) {
  EnvResult out;
  try {
    const auto env = catalog.resolve(env_id);
    const auto ref = catalog.ref(env_id).to_string();
    for (int i = 0; i < kDifficultyLevels; ++i) {
      if (split[i] == 0) continue;
      const DifficultyLevel level(kMinDifficulty + i);
      auto sampled = sample_instances(*env, level, static_cast<std::size_t>(split[i]), base_seed);
      if (!sampled.ok()) {
        out.error = "level " + std::to_string(level.value()) + ": " + *sampled.error;
        out.records.clear();
        return out;
      }
      for (auto& instance : sampled.instances) {
        DatasetRecord r;
        r.env_id = env_id;
        r.difficulty = level.value();
        r.record_id = make_record_id(env_id, r.difficulty, instance.seed);
        r.prompt = reward::attach_prompt_prefix(render_observation(*env, instance));
        r.verifier_ref = ref;
        r.instance = std::move(instance);
        out.records.push_back(std::move(r));
      }
    }
  } catch (const std::exception& e) {
    out.error = e.what();
    out.records.clear();
  }
  return out;
}

LevelSplit parse_levels(const Document& doc) {
  LevelSplit s{};
  if (!doc.is_array() || doc.size() != kDifficultyLevels) {
    throw std::invalid_argument("difficulty_split needs five counts");
  }
  for (int i = 0; i < kDifficultyLevels; ++i) s[i] = doc[i].get<int>();
  return s;
}

Dataset assemble(const DatasetConfig& config, const Catalog& catalog,
                 const std::vector<std::string>& slots_in, const std::vector<std::string>& spares,
                 std::size_t workers) {
  std::vector<std::string> slots = slots_in;
  const auto splits = per_env_splits(config, slots.size());
  const auto base = split_base_seed(config);

  std::vector<EnvResult> results(slots.size());
  parallel_for(slots.size(), workers,
               [&](std::size_t i) { results[i] = generate_env(catalog, slots[i], splits[i], base); });

  Dataset ds;
  ds.config = config;
  std::size_t next_spare = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    while (results[i].error) {
      if (next_spare >= spares.size()) {
        throw std::runtime_error("environment " + slots[i] + " failed (" + *results[i].error +
                                 ") and no replacement remains");
      }
      const auto& spare = spares[next_spare++];
      spdlog::warn("dataset: replacing {} with {}: {}", slots[i], spare, *results[i].error);
      ds.replacements.push_back({slots[i], spare, *results[i].error});
      slots[i] = spare;
      results[i] = generate_env(catalog, slots[i], splits[i], base);
    }
  }
  for (auto& r : results) {
    for (auto& rec : r.records) ds.records.push_back(std::move(rec));
  }
  std::sort(ds.records.begin(), ds.records.end(),
            [](const DatasetRecord& a, const DatasetRecord& b) { return a.record_id < b.record_id; });
  ds.env_ids = slots;
  return ds;
}

}  // namespace

std::string_view to_string(Split s) { return s == Split::val ? "val" : "train"; }

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

LevelSplit uniform_split(int m) {
  LevelSplit s{};
  for (int i = 0; i < kDifficultyLevels; ++i) {
    s[i] = m / kDifficultyLevels + (i < m % kDifficultyLevels ? 1 : 0);
  }
  return s;
}

LevelSplit DatasetConfig::level_split() const {
  return difficulty_split ? *difficulty_split : uniform_split(per_env);
}

void DatasetConfig::validate() const {
  if (env_count < 1) throw std::invalid_argument("env_count must be >= 1");
  if (split == Split::train && per_env < 1) throw std::invalid_argument("per_env must be >= 1");
  if (split == Split::val && val_size < 1) throw std::invalid_argument("val_size must be >= 1");
  if (difficulty_split) {
    int sum = 0;
    for (int c : *difficulty_split) {
      if (c < 0) throw std::invalid_argument("difficulty_split counts must be >= 0");
      sum += c;
    }
    if (sum != per_env) throw std::invalid_argument("difficulty_split must sum to per_env");
  }
}

Document DatasetConfig::to_document() const {
  Document doc{{"env_count", env_count},
               {"per_env", per_env},
               {"dataset_seed", dataset_seed},
               {"split", std::string(to_string(split))},
               {"val_size", val_size}};
  if (difficulty_split) doc["difficulty_split"] = *difficulty_split;
  return doc;
}

DatasetConfig DatasetConfig::from_document(const Document& doc) {
  DatasetConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "env_count") {
      c.env_count = value.get<int>();
    } else if (key == "per_env") {
      c.per_env = value.get<int>();
    } else if (key == "difficulty_split") {
      c.difficulty_split = parse_levels(value);
    } else if (key == "dataset_seed") {
      c.dataset_seed = value.get<std::uint64_t>();
    } else if (key == "split") {
      c.split = split_from_string(value.get<std::string>());
    } else if (key == "val_size") {
      c.val_size = value.get<int>();
    } else {
      throw std::invalid_argument("unknown dataset key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::uint64_t split_base_seed(const DatasetConfig& config) {
  return config.split == Split::val ? (config.dataset_seed | kSeedNamespaceBit)
                                    : (config.dataset_seed & ~kSeedNamespaceBit);
}

Document DatasetRecord::to_document() const {
  return Document{{"record_id", record_id}, {"env_id", env_id},
                  {"difficulty", difficulty}, {"instance", instance.to_document()},
                  {"prompt", prompt},         {"verifier_ref", verifier_ref}};
}

DatasetRecord DatasetRecord::from_document(const Document& doc) {
  DatasetRecord r;
  r.record_id = doc.at("record_id").get<std::string>();
  r.env_id = doc.at("env_id").get<std::string>();
  r.difficulty = doc.at("difficulty").get<int>();
  r.instance = InstanceParams::from_document(doc.at("instance"));
  r.prompt = doc.at("prompt").get<std::string>();
  r.verifier_ref = doc.at("verifier_ref").get<std::string>();
  return r;
}

std::string make_record_id(const std::string& env_id, int difficulty, std::uint64_t seed) {
  return sha256_hex(canonical_dump(Document::array({env_id, difficulty, seed}))).substr(0, 32);
}

std::vector<std::string> sample_env_subset(std::vector<std::string> env_ids, std::size_t n,
                                           std::uint64_t dataset_seed) {
  if (n > env_ids.size()) {
    throw std::invalid_argument("cannot sample " + std::to_string(n) + " of " +
                                std::to_string(env_ids.size()) + " environments");
  }
  std::sort(env_ids.begin(), env_ids.end());
  Rng rng(dataset_seed & ~kSeedNamespaceBit);
  rng.shuffle(env_ids);
  env_ids.resize(n);
  std::sort(env_ids.begin(), env_ids.end());
  return env_ids;
}

std::vector<LevelSplit> per_env_splits(const DatasetConfig& config, std::size_t env_count) {
  if (config.split == Split::train) return std::vector<LevelSplit>(env_count, config.level_split());
  std::vector<LevelSplit> out;
  const auto n = static_cast<int>(env_count);
  for (int i = 0; i < n; ++i) {
    out.push_back(uniform_split(config.val_size / n + (i < config.val_size % n ? 1 : 0)));
  }
  return out;
}

Dataset build_dataset(const DatasetConfig& config, const Catalog& catalog,
                      std::vector<std::string> candidates, std::size_t workers) {
  config.validate();
  if (static_cast<std::size_t>(config.env_count) > candidates.size()) {
    throw std::invalid_argument("dataset needs " + std::to_string(config.env_count) +
                                " environments, " + std::to_string(candidates.size()) +
                                " available");
  }
  // The subset is the head of one seeded permutation; replacements come from its tail.
  std::sort(candidates.begin(), candidates.end());
  Rng rng(config.dataset_seed & ~kSeedNamespaceBit);
  rng.shuffle(candidates);
  std::vector<std::string> chosen(candidates.begin(), candidates.begin() + config.env_count);
  std::vector<std::string> spares(candidates.begin() + config.env_count, candidates.end());
  std::sort(chosen.begin(), chosen.end());
  return assemble(config, catalog, chosen, spares, workers);
}

std::string Dataset::jsonl() const {
  std::string out;
  for (const auto& r : records) {
    out += canonical_dump(r.to_document());
    out += '\n';
  }
  return out;
}

std::string Dataset::summary_csv() const {
  std::map<std::string, LevelSplit> counts;
  for (const auto& id : env_ids) counts[id] = {};
  for (const auto& r : records) counts[r.env_id][r.difficulty - kMinDifficulty] += 1;
  std::ostringstream out;
  out << "env_id,d1,d2,d3,d4,d5,total\n";
  for (const auto& [id, c] : counts) {
    out << id;
    for (int v : c) out << ',' << v;
    out << ',' << std::accumulate(c.begin(), c.end(), 0) << '\n';
  }
  return out.str();
}

Document Dataset::manifest(const Catalog& catalog) const {
  Document envs = Document::array();
  const auto splits = per_env_splits(config, env_ids.size());
  for (std::size_t i = 0; i < env_ids.size(); ++i) {
    envs.push_back({{"env_id", env_ids[i]},
                    {"verifier_ref", catalog.ref(env_ids[i]).to_string()},
                    {"levels", splits[i]}});
  }
  Document repl = Document::array();
  for (const auto& r : replacements) {
    repl.push_back({{"failed", r.failed}, {"replacement", r.replacement}, {"reason", r.reason}});
  }
  return Document{{"config", config.to_document()},
                  {"environments", envs},
                  {"replacements", repl},
                  {"record_count", records.size()},
                  {"content_hash", sha256_hex(jsonl())}};
}

void write_dataset(const Dataset& dataset, const Catalog& catalog,
                   const std::filesystem::path& dir, const std::string& stem) {
  auto manifest = dataset.manifest(catalog);
  manifest["records_file"] = stem + ".jsonl";
  write_file_atomic(dir / (stem + ".jsonl"), dataset.jsonl());
  write_file_atomic(dir / (stem + ".summary.csv"), dataset.summary_csv());
  write_file_atomic(dir / (stem + ".manifest.json"), manifest.dump(2) + "\n");
}

Dataset rebuild_from_manifest(const Document& manifest, const Catalog& catalog,
                              std::size_t workers) {
  const auto config = DatasetConfig::from_document(manifest.at("config"));
  std::vector<std::string> slots;
  for (const auto& e : manifest.at("environments")) {
    const auto id = e.at("env_id").get<std::string>();
    if (!catalog.contains(id)) throw std::runtime_error("manifest names unknown environment " + id);
    if (catalog.ref(id).to_string() != e.at("verifier_ref").get<std::string>()) {
      throw std::runtime_error("verifier reference of " + id + " changed since the manifest");
    }
    slots.push_back(id);
  }
  auto ds = assemble(config, catalog, slots, {}, workers);
  // Replacement history belongs to the original build.
  for (const auto& r : manifest.value("replacements", Document::array())) {
    ds.replacements.push_back({r.at("failed").get<std::string>(),
                               r.at("replacement").get<std::string>(),
                               r.at("reason").get<std::string>()});
  }
  return ds;
}

std::vector<DatasetRecord> load_records(const std::filesystem::path& jsonl) {
  std::vector<DatasetRecord> out;
  std::istringstream in(read_file(jsonl));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(DatasetRecord::from_document(parse_document(line)));
  }
  return out;
}

}  // namespace envforge::dataset
