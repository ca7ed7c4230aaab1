#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "envforge/core/environment.hpp"
#include "envforge/dataset/catalog.hpp"

namespace envforge::dataset {

enum class Split { train, val };
std::string_view to_string(Split s);
Split split_from_string(std::string_view name);

// Instance counts for levels 1..5.
using LevelSplit = std::array<int, kDifficultyLevels>;

// m instances over five levels, the remainder going to the lowest levels.
LevelSplit uniform_split(int m);

struct DatasetConfig {
  int env_count = 0;                         // N
  int per_env = 0;                           // M (train split)
  std::optional<LevelSplit> difficulty_split;  // defaults to uniform_split(M)
  std::uint64_t dataset_seed = 0;
  Split split = Split::train;
  int val_size = 500;  // total records when split = val

  LevelSplit level_split() const;
  // Throws std::invalid_argument on non-positive sizes or a split not summing to M.
  void validate() const;
  Document to_document() const;
  static DatasetConfig from_document(const Document& doc);
};

// Base seed for the config's split: the namespace bit is clear for train and
// set for val.
std::uint64_t split_base_seed(const DatasetConfig& config);

struct DatasetRecord {
  std::string record_id;
  std::string env_id;
  int difficulty = 0;
  InstanceParams instance;
  std::string prompt;
  std::string verifier_ref;

  Document to_document() const;
  static DatasetRecord from_document(const Document& doc);
};

// First 32 hex digits of sha256 over (env_id, difficulty, seed).
std::string make_record_id(const std::string& env_id, int difficulty, std::uint64_t seed);

// N environments drawn uniformly without replacement, returned sorted.
// Throws std::invalid_argument when N exceeds the pool.
std::vector<std::string> sample_env_subset(std::vector<std::string> env_ids, std::size_t n,
                                           std::uint64_t dataset_seed);

struct Replacement {
  std::string failed;
  std::string replacement;
  std::string reason;
};

struct Dataset {
  DatasetConfig config;
  std::vector<std::string> env_ids;  // environments actually used, in slot order
  std::vector<Replacement> replacements;
  std::vector<DatasetRecord> records;  // sorted by record_id

  std::string jsonl() const;
  // env_id,d1,d2,d3,d4,d5,total
  std::string summary_csv() const;
  Document manifest(const Catalog& catalog) const;
};

// Per-environment record counts for the config's split: M per environment
// for train; val_size spread proportionally (remainder to the first envs)
// for val.
std::vector<LevelSplit> per_env_splits(const DatasetConfig& config, std::size_t env_count);

// Emits the records for `config` from the catalog's environments. An
// environment that fails to generate is replaced by the next candidate from
// the seeded order; runs out → std::runtime_error. `workers` bounds the
// number of environments generated concurrently.
Dataset build_dataset(const DatasetConfig& config, const Catalog& catalog,
                      std::vector<std::string> candidates, std::size_t workers = 4);

// Writes <stem>.jsonl, <stem>.summary.csv and then <stem>.manifest.json
// under `dir`; the manifest marks a finished dataset.
void write_dataset(const Dataset& dataset, const Catalog& catalog,
                   const std::filesystem::path& dir, const std::string& stem);

// Regenerates the record file described by a manifest; the environments
// listed in it are used as is.
Dataset rebuild_from_manifest(const Document& manifest, const Catalog& catalog,
                              std::size_t workers = 4);

std::vector<DatasetRecord> load_records(const std::filesystem::path& jsonl);

}  // namespace envforge::dataset
