#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "envforge/core/environment.hpp"
#include "envforge/protocol/sandbox.hpp"

namespace envforge::dataset {

// Where an environment's verifier lives:
//   native:<kind>   a built-in environment served in-process
//   bundle:<dir>    a bundle directory with manifest.json, relative to the catalog root
struct VerifierRef {
  enum class Kind { native, bundle };
  Kind kind = Kind::native;
  std::string target;

  std::string to_string() const;
  // Throws std::invalid_argument on an unknown scheme.
  static VerifierRef parse(const std::string& text);
  bool operator==(const VerifierRef&) const = default;
};

// Resolves env ids to live environments. Bundle entry commands whose first
// word matches an alias (e.g. "envforge-runner") are rewritten to the aliased
// executable before spawning. Thread-safe; environments are built once.
class Catalog {
 public:
  Catalog(std::filesystem::path root = {}, protocol::SandboxPolicy policy = {},
          std::size_t pool_size = 1);

  void add(const std::string& env_id, VerifierRef ref);
  void set_alias(const std::string& name, std::vector<std::string> command);

  bool contains(const std::string& env_id) const;
  const VerifierRef& ref(const std::string& env_id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return refs_.size(); }

  // Throws std::out_of_range for unknown ids and EnvironmentError when a
  // bundle cannot be loaded.
  EnvironmentPtr resolve(const std::string& env_id) const;

  protocol::BundleManifest manifest_for(const std::filesystem::path& bundle_dir) const;

 private:
  std::filesystem::path root_;
  protocol::SandboxPolicy policy_;
  std::size_t pool_size_;
  std::map<std::string, VerifierRef> refs_;
  std::map<std::string, std::vector<std::string>> aliases_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, EnvironmentPtr> live_;
};

// Path of envforge-runner: $ENVFORGE_RUNNER when set, else next to the
// running executable when present there, else the bare name for a PATH lookup.
std::string default_runner_path();

}  // namespace envforge::dataset
