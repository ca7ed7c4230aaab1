#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "envforge/core/document.hpp"
#include "envforge/protocol/frame.hpp"

namespace envforge::protocol {

using Seconds = std::chrono::duration<double>;

// Resource policy for one runner process. Wall-clock timeouts are enforced by
// the engine; memory and CPU caps are installed as process rlimits in the
// child before exec.
struct SandboxPolicy {
  Seconds handshake_timeout{10.0};
  Seconds generate_timeout{30.0};
  Seconds observe_timeout{5.0};
  Seconds verify_timeout{10.0};
  std::size_t memory_cap = std::size_t{1} << 30;  // address space, bytes
  std::size_t max_output = std::size_t{4} << 20;  // bytes per call
  double cpu_seconds = 0.0;                        // RLIMIT_CPU per session; 0 disables
  bool network_allowed = false;

  Seconds timeout_for(Op op) const;
  // Throws std::invalid_argument when a timeout or cap is not positive.
  void validate() const;

  Document to_document() const;
  static SandboxPolicy from_document(const Document& doc);
};

// Manifest of an environment bundle: {entry_command, env_id, declared_difficulties}.
struct BundleManifest {
  std::vector<std::string> entry_command;
  std::string env_id;
  std::vector<int> declared_difficulties{1, 2, 3, 4, 5};
  std::filesystem::path bundle_dir;  // working directory of the runner; not serialized

  Document to_document() const;
  static BundleManifest from_document(const Document& doc, std::filesystem::path bundle_dir = {});
  // Reads <dir>/manifest.json.
  static BundleManifest load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;
};

}  // namespace envforge::protocol
