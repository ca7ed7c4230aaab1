#include "envforge/dataset/catalog.hpp"

#include <unistd.h>

#include <cstdlib>

#include "envforge/core/native_envs.hpp"
#include "envforge/protocol/protocol_env.hpp"

namespace envforge::dataset {

std::string VerifierRef::to_string() const {
  return (kind == Kind::native ? "native:" : "bundle:") + target;
}

VerifierRef VerifierRef::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon + 1 == text.size()) {
    throw std::invalid_argument("malformed verifier reference '" + text + "'");
  }
  const auto scheme = text.substr(0, colon);
  VerifierRef ref;
  ref.target = text.substr(colon + 1);
  if (scheme == "native") {
    ref.kind = Kind::native;
  } else if (scheme == "bundle") {
    ref.kind = Kind::bundle;
  } else {
    throw std::invalid_argument("unknown verifier scheme '" + scheme + "'");
  }
  return ref;
}

Catalog::Catalog(std::filesystem::path root, protocol::SandboxPolicy policy, std::size_t pool_size)
    : root_(std::move(root)), policy_(std::move(policy)), pool_size_(pool_size) {
  aliases_["envforge-runner"] = {default_runner_path()};
}

void Catalog::add(const std::string& env_id, VerifierRef ref) {
  std::lock_guard lock(mutex_);
  refs_[env_id] = std::move(ref);
  live_.erase(env_id);
}

void Catalog::set_alias(const std::string& name, std::vector<std::string> command) {
  std::lock_guard lock(mutex_);
  aliases_[name] = std::move(command);
}

bool Catalog::contains(const std::string& env_id) const { return refs_.count(env_id) > 0; }

const VerifierRef& Catalog::ref(const std::string& env_id) const {
  auto it = refs_.find(env_id);
  if (it == refs_.end()) throw std::out_of_range("unknown environment " + env_id);
  return it->second;
}

std::vector<std::string> Catalog::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : refs_) out.push_back(id);
  return out;
}

protocol::BundleManifest Catalog::manifest_for(const std::filesystem::path& bundle_dir) const {
  auto manifest = protocol::BundleManifest::load(bundle_dir);
  if (!manifest.entry_command.empty()) {
    std::lock_guard lock(mutex_);
    auto it = aliases_.find(manifest.entry_command.front());
    if (it != aliases_.end()) {
      std::vector<std::string> command = it->second;
      command.insert(command.end(), manifest.entry_command.begin() + 1,
                     manifest.entry_command.end());
      manifest.entry_command = std::move(command);
    }
  }
  return manifest;
}

EnvironmentPtr Catalog::resolve(const std::string& env_id) const {
  {
    std::lock_guard lock(mutex_);
    auto it = live_.find(env_id);
    if (it != live_.end()) return it->second;
  }
  const auto& r = ref(env_id);
  EnvironmentPtr env;
  if (r.kind == VerifierRef::Kind::native) {
    env = make_native_environment(r.target, env_id, {});
  } else {
    const auto dir = std::filesystem::path(r.target).is_absolute() ? std::filesystem::path(r.target)
                                                                   : root_ / r.target;
    protocol::BundleManifest manifest;
    try {
      manifest = manifest_for(dir);
    } catch (const std::exception& e) {
      throw EnvironmentError(ErrorKind::runner_error,
                             "cannot load bundle for " + env_id + ": " + e.what());
    }
    if (manifest.env_id != env_id) {
      throw EnvironmentError(ErrorKind::runner_error,
                             "bundle at " + dir.string() + " declares " + manifest.env_id);
    }
    env = std::make_shared<protocol::ProtocolEnvironment>(std::move(manifest), policy_, pool_size_);
  }
  std::lock_guard lock(mutex_);
  return live_.emplace(env_id, env).first->second;
}

std::string default_runner_path() {
  if (const char* env = std::getenv("ENVFORGE_RUNNER"); env != nullptr && *env != '\0') return env;
  char buf[4096];
  const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n > 0) {
    buf[n] = '\0';
    const auto sibling = std::filesystem::path(buf).parent_path() / "envforge-runner";
    if (std::filesystem::exists(sibling)) return sibling.string();
  }
  return "envforge-runner";
}

}  // namespace envforge::dataset
