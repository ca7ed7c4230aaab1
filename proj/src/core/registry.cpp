#include <stdexcept>

#include "envforge/core/native_envs.hpp"

namespace envforge {

std::vector<std::string> native_kinds() {
  return {GridPathEnvironment::kKind, TopologicalOrderEnvironment::kKind,
          BooleanCspEnvironment::kKind};
}

std::string native_kind_of(const std::string& env_id) {
  return env_id.substr(0, env_id.find('@'));
}

EnvironmentPtr make_native_environment(const std::string& env_id, NativeOptions options) {
  return make_native_environment(native_kind_of(env_id), env_id, std::move(options));
}

EnvironmentPtr make_native_environment(const std::string& kind, const std::string& env_id,
                                       NativeOptions options) {
  if (kind == GridPathEnvironment::kKind) {
    return std::make_shared<GridPathEnvironment>(env_id, std::move(options));
  }
  if (kind == TopologicalOrderEnvironment::kKind) {
    return std::make_shared<TopologicalOrderEnvironment>(env_id, std::move(options));
  }
  if (kind == BooleanCspEnvironment::kKind) {
    return std::make_shared<BooleanCspEnvironment>(env_id, std::move(options));
  }
  throw std::invalid_argument("unknown native environment kind '" + kind + "'");
}

}  // namespace envforge
