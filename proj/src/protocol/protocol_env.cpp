#include "envforge/protocol/protocol_env.hpp"

namespace envforge::protocol {

ProtocolEnvironment::ProtocolEnvironment(BundleManifest manifest, SandboxPolicy policy,
                                         std::size_t pool_size, std::size_t recycle_after)
    : id_(manifest.env_id),
      pool_(std::make_unique<SessionPool>(std::move(manifest), std::move(policy), pool_size,
                                          recycle_after)) {}

std::vector<InstanceParams> ProtocolEnvironment::sample(DifficultyLevel difficulty,
                                                        std::size_t count,
                                                        std::uint64_t seed) const {
  const auto call = pool_->call(Op::generate, generate_payload(difficulty.value(), count, seed));
  if (!call.response.ok) {
    throw EnvironmentError(call.failure_kind(),
                           "generate failed: " + call.response.error_message.value_or(""));
  }
  std::vector<InstanceParams> out;
  try {
    for (const auto& item : call.response.result.at("instances")) {
      InstanceParams instance;
      instance.env_id = id_;
      instance.difficulty = difficulty;
      instance.seed = item.at("seed").get<std::uint64_t>();
      instance.payload = item.at("payload");
      out.push_back(std::move(instance));
    }
  } catch (const nlohmann::json::exception& e) {
    throw EnvironmentError(ErrorKind::runner_error,
                           std::string("generate returned a malformed result: ") + e.what());
  }
  if (out.size() != count) {
    throw EnvironmentError(ErrorKind::runner_error, "generate returned " +
                                                        std::to_string(out.size()) +
                                                        " instances, expected " +
                                                        std::to_string(count));
  }
  return out;
}

Observation ProtocolEnvironment::observe(const InstanceParams& instance) const {
  const auto call = pool_->call(Op::observe, observe_payload(instance.to_document()));
  if (!call.response.ok) {
    throw EnvironmentError(call.failure_kind(),
                           "observe failed: " + call.response.error_message.value_or(""));
  }
  const auto& result = call.response.result;
  if (!result.contains("question_text") || !result.at("question_text").is_string() ||
      result.at("question_text").get<std::string>().empty()) {
    throw EnvironmentError(ErrorKind::runner_error, "observe returned no question_text");
  }
  return {result.at("question_text").get<std::string>(),
          result.value("answer_format_hint", std::string())};
}

Verdict verdict_from_call(const CallResult& call) {
  if (!call.response.ok) {
    return Verdict::failure(call.failure_kind(), call.response.error_message.value_or(""));
  }
  const auto& result = call.response.result;
  if (!result.contains("reward")) {
    return Verdict::failure(ErrorKind::runner_error, "verify result has no reward");
  }
  const auto& reward = result.at("reward");
  int value = -1;
  if (reward.is_boolean()) value = reward.get<bool>() ? 1 : 0;
  if (reward.is_number_integer()) value = reward.get<int>();
  if (value != 0 && value != 1) {
    return Verdict::failure(ErrorKind::runner_error, "verify reward is not 0 or 1");
  }
  if (result.contains("error_kind") && result.at("error_kind").is_string()) {
    const auto kind = error_kind_from_string(result.at("error_kind").get<std::string>());
    if (kind != ErrorKind::none) {
      return Verdict::failure(kind, result.value("detail", std::string()));
    }
  }
  return value == 1 ? Verdict::correct() : Verdict::incorrect();
}

Verdict ProtocolEnvironment::verify(const InstanceParams& instance,
                                    const Response& response) const {
  return verdict_from_call(
      pool_->call(Op::verify, verify_payload(instance.to_document(), response.text)));
}

}  // namespace envforge::protocol
