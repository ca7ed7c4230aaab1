#include <httplib.h>

#include <cstdlib>

#include "envforge/synth/provider.hpp"

namespace envforge::synth {

Document LiveProviderConfig::to_document() const {
  return Document{{"base_url", base_url},
                  {"model", model},
                  {"api_key_env", api_key_env},
                  {"timeout_seconds", timeout_seconds}};
}

LiveProviderConfig LiveProviderConfig::from_document(const Document& doc) {
  LiveProviderConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "base_url") {
      c.base_url = value.get<std::string>();
    } else if (key == "model") {
      c.model = value.get<std::string>();
    } else if (key == "api_key_env") {
      c.api_key_env = value.get<std::string>();
    } else if (key == "timeout_seconds") {
      c.timeout_seconds = value.get<double>();
    } else {
      throw std::invalid_argument("unknown provider key '" + key + "'");
    }
  }
  if (!(c.timeout_seconds > 0)) throw std::invalid_argument("provider timeout must be positive");
  return c;
}

LiveProvider::LiveProvider(LiveProviderConfig config) : config_(std::move(config)) {
  if (config_.model.empty()) throw std::invalid_argument("live provider needs a model name");
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw std::invalid_argument("environment variable " + config_.api_key_env + " is not set");
  }
  api_key_ = key;
}

std::string LiveProvider::complete(const std::string& prompt, const SamplingParams& params) {
  params.validate();
  httplib::Client client(config_.base_url);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  client.set_connection_timeout(30, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);

  Document body{{"model", config_.model},
                {"max_tokens", params.max_tokens},
                {"temperature", params.temperature},
                {"messages", Document::array({Document{{"role", "user"}, {"content", prompt}}})}};
  httplib::Headers headers{{"x-api-key", api_key_}, {"anthropic-version", "2023-06-01"}};
  auto res = client.Post("/v1/messages", headers, body.dump(), "application/json");
  if (!res) {
    throw ProviderError("provider transport error: " + httplib::to_string(res.error()));
  }
  if (res->status == 402) throw ProviderExhausted("provider quota exhausted (HTTP 402)");
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError("provider returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    if (res->body.find("insufficient_quota") != std::string::npos ||
        res->body.find("credit balance") != std::string::npos) {
      throw ProviderExhausted("provider quota exhausted: " + res->body.substr(0, 200));
    }
    throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 200),
                        false);
  }
  Document reply;
  try {
    reply = parse_document(res->body);
  } catch (const std::exception&) {
    throw ProviderError("provider returned a non-JSON body");
  }
  std::string text;
  if (reply.contains("content") && reply["content"].is_array()) {
    for (const auto& block : reply["content"]) {
      if (block.value("type", std::string()) == "text") text += block.value("text", std::string());
    }
  }
  return text;
}

}  // namespace envforge::synth
