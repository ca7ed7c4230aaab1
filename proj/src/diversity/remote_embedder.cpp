#include <httplib.h>

#include <cstdlib>

#include "envforge/diversity/diversity.hpp"

namespace envforge::diversity {

Document RemoteEmbedderConfig::to_document() const {
  return Document{{"base_url", base_url},
                  {"path", path},
                  {"model", model},
                  {"api_key_env", api_key_env},
                  {"timeout_seconds", timeout_seconds}};
}

RemoteEmbedderConfig RemoteEmbedderConfig::from_document(const Document& doc) {
  RemoteEmbedderConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "base_url") {
      c.base_url = value.get<std::string>();
    } else if (key == "path") {
      c.path = value.get<std::string>();
    } else if (key == "model") {
      c.model = value.get<std::string>();
    } else if (key == "api_key_env") {
      c.api_key_env = value.get<std::string>();
    } else if (key == "timeout_seconds") {
      c.timeout_seconds = value.get<double>();
    } else {
      throw std::invalid_argument("unknown embedder key '" + key + "'");
    }
  }
  return c;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw std::invalid_argument("remote embedder needs a base_url");
}

std::vector<Embedding> RemoteEmbedder::embed(const std::vector<std::string>& texts) {
  httplib::Client client(config_.base_url);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  Document body{{"model", config_.model}, {"input", texts}};
  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) throw std::runtime_error("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw std::runtime_error("embedding endpoint returned HTTP " + std::to_string(res->status));
  }
  const auto reply = parse_document(res->body);
  const auto& data = reply.at("data");
  if (data.size() != texts.size()) {
    throw std::runtime_error("embedding endpoint returned " + std::to_string(data.size()) +
                             " vectors for " + std::to_string(texts.size()) + " inputs");
  }
  std::vector<Embedding> out(texts.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto slot = data[i].value("index", i);
    if (slot >= out.size() || !out[slot].empty()) throw std::runtime_error("embedding endpoint returned a bad index");
    out[slot] = data[i].at("embedding").get<Embedding>();
  }
  return out;
}

}  // namespace envforge::diversity
