#include "envforge/protocol/frame.hpp"

#include <stdexcept>

namespace envforge::protocol {

std::string_view to_string(Op op) {
  switch (op) {
    case Op::generate: return "generate";
    case Op::observe: return "observe";
    case Op::verify: return "verify";
    case Op::shutdown: return "shutdown";
  }
  return "generate";
}

Op op_from_string(std::string_view name) {
  if (name == "generate") return Op::generate;
  if (name == "observe") return Op::observe;
  if (name == "verify") return Op::verify;
  if (name == "shutdown") return Op::shutdown;
  throw std::invalid_argument("unknown op '" + std::string(name) + "'");
}

ResponseFrame ResponseFrame::failure(std::int64_t id, std::string message) {
  ResponseFrame r;
  r.id = id;
  r.ok = false;
  r.error_message = std::move(message);
  return r;
}

Document generate_payload(int difficulty, std::size_t count, std::uint64_t seed) {
  return Document{{"difficulty", difficulty}, {"count", count}, {"seed", seed}};
}

Document observe_payload(const Document& instance) { return Document{{"instance", instance}}; }

Document verify_payload(const Document& instance, std::string_view response_text) {
  return Document{{"instance", instance}, {"response_text", std::string(response_text)}};
}

void validate_payload(Op op, const Document& payload) {
  if (!payload.is_object()) throw std::invalid_argument("payload must be an object");
  auto require = [&](const char* key, bool (Document::*check)() const noexcept) {
    if (!payload.contains(key) || !(payload.at(key).*check)()) {
      throw std::invalid_argument(std::string(to_string(op)) + " payload needs '" + key + "'");
    }
  };
  switch (op) {
    case Op::generate:
      require("difficulty", &Document::is_number_integer);
      require("count", &Document::is_number_integer);
      require("seed", &Document::is_number_integer);
      break;
    case Op::observe:
      require("instance", &Document::is_object);
      break;
    case Op::verify:
      require("instance", &Document::is_object);
      require("response_text", &Document::is_string);
      break;
    case Op::shutdown:
      break;
  }
}

std::string encode(const Request& request) {
  return canonical_dump(
      Document{{"id", request.id}, {"op", to_string(request.op)}, {"payload", request.payload}});
}

std::string encode(const ResponseFrame& response) {
  Document doc{{"id", response.id}, {"ok", response.ok}, {"result", response.result}};
  if (response.error_message) doc["error_message"] = *response.error_message;
  return canonical_dump(doc);
}

std::string encode_hello(int version) {
  return canonical_dump(Document{{"op", "hello"}, {"protocol_version", version}});
}

Request decode_request(std::string_view line) {
  const Document doc = parse_document(line);
  if (!doc.is_object() || !doc.contains("id") || !doc.at("id").is_number_integer() ||
      !doc.contains("op") || !doc.at("op").is_string()) {
    throw std::invalid_argument("request frame needs integer 'id' and string 'op'");
  }
  Request r;
  r.id = doc.at("id").get<std::int64_t>();
  r.op = op_from_string(doc.at("op").get<std::string>());
  r.payload = doc.value("payload", Document::object());
  validate_payload(r.op, r.payload);
  return r;
}

ResponseFrame decode_response(std::string_view line) {
  const Document doc = parse_document(line);
  if (!doc.is_object() || !doc.contains("id") || !doc.at("id").is_number_integer() ||
      !doc.contains("ok") || !doc.at("ok").is_boolean()) {
    throw std::invalid_argument("response frame needs integer 'id' and boolean 'ok'");
  }
  ResponseFrame r;
  r.id = doc.at("id").get<std::int64_t>();
  r.ok = doc.at("ok").get<bool>();
  r.result = doc.value("result", Document::object());
  if (doc.contains("error_message")) {
    if (!doc.at("error_message").is_string()) {
      throw std::invalid_argument("error_message must be a string");
    }
    r.error_message = doc.at("error_message").get<std::string>();
  }
  if (!r.ok && !r.error_message) throw std::invalid_argument("ok=false frame lacks error_message");
  return r;
}

}  // namespace envforge::protocol
