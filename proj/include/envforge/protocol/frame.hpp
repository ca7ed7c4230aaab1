#pragma once

// Newline-delimited JSON frames exchanged with environment runner processes.
//
//   runner -> engine on startup : {"op":"hello","protocol_version":1}
//   engine -> runner            : {"id":N,"op":"generate|observe|verify|shutdown","payload":{...}}
//   runner -> engine            : {"id":N,"ok":true,"result":{...}}
//                                 {"id":N,"ok":false,"result":{},"error_message":"..."}
//
// Runners may interleave {"op":"warning","message":"..."} frames; the engine
// logs and skips them.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "envforge/core/document.hpp"

namespace envforge::protocol {

inline constexpr int kProtocolVersion = 1;

enum class Op { generate, observe, verify, shutdown };

std::string_view to_string(Op op);
Op op_from_string(std::string_view name);  // throws std::invalid_argument

struct Request {
  std::int64_t id = 0;
  Op op = Op::generate;
  Document payload = Document::object();

  bool operator==(const Request&) const = default;
};

struct ResponseFrame {
  std::int64_t id = 0;
  bool ok = false;
  Document result = Document::object();
  std::optional<std::string> error_message;

  static ResponseFrame failure(std::int64_t id, std::string message);
  bool operator==(const ResponseFrame&) const = default;
};

// Payload builders; each produces exactly the fields its op requires.
Document generate_payload(int difficulty, std::size_t count, std::uint64_t seed);
Document observe_payload(const Document& instance);
Document verify_payload(const Document& instance, std::string_view response_text);

// Throws std::invalid_argument when op-specific payload fields are missing.
void validate_payload(Op op, const Document& payload);

// Encoders return the frame without the trailing newline.
std::string encode(const Request& request);
std::string encode(const ResponseFrame& response);
std::string encode_hello(int version = kProtocolVersion);

// Decoders throw std::invalid_argument on malformed frames.
Request decode_request(std::string_view line);
ResponseFrame decode_response(std::string_view line);

}  // namespace envforge::protocol
