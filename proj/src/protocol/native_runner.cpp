#include "envforge/protocol/native_runner.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <list>
#include <stdexcept>
#include <thread>
#include <vector>

namespace envforge::protocol {

Fault fault_from_string(const std::string& name) {
  static const std::pair<const char*, Fault> kNames[] = {
      {"none", Fault::none},           {"hang", Fault::hang},
      {"crash", Fault::crash},         {"flood", Fault::flood},
      {"exception", Fault::exception}, {"garbage", Fault::garbage},
      {"wrong_id", Fault::wrong_id},   {"alloc_bomb", Fault::alloc_bomb},
      {"exit_early", Fault::exit_early}, {"bad_version", Fault::bad_version},
      {"no_hello", Fault::no_hello},
  };
  for (const auto& [n, f] : kNames) {
    if (name == n) return f;
  }
  throw std::invalid_argument("unknown fault '" + name + "'");
}

ResponseFrame handle_request(const Environment& env, const Request& request) {
  ResponseFrame response;
  response.id = request.id;
  try {
    switch (request.op) {
      case Op::generate: {
        const DifficultyLevel d(request.payload.at("difficulty").get<int>());
        const auto count = request.payload.at("count").get<std::size_t>();
        const auto seed = request.payload.at("seed").get<std::uint64_t>();
        Document instances = Document::array();
        for (const auto& s : env.sample(d, count, seed)) {
          instances.push_back({{"seed", s.seed}, {"payload", s.payload}});
        }
        response.result = {{"instances", instances}};
        break;
      }
      case Op::observe: {
        auto instance = InstanceParams::from_document(request.payload.at("instance"));
        const auto obs = env.observe(instance);
        response.result = {{"question_text", obs.question_text},
                           {"answer_format_hint", obs.answer_format_hint}};
        break;
      }
      case Op::verify: {
        auto instance = InstanceParams::from_document(request.payload.at("instance"));
        const auto verdict =
            env.verify(instance, Response{request.payload.at("response_text").get<std::string>()});
        response.result = {{"reward", verdict.reward}};
        if (verdict.error_kind != ErrorKind::none) {
          response.result["error_kind"] = std::string(to_string(verdict.error_kind));
        }
        break;
      }
      case Op::shutdown:
        response.result = Document::object();
        break;
    }
    response.ok = true;
  } catch (const std::exception& e) {
    response = ResponseFrame::failure(request.id, e.what());
  }
  return response;
}

namespace {

[[noreturn]] void hang_forever() {
  while (true) std::this_thread::sleep_for(std::chrono::hours(1));
}

}  // namespace

int serve_native(const Environment& env, std::istream& in, std::ostream& out,
                 const RunnerOptions& options) {
  switch (options.fault) {
    case Fault::exit_early:
      return 3;
    case Fault::bad_version:
      out << encode_hello(kProtocolVersion + 1) << std::endl;
      break;
    case Fault::no_hello:
      out << "\x01\x02 this is not a frame" << std::endl;
      break;
    default:
      out << encode_hello() << std::endl;
  }

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Request request;
    try {
      request = decode_request(line);
    } catch (const std::exception& e) {
      std::int64_t id = 0;
      try {
        id = parse_document(line).value("id", std::int64_t{0});
      } catch (...) {
      }
      out << encode(ResponseFrame::failure(id, std::string("bad request: ") + e.what()))
          << std::endl;
      continue;
    }
    if (request.op == Op::shutdown) {
      out << encode(handle_request(env, request)) << std::endl;
      return 0;
    }
    if (request.op == options.fault_op) {
      switch (options.fault) {
        case Fault::hang:
          hang_forever();
        case Fault::crash:
          std::abort();
        case Fault::flood: {
          const std::string chunk(1 << 16, 'x');
          while (out) out << chunk;
          return 1;
        }
        case Fault::exception:
          out << encode(ResponseFrame::failure(request.id, "RuntimeError: verifier raised"))
              << std::endl;
          continue;
        case Fault::garbage:
          out << "Traceback (most recent call last): <garbage>" << std::endl;
          continue;
        case Fault::wrong_id: {
          auto r = handle_request(env, request);
          r.id += 1000;
          out << encode(r) << std::endl;
          continue;
        }
        case Fault::alloc_bomb: {
          try {
            std::list<std::vector<char>> hog;
            while (true) hog.emplace_back(std::size_t{64} << 20, 'x');
          } catch (const std::bad_alloc&) {
            out << encode(ResponseFrame::failure(request.id, "MemoryError: allocation failed"))
                << std::endl;
          }
          continue;
        }
        default:
          break;
      }
    }
    out << encode(handle_request(env, request)) << std::endl;
  }
  return 0;
}

}  // namespace envforge::protocol
