#pragma once

#include <iosfwd>
#include <string>

#include "envforge/core/environment.hpp"
#include "envforge/protocol/frame.hpp"

namespace envforge::protocol {

// Misbehaviours the fixture runner can be told to exhibit, used to exercise
// the engine's containment guarantees.
enum class Fault {
  none,
  hang,          // sleep forever instead of answering
  crash,         // abort()
  flood,         // write an unbounded stream of bytes
  exception,     // answer ok=false as if the bundle raised
  garbage,       // answer with a non-JSON line
  wrong_id,      // answer with a mismatched id
  alloc_bomb,    // allocate until the address-space cap trips
  exit_early,    // exit before the hello frame
  bad_version,   // hello with an unsupported protocol version
  no_hello,      // print garbage instead of hello
};

Fault fault_from_string(const std::string& name);

struct RunnerOptions {
  Fault fault = Fault::none;
  Op fault_op = Op::verify;
};

// Serves env over the frame protocol until shutdown or end of input. Returns
// the process exit status.
int serve_native(const Environment& env, std::istream& in, std::ostream& out,
                 const RunnerOptions& options = {});

// Answers one request frame for a native environment; exceptions become
// ok=false responses.
ResponseFrame handle_request(const Environment& env, const Request& request);

}  // namespace envforge::protocol
