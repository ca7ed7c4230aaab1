// Protocol runner hosting a native reference environment. Serves as the
// conformance fixture for the runner protocol and, through --fault, as the
// hostile-runner fixture.

#include <iostream>

#include <CLI11.hpp>

#include "envforge/core/native_envs.hpp"
#include "envforge/protocol/native_runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"envforge-runner: serve a native environment over the runner protocol"};
  std::string env_id = envforge::GridPathEnvironment::kKind;
  std::string fault = "none";
  std::string fault_op = "verify";
  std::string kind;
  app.add_option("--env,--id", env_id, "environment id (<kind> or <kind>@<variant>)");
  app.add_option("--kind", kind, "native kind backing the id; defaults to the id's prefix");
  app.add_option("--fault", fault, "misbehaviour to exhibit");
  app.add_option("--fault-op", fault_op, "operation that triggers the fault");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto env = kind.empty() ? envforge::make_native_environment(env_id)
                                  : envforge::make_native_environment(kind, env_id, {});
    envforge::protocol::RunnerOptions options;
    options.fault = envforge::protocol::fault_from_string(fault);
    options.fault_op = envforge::protocol::op_from_string(fault_op);
    std::ios::sync_with_stdio(false);
    return envforge::protocol::serve_native(*env, std::cin, std::cout, options);
  } catch (const std::exception& e) {
    std::cerr << "envforge-runner: " << e.what() << '\n';
    return 2;
  }
}
