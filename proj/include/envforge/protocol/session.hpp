#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

#include <sys/types.h>

#include "envforge/core/types.hpp"
#include "envforge/protocol/frame.hpp"
#include "envforge/protocol/sandbox.hpp"

namespace envforge::protocol {

enum class SpawnErrorKind { spawn_failure, handshake_timeout, handshake_error, version_mismatch };

std::string_view to_string(SpawnErrorKind kind);

class SpawnError : public std::runtime_error {
 public:
  SpawnError(SpawnErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  SpawnErrorKind kind() const { return kind_; }

 private:
  SpawnErrorKind kind_;
};

// One request/response exchange. `transport` is none when the runner itself
// answered (even with ok=false); otherwise the engine synthesized the failure.
struct CallResult {
  ResponseFrame response;
  ErrorKind transport = ErrorKind::none;

  ErrorKind failure_kind() const {
    if (response.ok) return ErrorKind::none;
    return transport == ErrorKind::none ? ErrorKind::runner_error : transport;
  }
};

// A live runner child process speaking the frame protocol over its standard
// streams. Strictly single-threaded: callers serialize access.
class RunnerSession {
 public:
  // Forks and execs the bundle's entry command under the policy's rlimits and
  // waits for the hello frame. Throws SpawnError.
  static std::unique_ptr<RunnerSession> spawn(const BundleManifest& manifest,
                                              const SandboxPolicy& policy);

  RunnerSession(const RunnerSession&) = delete;
  RunnerSession& operator=(const RunnerSession&) = delete;
  ~RunnerSession();

  // Never throws. On timeout, output overflow, a malformed or mismatched
  // frame, or a dead runner, the process is killed and a synthetic ok=false
  // response is returned.
  CallResult call(Op op, Document payload);

  // Sends shutdown, then kills the process group if it lingers.
  void shutdown();

  bool alive() const { return pid_ > 0; }
  pid_t pid() const { return pid_; }
  std::size_t requests_served() const { return served_; }
  const std::string& stderr_tail() const { return stderr_tail_; }

 private:
  RunnerSession(pid_t pid, int to_child, int from_child, int err_from_child, SandboxPolicy policy);

  enum class ReadStatus { line, timeout, eof, overflow };
  ReadStatus read_line(std::chrono::steady_clock::time_point deadline, std::string& line,
                       std::size_t& budget);
  bool write_all(std::string_view data, std::chrono::steady_clock::time_point deadline);
  void drain_stderr();
  void kill_process();
  std::string exit_description();

  pid_t pid_;
  int to_child_;
  int from_child_;
  int err_from_child_;
  SandboxPolicy policy_;
  std::string pending_;
  std::string stderr_tail_;
  std::int64_t next_id_ = 1;
  std::size_t served_ = 0;
  int exit_status_ = 0;
  bool reaped_ = false;
};

// Sessions for one bundle, created lazily up to `pool_size` and recycled after
// `recycle_after` requests. Thread-safe.
class SessionPool {
 public:
  SessionPool(BundleManifest manifest, SandboxPolicy policy, std::size_t pool_size = 1,
              std::size_t recycle_after = 1000);
  ~SessionPool();

  CallResult call(Op op, const Document& payload);

  const BundleManifest& manifest() const { return manifest_; }
  const SandboxPolicy& policy() const { return policy_; }
  std::size_t spawned() const;

 private:
  std::unique_ptr<RunnerSession> acquire(std::string& error);
  void release(std::unique_ptr<RunnerSession> session);

  BundleManifest manifest_;
  SandboxPolicy policy_;
  std::size_t pool_size_;
  std::size_t recycle_after_;

  mutable std::mutex mutex_;
  std::condition_variable available_;
  std::deque<std::unique_ptr<RunnerSession>> idle_;
  std::size_t live_ = 0;
  std::size_t spawned_ = 0;
};

}  // namespace envforge::protocol
