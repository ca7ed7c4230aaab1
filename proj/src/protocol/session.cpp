#include "envforge/protocol/session.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <mutex>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

namespace envforge::protocol {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kStderrTail = 4096;

void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { std::signal(SIGPIPE, SIG_IGN); });
}

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK); }

int millis_until(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() <= 0 ? 0 : static_cast<int>(std::min<long long>(left.count(), 60'000));
}

Clock::time_point deadline_after(Seconds s) {
  return Clock::now() + std::chrono::duration_cast<Clock::duration>(s);
}

// Runs in the forked child: only async-signal-safe calls until exec.
[[noreturn]] void exec_child(const std::vector<char*>& argv, const char* workdir, int in_fd,
                             int out_fd, int err_fd, int status_fd, const SandboxPolicy& policy) {
  ::setpgid(0, 0);
  ::dup2(in_fd, STDIN_FILENO);
  ::dup2(out_fd, STDOUT_FILENO);
  ::dup2(err_fd, STDERR_FILENO);
  for (int fd = 3; fd < 1024; ++fd) {
    if (fd != status_fd) ::close(fd);
  }
  ::signal(SIGPIPE, SIG_DFL);

  rlimit lim{};
  lim.rlim_cur = lim.rlim_max = policy.memory_cap;
  ::setrlimit(RLIMIT_AS, &lim);
  lim.rlim_cur = lim.rlim_max = 0;
  ::setrlimit(RLIMIT_CORE, &lim);
  if (policy.cpu_seconds > 0) {
    lim.rlim_cur = static_cast<rlim_t>(std::ceil(policy.cpu_seconds));
    lim.rlim_max = lim.rlim_cur + 1;
    ::setrlimit(RLIMIT_CPU, &lim);
  }
  if (!policy.network_allowed) {
    // Best effort: an empty network namespace needs privileges we may lack.
    ::unshare(CLONE_NEWNET);
  }
  if (workdir != nullptr && ::chdir(workdir) != 0) {
    const int err = errno;
    (void)!::write(status_fd, &err, sizeof(err));
    ::_exit(127);
  }
  ::execvp(argv[0], argv.data());
  const int err = errno;
  (void)!::write(status_fd, &err, sizeof(err));
  ::_exit(127);
}

}  // namespace

std::string_view to_string(SpawnErrorKind kind) {
  switch (kind) {
    case SpawnErrorKind::spawn_failure: return "spawn_failure";
    case SpawnErrorKind::handshake_timeout: return "handshake_timeout";
    case SpawnErrorKind::handshake_error: return "handshake_error";
    case SpawnErrorKind::version_mismatch: return "version_mismatch";
  }
  return "spawn_failure";
}

std::unique_ptr<RunnerSession> RunnerSession::spawn(const BundleManifest& manifest,
                                                    const SandboxPolicy& policy) {
  policy.validate();
  ignore_sigpipe_once();
  if (manifest.entry_command.empty()) {
    throw SpawnError(SpawnErrorKind::spawn_failure, "bundle declares no entry command");
  }

  int in_pipe[2], out_pipe[2], err_pipe[2], status_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 ||
      ::pipe2(err_pipe, O_CLOEXEC) != 0 || ::pipe2(status_pipe, O_CLOEXEC) != 0) {
    throw SpawnError(SpawnErrorKind::spawn_failure, std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<std::string> args = manifest.entry_command;
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  const std::string workdir = manifest.bundle_dir.string();

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1],
                   status_pipe[0], status_pipe[1]}) {
      ::close(fd);
    }
    throw SpawnError(SpawnErrorKind::spawn_failure, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    exec_child(argv, workdir.empty() ? nullptr : workdir.c_str(), in_pipe[0], out_pipe[1],
               err_pipe[1], status_pipe[1], policy);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(status_pipe[1]);

  std::unique_ptr<RunnerSession> session(
      new RunnerSession(pid, in_pipe[1], out_pipe[0], err_pipe[0], policy));

  int exec_errno = 0;
  ssize_t n;
  do {
    n = ::read(status_pipe[0], &exec_errno, sizeof(exec_errno));
  } while (n < 0 && errno == EINTR);
  ::close(status_pipe[0]);
  if (n > 0) {
    session->kill_process();
    throw SpawnError(SpawnErrorKind::spawn_failure, "cannot exec '" + args.front() +
                                                        "': " + std::strerror(exec_errno));
  }

  std::string line;
  std::size_t budget = policy.max_output;
  switch (session->read_line(deadline_after(policy.handshake_timeout), line, budget)) {
    case ReadStatus::eof: {
      auto how = session->exit_description();
      throw SpawnError(SpawnErrorKind::spawn_failure, "runner exited before handshake (" + how + ")");
    }
    case ReadStatus::timeout:
      session->kill_process();
      throw SpawnError(SpawnErrorKind::handshake_timeout, "no hello frame within handshake timeout");
    case ReadStatus::overflow:
      session->kill_process();
      throw SpawnError(SpawnErrorKind::handshake_error, "hello frame exceeds output cap");
    case ReadStatus::line:
      break;
  }
  Document hello;
  try {
    hello = parse_document(line);
  } catch (const std::exception&) {
    session->kill_process();
    throw SpawnError(SpawnErrorKind::handshake_error,
                     "expected hello frame, got: " + line.substr(0, 120));
  }
  if (!hello.is_object() || hello.value("op", std::string()) != "hello" ||
      !hello.contains("protocol_version") || !hello.at("protocol_version").is_number_integer()) {
    session->kill_process();
    throw SpawnError(SpawnErrorKind::handshake_error,
                     "expected hello frame, got: " + line.substr(0, 120));
  }
  const int version = hello.at("protocol_version").get<int>();
  if (version != kProtocolVersion) {
    session->kill_process();
    throw SpawnError(SpawnErrorKind::version_mismatch,
                     "runner speaks protocol " + std::to_string(version) + ", engine speaks " +
                         std::to_string(kProtocolVersion));
  }
  return session;
}

RunnerSession::RunnerSession(pid_t pid, int to_child, int from_child, int err_from_child,
                             SandboxPolicy policy)
    : pid_(pid),
      to_child_(to_child),
      from_child_(from_child),
      err_from_child_(err_from_child),
      policy_(std::move(policy)) {
  set_nonblocking(to_child_);
  set_nonblocking(from_child_);
  set_nonblocking(err_from_child_);
}

RunnerSession::~RunnerSession() {
  if (pid_ > 0) kill_process();
  for (int fd : {to_child_, from_child_, err_from_child_}) {
    if (fd >= 0) ::close(fd);
  }
}

void RunnerSession::drain_stderr() {
  char buf[4096];
  while (true) {
    const ssize_t n = ::read(err_from_child_, buf, sizeof(buf));
    if (n <= 0) break;
    stderr_tail_.append(buf, static_cast<std::size_t>(n));
    if (stderr_tail_.size() > kStderrTail) {
      stderr_tail_.erase(0, stderr_tail_.size() - kStderrTail);
    }
  }
}

RunnerSession::ReadStatus RunnerSession::read_line(Clock::time_point deadline, std::string& line,
                                                   std::size_t& budget) {
  while (true) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return ReadStatus::line;
    }
    if (pending_.size() > budget) return ReadStatus::overflow;

    pollfd fds[2] = {{from_child_, POLLIN, 0}, {err_from_child_, POLLIN, 0}};
    const int timeout_ms = millis_until(deadline);
    if (timeout_ms == 0) return ReadStatus::timeout;
    const int rc = ::poll(fds, 2, timeout_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return ReadStatus::eof;
    }
    if (rc == 0) continue;  // re-check the deadline
    if (fds[1].revents & (POLLIN | POLLHUP)) drain_stderr();
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[65536];
      const ssize_t n = ::read(from_child_, buf, sizeof(buf));
      if (n == 0) return ReadStatus::eof;
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        return ReadStatus::eof;
      }
      const auto got = static_cast<std::size_t>(n);
      if (got > budget) {
        budget = 0;
        return ReadStatus::overflow;
      }
      budget -= got;
      pending_.append(buf, got);
    }
  }
}

bool RunnerSession::write_all(std::string_view data, Clock::time_point deadline) {
  while (!data.empty()) {
    const ssize_t n = ::write(to_child_, data.data(), data.size());
    if (n > 0) {
      data.remove_prefix(static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && errno != EAGAIN && errno != EINTR) return false;
    pollfd fd{to_child_, POLLOUT, 0};
    const int timeout_ms = millis_until(deadline);
    if (timeout_ms == 0) return false;
    ::poll(&fd, 1, timeout_ms);
    if (fd.revents & (POLLERR | POLLHUP)) return false;
  }
  return true;
}

void RunnerSession::kill_process() {
  if (pid_ <= 0) return;
  ::kill(-pid_, SIGKILL);
  ::kill(pid_, SIGKILL);
  if (!reaped_) {
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    exit_status_ = status;
    reaped_ = true;
  }
  pid_ = -pid_;
}

std::string RunnerSession::exit_description() {
  if (pid_ > 0 && !reaped_) {
    // The pipe closed; give the process a moment to finish exiting.
    int status = 0;
    pid_t r = 0;
    for (int i = 0; i < 100 && r == 0; ++i) {
      r = ::waitpid(pid_, &status, WNOHANG);
      if (r == 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (r == pid_) {
      exit_status_ = status;
      reaped_ = true;
      ::kill(-pid_, SIGKILL);
      pid_ = -pid_;
    } else {
      kill_process();
      return "killed after closing its output";
    }
  } else if (pid_ > 0) {
    pid_ = -pid_;
  }
  drain_stderr();
  if (WIFEXITED(exit_status_)) return "exit status " + std::to_string(WEXITSTATUS(exit_status_));
  if (WIFSIGNALED(exit_status_)) {
    const int sig = WTERMSIG(exit_status_);
    return std::string("signal ") + std::to_string(sig) + " (" + ::strsignal(sig) + ")";
  }
  return "unknown status";
}

CallResult RunnerSession::call(Op op, Document payload) {
  const std::int64_t id = next_id_++;
  if (pid_ <= 0) {
    return {ResponseFrame::failure(id, "runner is not running"), ErrorKind::runner_error};
  }
  ++served_;
  const auto timeout = policy_.timeout_for(op);
  const auto deadline = deadline_after(timeout);

  Request request{id, op, std::move(payload)};
  const std::string frame = encode(request) + "\n";
  if (!write_all(frame, deadline)) {
    const auto how = exit_description();
    return {ResponseFrame::failure(id, "broken pipe to runner (" + how + ")"),
            ErrorKind::runner_error};
  }

  std::size_t budget = policy_.max_output;
  while (true) {
    std::string line;
    switch (read_line(deadline, line, budget)) {
      case ReadStatus::timeout: {
        kill_process();
        char msg[128];
        std::snprintf(msg, sizeof(msg), "timeout: runner exceeded %.3gs on %s", timeout.count(),
                      std::string(to_string(op)).c_str());
        return {ResponseFrame::failure(id, msg), ErrorKind::timeout};
      }
      case ReadStatus::overflow:
        kill_process();
        return {ResponseFrame::failure(id, "resource limit: runner output exceeded " +
                                               std::to_string(policy_.max_output) + " bytes"),
                ErrorKind::resource_limit};
      case ReadStatus::eof: {
        const auto how = exit_description();
        const bool cpu = how.find("signal " + std::to_string(SIGXCPU)) == 0;
        if (op == Op::shutdown && how.rfind("exit status 0", 0) == 0) {
          ResponseFrame ack;
          ack.id = id;
          ack.ok = true;
          return {ack, ErrorKind::none};
        }
        return {ResponseFrame::failure(id, (cpu ? "resource limit: " : "runner crashed: ") + how +
                                               (stderr_tail_.empty() ? "" : "; stderr: " + stderr_tail_)),
                cpu ? ErrorKind::resource_limit : ErrorKind::runner_error};
      }
      case ReadStatus::line:
        break;
    }
    if (line.empty()) continue;
    Document doc;
    try {
      doc = parse_document(line);
    } catch (const std::exception&) {
      kill_process();
      return {ResponseFrame::failure(id, "malformed frame from runner: " + line.substr(0, 120)),
              ErrorKind::runner_error};
    }
    if (doc.is_object() && doc.value("op", std::string()) == "warning") {
      spdlog::warn("runner {}: {}", pid_, doc.value("message", std::string()));
      continue;
    }
    ResponseFrame response;
    try {
      response = decode_response(line);
    } catch (const std::exception& e) {
      kill_process();
      return {ResponseFrame::failure(id, std::string("malformed frame from runner: ") + e.what()),
              ErrorKind::runner_error};
    }
    if (response.id != id) {
      kill_process();
      return {ResponseFrame::failure(id, "runner answered id " + std::to_string(response.id) +
                                             " to request " + std::to_string(id)),
              ErrorKind::runner_error};
    }
    return {std::move(response), ErrorKind::none};
  }
}

void RunnerSession::shutdown() {
  if (pid_ <= 0) return;
  const auto saved = policy_.observe_timeout;
  policy_.observe_timeout = Seconds(1.0);
  call(Op::shutdown, Document::object());
  policy_.observe_timeout = saved;
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        exit_status_ = status;
        reaped_ = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill_process();
  }
}

SessionPool::SessionPool(BundleManifest manifest, SandboxPolicy policy, std::size_t pool_size,
                         std::size_t recycle_after)
    : manifest_(std::move(manifest)),
      policy_(std::move(policy)),
      pool_size_(std::max<std::size_t>(1, pool_size)),
      recycle_after_(std::max<std::size_t>(1, recycle_after)) {
  policy_.validate();
}

SessionPool::~SessionPool() {
  std::lock_guard lock(mutex_);
  for (auto& s : idle_) s->shutdown();
}

std::size_t SessionPool::spawned() const {
  std::lock_guard lock(mutex_);
  return spawned_;
}

std::unique_ptr<RunnerSession> SessionPool::acquire(std::string& error) {
  {
    std::unique_lock lock(mutex_);
    available_.wait(lock, [&] { return !idle_.empty() || live_ < pool_size_; });
    if (!idle_.empty()) {
      auto s = std::move(idle_.front());
      idle_.pop_front();
      return s;
    }
    ++live_;
    ++spawned_;
  }
  try {
    return RunnerSession::spawn(manifest_, policy_);
  } catch (const SpawnError& e) {
    error = std::string(to_string(e.kind())) + ": " + e.what();
  }
  std::lock_guard lock(mutex_);
  --live_;
  available_.notify_one();
  return nullptr;
}

void SessionPool::release(std::unique_ptr<RunnerSession> session) {
  if (session->alive() && session->requests_served() >= recycle_after_) session->shutdown();
  std::lock_guard lock(mutex_);
  if (session->alive()) {
    idle_.push_back(std::move(session));
  } else {
    --live_;
  }
  available_.notify_one();
}

CallResult SessionPool::call(Op op, const Document& payload) {
  std::string error;
  auto session = acquire(error);
  if (!session) {
    return {ResponseFrame::failure(0, "spawn failed: " + error), ErrorKind::runner_error};
  }
  auto result = session->call(op, payload);
  release(std::move(session));
  return result;
}

}  // namespace envforge::protocol
