#include "envforge/reward/harness.hpp"

#include <cctype>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <system_error>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

namespace envforge::reward {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

std::vector<std::size_t> occurrences(std::string_view text, std::string_view tag) {
  std::vector<std::size_t> out;
  for (auto pos = text.find(tag); pos != std::string_view::npos; pos = text.find(tag, pos + 1)) {
    out.push_back(pos);
  }
  return out;
}

bool all_space(std::string_view s) {
  for (unsigned char c : s) {
    if (!std::isspace(c)) return false;
  }
  return true;
}

Document error_reply(const Document& request, const std::string& message) {
  Document reply{{"error", message}};
  if (request.is_object() && request.contains("record_id")) reply["record_id"] = request["record_id"];
  return reply;
}

}  // namespace

TagParse parse_tags(std::string_view text) {
  TagParse parse;
  const auto to = occurrences(text, kThinkOpen);
  const auto tc = occurrences(text, kThinkClose);
  const auto ao = occurrences(text, kAnswerOpen);
  const auto ac = occurrences(text, kAnswerClose);
  if (to.size() != 1 || tc.size() != 1 || ao.size() != 1 || ac.size() != 1) return parse;
  const std::size_t think_body = to[0] + kThinkOpen.size();
  const std::size_t answer_body = ao[0] + kAnswerOpen.size();
  if (tc[0] < think_body || ao[0] < tc[0] + kThinkClose.size() || ac[0] < answer_body) {
    return parse;
  }
  if (!all_space(text.substr(tc[0] + kThinkClose.size(), ao[0] - tc[0] - kThinkClose.size()))) {
    return parse;
  }
  parse.think_text = std::string(text.substr(think_body, tc[0] - think_body));
  parse.answer_text = std::string(text.substr(answer_body, ac[0] - answer_body));
  parse.format_ok = true;
  return parse;
}

Document RewardBreakdown::to_document() const {
  return Document{{"format_score", format_score}, {"answer_score", answer_score}, {"total", total}};
}

std::string attach_prompt_prefix(const Observation& question) {
  if (std::string_view(question.question_text).substr(0, kPromptPrefix.size()) == kPromptPrefix) {
    throw std::invalid_argument("question already carries the prompt prefix");
  }
  return std::string(kPromptPrefix) + "\n\n" + question.question_text;
}

RewardBreakdown score(const Environment& env, const InstanceParams& instance,
                      const Response& response) noexcept {
  RewardBreakdown r;
  r.format_score = parse_tags(response.text).format_ok ? 1 : 0;
  if (r.format_score == 1) {
    const auto verdict = envforge::verify(env, instance, response);
    r.answer_score = verdict.reward;
  }
  r.total = r.format_score * r.answer_score;
  return r;
}

RewardService::RewardService(std::map<std::string, InstanceParams> records,
                             EnvironmentResolver resolver)
    : records_(std::move(records)), resolver_(std::move(resolver)) {}

EnvironmentPtr RewardService::resolve(const std::string& env_id) const {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(env_id);
  if (it != cache_.end()) return it->second;
  auto env = resolver_(env_id);
  if (!env) throw std::runtime_error("cannot resolve environment " + env_id);
  cache_.emplace(env_id, env);
  return env;
}

std::string RewardService::handle(std::string_view line) const {
  Document request;
  try {
    request = parse_document(line);
  } catch (const std::exception&) {
    return canonical_dump(error_reply(nullptr, "malformed frame"));
  }
  if (!request.is_object() || !request.contains("record_id") ||
      !request["record_id"].is_string() || !request.contains("response_text") ||
      !request["response_text"].is_string()) {
    return canonical_dump(
        error_reply(request, "frame needs string fields record_id and response_text"));
  }
  const auto record_id = request["record_id"].get<std::string>();
  auto it = records_.find(record_id);
  if (it == records_.end()) {
    return canonical_dump(error_reply(request, "unknown record_id " + record_id));
  }
  const auto env = resolve(it->second.env_id);
  auto reply = score(*env, it->second, Response{request["response_text"].get<std::string>()})
                   .to_document();
  reply["record_id"] = record_id;
  return canonical_dump(reply);
}

void RewardService::serve_stream(std::istream& in, std::ostream& out,
                                 const std::atomic<bool>* stop) const {
  std::string line;
  while ((stop == nullptr || !stop->load()) && std::getline(in, line)) {
    if (line.empty()) continue;
    std::string reply;
    try {
      reply = handle(line);
    } catch (const std::exception& e) {
      spdlog::error("reward service: {}", e.what());
      reply = canonical_dump(Document{{"error", e.what()}});
    }
    out << reply << '\n' << std::flush;
  }
}

void RewardService::serve_tcp(int port, const std::atomic<bool>& stop,
                              const std::function<void(int)>& on_bound) const {
  const int listener = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listener < 0) throw std::system_error(errno, std::generic_category(), "socket");
  int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listener, 64) != 0) {
    const int err = errno;
    ::close(listener);
    throw std::system_error(err, std::generic_category(), "bind 127.0.0.1:" + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_bound) on_bound(ntohs(addr.sin_port));

  std::vector<std::thread> workers;
  while (!stop.load()) {
    pollfd fd{listener, POLLIN, 0};
    if (::poll(&fd, 1, 100) <= 0) continue;
    const int conn = ::accept4(listener, nullptr, nullptr, SOCK_CLOEXEC);
    if (conn < 0) continue;
    workers.emplace_back([this, conn, &stop] {
      std::string pending;
      char buf[65536];
      while (true) {
        pollfd pfd{conn, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, 100);
        if (rc == 0) {
          if (stop.load()) break;
          continue;
        }
        const ssize_t n = ::read(conn, buf, sizeof(buf));
        if (n <= 0) break;
        pending.append(buf, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = pending.find('\n')) != std::string::npos) {
          const std::string line = pending.substr(0, nl);
          pending.erase(0, nl + 1);
          if (line.empty()) continue;
          std::string reply;
          try {
            reply = handle(line);
          } catch (const std::exception& e) {
            spdlog::error("reward service: {}", e.what());
            reply = canonical_dump(Document{{"error", e.what()}});
          }
          reply += '\n';
          std::string_view rest(reply);
          while (!rest.empty()) {
            const ssize_t w = ::send(conn, rest.data(), rest.size(), MSG_NOSIGNAL);
            if (w <= 0) break;
            rest.remove_prefix(static_cast<std::size_t>(w));
          }
        }
      }
      ::close(conn);
    });
  }
  ::close(listener);
  for (auto& w : workers) w.join();
}

}  // namespace envforge::reward
