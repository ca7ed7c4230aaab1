#include "envforge/synth/provider.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "envforge/core/native_envs.hpp"

namespace envforge::synth {

void SamplingParams::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

Document SamplingParams::to_document() const {
  return Document{{"temperature", temperature}, {"max_tokens", max_tokens}};
}

SamplingParams SamplingParams::from_document(const Document& doc) {
  SamplingParams p;
  for (const auto& [key, value] : doc.items()) {
    if (key == "temperature") {
      p.temperature = value.get<double>();
    } else if (key == "max_tokens") {
      p.max_tokens = value.get<int>();
    } else {
      throw std::invalid_argument("unknown sampling key '" + key + "'");
    }
  }
  p.validate();
  return p;
}

Document AuditEntry::to_document() const {
  return Document{{"stage", stage},   {"keyword", keyword},   {"provider", provider},
                  {"params", params.to_document()}, {"prompt", prompt}, {"response", response}};
}

AuditEntry AuditEntry::from_document(const Document& doc) {
  AuditEntry e;
  e.stage = doc.at("stage").get<std::string>();
  e.keyword = doc.at("keyword").get<std::string>();
  e.provider = doc.value("provider", std::string());
  e.params = SamplingParams::from_document(doc.at("params"));
  e.prompt = doc.at("prompt").get<std::string>();
  e.response = doc.at("response").get<std::string>();
  return e;
}

AuditLog::AuditLog(std::filesystem::path file) : file_(std::move(file)) {
  if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
}

void AuditLog::record(AuditEntry entry) {
  std::lock_guard lock(mutex_);
  if (file_) {
    std::ofstream out(*file_, std::ios::app | std::ios::binary);
    out << canonical_dump(entry.to_document()) << '\n';
  }
  entries_.push_back(std::move(entry));
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::vector<AuditEntry> AuditLog::read(const std::filesystem::path& file) {
  std::vector<AuditEntry> out;
  std::ifstream in(file, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(AuditEntry::from_document(parse_document(line)));
  }
  return out;
}

std::string ask(LlmProvider& provider, AuditLog* log, const std::string& stage,
                const std::string& keyword, const std::string& prompt,
                const SamplingParams& params) {
  auto response = provider.complete(prompt, params);
  if (log != nullptr) log->record({stage, keyword, provider.id(), params, prompt, response});
  return response;
}

// ---------------------------------------------------------------------------

MockProvider::MockProvider(std::vector<Rule> rules, std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

void MockProvider::add_rule(Rule rule) {
  std::lock_guard lock(mutex_);
  rules_.push_back(std::move(rule));
}

std::string MockProvider::complete(const std::string& prompt, const SamplingParams& params) {
  params.validate();
  std::vector<Rule> rules;
  {
    std::lock_guard lock(mutex_);
    ++attempts_;
    if (attempts_ <= fail_first_) throw ProviderError("mock: injected transport failure");
    if (exhaust_after_ && calls_.load() >= *exhaust_after_) {
      throw ProviderExhausted("mock: call budget of " + std::to_string(*exhaust_after_) +
                              " exhausted");
    }
    ++calls_;
    rules = rules_;
  }
  for (const auto& rule : rules) {
    if (prompt.find(rule.match) == std::string::npos) continue;
    return rule.handler ? rule.handler(prompt) : rule.response;
  }
  if (fallback_) return *fallback_;
  throw ProviderError("mock: no rule matches prompt", false);
}

MockProvider::Handler MockProvider::grid_solver(std::map<int, double> accuracy_by_size) {
  return [accuracy = std::move(accuracy_by_size)](const std::string& prompt) -> std::string {
    const auto marker = prompt.find("right/down moves");
    if (marker == std::string::npos) return "<think>no grid found</think> <answer>0</answer>";
    std::istringstream in(prompt.substr(marker));
    std::string line;
    std::getline(in, line);
    Grid grid;
    while (std::getline(in, line)) {
      if (line.empty()) {
        if (grid.empty()) continue;
        break;
      }
      std::istringstream cells(line);
      std::vector<std::int64_t> row;
      std::int64_t v;
      while (cells >> v) row.push_back(v);
      if (row.empty() || !cells.eof()) break;
      grid.push_back(std::move(row));
    }
    std::int64_t cost = 0;
    try {
      cost = grid_min_cost(grid);
    } catch (const std::exception&) {
      return "<think>unreadable grid</think> <answer>0</answer>";
    }
    const int size = static_cast<int>(grid.size());
    double p = 0.0;
    if (auto it = accuracy.find(size); it != accuracy.end()) p = it->second;
    const bool right = static_cast<double>(hash64(prompt) % 10000) < p * 10000.0;
    const auto answer = right ? cost : cost + 1;
    return "<think>dynamic programming over the grid</think> <answer>" +
           std::to_string(answer) + "</answer>";
  };
}

MockProvider::Handler MockProvider::descriptor_echo() {
  return [](const std::string& prompt) -> std::string {
    Document out = Document::object();
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("TASK_", 0) != 0) continue;
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = line.substr(0, colon);
      if (key.find(' ') != std::string::npos) continue;
      std::istringstream words(line.substr(colon + 1));
      std::string word, text;
      for (int i = 0; i < 12 && words >> word; ++i) text += (i ? " " : "") + word;
      out[key] = "Reasoning pattern: " + text;
    }
    return "```json\n" + out.dump(2) + "\n```";
  };
}

std::shared_ptr<MockProvider> MockProvider::from_document(const Document& doc) {
  auto mock = std::make_shared<MockProvider>();
  for (const auto& [key, value] : doc.items()) {
    if (key == "rules") {
      for (const auto& r : value) {
        Rule rule;
        rule.match = r.at("match").get<std::string>();
        const std::string handler = r.value("handler", std::string("constant"));
        if (handler == "constant") {
          rule.response = r.at("response").get<std::string>();
        } else if (handler == "grid_solver") {
          std::map<int, double> accuracy;
          for (const auto& [size, p] : r.at("accuracy").items()) accuracy[std::stoi(size)] = p;
          rule.handler = grid_solver(std::move(accuracy));
        } else if (handler == "descriptor_echo") {
          rule.handler = descriptor_echo();
        } else {
          throw std::invalid_argument("unknown mock handler '" + handler + "'");
        }
        mock->rules_.push_back(std::move(rule));
      }
    } else if (key == "default") {
      mock->fallback_ = value.get<std::string>();
    } else if (key == "exhaust_after") {
      if (!value.is_null()) mock->exhaust_after_ = value.get<std::uint64_t>();
    } else if (key == "fail_first") {
      mock->fail_first_ = value.get<std::uint64_t>();
    } else {
      throw std::invalid_argument("unknown mock provider key '" + key + "'");
    }
  }
  return mock;
}

std::shared_ptr<MockProvider> MockProvider::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read mock provider file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto mock = from_document(parse_document(buf.str()));
  return mock;
}

// ---------------------------------------------------------------------------

ReplayProvider::ReplayProvider(const std::vector<AuditEntry>& entries) {
  for (const auto& e : entries) responses_[e.prompt].push_back(e.response);
}

std::string ReplayProvider::complete(const std::string& prompt, const SamplingParams&) {
  std::lock_guard lock(mutex_);
  auto it = responses_.find(prompt);
  if (it == responses_.end() || it->second.empty()) {
    throw ProviderError("replay: prompt not found in audit log", false);
  }
  auto response = std::move(it->second.front());
  it->second.pop_front();
  return response;
}

RetryingProvider::RetryingProvider(ProviderPtr inner, int max_retries,
                                   std::chrono::milliseconds base_delay)
    : inner_(std::move(inner)), max_retries_(max_retries), base_delay_(base_delay) {}

std::string RetryingProvider::complete(const std::string& prompt, const SamplingParams& params) {
  for (int attempt = 0;; ++attempt) {
    try {
      return inner_->complete(prompt, params);
    } catch (const ProviderExhausted&) {
      throw;
    } catch (const ProviderError& e) {
      if (!e.transient() || attempt >= max_retries_) throw;
      const auto delay = base_delay_ * (1 << attempt);
      spdlog::warn("provider error ({}); retrying in {} ms", e.what(), delay.count());
      std::this_thread::sleep_for(delay);
    }
  }
}

RateLimitedProvider::RateLimitedProvider(ProviderPtr inner, double rate, double burst)
    : inner_(std::move(inner)),
      rate_(rate),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {
  if (!(rate > 0.0)) throw std::invalid_argument("rate limit must be positive");
}

void RateLimitedProvider::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait = (1.0 - tokens_) / rate_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    lock.lock();
  }
}

std::string RateLimitedProvider::complete(const std::string& prompt,
                                          const SamplingParams& params) {
  acquire();
  return inner_->complete(prompt, params);
}

}  // namespace envforge::synth
