#include "envforge/protocol/sandbox.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace envforge::protocol {

Seconds SandboxPolicy::timeout_for(Op op) const {
  switch (op) {
    case Op::generate: return generate_timeout;
    case Op::observe: return observe_timeout;
    case Op::verify: return verify_timeout;
    case Op::shutdown: return observe_timeout;
  }
  return verify_timeout;
}

void SandboxPolicy::validate() const {
  for (auto t : {handshake_timeout, generate_timeout, observe_timeout, verify_timeout}) {
    if (!(t.count() > 0)) throw std::invalid_argument("sandbox timeouts must be > 0");
  }
  if (memory_cap == 0 || max_output == 0) {
    throw std::invalid_argument("sandbox caps must be > 0");
  }
  if (cpu_seconds < 0) throw std::invalid_argument("cpu_seconds must be >= 0");
}

Document SandboxPolicy::to_document() const {
  return Document{{"handshake_timeout", handshake_timeout.count()},
                  {"generate_timeout", generate_timeout.count()},
                  {"observe_timeout", observe_timeout.count()},
                  {"verify_timeout", verify_timeout.count()},
                  {"memory_cap", memory_cap},
                  {"max_output", max_output},
                  {"cpu_seconds", cpu_seconds},
                  {"network_allowed", network_allowed}};
}

SandboxPolicy SandboxPolicy::from_document(const Document& doc) {
  SandboxPolicy p;
  for (const auto& [key, value] : doc.items()) {
    if (key == "handshake_timeout") p.handshake_timeout = Seconds(value.get<double>());
    else if (key == "generate_timeout") p.generate_timeout = Seconds(value.get<double>());
    else if (key == "observe_timeout") p.observe_timeout = Seconds(value.get<double>());
    else if (key == "verify_timeout") p.verify_timeout = Seconds(value.get<double>());
    else if (key == "memory_cap") p.memory_cap = value.get<std::size_t>();
    else if (key == "max_output") p.max_output = value.get<std::size_t>();
    else if (key == "cpu_seconds") p.cpu_seconds = value.get<double>();
    else if (key == "network_allowed") p.network_allowed = value.get<bool>();
    else throw std::invalid_argument("unknown sandbox key '" + key + "'");
  }
  p.validate();
  return p;
}

Document BundleManifest::to_document() const {
  return Document{{"entry_command", entry_command},
                  {"env_id", env_id},
                  {"declared_difficulties", declared_difficulties}};
}

BundleManifest BundleManifest::from_document(const Document& doc, std::filesystem::path bundle_dir) {
  BundleManifest m;
  try {
    const auto& cmd = doc.at("entry_command");
    if (cmd.is_string()) {
      std::istringstream words(cmd.get<std::string>());
      for (std::string w; words >> w;) m.entry_command.push_back(w);
    } else {
      m.entry_command = cmd.get<std::vector<std::string>>();
    }
    m.env_id = doc.at("env_id").get<std::string>();
    if (doc.contains("declared_difficulties")) {
      m.declared_difficulties = doc.at("declared_difficulties").get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid bundle manifest: ") + e.what());
  }
  if (m.entry_command.empty()) throw std::invalid_argument("bundle manifest has no entry_command");
  if (m.env_id.empty()) throw std::invalid_argument("bundle manifest has no env_id");
  m.bundle_dir = std::move(bundle_dir);
  return m;
}

BundleManifest BundleManifest::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::invalid_argument("no manifest.json in " + dir.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_document(parse_document(buf.str()), dir);
}

void BundleManifest::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  out << canonical_dump(to_document()) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
}

}  // namespace envforge::protocol
