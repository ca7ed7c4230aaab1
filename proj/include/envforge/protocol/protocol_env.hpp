#pragma once

#include <memory>

#include "envforge/core/environment.hpp"
#include "envforge/protocol/session.hpp"

namespace envforge::protocol {

// Environment whose sampler, renderer, and verifier live in a runner process.
// Failed verify calls become zero-reward errored verdicts; failed generate and
// observe calls raise EnvironmentError.
class ProtocolEnvironment final : public Environment {
 public:
  ProtocolEnvironment(BundleManifest manifest, SandboxPolicy policy, std::size_t pool_size = 1,
                      std::size_t recycle_after = 1000);

  const std::string& id() const override { return id_; }
  std::vector<InstanceParams> sample(DifficultyLevel difficulty, std::size_t count,
                                     std::uint64_t seed) const override;
  Observation observe(const InstanceParams& instance) const override;
  Verdict verify(const InstanceParams& instance, const Response& response) const override;

  SessionPool& pool() const { return *pool_; }

 private:
  std::string id_;
  std::unique_ptr<SessionPool> pool_;
};

// Converts a verify exchange into a Verdict. Any ok=false response maps to
// reward 0 with errored=true.
Verdict verdict_from_call(const CallResult& call);

}  // namespace envforge::protocol
