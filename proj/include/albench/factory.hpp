#pragma once

#include <memory>

#include "albench/adapter/client.hpp"
#include "albench/learners/builtin.hpp"
#include "albench/orchestrator.hpp"

namespace albench {

/// Built-in learner unless `learner.kind` is "adapter". Config errors surface
/// here, before any trial starts.
inline LearnerFactory make_learner_factory(const ExperimentConfig& cfg) {
  const auto kind = cfg.learner.value("kind", std::string("mlp"));
  try {
    if (kind == "adapter") {
      auto acfg = adapter::parse_adapter_config(cfg.learner);
      const auto seed = cfg.seed;
      return [acfg, seed](const Split& s, int trial) -> std::unique_ptr<Learner> {
        return std::make_unique<adapter::AdapterLearner>(s, acfg, derive_seed(seed, static_cast<std::uint64_t>(trial)));
      };
    }
    auto bcfg = cfg.learner.get<BuiltinConfig>();
    auto ssl = cfg.ssl.get<SSLConfig>();
    bcfg.ssl = ssl;
    return [bcfg](const Split& s, int) -> std::unique_ptr<Learner> { return std::make_unique<BuiltinLearner>(s, bcfg); };
  } catch (const Json::exception& e) {
    fail(ErrorCode::config, std::string("malformed learner config: ") + e.what());
  }
}

}  // namespace albench
