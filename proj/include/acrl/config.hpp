#pragma once

#include <string>

#include <json.hpp>

#include "acrl/synthenv.hpp"
#include "acrl/trainer.hpp"

namespace acrl {

struct EvalConfig {
  long n = 20000;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One run-configuration document with sections `env`, `train`, `reward`,
/// and `eval`. Unknown keys anywhere are rejected so silent drift between
/// defaults and user edits cannot happen.
struct RunConfig {
  TrainConfig train;  // embeds env and reward
  EvalConfig eval;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

/// The fully resolved document: every default made explicit.
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// FNV-1a 64 over the canonical serialization of the env + reward sections,
/// as a 16-digit hex string. Checkpoints embed it; training hyperparameters
/// deliberately do not participate, so a checkpoint stays loadable for
/// evaluation under any trainer settings.
std::string config_digest(const EnvConfig& env, const RewardConfig& reward);

nlohmann::json env_to_json(const EnvConfig& env);
nlohmann::json reward_to_json(const RewardConfig& reward);

}  // namespace acrl
