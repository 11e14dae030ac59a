#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acrl/matrix.hpp"

namespace acrl {

/// Thrown when a caller breaks a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Thrown for malformed configuration; carries the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Hidden ground-truth attribute vector standing in for an image.
struct Scene {
  std::vector<int> attributes;
};

/// A question type plus the attribute indices the reasoner needs to answer it.
struct Question {
  int qtype = 0;
  std::vector<int> required;  // sorted, unique, non-empty
};

/// Initial caption: the subset of attributes the policy chose to disclose,
/// each carrying the scene's true value.
struct Caption {
  std::vector<std::pair<int, int>> disclosed;  // (attribute index, value), sorted by index

  bool discloses(int attribute) const {
    for (const auto& [idx, value] : disclosed)
      if (idx == attribute) return true;
    return false;
  }
};

/// One clarification round: the requested attribute and the revealed value.
struct ClarificationExchange {
  int request = -1;
  int response = -1;
};

enum class RewardMode { kTiered, kBinary };

struct RewardConfig {
  double alpha = 0.7;
  RewardMode mode = RewardMode::kTiered;

  void validate() const;
};

/// One full trajectory: caption, optional clarification, outcome, reward, and
/// the identifier of the random substream that drove everything after the
/// caption was chosen.
struct Episode {
  Scene scene;
  Question question;
  Caption c0;
  std::optional<ClarificationExchange> clar;
  bool clarified = false;
  bool answer_correct = false;
  double reward = 0.0;
  std::uint64_t post_action_seed = 0;
  double caption_logprob = 0.0;
};

/// Per-group reward statistics and advantages for M rollouts of one prompt.
struct GroupStats {
  std::vector<double> rewards;
  double mean = 0.0;
  double variance = 0.0;  // biased (divide by M)
  std::optional<double> beta_alpha;
  std::optional<double> beta_beta;
  std::vector<double> advantages;
};

/// The only trainable object: the captioner's logit matrix.
struct PolicyParams {
  Matrix theta;  // question types x attributes
  long step = 0;
};

/// Tiered reward: full credit for unclarified success, alpha for clarified
/// success, zero otherwise. Binary mode scores correctness alone.
double assign_reward(bool answer_correct, bool clarified, const RewardConfig& cfg);

/// Serializes an episode to the shared log-record object. Field names are a
/// bit-exact contract across every module that reads or writes episode logs.
nlohmann::json episode_to_json(const Episode& episode, const std::string& episode_id);
Episode episode_from_json(const nlohmann::json& record);

std::string seed_to_hex(std::uint64_t seed);
std::uint64_t seed_from_hex(const std::string& hex);

/// Checks every episode invariant (reward tier consistency, truthful
/// disclosures, clarification flag coherence). Throws ContractError naming
/// the violated invariant.
void validate_episode(const Episode& episode, const RewardConfig& cfg);

}  // namespace acrl
