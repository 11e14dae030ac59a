#include "acrl/core.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include <json.hpp>

namespace acrl {

void RewardConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("reward.alpha", "must lie strictly inside (0, 1)");
}

double assign_reward(bool answer_correct, bool clarified, const RewardConfig& cfg) {
  if (cfg.mode == RewardMode::kBinary) return answer_correct ? 1.0 : 0.0;
  if (!answer_correct) return 0.0;
  return clarified ? cfg.alpha : 1.0;
}

std::string seed_to_hex(std::uint64_t seed) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(seed));
  return std::string(buf);
}

std::uint64_t seed_from_hex(const std::string& hex) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
  if (ec != std::errc() || ptr != hex.data() + hex.size())
    throw ContractError("post_action_seed: not a hex-encoded 64-bit value: " + hex);
  return value;
}

nlohmann::json episode_to_json(const Episode& e, const std::string& episode_id) {
  nlohmann::json record;
  record["episode_id"] = episode_id;
  record["scene"] = e.scene.attributes;
  record["qtype"] = e.question.qtype;
  record["required"] = e.question.required;
  nlohmann::json disclosed = nlohmann::json::array();
  for (const auto& [idx, value] : e.c0.disclosed)
    disclosed.push_back(nlohmann::json::array({idx, value}));
  record["disclosed"] = std::move(disclosed);
  record["clarified"] = e.clarified;
  if (e.clar) {
    record["clar_request"] = e.clar->request;
    record["clar_response"] = e.clar->response;
  } else {
    record["clar_request"] = nullptr;
    record["clar_response"] = nullptr;
  }
  record["answer_correct"] = e.answer_correct;
  record["reward"] = e.reward;
  record["caption_logprob"] = e.caption_logprob;
  record["post_action_seed"] = seed_to_hex(e.post_action_seed);
  return record;
}

Episode episode_from_json(const nlohmann::json& record) {
  Episode e;
  e.scene.attributes = record.at("scene").get<std::vector<int>>();
  e.question.qtype = record.at("qtype").get<int>();
  e.question.required = record.at("required").get<std::vector<int>>();
  for (const auto& pair : record.at("disclosed"))
    e.c0.disclosed.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
  e.clarified = record.at("clarified").get<bool>();
  if (!record.at("clar_request").is_null()) {
    ClarificationExchange clar;
    clar.request = record.at("clar_request").get<int>();
    clar.response = record.at("clar_response").get<int>();
    e.clar = clar;
  }
  e.answer_correct = record.at("answer_correct").get<bool>();
  e.reward = record.at("reward").get<double>();
  e.caption_logprob = record.at("caption_logprob").get<double>();
  e.post_action_seed = seed_from_hex(record.at("post_action_seed").get<std::string>());
  return e;
}

void validate_episode(const Episode& e, const RewardConfig& cfg) {
  const int attribute_count = static_cast<int>(e.scene.attributes.size());

  if (e.question.required.empty())
    throw ContractError("episode: required attribute set is empty");
  for (int idx : e.question.required)
    if (idx < 0 || idx >= attribute_count)
      throw ContractError("episode: required index out of range");

  std::vector<int> seen;
  for (const auto& [idx, value] : e.c0.disclosed) {
    if (idx < 0 || idx >= attribute_count)
      throw ContractError("episode: disclosed index out of range");
    if (value != e.scene.attributes[idx])
      throw ContractError("episode: disclosed value differs from scene");
    if (std::find(seen.begin(), seen.end(), idx) != seen.end())
      throw ContractError("episode: attribute disclosed twice");
    seen.push_back(idx);
  }

  if (e.clar.has_value() != e.clarified)
    throw ContractError("episode: clarification flag does not match exchange presence");
  if (e.clar) {
    if (e.clar->request < 0 || e.clar->request >= attribute_count)
      throw ContractError("episode: clarification request out of range");
    if (e.clar->response != e.scene.attributes[e.clar->request])
      throw ContractError("episode: clarification response differs from scene");
  }

  if (cfg.mode == RewardMode::kBinary) {
    if (e.reward != 0.0 && e.reward != 1.0)
      throw ContractError("episode: binary reward outside {0, 1}");
    if ((e.reward == 1.0) != e.answer_correct)
      throw ContractError("episode: binary reward disagrees with correctness");
  } else {
    if (e.reward != 0.0 && e.reward != cfg.alpha && e.reward != 1.0)
      throw ContractError("episode: tiered reward outside {0, alpha, 1}");
    if (e.reward == 1.0 && !(e.answer_correct && !e.clarified))
      throw ContractError("episode: full reward requires unclarified success");
    if (e.reward == cfg.alpha && !(e.answer_correct && e.clarified))
      throw ContractError("episode: partial reward requires clarified success");
    if (e.reward == 0.0 && e.answer_correct && cfg.alpha != 0.0)
      throw ContractError("episode: zero reward despite correct answer");
  }
}

}  // namespace acrl
