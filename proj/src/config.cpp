#include "acrl/config.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace acrl {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field, what);
}

void reject_unknown_keys(const json& section, const std::string& prefix,
                         const std::set<std::string>& known) {
  if (!section.is_object()) fail(prefix, "must be an object");
  for (const auto& [key, value] : section.items())
    if (!known.count(key)) fail(prefix + "." + key, "unknown key");
}

const json* find(const json& section, const std::string& key) {
  const auto it = section.find(key);
  return it == section.end() ? nullptr : &*it;
}

int require_int(const json& section, const std::string& prefix, const std::string& key) {
  const json* v = find(section, key);
  if (!v) fail(prefix + "." + key, "missing required key");
  if (!v->is_number_integer()) fail(prefix + "." + key, "must be an integer");
  return v->get<int>();
}

int optional_int(const json& section, const std::string& prefix, const std::string& key,
                 int fallback) {
  const json* v = find(section, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(prefix + "." + key, "must be an integer");
  return v->get<int>();
}

long optional_long(const json& section, const std::string& prefix, const std::string& key,
                   long fallback) {
  const json* v = find(section, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(prefix + "." + key, "must be an integer");
  return v->get<long>();
}

double require_double(const json& section, const std::string& prefix, const std::string& key) {
  const json* v = find(section, key);
  if (!v) fail(prefix + "." + key, "missing required key");
  if (!v->is_number()) fail(prefix + "." + key, "must be a number");
  return v->get<double>();
}

double optional_double(const json& section, const std::string& prefix, const std::string& key,
                       double fallback) {
  const json* v = find(section, key);
  if (!v) return fallback;
  if (!v->is_number()) fail(prefix + "." + key, "must be a number");
  return v->get<double>();
}

std::uint64_t optional_seed(const json& section, const std::string& prefix,
                            const std::string& key, std::uint64_t fallback) {
  const json* v = find(section, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
    fail(prefix + "." + key, "must be a non-negative integer");
  return v->get<std::uint64_t>();
}

EnvConfig env_from_json(const json& section) {
  reject_unknown_keys(section, "env",
                      {"attribute_count", "value_count", "question_type_count", "required_sets",
                       "ask_threshold", "p_ask", "p_guess", "question_dist"});
  EnvConfig env;
  env.attribute_count = require_int(section, "env", "attribute_count");
  env.value_count = require_int(section, "env", "value_count");
  env.question_type_count = require_int(section, "env", "question_type_count");

  const json* sets = find(section, "required_sets");
  if (!sets) fail("env.required_sets", "missing required key");
  if (!sets->is_array()) fail("env.required_sets", "must be an array of index arrays");
  env.required_sets.clear();
  for (const auto& entry : *sets) {
    if (!entry.is_array()) fail("env.required_sets", "must be an array of index arrays");
    std::vector<int> required;
    for (const auto& idx : entry) {
      if (!idx.is_number_integer()) fail("env.required_sets", "indices must be integers");
      required.push_back(idx.get<int>());
    }
    env.required_sets.push_back(std::move(required));
  }

  env.ask_threshold = optional_int(section, "env", "ask_threshold", 1);
  env.p_ask = optional_double(section, "env", "p_ask", 1.0);
  env.p_guess = optional_double(section, "env", "p_guess", 0.0);

  const json* dist = find(section, "question_dist");
  if (dist) {
    if (!dist->is_array()) fail("env.question_dist", "must be an array of numbers");
    env.question_dist.clear();
    for (const auto& w : *dist) {
      if (!w.is_number()) fail("env.question_dist", "weights must be numbers");
      env.question_dist.push_back(w.get<double>());
    }
  } else if (env.question_type_count > 0) {
    env.question_dist.assign(env.question_type_count,
                             1.0 / static_cast<double>(env.question_type_count));
  }
  return env;
}

RewardConfig reward_from_json(const json& section) {
  reject_unknown_keys(section, "reward", {"mode", "alpha"});
  RewardConfig reward;
  const json* mode = find(section, "mode");
  if (!mode) fail("reward.mode", "missing required key");
  if (!mode->is_string()) fail("reward.mode", "must be \"tiered\" or \"binary\"");
  const std::string name = mode->get<std::string>();
  if (name == "tiered") {
    reward.mode = RewardMode::kTiered;
    reward.alpha = require_double(section, "reward", "alpha");
  } else if (name == "binary") {
    reward.mode = RewardMode::kBinary;
    reward.alpha = optional_double(section, "reward", "alpha", 0.7);
  } else {
    fail("reward.mode", "must be \"tiered\" or \"binary\"");
  }
  return reward;
}

AdvantageMode advantage_mode_from_json(const json& section) {
  const json* v = find(section, "advantage_mode");
  if (!v) return AdvantageMode::kBeta;
  if (v->is_string()) {
    const std::string name = v->get<std::string>();
    if (name == "beta") return AdvantageMode::kBeta;
    if (name == "leave_one_out") return AdvantageMode::kLeaveOneOut;
  }
  fail("train.advantage_mode", "must be \"beta\" or \"leave_one_out\"");
}

void train_from_json(const json& section, TrainConfig& train) {
  reject_unknown_keys(section, "train",
                      {"total_iterations", "batch_size", "group_size", "inner_steps",
                       "learning_rate", "clip_eps", "kl_beta", "seed", "checkpoint_every",
                       "threads", "advantage_mode"});
  const json* total = find(section, "total_iterations");
  if (!total) fail("train.total_iterations", "missing required key");
  if (!total->is_number_integer()) fail("train.total_iterations", "must be an integer");
  train.total_iterations = total->get<long>();
  train.batch_size = optional_int(section, "train", "batch_size", 32);
  train.group_size = optional_int(section, "train", "group_size", 8);
  train.inner_steps = optional_int(section, "train", "inner_steps", 6);
  train.learning_rate = optional_double(section, "train", "learning_rate", 0.05);
  train.clip_eps = optional_double(section, "train", "clip_eps", 0.2);
  train.kl_beta = optional_double(section, "train", "kl_beta", 0.001);
  train.seed = optional_seed(section, "train", "seed", 0);
  train.checkpoint_every = optional_long(section, "train", "checkpoint_every", 100);
  train.threads = optional_int(section, "train", "threads", 1);
  train.advantage_mode = advantage_mode_from_json(section);
}

EvalConfig eval_from_json(const json& section) {
  reject_unknown_keys(section, "eval", {"n", "seed"});
  EvalConfig eval;
  eval.n = optional_long(section, "eval", "n", 20000);
  eval.seed = optional_seed(section, "eval", "seed", 1);
  return eval;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

}  // namespace

void EvalConfig::validate() const {
  if (n < 1) throw ConfigError("eval.n", "must be >= 1");
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config", "top level must be an object");
  for (const auto& [key, value] : doc.items())
    if (key != "env" && key != "train" && key != "reward" && key != "eval")
      throw ConfigError(key, "unknown section");

  RunConfig cfg;
  const json* env = find(doc, "env");
  if (!env) throw ConfigError("env", "missing required section");
  cfg.train.env = env_from_json(*env);

  const json* reward = find(doc, "reward");
  if (!reward) throw ConfigError("reward", "missing required section");
  cfg.train.reward = reward_from_json(*reward);

  const json* train = find(doc, "train");
  if (!train) throw ConfigError("train", "missing required section");
  train_from_json(*train, cfg.train);

  const json* eval_section = find(doc, "eval");
  if (eval_section) cfg.eval = eval_from_json(*eval_section);

  cfg.train.validate();
  cfg.eval.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("parse error in ") + path + ": " + e.what());
  }
  return run_config_from_json(doc);
}

nlohmann::json env_to_json(const EnvConfig& env) {
  return json{{"attribute_count", env.attribute_count},
              {"value_count", env.value_count},
              {"question_type_count", env.question_type_count},
              {"required_sets", env.required_sets},
              {"ask_threshold", env.ask_threshold},
              {"p_ask", env.p_ask},
              {"p_guess", env.p_guess},
              {"question_dist", env.question_dist}};
}

nlohmann::json reward_to_json(const RewardConfig& reward) {
  json out{{"mode", reward.mode == RewardMode::kTiered ? "tiered" : "binary"}};
  out["alpha"] = reward.alpha;
  return out;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json train{{"total_iterations", t.total_iterations},
             {"batch_size", t.batch_size},
             {"group_size", t.group_size},
             {"inner_steps", t.inner_steps},
             {"learning_rate", t.learning_rate},
             {"clip_eps", t.clip_eps},
             {"kl_beta", t.kl_beta},
             {"seed", t.seed},
             {"checkpoint_every", t.checkpoint_every},
             {"threads", t.threads},
             {"advantage_mode",
              t.advantage_mode == AdvantageMode::kBeta ? "beta" : "leave_one_out"}};
  return json{{"env", env_to_json(t.env)},
              {"reward", reward_to_json(t.reward)},
              {"train", train},
              {"eval", json{{"n", cfg.eval.n}, {"seed", cfg.eval.seed}}}};
}

std::string config_digest(const EnvConfig& env, const RewardConfig& reward) {
  const json canonical{{"env", env_to_json(env)}, {"reward", reward_to_json(reward)}};
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return std::string(hex);
}

}  // namespace acrl
