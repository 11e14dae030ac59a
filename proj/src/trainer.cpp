#include "acrl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "acrl/config.hpp"
#include "acrl/policy.hpp"
#include "acrl/rng.hpp"

namespace acrl {

namespace {

using nlohmann::json;

std::string checkpoint_name(long step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_%06ld.json", step);
  return std::string(buf);
}

void append_episode_records(std::ofstream& out, const std::vector<RolloutGroup>& groups,
                            long iter) {
  for (std::size_t b = 0; b < groups.size(); ++b) {
    const std::string group_id = std::to_string(iter) + "-" + std::to_string(b);
    for (std::size_t m = 0; m < groups[b].episodes.size(); ++m) {
      const std::string episode_id =
          "train-" + std::to_string(iter) + "-" + std::to_string(b) + "-" + std::to_string(m);
      json record = episode_to_json(groups[b].episodes[m], episode_id);
      record["group_id"] = group_id;
      out << record.dump() << "\n";
    }
  }
}

/// Fills groups[b] for b in [begin, end): one (scene, question) prompt with
/// group_size rollouts, all keyed off (seed, iter, b, m) so any scheduling
/// produces the same bytes.
void collect_range(const TrainConfig& cfg, const Matrix& theta, long iter, int begin, int end,
                   std::vector<RolloutGroup>* groups) {
  const CaptionSampler sampler = [&theta](const Scene& scene, const Question& question,
                                          Rng& rng) {
    return sample_caption(theta, scene, question, rng);
  };
  for (int b = begin; b < end; ++b) {
    const std::uint64_t prompt_key =
        derive_key(cfg.seed, stream::kTrainPrompt, static_cast<std::uint64_t>(iter),
                   static_cast<std::uint64_t>(b));
    Rng scene_rng(derive_key(prompt_key, stream::kScene));
    Rng question_rng(derive_key(prompt_key, stream::kQuestion));
    const Scene scene = gen_scene(scene_rng, cfg.env);
    const Question question = gen_question(question_rng, cfg.env);

    RolloutGroup& group = (*groups)[b];
    group.episodes.clear();
    group.episodes.reserve(cfg.group_size);
    for (int m = 0; m < cfg.group_size; ++m) {
      const std::uint64_t episode_key =
          derive_key(cfg.seed, stream::kTrainEpisode, static_cast<std::uint64_t>(iter),
                     static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(m));
      group.episodes.push_back(
          run_episode(sampler, scene, question, cfg.reward, cfg.env, episode_key).episode);
    }
  }
}

void collect_batch(const TrainConfig& cfg, const Matrix& theta, long iter,
                   std::vector<RolloutGroup>* groups) {
  const int workers = std::min(cfg.threads, cfg.batch_size);
  if (workers <= 1) {
    collect_range(cfg, theta, iter, 0, cfg.batch_size, groups);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = static_cast<int>(static_cast<long>(cfg.batch_size) * w / workers);
    const int end = static_cast<int>(static_cast<long>(cfg.batch_size) * (w + 1) / workers);
    pool.emplace_back(collect_range, std::cref(cfg), std::cref(theta), iter, begin, end, groups);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void TrainConfig::validate() const {
  env.validate();
  reward.validate();
  if (total_iterations < 0) throw ConfigError("train.total_iterations", "must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (group_size < 2) throw ConfigError("train.group_size", "must be >= 2");
  if (inner_steps < 1) throw ConfigError("train.inner_steps", "must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.learning_rate", "must be positive and finite");
  if (!(clip_eps > 0.0)) throw ConfigError("train.clip_eps", "must be > 0");
  if (kl_beta < 0.0) throw ConfigError("train.kl_beta", "must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every", "must be >= 0");
  if (threads < 1) throw ConfigError("train.threads", "must be >= 1");
}

double uniform_reward_fraction(const std::vector<std::vector<double>>& reward_groups) {
  if (reward_groups.empty())
    throw ContractError("uniform_reward_fraction: window must be non-empty");
  long uniform = 0;
  for (const auto& rewards : reward_groups) {
    if (rewards.empty())
      throw ContractError("uniform_reward_fraction: groups must be non-empty");
    bool all_equal = true;
    for (double r : rewards)
      if (r != rewards.front()) {
        all_equal = false;
        break;
      }
    uniform += all_equal;
  }
  return static_cast<double>(uniform) / static_cast<double>(reward_groups.size());
}

std::string metrics_to_jsonl_line(const IterationMetrics& m) {
  json record{{"iter", m.iter},           {"mean_reward", m.mean_reward},
              {"train_clar_rate", m.train_clar_rate}, {"kl", m.kl},
              {"uniform_frac", m.uniform_frac},       {"wall_ms", m.wall_ms}};
  return record.dump();
}

void save_checkpoint(const PolicyParams& params, const TrainConfig& cfg,
                     const std::string& path) {
  if (!params.theta.all_finite())
    throw ContractError("save_checkpoint: non-finite parameters");
  json doc{{"format", "acrl-checkpoint-v1"},
           {"qtype_count", params.theta.rows()},
           {"attribute_count", params.theta.cols()},
           {"theta", params.theta.data()},
           {"step", params.step},
           {"config_digest", config_digest(cfg.env, cfg.reward)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out << doc.dump(2) << "\n";
}

PolicyParams load_checkpoint(const std::string& path, const TrainConfig& cfg, bool force) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint", "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint", std::string("parse error in ") + path + ": " + e.what());
  }
  for (const char* key :
       {"format", "qtype_count", "attribute_count", "theta", "step", "config_digest"})
    if (!doc.contains(key))
      throw ConfigError("checkpoint", std::string("missing field ") + key + " in " + path);
  if (doc["format"].get<std::string>() != "acrl-checkpoint-v1")
    throw ConfigError("checkpoint", "unrecognized format in " + path);

  const std::string digest = doc["config_digest"].get<std::string>();
  const std::string expected = config_digest(cfg.env, cfg.reward);
  if (digest != expected && !force)
    throw ConfigError("checkpoint.config_digest",
                      "checkpoint was trained under a different env/reward configuration (" +
                          digest + " vs " + expected + "); pass --force to load anyway");

  const int rows = doc["qtype_count"].get<int>();
  const int cols = doc["attribute_count"].get<int>();
  const auto values = doc["theta"].get<std::vector<double>>();
  if (rows < 0 || cols < 0 ||
      values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw ConfigError("checkpoint.theta", "dimension mismatch in " + path);

  PolicyParams params;
  params.theta = Matrix(rows, cols);
  params.theta.data() = values;
  params.step = doc["step"].get<long>();
  if (!params.theta.all_finite())
    throw ConfigError("checkpoint.theta", "non-finite entries in " + path);
  return params;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();

  TrainResult result;
  result.params.theta = Matrix(cfg.env.question_type_count, cfg.env.attribute_count, 0.0);
  result.params.step = 0;
  Matrix& theta = result.params.theta;
  const RefSnapshot kl_ref = snapshot(theta, 0);

  const bool writing = !cfg.out_dir.empty();
  std::ofstream metrics_out;
  std::ofstream episodes_out;
  if (writing) {
    std::filesystem::create_directories(cfg.out_dir);
    metrics_out.open(cfg.out_dir + "/metrics.jsonl");
    if (!metrics_out) throw std::runtime_error("train: cannot write metrics log in " + cfg.out_dir);
    if (cfg.log_episodes) {
      episodes_out.open(cfg.out_dir + "/episodes.jsonl");
      if (!episodes_out)
        throw std::runtime_error("train: cannot write episode log in " + cfg.out_dir);
    }
  }

  std::vector<RolloutGroup> groups(cfg.batch_size);
  for (long iter = 0; iter < cfg.total_iterations; ++iter) {
    const auto started = std::chrono::steady_clock::now();

    collect_batch(cfg, theta, iter, &groups);
    if (writing && cfg.log_episodes) append_episode_records(episodes_out, groups, iter);

    // Advantages are computed once per iteration; the inner steps re-evaluate
    // only the ratios.
    std::vector<std::vector<double>> reward_groups(cfg.batch_size);
    double reward_sum = 0.0;
    long clarified = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      auto& rewards = reward_groups[b];
      rewards.reserve(cfg.group_size);
      for (const Episode& e : groups[b].episodes) {
        rewards.push_back(e.reward);
        reward_sum += e.reward;
        clarified += e.clarified;
      }
      groups[b].advantages = make_group_stats(rewards, cfg.advantage_mode).advantages;
    }

    const Matrix theta_old = theta;
    try {
      for (int k = 0; k < cfg.inner_steps; ++k) {
        const Matrix grad = surrogate_gradient(theta, theta_old, kl_ref, groups, cfg.clip_eps,
                                               cfg.kl_beta, cfg.env.question_dist);
        theta = sgd_step(theta, grad, cfg.learning_rate);
        if (!theta.all_finite())
          throw std::runtime_error("train: non-finite parameters after update, aborting");
      }
    } catch (const std::exception&) {
      // Roll back to the parameters this iteration's batch was sampled from,
      // which are known finite, so the diagnostic checkpoint is loadable.
      theta = theta_old;
      result.params.step = iter;
      if (writing) save_checkpoint(result.params, cfg, cfg.out_dir + "/checkpoint_diagnostic.json");
      throw;
    }
    result.params.step = iter + 1;

    const long episode_count = static_cast<long>(cfg.batch_size) * cfg.group_size;
    IterationMetrics m;
    m.iter = iter;
    m.mean_reward = reward_sum / static_cast<double>(episode_count);
    m.train_clar_rate = static_cast<double>(clarified) / static_cast<double>(episode_count);
    m.kl = kl_to_ref(theta, kl_ref, cfg.env.question_dist);
    m.uniform_frac = uniform_reward_fraction(reward_groups);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          started)
                    .count();
    result.metrics.push_back(m);
    if (writing) metrics_out << metrics_to_jsonl_line(m) << "\n";

    if (writing && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(result.params, cfg, cfg.out_dir + "/" + checkpoint_name(iter + 1));
  }

  if (writing) save_checkpoint(result.params, cfg, cfg.out_dir + "/checkpoint_final.json");
  return result;
}

}  // namespace acrl
