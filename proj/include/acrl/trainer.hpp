#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acrl/core.hpp"
#include "acrl/optim.hpp"
#include "acrl/synthenv.hpp"

namespace acrl {

/// Everything one training run needs: the environment, the reward scheme,
/// and the outer-loop hyperparameters.
struct TrainConfig {
  EnvConfig env;
  RewardConfig reward;

  long total_iterations = 0;
  int batch_size = 32;       // prompts per iteration
  int group_size = 8;        // rollouts per prompt
  int inner_steps = 6;       // surrogate updates per iteration
  double learning_rate = 0.05;
  double clip_eps = 0.2;
  double kl_beta = 0.001;
  std::uint64_t seed = 0;
  long checkpoint_every = 100;  // 0 disables periodic checkpoints
  int threads = 1;
  AdvantageMode advantage_mode = AdvantageMode::kBeta;

  // Where checkpoints, the metrics log, and the optional episode log go.
  // Empty keeps the run entirely in memory.
  std::string out_dir;
  bool log_episodes = false;

  void validate() const;
};

/// One metrics-log record. wall_ms is the only field that is not a pure
/// function of the config and seed.
struct IterationMetrics {
  long iter = 0;
  double mean_reward = 0.0;
  double train_clar_rate = 0.0;
  double kl = 0.0;
  double uniform_frac = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<IterationMetrics> metrics;
};

/// Fraction of groups whose rewards are all identical. Rewards are assigned
/// from {0, alpha, 1} exactly, so equality is exact.
double uniform_reward_fraction(const std::vector<std::vector<double>>& reward_groups);

/// The outer training loop: per iteration, sample batch_size prompts, run
/// group_size rollouts each (parallel across prompts when threads > 1, with
/// per-episode derived seeds so scheduling cannot change results), compute
/// advantages once, then take inner_steps clipped-surrogate ascent steps
/// against the iteration-start parameters. The KL reference is the initial
/// policy and is never refreshed. A non-finite update aborts the run after
/// writing a diagnostic checkpoint.
TrainResult train(const TrainConfig& cfg);

/// Checkpoints carry theta, the step counter, and a digest of the
/// environment + reward configuration; loading against a different
/// configuration is refused unless forced.
void save_checkpoint(const PolicyParams& params, const TrainConfig& cfg,
                     const std::string& path);
PolicyParams load_checkpoint(const std::string& path, const TrainConfig& cfg,
                             bool force = false);

std::string metrics_to_jsonl_line(const IterationMetrics& m);

}  // namespace acrl
