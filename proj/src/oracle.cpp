#include "acrl/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "acrl/policy.hpp"
#include "acrl/rng.hpp"

namespace acrl {

namespace {

constexpr int kMaxEnumerableRequired = 20;

void check_inputs(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward) {
  env.validate();
  reward.validate();
  if (theta.rows() != env.question_type_count || theta.cols() != env.attribute_count)
    throw ContractError("oracle: theta shape does not match the environment");
  for (const auto& required : env.required_sets)
    if (static_cast<int>(required.size()) > kMaxEnumerableRequired)
      throw ContractError("oracle: exact enumeration supports at most 20 required attributes");
}

/// Expected reward conditional on m required attributes missing from the
/// caption, marginalizing the reasoner's draws.
double reward_given_missing(int m, const EnvConfig& env, const RewardConfig& reward) {
  if (m == 0) return 1.0;
  const double clarified_reward = reward.mode == RewardMode::kTiered ? reward.alpha : 1.0;
  const double ask_value = m == 1 ? clarified_reward : 0.0;
  if (m <= env.ask_threshold) return env.p_ask * ask_value + (1.0 - env.p_ask) * env.p_guess;
  return env.p_guess;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Per-episode facts the estimators need, flattened for n up to millions.
struct SampleBatch {
  std::vector<double> rewards;
  std::vector<int> qtypes;
  std::vector<std::uint8_t> masks;  // n x attribute_count, row-major
  std::vector<std::uint8_t> requested;
  std::vector<int> missing;  // required attributes absent from the caption
};

SampleBatch sample_batch(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                         long n, std::uint64_t seed) {
  SampleBatch batch;
  batch.rewards.resize(n);
  batch.qtypes.resize(n);
  batch.masks.resize(static_cast<std::size_t>(n) * env.attribute_count);
  batch.requested.assign(n, 0);
  batch.missing.resize(n);

  const CaptionSampler sampler = [&theta](const Scene& scene, const Question& question,
                                          Rng& rng) {
    return sample_caption(theta, scene, question, rng);
  };

  for (long i = 0; i < n; ++i) {
    const auto index = static_cast<std::uint64_t>(i);
    Rng scene_rng(derive_key(seed, stream::kScene, index));
    Rng question_rng(derive_key(seed, stream::kQuestion, index));
    const Scene scene = gen_scene(scene_rng, env);
    const Question question = gen_question(question_rng, env);
    const EpisodeOutcome outcome =
        run_episode(sampler, scene, question, reward, env,
                    derive_key(seed, stream::kOracleEpisode, index));

    const Episode& e = outcome.episode;
    batch.rewards[i] = e.reward;
    batch.qtypes[i] = e.question.qtype;
    const auto mask = disclosure_mask(e.c0, env.attribute_count);
    std::copy(mask.begin(), mask.end(),
              batch.masks.begin() + static_cast<std::size_t>(i) * env.attribute_count);
    batch.requested[i] = outcome.requested ? 1 : 0;
    int miss = 0;
    for (int idx : e.question.required)
      if (!e.c0.discloses(idx)) ++miss;
    batch.missing[i] = miss;
  }
  return batch;
}

}  // namespace

double exact_expected_reward(const Matrix& theta, const EnvConfig& env,
                             const RewardConfig& reward) {
  check_inputs(theta, env, reward);
  double value = 0.0;
  for (int t = 0; t < env.question_type_count; ++t) {
    const std::vector<double> probs = disclosure_probs(theta, t);
    const auto& required = env.required_sets[t];
    const int k = static_cast<int>(required.size());
    for (std::uint32_t pattern = 0; pattern < (1u << k); ++pattern) {
      double prob = 1.0;
      for (int j = 0; j < k; ++j) {
        const double p = probs[required[j]];
        prob *= (pattern >> j) & 1u ? p : 1.0 - p;
      }
      const int missing = k - std::popcount(pattern);
      value += env.question_dist[t] * prob * reward_given_missing(missing, env, reward);
    }
  }
  return value;
}

Matrix exact_gradient(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward) {
  check_inputs(theta, env, reward);
  Matrix grad(theta.rows(), theta.cols());
  for (int t = 0; t < env.question_type_count; ++t) {
    const std::vector<double> probs = disclosure_probs(theta, t);
    const auto& required = env.required_sets[t];
    const int k = static_cast<int>(required.size());
    for (std::uint32_t pattern = 0; pattern < (1u << k); ++pattern) {
      double prob = 1.0;
      for (int j = 0; j < k; ++j) {
        const double p = probs[required[j]];
        prob *= (pattern >> j) & 1u ? p : 1.0 - p;
      }
      const int missing = k - std::popcount(pattern);
      const double value = reward_given_missing(missing, env, reward);
      if (value == 0.0) continue;
      // d/dtheta of the pattern probability: P * (1 - p_f) when f is
      // disclosed in the pattern, -P * p_f when it is not.
      for (int j = 0; j < k; ++j) {
        const double p = probs[required[j]];
        const double factor = (pattern >> j) & 1u ? 1.0 - p : -p;
        grad(t, required[j]) += env.question_dist[t] * prob * factor * value;
      }
    }
  }
  return grad;
}

McGradient mc_gradient_reinforce(const Matrix& theta, const EnvConfig& env,
                                 const RewardConfig& reward, long n, std::uint64_t seed,
                                 BaselineKind baseline, double constant) {
  check_inputs(theta, env, reward);
  if (n < 1000) throw ContractError("mc_gradient_reinforce: need at least 1000 episodes");

  const SampleBatch batch = sample_batch(theta, env, reward, n, seed);

  std::vector<double> baselines(n, 0.0);
  if (baseline == BaselineKind::kConstant) {
    std::fill(baselines.begin(), baselines.end(), constant);
  } else if (baseline == BaselineKind::kLeaveOneOut) {
    double total = 0.0;
    for (double r : batch.rewards) total += r;
    for (long i = 0; i < n; ++i)
      baselines[i] = (total - batch.rewards[i]) / static_cast<double>(n - 1);
  }

  std::vector<std::vector<double>> probs(env.question_type_count);
  for (int t = 0; t < env.question_type_count; ++t) probs[t] = disclosure_probs(theta, t);

  McGradient out;
  out.estimate = Matrix(theta.rows(), theta.cols());
  out.std_error = Matrix(theta.rows(), theta.cols());
  out.n = n;
  for (int t = 0; t < theta.rows(); ++t) {
    for (int f = 0; f < theta.cols(); ++f) {
      double sum = 0.0;
      double sum_sq = 0.0;
      for (long i = 0; i < n; ++i) {
        double x = 0.0;
        if (batch.qtypes[i] == t) {
          const double mask_f =
              batch.masks[static_cast<std::size_t>(i) * env.attribute_count + f];
          x = (batch.rewards[i] - baselines[i]) * (mask_f - probs[t][f]);
        }
        sum += x;
        sum_sq += x * x;
      }
      const double mean = sum / static_cast<double>(n);
      const double var =
          std::max((sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1),
                   0.0);
      out.estimate(t, f) = mean;
      out.std_error(t, f) = std::sqrt(var / static_cast<double>(n));
    }
  }
  return out;
}

BiasDemoResult bias_demo_theta_dependent(const Matrix& theta, double phi, const EnvConfig& env,
                                         const RewardConfig& reward, long n,
                                         std::uint64_t seed) {
  check_inputs(theta, env, reward);
  if (n < 2) throw ContractError("bias_demo_theta_dependent: need at least two episodes");

  const double sigma = logistic(phi);
  EnvConfig demo_env = env;
  demo_env.p_ask = sigma;

  // Closed-form d E[R] / d phi: only patterns where the ask draw is consulted
  // carry a phi dependence, with weight sigma' * (ask payoff - guess payoff).
  const double clarified_reward = reward.mode == RewardMode::kTiered ? reward.alpha : 1.0;
  double exact = 0.0;
  for (int t = 0; t < env.question_type_count; ++t) {
    const std::vector<double> probs = disclosure_probs(theta, t);
    const auto& required = env.required_sets[t];
    const int k = static_cast<int>(required.size());
    for (std::uint32_t pattern = 0; pattern < (1u << k); ++pattern) {
      const int missing = k - std::popcount(pattern);
      if (missing < 1 || missing > env.ask_threshold) continue;
      double prob = 1.0;
      for (int j = 0; j < k; ++j) {
        const double p = probs[required[j]];
        prob *= (pattern >> j) & 1u ? p : 1.0 - p;
      }
      const double ask_value = missing == 1 ? clarified_reward : 0.0;
      exact += env.question_dist[t] * prob * sigma * (1.0 - sigma) * (ask_value - env.p_guess);
    }
  }

  const SampleBatch batch = sample_batch(theta, demo_env, reward, n, seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (long i = 0; i < n; ++i) {
    const bool consulted = batch.missing[i] >= 1 && batch.missing[i] <= env.ask_threshold;
    double score = 0.0;
    if (consulted) score = batch.requested[i] ? 1.0 - sigma : -sigma;
    const double x = batch.rewards[i] * score;
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / static_cast<double>(n);
  const double var =
      std::max((sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1), 0.0);

  BiasDemoResult result;
  result.exact = exact;
  // The caption log-probability has no phi term, so the naive estimator's
  // per-episode contribution is identically zero.
  result.naive_estimate = 0.0;
  result.naive_std_error = 0.0;
  result.corrected_estimate = mean;
  result.corrected_std_error = std::sqrt(var / static_cast<double>(n));
  result.naive_biased =
      std::fabs(result.naive_estimate - exact) > 5.0 * result.naive_std_error;
  result.corrected_consistent =
      std::fabs(result.corrected_estimate - exact) <= 3.0 * result.corrected_std_error;
  return result;
}

}  // namespace acrl
