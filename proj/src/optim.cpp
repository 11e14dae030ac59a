#include "acrl/optim.hpp"

#include <algorithm>
#include <cmath>

namespace acrl {

namespace {

constexpr double kDegenerateVariance = 1e-12;
constexpr double kMeanClamp = 1e-6;
constexpr double kConcentrationFloor = 1e-6;
constexpr double kStdFloor = 1e-6;

double mean_of(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double biased_variance(const std::vector<double>& values, double mean) {
  double total = 0.0;
  for (double v : values) total += (v - mean) * (v - mean);
  return total / static_cast<double>(values.size());
}

}  // namespace

BetaFit fit_beta(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw ContractError("fit_beta: need at least two rewards");
  for (double r : rewards)
    if (!(r >= 0.0 && r <= 1.0)) throw ContractError("fit_beta: reward outside [0, 1]");

  const double mean = mean_of(rewards);
  const double variance = biased_variance(rewards, mean);
  if (variance < kDegenerateVariance) return BetaFit{true, 0.0, 0.0};

  const double m = std::clamp(mean, kMeanClamp, 1.0 - kMeanClamp);
  const double concentration = std::max(m * (1.0 - m) / variance - 1.0, kConcentrationFloor);
  return BetaFit{false, m * concentration, (1.0 - m) * concentration};
}

std::vector<double> bnpo_advantages(const std::vector<double>& rewards) {
  const BetaFit fit = fit_beta(rewards);
  if (fit.degenerate) return std::vector<double>(rewards.size(), 0.0);

  const double total = fit.alpha + fit.beta;
  const double beta_mean = fit.alpha / total;
  const double beta_std =
      std::max(std::sqrt(fit.alpha * fit.beta / (total * total * (total + 1.0))), kStdFloor);

  std::vector<double> advantages(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    advantages[i] = (rewards[i] - beta_mean) / beta_std;

  const double center = mean_of(advantages);
  for (double& a : advantages) a -= center;
  return advantages;
}

std::vector<double> leave_one_out_advantages(const std::vector<double>& rewards) {
  const std::size_t m = rewards.size();
  if (m < 2) throw ContractError("leave_one_out_advantages: need at least two rewards");
  double total = 0.0;
  for (double r : rewards) total += r;
  std::vector<double> advantages(m);
  for (std::size_t i = 0; i < m; ++i)
    advantages[i] = rewards[i] - (total - rewards[i]) / static_cast<double>(m - 1);
  return advantages;
}

GroupStats make_group_stats(const std::vector<double>& rewards, AdvantageMode mode) {
  GroupStats stats;
  stats.rewards = rewards;
  stats.mean = mean_of(rewards);
  stats.variance = biased_variance(rewards, stats.mean);
  const BetaFit fit = fit_beta(rewards);
  if (!fit.degenerate) {
    stats.beta_alpha = fit.alpha;
    stats.beta_beta = fit.beta;
  }
  stats.advantages = mode == AdvantageMode::kBeta ? bnpo_advantages(rewards)
                                                  : leave_one_out_advantages(rewards);
  return stats;
}

Matrix surrogate_gradient(const Matrix& theta, const Matrix& theta_old,
                          const RefSnapshot& kl_ref, const std::vector<RolloutGroup>& groups,
                          double clip_eps, double kl_beta,
                          const std::vector<double>& question_dist) {
  if (!theta.same_shape(theta_old)) throw ContractError("surrogate_gradient: shape mismatch");

  std::size_t episode_count = 0;
  for (const auto& group : groups) {
    if (group.episodes.size() != group.advantages.size())
      throw ContractError("surrogate_gradient: group advantages length mismatch");
    episode_count += group.episodes.size();
  }

  Matrix grad(theta.rows(), theta.cols());
  if (episode_count > 0) {
    const double weight = 1.0 / static_cast<double>(episode_count);
    for (const auto& group : groups) {
      for (std::size_t i = 0; i < group.episodes.size(); ++i) {
        const Episode& e = group.episodes[i];
        const double advantage = group.advantages[i];
        if (advantage == 0.0) continue;

        const auto mask = disclosure_mask(e.c0, theta.cols());
        const double ratio = std::exp(logprob(theta, e.question, mask) - e.caption_logprob);
        const bool clipped = (advantage > 0.0 && ratio > 1.0 + clip_eps) ||
                             (advantage < 0.0 && ratio < 1.0 - clip_eps);
        if (clipped) continue;

        const std::vector<double> probs = disclosure_probs(theta, e.question.qtype);
        const double scale = weight * ratio * advantage;
        for (int f = 0; f < theta.cols(); ++f)
          grad(e.question.qtype, f) += scale * (static_cast<double>(mask[f]) - probs[f]);
      }
    }
  }

  if (kl_beta != 0.0) {
    const Matrix kl_grad = kl_gradient(theta, kl_ref, question_dist);
    for (int t = 0; t < theta.rows(); ++t)
      for (int f = 0; f < theta.cols(); ++f) grad(t, f) -= kl_beta * kl_grad(t, f);
  }
  return grad;
}

Matrix sgd_step(const Matrix& theta, const Matrix& gradient, double learning_rate) {
  if (!theta.same_shape(gradient)) throw ContractError("sgd_step: shape mismatch");
  if (!gradient.all_finite())
    throw std::runtime_error("sgd_step: non-finite gradient, aborting update");
  Matrix updated = theta;
  for (int t = 0; t < theta.rows(); ++t)
    for (int f = 0; f < theta.cols(); ++f) updated(t, f) += learning_rate * gradient(t, f);
  return updated;
}

}  // namespace acrl
