#pragma once

#include <vector>

#include "acrl/core.hpp"
#include "acrl/policy.hpp"

namespace acrl {

/// Which advantage estimator the trainer uses. The Beta fit is the default;
/// the leave-one-out baseline removes the same-sample bias of group baselines
/// at the cost of no scale normalization.
enum class AdvantageMode { kBeta, kLeaveOneOut };

struct BetaFit {
  bool degenerate = false;
  double alpha = 0.0;
  double beta = 0.0;
};

/// Method-of-moments Beta fit over a group's rewards. Groups with (biased)
/// sample variance below 1e-12 are degenerate; otherwise the mean is clamped
/// into [1e-6, 1 - 1e-6] and the concentration floored at 1e-6.
BetaFit fit_beta(const std::vector<double>& rewards);

/// Advantages normalized by the fitted Beta's mean and standard deviation
/// (floored at 1e-6), then mean-centered. Degenerate groups get exact zeros.
std::vector<double> bnpo_advantages(const std::vector<double>& rewards);

/// Unnormalized advantages against a leave-one-out baseline: each reward
/// minus the mean of the other group members.
std::vector<double> leave_one_out_advantages(const std::vector<double>& rewards);

/// Rewards, moments, Beta fit, and advantages for one rollout group.
GroupStats make_group_stats(const std::vector<double>& rewards, AdvantageMode mode);

/// M episodes sharing one (scene, question), with their advantages.
struct RolloutGroup {
  std::vector<Episode> episodes;
  std::vector<double> advantages;
};

/// Ascent gradient of the clipped surrogate with a fixed-reference KL
/// penalty, averaged over all episodes. Ratios compare logprob under theta
/// against each episode's stored sampling-time logprob (taken under
/// theta_old); an episode whose ratio is clipped on the disadvantageous side
/// contributes nothing. Only initial-caption log-probabilities carry
/// gradient; clarification exchanges have no parameters.
Matrix surrogate_gradient(const Matrix& theta, const Matrix& theta_old,
                          const RefSnapshot& kl_ref, const std::vector<RolloutGroup>& groups,
                          double clip_eps, double kl_beta,
                          const std::vector<double>& question_dist);

/// Plain gradient ascent: theta + learning_rate * gradient. Aborts on
/// non-finite gradients.
Matrix sgd_step(const Matrix& theta, const Matrix& gradient, double learning_rate);

}  // namespace acrl
