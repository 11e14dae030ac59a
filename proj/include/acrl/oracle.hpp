#pragma once

#include <cstdint>

#include "acrl/core.hpp"
#include "acrl/matrix.hpp"
#include "acrl/synthenv.hpp"

namespace acrl {

/// Exact expected reward under the policy, enumerating every disclosure
/// pattern of each question's required attributes (non-required attributes
/// integrate out of the reward). Refuses required sets larger than 20.
double exact_expected_reward(const Matrix& theta, const EnvConfig& env,
                             const RewardConfig& reward);

/// Exact gradient of the expected reward, differentiating the Bernoulli
/// pattern probabilities term by term. Entries for attributes outside a
/// question's required set are exactly zero.
Matrix exact_gradient(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward);

enum class BaselineKind { kNone, kConstant, kLeaveOneOut };

/// Monte Carlo gradient estimate with a per-entry standard error.
struct McGradient {
  Matrix estimate;
  Matrix std_error;
  long n = 0;
};

/// Score-function estimate of the policy gradient over n >= 1000 freshly
/// sampled episodes: the mean of (R - b) * dlogprob(caption). The baseline b
/// is zero, a caller-supplied constant (theta- and action-independent, e.g.
/// the exact expected reward), or the leave-one-out sample mean.
McGradient mc_gradient_reinforce(const Matrix& theta, const EnvConfig& env,
                                 const RewardConfig& reward, long n, std::uint64_t seed,
                                 BaselineKind baseline, double constant = 0.0);

/// Negative control for the score-function argument: give the reasoner a
/// trainable ask propensity (p_ask = logistic(phi)) so the post-caption
/// randomness depends on a parameter. The naive estimator scores only the
/// caption and is blind to phi; the corrected one adds the ask-draw score
/// term. Both are reported next to the closed-form derivative d E[R] / d phi.
struct BiasDemoResult {
  double exact = 0.0;
  double naive_estimate = 0.0;
  double naive_std_error = 0.0;
  double corrected_estimate = 0.0;
  double corrected_std_error = 0.0;
  bool naive_biased = false;          // |naive - exact| > 5 * naive std error
  bool corrected_consistent = false;  // |corrected - exact| <= 3 * corrected std error
};

BiasDemoResult bias_demo_theta_dependent(const Matrix& theta, double phi, const EnvConfig& env,
                                         const RewardConfig& reward, long n, std::uint64_t seed);

}  // namespace acrl
