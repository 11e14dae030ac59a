#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "acrl/core.hpp"
#include "acrl/matrix.hpp"
#include "acrl/rng.hpp"

namespace acrl {

/// Probabilities are clamped into [kProbFloor, 1 - kProbFloor] so logarithms
/// stay finite at saturation.
inline constexpr double kProbFloor = 1e-12;

/// Frozen copy of the policy logits, serving as the KL anchor.
struct RefSnapshot {
  Matrix theta_ref;
  long created_at_step = 0;
};

/// Per-attribute disclosure probabilities for one question type:
/// logistic(theta[qtype][f]), clamped.
std::vector<double> disclosure_probs(const Matrix& theta, int qtype);

/// Disclosure indicators of a caption as a 0/1 mask over all attributes.
std::vector<std::uint8_t> disclosure_mask(const Caption& c0, int attribute_count);

/// Samples a caption: each attribute disclosed independently with its
/// disclosure probability, carrying the scene's true value. Returns the
/// caption and its log-probability under theta.
std::pair<Caption, double> sample_caption(const Matrix& theta, const Scene& scene,
                                          const Question& question, Rng& rng);

/// Log-probability of a disclosure mask under theta for the question's type.
/// Agrees bit-for-bit with the value sample_caption emitted for the same mask
/// and unchanged theta.
double logprob(const Matrix& theta, const Question& question,
               const std::vector<std::uint8_t>& mask);

/// d logprob / d theta: (mask_f - p_f) in the question's row, zero elsewhere.
Matrix logprob_gradient(const Matrix& theta, const Question& question,
                        const std::vector<std::uint8_t>& mask);

/// Question-type-weighted sum of closed-form Bernoulli KL divergences between
/// the current policy and the snapshot. Non-negative; exactly zero when the
/// parameters coincide.
double kl_to_ref(const Matrix& theta, const RefSnapshot& snapshot,
                 const std::vector<double>& question_dist);

/// Analytic gradient of kl_to_ref with respect to theta.
Matrix kl_gradient(const Matrix& theta, const RefSnapshot& snapshot,
                   const std::vector<double>& question_dist);

/// Deep, immutable copy of the current logits.
RefSnapshot snapshot(const Matrix& theta, long step = 0);

}  // namespace acrl
