#include "acrl/policy.hpp"

#include <algorithm>
#include <cmath>

namespace acrl {

namespace {

double logistic_clamped(double logit) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

double bernoulli_kl(double p, double q) {
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

}  // namespace

std::vector<double> disclosure_probs(const Matrix& theta, int qtype) {
  if (qtype < 0 || qtype >= theta.rows())
    throw ContractError("disclosure_probs: question type out of range");
  std::vector<double> probs(theta.cols());
  for (int f = 0; f < theta.cols(); ++f) probs[f] = logistic_clamped(theta(qtype, f));
  return probs;
}

std::vector<std::uint8_t> disclosure_mask(const Caption& c0, int attribute_count) {
  std::vector<std::uint8_t> mask(attribute_count, 0);
  for (const auto& [idx, value] : c0.disclosed) mask[idx] = 1;
  return mask;
}

std::pair<Caption, double> sample_caption(const Matrix& theta, const Scene& scene,
                                          const Question& question, Rng& rng) {
  if (theta.cols() != static_cast<int>(scene.attributes.size()))
    throw ContractError("sample_caption: theta width differs from scene length");
  const std::vector<double> probs = disclosure_probs(theta, question.qtype);

  Caption c0;
  std::vector<std::uint8_t> mask(theta.cols(), 0);
  for (int f = 0; f < theta.cols(); ++f) {
    if (rng.bernoulli(probs[f])) {
      mask[f] = 1;
      c0.disclosed.emplace_back(f, scene.attributes[f]);
    }
  }
  return {std::move(c0), logprob(theta, question, mask)};
}

double logprob(const Matrix& theta, const Question& question,
               const std::vector<std::uint8_t>& mask) {
  if (static_cast<int>(mask.size()) != theta.cols())
    throw ContractError("logprob: mask length differs from theta width");
  const std::vector<double> probs = disclosure_probs(theta, question.qtype);
  double lp = 0.0;
  for (int f = 0; f < theta.cols(); ++f)
    lp += mask[f] ? std::log(probs[f]) : std::log(1.0 - probs[f]);
  return lp;
}

Matrix logprob_gradient(const Matrix& theta, const Question& question,
                        const std::vector<std::uint8_t>& mask) {
  if (static_cast<int>(mask.size()) != theta.cols())
    throw ContractError("logprob_gradient: mask length differs from theta width");
  const std::vector<double> probs = disclosure_probs(theta, question.qtype);
  Matrix grad(theta.rows(), theta.cols());
  for (int f = 0; f < theta.cols(); ++f)
    grad(question.qtype, f) = static_cast<double>(mask[f]) - probs[f];
  return grad;
}

double kl_to_ref(const Matrix& theta, const RefSnapshot& snapshot,
                 const std::vector<double>& question_dist) {
  if (!theta.same_shape(snapshot.theta_ref))
    throw ContractError("kl_to_ref: shape mismatch with snapshot");
  if (static_cast<int>(question_dist.size()) != theta.rows())
    throw ContractError("kl_to_ref: question distribution length mismatch");
  if (theta == snapshot.theta_ref) return 0.0;

  double kl = 0.0;
  for (int t = 0; t < theta.rows(); ++t) {
    for (int f = 0; f < theta.cols(); ++f) {
      const double p = logistic_clamped(theta(t, f));
      const double q = logistic_clamped(snapshot.theta_ref(t, f));
      kl += question_dist[t] * bernoulli_kl(p, q);
    }
  }
  return std::max(kl, 0.0);
}

Matrix kl_gradient(const Matrix& theta, const RefSnapshot& snapshot,
                   const std::vector<double>& question_dist) {
  if (!theta.same_shape(snapshot.theta_ref))
    throw ContractError("kl_gradient: shape mismatch with snapshot");
  Matrix grad(theta.rows(), theta.cols());
  for (int t = 0; t < theta.rows(); ++t) {
    for (int f = 0; f < theta.cols(); ++f) {
      const double p = logistic_clamped(theta(t, f));
      const double q = logistic_clamped(snapshot.theta_ref(t, f));
      const double logit_gap = std::log(p / (1.0 - p)) - std::log(q / (1.0 - q));
      grad(t, f) = question_dist[t] * p * (1.0 - p) * logit_gap;
    }
  }
  return grad;
}

RefSnapshot snapshot(const Matrix& theta, long step) {
  return RefSnapshot{theta, step};
}

}  // namespace acrl
