#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "acrl/core.hpp"
#include "acrl/rng.hpp"

namespace acrl {

/// The enumerable world: attribute alphabet, question table, and the frozen
/// reasoner's decision kernel parameters.
struct EnvConfig {
  int attribute_count = 4;                       // length of the scene vector
  int value_count = 3;                           // values per attribute
  int question_type_count = 1;
  std::vector<std::vector<int>> required_sets;   // one set per question type
  int ask_threshold = 1;                         // max missing count that still triggers a request
  double p_ask = 1.0;                            // request probability when within threshold
  double p_guess = 0.0;                          // success probability of an under-informed answer
  std::vector<double> question_dist;             // probability per question type

  void validate() const;
};

/// Counts clarifier invocations so protocols that forbid clarification can
/// prove they never called it.
struct ClarifierCounter {
  std::atomic<long> calls{0};
};

Scene gen_scene(Rng& rng, const EnvConfig& cfg);
Question gen_question(Rng& rng, const EnvConfig& cfg);

/// Reasoner verdict on an initial caption: either an answer (with its
/// correctness already resolved) or a request for one missing attribute.
struct Decision {
  bool need_info = false;
  int request = -1;    // valid when need_info
  bool correct = false;  // valid when !need_info
};

/// The frozen reasoner's decision kernel. Counts missing required attributes
/// m: zero missing answers correctly; 1..ask_threshold missing requests one
/// uniformly-chosen missing attribute with probability p_ask, otherwise
/// guesses; above the threshold it always guesses. All randomness comes from
/// substreams derived from post_seed, never from the policy parameters.
Decision reason_decide(const Question& question, const Caption& c0, std::uint64_t post_seed,
                       const EnvConfig& cfg);

/// Frozen clarifier: reveals the true value at the requested index.
/// Deterministic, parameter-free, contributes no gradient terms.
int clarify(const Scene& scene, int request, ClarifierCounter* counter = nullptr);

/// Whether a reasoner request is honored (training and clarification-enabled
/// evaluation) or denied (single-pass evaluation and the deny counterfactual).
enum class ClarificationMode { kHonor, kDeny };

/// Everything that happens after the caption is fixed, resolved from the
/// post-action substream alone. Re-running with the same caption and seed
/// reproduces the outcome exactly, for any policy parameters.
struct PostCaptionResult {
  bool requested = false;
  int requested_index = -1;
  std::optional<ClarificationExchange> clar;
  bool clarified = false;
  bool answer_correct = false;
};

PostCaptionResult resolve_post_caption(const Scene& scene, const Question& question,
                                       const Caption& c0, std::uint64_t post_seed,
                                       const EnvConfig& cfg, ClarificationMode mode,
                                       ClarifierCounter* counter = nullptr);

using CaptionSampler =
    std::function<std::pair<Caption, double>(const Scene&, const Question&, Rng&)>;

struct EpisodeOutcome {
  Episode episode;
  bool requested = false;
  int requested_index = -1;
};

/// Runs the full protocol for one (scene, question): sample the caption from
/// the policy, resolve the post-caption stages, assign the reward. The
/// caption stream and the post-action stream are derived from episode_key so
/// episodes are reproducible and order-independent.
EpisodeOutcome run_episode(const CaptionSampler& sample_caption, const Scene& scene,
                           const Question& question, const RewardConfig& reward_cfg,
                           const EnvConfig& cfg, std::uint64_t episode_key,
                           ClarificationMode mode = ClarificationMode::kHonor,
                           ClarifierCounter* counter = nullptr);

}  // namespace acrl
