#include "acrl/synthenv.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace acrl {

void EnvConfig::validate() const {
  if (attribute_count < 1) throw ConfigError("env.attribute_count", "must be >= 1");
  if (value_count < 1) throw ConfigError("env.value_count", "must be >= 1");
  if (question_type_count < 1) throw ConfigError("env.question_type_count", "must be >= 1");
  if (static_cast<int>(required_sets.size()) != question_type_count)
    throw ConfigError("env.required_sets", "needs one set per question type");
  for (int t = 0; t < question_type_count; ++t) {
    const auto& req = required_sets[t];
    if (req.empty())
      throw ConfigError("env.required_sets[" + std::to_string(t) + "]", "must be non-empty");
    for (int idx : req)
      if (idx < 0 || idx >= attribute_count)
        throw ConfigError("env.required_sets[" + std::to_string(t) + "]",
                          "index " + std::to_string(idx) + " out of range");
    std::vector<int> sorted = req;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("env.required_sets[" + std::to_string(t) + "]", "contains duplicates");
  }
  if (ask_threshold < 0) throw ConfigError("env.ask_threshold", "must be >= 0");
  if (p_ask < 0.0 || p_ask > 1.0) throw ConfigError("env.p_ask", "must lie in [0, 1]");
  if (p_guess < 0.0 || p_guess > 1.0) throw ConfigError("env.p_guess", "must lie in [0, 1]");
  if (static_cast<int>(question_dist.size()) != question_type_count)
    throw ConfigError("env.question_dist", "needs one weight per question type");
  double total = 0.0;
  for (double w : question_dist) {
    if (w < 0.0) throw ConfigError("env.question_dist", "weights must be non-negative");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw ConfigError("env.question_dist", "must sum to 1");
}

Scene gen_scene(Rng& rng, const EnvConfig& cfg) {
  Scene scene;
  scene.attributes.resize(cfg.attribute_count);
  for (int f = 0; f < cfg.attribute_count; ++f)
    scene.attributes[f] = rng.uniform_int(cfg.value_count);
  return scene;
}

Question gen_question(Rng& rng, const EnvConfig& cfg) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  int qtype = cfg.question_type_count - 1;
  for (int t = 0; t < cfg.question_type_count; ++t) {
    cumulative += cfg.question_dist[t];
    if (u < cumulative) {
      qtype = t;
      break;
    }
  }
  Question q;
  q.qtype = qtype;
  q.required = cfg.required_sets[qtype];
  std::sort(q.required.begin(), q.required.end());
  return q;
}

namespace {

std::vector<int> missing_required(const Question& question, const Caption& c0) {
  std::vector<int> missing;
  for (int idx : question.required)
    if (!c0.discloses(idx)) missing.push_back(idx);
  return missing;
}

}  // namespace

Decision reason_decide(const Question& question, const Caption& c0, std::uint64_t post_seed,
                       const EnvConfig& cfg) {
  const std::vector<int> missing = missing_required(question, c0);
  const int m = static_cast<int>(missing.size());

  Decision d;
  if (m == 0) {
    d.correct = true;
    return d;
  }
  if (m <= cfg.ask_threshold) {
    Rng ask(derive_key(post_seed, stream::kAskDraw));
    if (ask.bernoulli(cfg.p_ask)) {
      Rng pick(derive_key(post_seed, stream::kPickDraw));
      d.need_info = true;
      d.request = missing[pick.uniform_int(m)];
      return d;
    }
  }
  Rng guess(derive_key(post_seed, stream::kGuessDraw));
  d.correct = guess.bernoulli(cfg.p_guess);
  return d;
}

int clarify(const Scene& scene, int request, ClarifierCounter* counter) {
  if (request < 0 || request >= static_cast<int>(scene.attributes.size()))
    throw ContractError("clarify: request index out of range");
  if (counter) counter->calls.fetch_add(1, std::memory_order_relaxed);
  return scene.attributes[request];
}

PostCaptionResult resolve_post_caption(const Scene& scene, const Question& question,
                                       const Caption& c0, std::uint64_t post_seed,
                                       const EnvConfig& cfg, ClarificationMode mode,
                                       ClarifierCounter* counter) {
  PostCaptionResult result;
  const Decision decision = reason_decide(question, c0, post_seed, cfg);

  if (!decision.need_info) {
    result.answer_correct = decision.correct;
    return result;
  }

  result.requested = true;
  result.requested_index = decision.request;

  if (mode == ClarificationMode::kDeny) {
    Rng deny(derive_key(post_seed, stream::kDenyDraw));
    result.answer_correct = deny.bernoulli(cfg.p_guess);
    return result;
  }

  ClarificationExchange exchange;
  exchange.request = decision.request;
  exchange.response = clarify(scene, decision.request, counter);
  result.clar = exchange;
  result.clarified = true;
  // Correct iff the single revealed attribute completes the required set.
  result.answer_correct = static_cast<int>(missing_required(question, c0).size()) == 1;
  return result;
}

EpisodeOutcome run_episode(const CaptionSampler& sample_caption, const Scene& scene,
                           const Question& question, const RewardConfig& reward_cfg,
                           const EnvConfig& cfg, std::uint64_t episode_key,
                           ClarificationMode mode, ClarifierCounter* counter) {
  Rng caption_rng(derive_key(episode_key, stream::kCaption));
  const std::uint64_t post_seed = derive_key(episode_key, stream::kPostAction);

  EpisodeOutcome outcome;
  Episode& e = outcome.episode;
  e.scene = scene;
  e.question = question;
  auto [caption, logprob] = sample_caption(scene, question, caption_rng);
  e.c0 = std::move(caption);
  e.caption_logprob = logprob;
  e.post_action_seed = post_seed;

  const PostCaptionResult post =
      resolve_post_caption(scene, question, e.c0, post_seed, cfg, mode, counter);
  e.clar = post.clar;
  e.clarified = post.clarified;
  e.answer_correct = post.answer_correct;
  e.reward = assign_reward(e.answer_correct, e.clarified, reward_cfg);
  outcome.requested = post.requested;
  outcome.requested_index = post.requested_index;
  return outcome;
}

}  // namespace acrl
