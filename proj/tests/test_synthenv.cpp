#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "acrl/policy.hpp"
#include "acrl/synthenv.hpp"

using namespace acrl;

namespace {

EnvConfig small_env() {
  EnvConfig env;
  env.attribute_count = 4;
  env.value_count = 3;
  env.question_type_count = 2;
  env.required_sets = {{0, 1}, {2}};
  env.ask_threshold = 1;
  env.p_ask = 1.0;
  env.p_guess = 0.0;
  env.question_dist = {0.5, 0.5};
  return env;
}

RewardConfig tiered() {
  RewardConfig cfg;
  cfg.mode = RewardMode::kTiered;
  cfg.alpha = 0.7;
  return cfg;
}

Caption caption_of(const Scene& scene, std::initializer_list<int> indices) {
  Caption c;
  for (int idx : indices) c.disclosed.emplace_back(idx, scene.attributes[idx]);
  return c;
}

}  // namespace

TEST_CASE("env validation rejects malformed configurations") {
  CHECK_NOTHROW(small_env().validate());

  EnvConfig env = small_env();
  env.required_sets = {{0, 1}};
  CHECK_THROWS_AS(env.validate(), ConfigError);

  env = small_env();
  env.required_sets[0] = {};
  CHECK_THROWS_AS(env.validate(), ConfigError);

  env = small_env();
  env.required_sets[0] = {0, 0};
  CHECK_THROWS_AS(env.validate(), ConfigError);

  env = small_env();
  env.required_sets[0] = {0, 9};
  CHECK_THROWS_AS(env.validate(), ConfigError);

  env = small_env();
  env.p_ask = 1.5;
  CHECK_THROWS_AS(env.validate(), ConfigError);

  env = small_env();
  env.question_dist = {0.7, 0.7};
  CHECK_THROWS_AS(env.validate(), ConfigError);
}

TEST_CASE("scenes are deterministic in the key and bounded by the alphabet") {
  const EnvConfig env = small_env();
  Rng a(derive_key(5, stream::kScene, 17));
  Rng b(derive_key(5, stream::kScene, 17));
  const Scene s1 = gen_scene(a, env);
  const Scene s2 = gen_scene(b, env);
  CHECK(s1.attributes == s2.attributes);
  REQUIRE(s1.attributes.size() == 4);
  for (int v : s1.attributes) {
    CHECK(v >= 0);
    CHECK(v < 3);
  }
}

TEST_CASE("questions follow the distribution and carry sorted required sets") {
  EnvConfig env = small_env();
  env.question_dist = {1.0, 0.0};
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const Question q = gen_question(rng, env);
    CHECK(q.qtype == 0);
    CHECK(q.required == std::vector<int>{0, 1});
  }

  env.question_dist = {0.5, 0.5};
  std::set<int> seen;
  Rng rng2(10);
  for (int i = 0; i < 200; ++i) seen.insert(gen_question(rng2, env).qtype);
  CHECK(seen == std::set<int>{0, 1});
}

TEST_CASE("reasoner answers correctly when nothing required is missing") {
  const EnvConfig env = small_env();
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  const Decision d = reason_decide(q, caption_of(scene, {0, 1}), 123, env);
  CHECK_FALSE(d.need_info);
  CHECK(d.correct);
}

TEST_CASE("reasoner requests a missing attribute within the ask threshold") {
  const EnvConfig env = small_env();  // p_ask = 1
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  const Decision d = reason_decide(q, caption_of(scene, {0}), 123, env);
  CHECK(d.need_info);
  CHECK(d.request == 1);  // the only missing required attribute
}

TEST_CASE("reasoner guesses above the ask threshold") {
  EnvConfig env = small_env();
  env.p_guess = 0.0;
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  // Both required attributes missing (m=2 > ask_threshold=1) forces a guess.
  const Decision d = reason_decide(q, caption_of(scene, {}), 123, env);
  CHECK_FALSE(d.need_info);
  CHECK_FALSE(d.correct);

  env.p_guess = 1.0;
  const Decision d2 = reason_decide(q, caption_of(scene, {}), 123, env);
  CHECK(d2.correct);
}

TEST_CASE("reasoner with p_ask zero never requests") {
  EnvConfig env = small_env();
  env.p_ask = 0.0;
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    CHECK_FALSE(reason_decide(q, caption_of(scene, {0}), seed, env).need_info);
}

TEST_CASE("decisions are a pure function of the post seed") {
  EnvConfig env = small_env();
  env.p_ask = 0.5;
  env.p_guess = 0.5;
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  const Caption c0 = caption_of(scene, {0});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Decision d1 = reason_decide(q, c0, seed, env);
    const Decision d2 = reason_decide(q, c0, seed, env);
    CHECK(d1.need_info == d2.need_info);
    CHECK(d1.request == d2.request);
    CHECK(d1.correct == d2.correct);
  }
}

TEST_CASE("clarifier reveals the true value and counts invocations") {
  const Scene scene{{1, 2, 0, 1}};
  ClarifierCounter counter;
  CHECK(clarify(scene, 2, &counter) == 0);
  CHECK(clarify(scene, 0, &counter) == 1);
  CHECK(counter.calls.load() == 2);
  CHECK_THROWS_AS(clarify(scene, 7, &counter), ContractError);
  CHECK(counter.calls.load() == 2);  // failed call not counted
}

TEST_CASE("honored clarification completes a single-missing episode") {
  const EnvConfig env = small_env();
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  ClarifierCounter counter;
  const PostCaptionResult r = resolve_post_caption(scene, q, caption_of(scene, {0}), 77, env,
                                                   ClarificationMode::kHonor, &counter);
  CHECK(r.requested);
  CHECK(r.requested_index == 1);
  CHECK(r.clarified);
  REQUIRE(r.clar.has_value());
  CHECK(r.clar->request == 1);
  CHECK(r.clar->response == 2);
  CHECK(r.answer_correct);
  CHECK(counter.calls.load() == 1);
}

TEST_CASE("denied clarification falls back to a guess and never calls the clarifier") {
  EnvConfig env = small_env();
  env.p_guess = 0.0;
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  ClarifierCounter counter;
  const PostCaptionResult r = resolve_post_caption(scene, q, caption_of(scene, {0}), 77, env,
                                                   ClarificationMode::kDeny, &counter);
  CHECK(r.requested);
  CHECK_FALSE(r.clarified);
  CHECK_FALSE(r.clar.has_value());
  CHECK_FALSE(r.answer_correct);
  CHECK(counter.calls.load() == 0);
}

TEST_CASE("deny and honor agree on whether a request happens") {
  EnvConfig env = small_env();
  env.p_ask = 0.6;
  env.p_guess = 0.3;
  const Scene scene{{1, 2, 0, 1}};
  const Question q{0, {0, 1}};
  const Caption c0 = caption_of(scene, {0});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PostCaptionResult honor =
        resolve_post_caption(scene, q, c0, seed, env, ClarificationMode::kHonor);
    const PostCaptionResult deny =
        resolve_post_caption(scene, q, c0, seed, env, ClarificationMode::kDeny);
    CHECK(honor.requested == deny.requested);
    CHECK(honor.requested_index == deny.requested_index);
  }
}

TEST_CASE("run_episode produces valid reproducible episodes") {
  const EnvConfig env = small_env();
  const RewardConfig reward = tiered();
  Matrix theta(2, 4, 0.0);
  const CaptionSampler sampler = [&](const Scene& s, const Question& q, Rng& rng) {
    return sample_caption(theta, s, q, rng);
  };

  Rng scene_rng(derive_key(1, stream::kScene, 0));
  Rng question_rng(derive_key(1, stream::kQuestion, 0));
  const Scene scene = gen_scene(scene_rng, env);
  const Question question = gen_question(question_rng, env);

  const EpisodeOutcome a = run_episode(sampler, scene, question, reward, env, 555);
  const EpisodeOutcome b = run_episode(sampler, scene, question, reward, env, 555);
  CHECK(a.episode.c0.disclosed == b.episode.c0.disclosed);
  CHECK(a.episode.reward == b.episode.reward);
  CHECK(a.episode.caption_logprob == b.episode.caption_logprob);
  CHECK(a.episode.post_action_seed == b.episode.post_action_seed);
  CHECK_NOTHROW(validate_episode(a.episode, reward));

  // Different keys explore different captions eventually.
  bool any_difference = false;
  for (std::uint64_t key = 0; key < 32 && !any_difference; ++key) {
    const EpisodeOutcome c = run_episode(sampler, scene, question, reward, env, key);
    any_difference = c.episode.c0.disclosed != a.episode.c0.disclosed;
  }
  CHECK(any_difference);
}

TEST_CASE("episode rewards land on the tier matching the outcome") {
  const EnvConfig env = small_env();
  const RewardConfig reward = tiered();
  Matrix theta(2, 4, 0.0);
  const CaptionSampler sampler = [&](const Scene& s, const Question& q, Rng& rng) {
    return sample_caption(theta, s, q, rng);
  };
  Rng scene_rng(derive_key(2, stream::kScene, 0));
  const Scene scene = gen_scene(scene_rng, env);
  const Question question{0, {0, 1}};

  for (std::uint64_t key = 0; key < 200; ++key) {
    const Episode e = run_episode(sampler, scene, question, reward, env, key).episode;
    if (e.clarified) CHECK(e.reward == (e.answer_correct ? 0.7 : 0.0));
    else CHECK(e.reward == (e.answer_correct ? 1.0 : 0.0));
  }
}
