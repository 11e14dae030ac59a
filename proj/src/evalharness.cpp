#include "acrl/evalharness.hpp"

#include <cmath>
#include <thread>

#include "acrl/policy.hpp"
#include "acrl/rng.hpp"

namespace acrl {

namespace {

void run_range(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
               std::uint64_t seed, ClarificationMode mode, ClarifierCounter* counter, long begin,
               long end, EvalRun* out) {
  const CaptionSampler sampler = [&theta](const Scene& scene, const Question& question,
                                          Rng& rng) {
    return sample_caption(theta, scene, question, rng);
  };
  for (long i = begin; i < end; ++i) {
    const auto index = static_cast<std::uint64_t>(i);
    Rng scene_rng(derive_key(seed, stream::kScene, index));
    Rng question_rng(derive_key(seed, stream::kQuestion, index));
    const Scene scene = gen_scene(scene_rng, env);
    const Question question = gen_question(question_rng, env);
    EpisodeOutcome outcome =
        run_episode(sampler, scene, question, reward, env,
                    derive_key(seed, stream::kEvalEpisode, index), mode, counter);
    out->episodes[i] = std::move(outcome.episode);
    out->requested[i] = outcome.requested ? 1 : 0;
  }
}

EvalRun run_protocol(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                     long n, std::uint64_t seed, ClarificationMode mode, int threads) {
  env.validate();
  reward.validate();
  if (n < 1) throw ContractError("eval: n must be >= 1");
  if (theta.rows() != env.question_type_count || theta.cols() != env.attribute_count)
    throw ContractError("eval: theta shape does not match the environment");

  EvalRun run;
  run.n = n;
  run.episodes.resize(n);
  run.requested.resize(n);
  ClarifierCounter counter;

  const int workers = static_cast<int>(std::min<long>(std::max(threads, 1), n));
  if (workers <= 1) {
    run_range(theta, env, reward, seed, mode, &counter, 0, n, &run);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      const long begin = n * w / workers;
      const long end = n * (w + 1) / workers;
      pool.emplace_back(run_range, std::cref(theta), std::cref(env), std::cref(reward), seed,
                        mode, &counter, begin, end, &run);
    }
    for (auto& t : pool) t.join();
  }

  long correct = 0;
  long clarified = 0;
  for (const Episode& e : run.episodes) {
    correct += e.answer_correct;
    clarified += e.clarified;
  }
  run.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  run.clar_rate = static_cast<double>(clarified) / static_cast<double>(n);
  run.clarifier_calls = counter.calls.load();
  return run;
}

nlohmann::json optional_to_json(const std::optional<double>& value) {
  if (value) return *value;
  return nullptr;
}

}  // namespace

EvalRun eval_single_pass(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                         long n, std::uint64_t seed, int threads) {
  return run_protocol(theta, env, reward, n, seed, ClarificationMode::kDeny, threads);
}

EvalRun eval_clar_enabled(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                          long n, std::uint64_t seed, int threads) {
  return run_protocol(theta, env, reward, n, seed, ClarificationMode::kHonor, threads);
}

Gap clarification_gap(double accuracy_clar, double accuracy_single) {
  if (accuracy_clar < 0.0 || accuracy_clar > 1.0 || accuracy_single < 0.0 ||
      accuracy_single > 1.0)
    throw ContractError("clarification_gap: accuracies must lie in [0, 1]");
  Gap gap;
  gap.gap_abs = accuracy_clar - accuracy_single;
  gap.gap_rel = accuracy_single < 1.0 ? gap.gap_abs / (1.0 - accuracy_single) : 0.0;
  return gap;
}

DenyAnalysis deny_analysis(const EvalRun& clar_run, const EnvConfig& env,
                           const RewardConfig& reward) {
  if (clar_run.requested.size() != clar_run.episodes.size())
    throw ContractError("deny_analysis: malformed run");

  DenyAnalysis out;
  long clar_correct = 0;
  long denied_correct = 0;
  for (std::size_t i = 0; i < clar_run.episodes.size(); ++i) {
    if (!clar_run.requested[i]) continue;
    const Episode& original = clar_run.episodes[i];
    ++out.n_requests;
    out.requested_indices.push_back(static_cast<long>(i));
    clar_correct += original.answer_correct;

    // Same caption, same post-action randomness, request denied.
    const PostCaptionResult denied =
        resolve_post_caption(original.scene, original.question, original.c0,
                             original.post_action_seed, env, ClarificationMode::kDeny);
    Episode replay = original;
    replay.clar.reset();
    replay.clarified = false;
    replay.answer_correct = denied.answer_correct;
    replay.reward = assign_reward(denied.answer_correct, false, reward);
    denied_correct += denied.answer_correct;
    out.denied_episodes.push_back(std::move(replay));
  }

  if (out.n_requests > 0) {
    out.acc_on_requested_clar =
        static_cast<double>(clar_correct) / static_cast<double>(out.n_requests);
    out.acc_on_requested_denied =
        static_cast<double>(denied_correct) / static_cast<double>(out.n_requests);
    out.delta_deny = *out.acc_on_requested_clar - *out.acc_on_requested_denied;
  }
  return out;
}

double delta_deny_table(double accuracy_single, double acc_on_requested_denied) {
  return accuracy_single - acc_on_requested_denied;
}

std::optional<Reduction> reduction(double rate_before, double rate_after) {
  if (rate_before <= 0.0) return std::nullopt;
  Reduction r;
  r.exact = 1.0 - rate_after / rate_before;
  r.percent = static_cast<int>(std::lround(r.exact * 100.0));
  return r;
}

MetricsReport full_report(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                          long n, std::uint64_t seed, int threads) {
  const EvalRun single = eval_single_pass(theta, env, reward, n, seed, threads);
  const EvalRun clar = eval_clar_enabled(theta, env, reward, n, seed, threads);
  const DenyAnalysis deny = deny_analysis(clar, env, reward);

  MetricsReport report;
  report.accuracy_single = single.accuracy;
  report.accuracy_clar = clar.accuracy;
  report.clar_rate = clar.clar_rate;
  const Gap gap = clarification_gap(clar.accuracy, single.accuracy);
  report.gap_abs = gap.gap_abs;
  report.gap_rel = gap.gap_rel;
  report.n_requests = deny.n_requests;
  report.acc_on_requested_clar = deny.acc_on_requested_clar;
  report.acc_on_requested_denied = deny.acc_on_requested_denied;
  report.delta_deny = deny.delta_deny;
  if (deny.acc_on_requested_denied)
    report.delta_deny_table = delta_deny_table(single.accuracy, *deny.acc_on_requested_denied);
  report.n_eval = n;
  return report;
}

nlohmann::json report_to_json(const MetricsReport& report) {
  return nlohmann::json{{"accuracy_single", report.accuracy_single},
                        {"accuracy_clar", report.accuracy_clar},
                        {"clar_rate", report.clar_rate},
                        {"gap_abs", report.gap_abs},
                        {"gap_rel", report.gap_rel},
                        {"n_requests", report.n_requests},
                        {"acc_on_requested_clar", optional_to_json(report.acc_on_requested_clar)},
                        {"acc_on_requested_denied",
                         optional_to_json(report.acc_on_requested_denied)},
                        {"delta_deny", optional_to_json(report.delta_deny)},
                        {"delta_deny_table", optional_to_json(report.delta_deny_table)},
                        {"n_eval", report.n_eval}};
}

void write_eval_records(std::ostream& out, const std::vector<Episode>& episodes,
                        const std::vector<long>& indices, const std::string& protocol) {
  if (episodes.size() != indices.size())
    throw ContractError("write_eval_records: index list must match episodes");
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    nlohmann::json record =
        episode_to_json(episodes[i], protocol + "-" + std::to_string(indices[i]));
    record["protocol"] = protocol;
    out << record.dump() << "\n";
  }
}

}  // namespace acrl
