#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "acrl/config.hpp"
#include "acrl/core.hpp"
#include "acrl/evalharness.hpp"
#include "acrl/llmbridge.hpp"
#include "acrl/matrix.hpp"
#include "acrl/oracle.hpp"
#include "acrl/rng.hpp"
#include "acrl/trainer.hpp"

namespace {

using namespace acrl;
using nlohmann::json;

json optional_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---------------------------------------------------------------- train ---

struct TrainOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string reward_mode;  // empty: keep the config's mode
  bool episode_log = false;
  std::optional<int> threads;
};

int run_train(const TrainOpts& opts) {
  RunConfig rc = load_run_config(opts.config_path);
  if (opts.seed) rc.train.seed = *opts.seed;
  if (!opts.reward_mode.empty())
    rc.train.reward.mode =
        opts.reward_mode == "tiered" ? RewardMode::kTiered : RewardMode::kBinary;
  if (opts.episode_log) rc.train.log_episodes = true;
  if (opts.threads) rc.train.threads = *opts.threads;
  rc.train.out_dir = opts.out_dir;
  rc.train.validate();

  std::filesystem::create_directories(opts.out_dir);
  {
    std::ofstream out(opts.out_dir + "/config_resolved.json");
    if (!out) throw ConfigError("out", "cannot write to " + opts.out_dir);
    out << run_config_to_json(rc).dump(2) << "\n";
  }

  const TrainResult result = train(rc.train);
  std::cout << "trained " << result.metrics.size() << " iterations";
  if (!result.metrics.empty())
    std::cout << ", final mean reward " << result.metrics.back().mean_reward
              << ", final clarification rate " << result.metrics.back().train_clar_rate;
  std::cout << "\nartifacts in " << opts.out_dir << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ---

struct EvalOpts {
  std::string checkpoint_path;
  std::string config_path;
  std::string protocol = "all";
  std::optional<long> n;
  std::optional<std::uint64_t> seed;
  std::string out_dir;  // empty: report to stdout only
  bool force = false;
  bool csv = false;
  int threads = 1;
};

std::vector<long> identity_indices(long n) {
  std::vector<long> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0L);
  return v;
}

json protocol_report(const std::string& protocol, const EvalRun& run) {
  return json{{"protocol", protocol},
              {"accuracy", run.accuracy},
              {"clar_rate", run.clar_rate},
              {"clarifier_calls", run.clarifier_calls},
              {"n", run.n}};
}

int run_eval(const EvalOpts& opts) {
  RunConfig rc = load_run_config(opts.config_path);
  if (opts.n) rc.eval.n = *opts.n;
  if (opts.seed) rc.eval.seed = *opts.seed;
  rc.eval.validate();

  const PolicyParams params = load_checkpoint(opts.checkpoint_path, rc.train, opts.force);
  const EnvConfig& env = rc.train.env;
  const RewardConfig& reward = rc.train.reward;
  const long n = rc.eval.n;
  const std::uint64_t seed = rc.eval.seed;

  json report;
  std::ostringstream records;
  std::vector<std::vector<std::string>> csv_rows;  // protocol, accuracy, clar_rate, calls, n

  auto csv_row = [&](const std::string& protocol, double accuracy, double clar_rate,
                     long clarifier_calls, long count) {
    csv_rows.push_back({protocol, std::to_string(accuracy), std::to_string(clar_rate),
                        std::to_string(clarifier_calls), std::to_string(count)});
  };

  if (opts.protocol == "single") {
    const EvalRun run = eval_single_pass(params.theta, env, reward, n, seed, opts.threads);
    report = protocol_report("single", run);
    write_eval_records(records, run.episodes, identity_indices(n), "single");
    csv_row("single", run.accuracy, run.clar_rate, run.clarifier_calls, run.n);
  } else if (opts.protocol == "clar") {
    const EvalRun run = eval_clar_enabled(params.theta, env, reward, n, seed, opts.threads);
    report = protocol_report("clar", run);
    write_eval_records(records, run.episodes, identity_indices(n), "clar");
    csv_row("clar", run.accuracy, run.clar_rate, run.clarifier_calls, run.n);
  } else if (opts.protocol == "deny") {
    const EvalRun run = eval_clar_enabled(params.theta, env, reward, n, seed, opts.threads);
    const DenyAnalysis deny = deny_analysis(run, env, reward);
    report = json{{"protocol", "deny"},
                  {"n_requests", deny.n_requests},
                  {"acc_on_requested_clar", optional_to_json(deny.acc_on_requested_clar)},
                  {"acc_on_requested_denied", optional_to_json(deny.acc_on_requested_denied)},
                  {"delta_deny", optional_to_json(deny.delta_deny)},
                  {"n", run.n}};
    write_eval_records(records, deny.denied_episodes, deny.requested_indices, "deny");
    csv_row("deny", deny.acc_on_requested_denied.value_or(0.0), 0.0, 0,
            deny.n_requests);
  } else {  // all three protocols on shared scene/question streams
    const EvalRun single = eval_single_pass(params.theta, env, reward, n, seed, opts.threads);
    const EvalRun clar = eval_clar_enabled(params.theta, env, reward, n, seed, opts.threads);
    const DenyAnalysis deny = deny_analysis(clar, env, reward);

    MetricsReport mr;
    mr.accuracy_single = single.accuracy;
    mr.accuracy_clar = clar.accuracy;
    mr.clar_rate = clar.clar_rate;
    const Gap gap = clarification_gap(clar.accuracy, single.accuracy);
    mr.gap_abs = gap.gap_abs;
    mr.gap_rel = gap.gap_rel;
    mr.n_requests = deny.n_requests;
    mr.acc_on_requested_clar = deny.acc_on_requested_clar;
    mr.acc_on_requested_denied = deny.acc_on_requested_denied;
    mr.delta_deny = deny.delta_deny;
    if (deny.acc_on_requested_denied)
      mr.delta_deny_table = delta_deny_table(single.accuracy, *deny.acc_on_requested_denied);
    mr.n_eval = n;
    report = report_to_json(mr);
    report["clarifier_calls_single"] = single.clarifier_calls;
    report["clarifier_calls_clar"] = clar.clarifier_calls;

    write_eval_records(records, single.episodes, identity_indices(n), "single");
    write_eval_records(records, clar.episodes, identity_indices(n), "clar");
    write_eval_records(records, deny.denied_episodes, deny.requested_indices, "deny");
    csv_row("single", single.accuracy, single.clar_rate, single.clarifier_calls, single.n);
    csv_row("clar", clar.accuracy, clar.clar_rate, clar.clarifier_calls, clar.n);
    csv_row("deny", deny.acc_on_requested_denied.value_or(0.0), 0.0, 0, deny.n_requests);
  }

  std::cout << report.dump(2) << "\n";

  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    std::ofstream report_out(opts.out_dir + "/report.json");
    std::ofstream records_out(opts.out_dir + "/records.jsonl");
    if (!report_out || !records_out)
      throw ConfigError("out", "cannot write to " + opts.out_dir);
    report_out << report.dump(2) << "\n";
    records_out << records.str();
    if (opts.csv) {
      std::ofstream csv_out(opts.out_dir + "/report.csv");
      csv_out << "protocol,accuracy,clar_rate,clarifier_calls,n\n";
      for (const auto& row : csv_rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
          csv_out << row[i] << (i + 1 < row.size() ? "," : "\n");
      }
    }
  }
  return 0;
}

// ------------------------------------------------------- verify-gradient ---

struct VerifyOpts {
  std::string config_path;
  long n = 200000;
  bool negative_control = false;
};

int run_verify_gradient(const VerifyOpts& opts) {
  if (opts.n < 1000) throw ConfigError("n", "must be >= 1000 for a usable standard error");
  const RunConfig rc = load_run_config(opts.config_path);
  const EnvConfig& env = rc.train.env;
  const RewardConfig& reward = rc.train.reward;

  // A reproducible non-trivial evaluation point for the check.
  Matrix theta(env.question_type_count, env.attribute_count);
  Rng theta_rng(derive_key(rc.eval.seed, 0x7e7aULL));
  for (int q = 0; q < env.question_type_count; ++q)
    for (int f = 0; f < env.attribute_count; ++f) theta(q, f) = 2.0 * theta_rng.uniform() - 1.0;

  const double j_exact = exact_expected_reward(theta, env, reward);
  const Matrix g_exact = exact_gradient(theta, env, reward);
  std::cout << "exact expected reward: " << j_exact << "\n";

  struct Run {
    const char* name;
    McGradient mc;
  };
  const std::vector<Run> runs = {
      {"no baseline", mc_gradient_reinforce(theta, env, reward, opts.n, rc.eval.seed,
                                            BaselineKind::kNone)},
      {"constant baseline", mc_gradient_reinforce(theta, env, reward, opts.n, rc.eval.seed,
                                                  BaselineKind::kConstant, j_exact)},
      {"leave-one-out baseline", mc_gradient_reinforce(theta, env, reward, opts.n, rc.eval.seed,
                                                       BaselineKind::kLeaveOneOut)},
  };

  bool all_pass = true;
  for (const Run& run : runs) {
    std::cout << run.name << " (n = " << run.mc.n << "):\n";
    for (int q = 0; q < env.question_type_count; ++q) {
      for (int f = 0; f < env.attribute_count; ++f) {
        const double exact = g_exact(q, f);
        const double mc = run.mc.estimate(q, f);
        const double se = run.mc.std_error(q, f);
        const bool pass = se > 0.0 ? std::abs(mc - exact) <= 3.0 * se : mc == exact;
        all_pass = all_pass && pass;
        std::cout << "  theta[" << q << "][" << f << "]  exact " << exact << "  mc " << mc
                  << " +/- " << se << "  " << (pass ? "ok" : "OUTSIDE 3 SE") << "\n";
      }
    }
  }

  if (opts.negative_control) {
    const BiasDemoResult demo = bias_demo_theta_dependent(
        theta, 0.3, env, reward, opts.n, derive_key(rc.eval.seed, 0xb1a5ULL));
    std::cout << "negative control (reasoner-side parameter):\n"
              << "  exact derivative      " << demo.exact << "\n"
              << "  naive estimate        " << demo.naive_estimate << " +/- "
              << demo.naive_std_error << (demo.naive_biased ? "  (biased, as expected)" : "")
              << "\n"
              << "  corrected estimate    " << demo.corrected_estimate << " +/- "
              << demo.corrected_std_error
              << (demo.corrected_consistent ? "  (within 3 se)" : "  (OUTSIDE 3 SE)") << "\n";
    all_pass = all_pass && demo.naive_biased && demo.corrected_consistent;
  }

  std::cout << (all_pass ? "gradient check passed" : "gradient check FAILED") << "\n";
  return all_pass ? 0 : 1;
}

// -------------------------------------------------------------- metrics ---

struct EpisodeRow {
  std::string protocol;  // empty when the log carries none
  long pair_index = -1;  // trailing -<index> of the episode id, when numeric
  bool clarified = false;
  bool answer_correct = false;
  bool infra_failed = false;
  double reward = 0.0;
  std::string group_id;
};

EpisodeRow parse_episode_row(const json& doc, const std::string& path, long line_number) {
  auto fail = [&](const std::string& why) -> ConfigError {
    return ConfigError("episodes", path + ": line " + std::to_string(line_number) + ": " + why);
  };
  if (!doc.is_object()) throw fail("record is not an object");

  EpisodeRow row;
  const auto require = [&](const char* key) -> const json& {
    if (!doc.contains(key)) throw fail(std::string("missing field `") + key + "`");
    return doc.at(key);
  };
  const json& id = require("episode_id");
  if (!id.is_string()) throw fail("`episode_id` must be a string");
  const json& clarified = require("clarified");
  if (!clarified.is_boolean()) throw fail("`clarified` must be a boolean");
  row.clarified = clarified.get<bool>();
  const json& correct = require("answer_correct");
  if (!correct.is_boolean()) throw fail("`answer_correct` must be a boolean");
  row.answer_correct = correct.get<bool>();
  const json& reward = require("reward");
  if (!reward.is_number()) throw fail("`reward` must be a number");
  row.reward = reward.get<double>();

  if (doc.contains("protocol")) {
    if (!doc["protocol"].is_string()) throw fail("`protocol` must be a string");
    row.protocol = doc["protocol"].get<std::string>();
  }
  if (doc.contains("group_id")) {
    if (!doc["group_id"].is_string()) throw fail("`group_id` must be a string");
    row.group_id = doc["group_id"].get<std::string>();
  }
  if (doc.contains("infra_failed")) {
    if (!doc["infra_failed"].is_boolean()) throw fail("`infra_failed` must be a boolean");
    row.infra_failed = doc["infra_failed"].get<bool>();
  }

  const std::string id_text = id.get<std::string>();
  const std::size_t dash = id_text.rfind('-');
  if (dash != std::string::npos && dash + 1 < id_text.size()) {
    const std::string tail = id_text.substr(dash + 1);
    if (std::all_of(tail.begin(), tail.end(),
                    [](unsigned char c) { return std::isdigit(c); }))
      row.pair_index = std::stol(tail);
  }
  return row;
}

std::optional<double> accuracy_of(const std::vector<const EpisodeRow*>& rows) {
  long graded = 0;
  long correct = 0;
  for (const EpisodeRow* row : rows) {
    if (row->infra_failed) continue;
    ++graded;
    if (row->answer_correct) ++correct;
  }
  if (graded == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(graded);
}

json metrics_for_file(const std::string& path, double* clar_rate_out) {
  std::ifstream in(path);
  if (!in) throw ConfigError("episodes", "cannot open " + path);

  std::vector<EpisodeRow> rows;
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError("episodes",
                        path + ": line " + std::to_string(line_number) + ": " + e.what());
    }
    rows.push_back(parse_episode_row(doc, path, line_number));
  }

  std::vector<const EpisodeRow*> all;
  std::map<std::string, std::vector<const EpisodeRow*>> by_protocol;
  std::map<std::string, std::vector<double>> by_group;
  for (const EpisodeRow& row : rows) {
    all.push_back(&row);
    if (!row.protocol.empty()) by_protocol[row.protocol].push_back(&row);
    if (!row.group_id.empty()) by_group[row.group_id].push_back(row.reward);
  }

  // Clarification rate: over the clarification-enabled protocol when the log
  // is protocol-tagged, otherwise over every graded record.
  const std::vector<const EpisodeRow*>& clar_pool =
      by_protocol.count("clar") ? by_protocol["clar"] : all;
  long clar_graded = 0;
  long clar_count = 0;
  for (const EpisodeRow* row : clar_pool) {
    if (row->infra_failed) continue;
    ++clar_graded;
    if (row->clarified) ++clar_count;
  }
  const double clar_rate =
      clar_graded > 0 ? static_cast<double>(clar_count) / static_cast<double>(clar_graded) : 0.0;
  *clar_rate_out = clar_rate;

  json out{{"file", path},
           {"n_records", static_cast<long>(rows.size())},
           {"clar_rate", clar_rate},
           {"accuracy", optional_to_json(accuracy_of(all))}};

  const long infra =
      std::count_if(rows.begin(), rows.end(), [](const EpisodeRow& r) { return r.infra_failed; });
  if (infra > 0) out["n_infra_failed"] = infra;

  std::optional<double> acc_single;
  std::optional<double> acc_clar;
  if (by_protocol.count("single")) acc_single = accuracy_of(by_protocol["single"]);
  if (by_protocol.count("clar")) acc_clar = accuracy_of(by_protocol["clar"]);
  out["accuracy_single"] = optional_to_json(acc_single);
  out["accuracy_clar"] = optional_to_json(acc_clar);

  std::optional<double> gap_abs;
  std::optional<double> gap_rel;
  if (acc_single && acc_clar) {
    const Gap gap = clarification_gap(*acc_clar, *acc_single);
    gap_abs = gap.gap_abs;
    gap_rel = gap.gap_rel;
  }
  out["gap_abs"] = optional_to_json(gap_abs);
  out["gap_rel"] = optional_to_json(gap_rel);

  // Paired counterfactual: deny records carry the indices of the requested
  // episodes; match them back to the clarified protocol by index.
  std::optional<double> delta_deny;
  std::optional<double> delta_table;
  if (by_protocol.count("deny") && by_protocol.count("clar")) {
    const auto& denied = by_protocol["deny"];
    std::set<long> requested;
    for (const EpisodeRow* row : denied)
      if (row->pair_index >= 0) requested.insert(row->pair_index);
    std::vector<const EpisodeRow*> requested_clar;
    for (const EpisodeRow* row : by_protocol["clar"])
      if (row->pair_index >= 0 && requested.count(row->pair_index))
        requested_clar.push_back(row);
    const std::optional<double> acc_denied = accuracy_of(denied);
    const std::optional<double> acc_req_clar = accuracy_of(requested_clar);
    if (acc_denied && acc_req_clar) delta_deny = *acc_req_clar - *acc_denied;
    if (acc_denied && acc_single) delta_table = delta_deny_table(*acc_single, *acc_denied);
    out["n_requests"] = static_cast<long>(denied.size());
  }
  out["delta_deny"] = optional_to_json(delta_deny);
  out["delta_deny_table"] = optional_to_json(delta_table);

  if (!by_group.empty()) {
    std::vector<std::vector<double>> groups;
    groups.reserve(by_group.size());
    for (auto& [id, rewards] : by_group) groups.push_back(std::move(rewards));
    out["uniform_frac"] = uniform_reward_fraction(groups);
  } else {
    out["uniform_frac"] = nullptr;
  }
  return out;
}

int run_metrics(const std::vector<std::string>& episode_paths) {
  json out{{"files", json::array()}};
  std::vector<double> clar_rates;
  for (const std::string& path : episode_paths) {
    double clar_rate = 0.0;
    out["files"].push_back(metrics_for_file(path, &clar_rate));
    clar_rates.push_back(clar_rate);
  }
  if (episode_paths.size() == 2) {
    const std::optional<Reduction> red = reduction(clar_rates[0], clar_rates[1]);
    out["reduction"] =
        red ? json{{"percent", red->percent}, {"exact", red->exact}} : json(nullptr);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// -------------------------------------------------------------- collect ---

struct CollectOpts {
  std::string items_path;
  std::string captioner_path;
  std::string reasoner_path;
  std::string out_dir;
  bool allow_clarification = true;
  int threads = 4;
  std::string reward_mode = "tiered";
  double alpha = 0.7;
};

int run_collect(const CollectOpts& opts) {
  const std::vector<CollectItem> items = load_collect_items(opts.items_path);
  const EndpointConfig captioner =
      load_endpoint_config(opts.captioner_path, default_captioner_endpoint());
  const EndpointConfig reasoner =
      load_endpoint_config(opts.reasoner_path, default_reasoner_endpoint());
  RewardConfig reward;
  reward.mode = opts.reward_mode == "tiered" ? RewardMode::kTiered : RewardMode::kBinary;
  reward.alpha = opts.alpha;
  reward.validate();

  const std::unique_ptr<ChatTransport> transport = make_http_transport();
  std::vector<CollectedEpisode> episodes(items.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr worker_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
      try {
        episodes[i] = collect_episode(items[i], captioner, reasoner, reward,
                                      opts.allow_clarification, *transport);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!worker_error) worker_error = std::current_exception();
        return;
      }
    }
  };

  const int thread_count =
      std::max(1, std::min<int>(opts.threads, static_cast<int>(items.size())));
  if (thread_count <= 1 || items.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (worker_error) std::rethrow_exception(worker_error);

  std::filesystem::create_directories(opts.out_dir);
  {
    std::ofstream out(opts.out_dir + "/records.jsonl");
    if (!out) throw ConfigError("out", "cannot write to " + opts.out_dir);
    for (const CollectedEpisode& episode : episodes)
      out << collected_to_json(episode).dump() << "\n";
  }

  long infra = 0;
  long graded = 0;
  long correct = 0;
  long clarified = 0;
  for (const CollectedEpisode& episode : episodes) {
    if (episode.infra_failed) {
      ++infra;
      continue;
    }
    ++graded;
    if (episode.answer_correct) ++correct;
    if (episode.clarified) ++clarified;
  }
  json summary{{"n", static_cast<long>(items.size())},
               {"infra_failed", infra},
               {"accuracy", graded > 0 ? json(static_cast<double>(correct) / graded)
                                       : json(nullptr)},
               {"clar_rate", graded > 0 ? json(static_cast<double>(clarified) / graded)
                                        : json(nullptr)}};
  std::cout << summary.dump(2) << "\n";

  if (!items.empty() && infra == static_cast<long>(items.size())) {
    std::cerr << "all items failed on endpoint errors\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acrl: clarification-scaffolded policy training and analysis"};
  app.require_subcommand(1);

  TrainOpts train_opts;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a captioner policy on the synthetic environment");
  train_cmd->add_option("--config", train_opts.config_path, "Run configuration JSON")
      ->required();
  train_cmd->add_option("--out", train_opts.out_dir,
                        "Output directory for checkpoints, metrics, resolved config")
      ->required();
  train_cmd->add_option("--seed", train_opts.seed, "Override train.seed");
  train_cmd
      ->add_option("--reward", train_opts.reward_mode,
                   "Override reward.mode (tiered keeps partial credit alpha, default 0.7)")
      ->check(CLI::IsMember({"tiered", "binary"}));
  train_cmd->add_flag("--episode-log", train_opts.episode_log,
                      "Also write per-episode records (episodes.jsonl)");
  train_cmd->add_option("--threads", train_opts.threads, "Override train.threads");

  EvalOpts eval_opts;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint_path, "Checkpoint JSON")->required();
  eval_cmd->add_option("--config", eval_opts.config_path, "Run configuration JSON")->required();
  eval_cmd
      ->add_option("--protocol", eval_opts.protocol,
                   "single | clar | deny | all (all pairs the three on shared episodes)")
      ->check(CLI::IsMember({"single", "clar", "deny", "all"}));
  eval_cmd->add_option("--n", eval_opts.n, "Override eval.n (number of episodes)");
  eval_cmd->add_option("--seed", eval_opts.seed, "Override eval.seed");
  eval_cmd->add_option("--out", eval_opts.out_dir, "Directory for report.json + records.jsonl");
  eval_cmd->add_flag("--force", eval_opts.force,
                     "Load the checkpoint even if its config digest does not match");
  eval_cmd->add_flag("--csv", eval_opts.csv, "Also write report.csv (one row per protocol)");
  eval_cmd->add_option("--threads", eval_opts.threads, "Evaluation worker threads");

  VerifyOpts verify_opts;
  CLI::App* verify_cmd = app.add_subcommand(
      "verify-gradient", "Check Monte Carlo policy gradients against exact enumeration");
  verify_cmd->add_option("--config", verify_opts.config_path, "Run configuration JSON")
      ->required();
  verify_cmd->add_option("--n", verify_opts.n, "Sample count (minimum 1000, default 200000)");
  verify_cmd->add_flag("--negative-control", verify_opts.negative_control,
                       "Also demonstrate the reasoner-side-parameter bias and its correction");

  std::vector<std::string> episode_paths;
  CLI::App* metrics_cmd = app.add_subcommand(
      "metrics", "Recompute behavioral metrics from episode logs (two logs: adds reduction)");
  metrics_cmd->add_option("--episodes", episode_paths, "Episode JSONL file(s)")
      ->required()
      ->expected(-1);

  CollectOpts collect_opts;
  CLI::App* collect_cmd =
      app.add_subcommand("collect", "Collect free-text episodes from chat endpoints");
  collect_cmd->add_option("--items", collect_opts.items_path, "Items JSONL")->required();
  collect_cmd
      ->add_option("--captioner-endpoint", collect_opts.captioner_path,
                   "Captioner endpoint JSON (defaults: temperature 1.0, max_tokens 800)")
      ->required();
  collect_cmd
      ->add_option("--reasoner-endpoint", collect_opts.reasoner_path,
                   "Reasoner endpoint JSON (defaults: temperature 0.6, top_p 0.95)")
      ->required();
  collect_cmd->add_option("--out", collect_opts.out_dir, "Output directory for records.jsonl")
      ->required();
  collect_cmd->add_option("--allow-clarification", collect_opts.allow_clarification,
                          "Permit one clarification round (default true)");
  collect_cmd->add_option("--threads", collect_opts.threads,
                          "Concurrent items in flight (default 4)");
  collect_cmd
      ->add_option("--reward", collect_opts.reward_mode, "Reward mode for collected episodes")
      ->check(CLI::IsMember({"tiered", "binary"}));
  collect_cmd->add_option("--alpha", collect_opts.alpha,
                          "Partial credit for clarified success (default 0.7)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return run_train(train_opts);
    if (*eval_cmd) return run_eval(eval_opts);
    if (*verify_cmd) return run_verify_gradient(verify_opts);
    if (*metrics_cmd) return run_metrics(episode_paths);
    if (*collect_cmd) return run_collect(collect_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
