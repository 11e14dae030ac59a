#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "acrl/trainer.hpp"

using namespace acrl;
using nlohmann::json;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.env.attribute_count = 4;
  cfg.env.value_count = 3;
  cfg.env.question_type_count = 1;
  cfg.env.required_sets = {{0, 1}};
  cfg.env.ask_threshold = 1;
  cfg.env.p_ask = 1.0;
  cfg.env.p_guess = 0.0;
  cfg.env.question_dist = {1.0};
  cfg.reward.mode = RewardMode::kTiered;
  cfg.reward.alpha = 0.7;
  cfg.total_iterations = 5;
  cfg.batch_size = 8;
  cfg.group_size = 4;
  cfg.seed = 11;
  return cfg;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

long line_count(const std::filesystem::path& path) {
  std::ifstream in(path);
  long lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  return lines;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  TrainConfig cfg = small_config();
  cfg.group_size = 1;
  try {
    cfg.validate();
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "train.group_size");
  }

  cfg = small_config();
  cfg.clip_eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.kl_beta = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.inner_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.total_iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(small_config().validate());
}

TEST_CASE("uniform reward fraction fixtures") {
  CHECK(uniform_reward_fraction({{0, 0, 0}, {0, 0, 0}}) == 1.0);
  CHECK(uniform_reward_fraction({{1, 1}, {1, 0}}) == 0.5);
  CHECK(uniform_reward_fraction({{0.7, 0.7}, {1, 1}, {0, 0.7}, {0, 1}}) == 0.5);
  CHECK(uniform_reward_fraction({{0.3}}) == 1.0);  // single-element group is uniform
  CHECK_THROWS_AS(uniform_reward_fraction({}), ContractError);
  CHECK_THROWS_AS(uniform_reward_fraction({{1.0}, {}}), ContractError);
}

TEST_CASE("uniform fraction uses exact equality") {
  // 0.1 + 0.2 != 0.3 in binary; the group below is NOT uniform.
  CHECK(uniform_reward_fraction({{0.1 + 0.2, 0.3}}) == 0.0);
}

TEST_CASE("zero iterations returns the initial parameters and no metrics") {
  TrainConfig cfg = small_config();
  cfg.total_iterations = 0;
  const TrainResult result = train(cfg);
  CHECK(result.metrics.empty());
  CHECK(result.params.step == 0);
  CHECK(result.params.theta.rows() == 1);
  CHECK(result.params.theta.cols() == 4);
  CHECK(result.params.theta.max_abs() == 0.0);
}

TEST_CASE("training is bit-deterministic in the seed") {
  const TrainConfig cfg = small_config();
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  CHECK(a.params.theta == b.params.theta);
  CHECK(a.params.step == b.params.step);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].iter == b.metrics[i].iter);
    CHECK(a.metrics[i].mean_reward == b.metrics[i].mean_reward);
    CHECK(a.metrics[i].train_clar_rate == b.metrics[i].train_clar_rate);
    CHECK(a.metrics[i].kl == b.metrics[i].kl);
    CHECK(a.metrics[i].uniform_frac == b.metrics[i].uniform_frac);
  }

  TrainConfig other = cfg;
  other.seed = 12;
  CHECK(train(other).params.theta != a.params.theta);
}

TEST_CASE("thread count does not change the result") {
  TrainConfig cfg = small_config();
  cfg.batch_size = 6;
  const TrainResult serial = train(cfg);
  cfg.threads = 4;
  const TrainResult parallel = train(cfg);
  CHECK(serial.params.theta == parallel.params.theta);
  for (std::size_t i = 0; i < serial.metrics.size(); ++i)
    CHECK(serial.metrics[i].mean_reward == parallel.metrics[i].mean_reward);
}

TEST_CASE("reward improves over a short tiered run") {
  TrainConfig cfg = small_config();
  cfg.total_iterations = 60;
  cfg.batch_size = 16;
  cfg.group_size = 8;
  const TrainResult result = train(cfg);
  double early = 0.0;
  double late = 0.0;
  for (int i = 0; i < 10; ++i) {
    early += result.metrics[i].mean_reward / 10.0;
    late += result.metrics[result.metrics.size() - 10 + i].mean_reward / 10.0;
  }
  CHECK(late > early);
  CHECK(result.params.step == 60);
}

TEST_CASE("metrics serialize with every field") {
  IterationMetrics m;
  m.iter = 3;
  m.mean_reward = 0.5;
  m.train_clar_rate = 0.25;
  m.kl = 0.001;
  m.uniform_frac = 0.75;
  m.wall_ms = 12.5;
  const json doc = json::parse(metrics_to_jsonl_line(m));
  CHECK(doc["iter"] == 3);
  CHECK(doc["mean_reward"] == 0.5);
  CHECK(doc["train_clar_rate"] == 0.25);
  CHECK(doc["kl"] == 0.001);
  CHECK(doc["uniform_frac"] == 0.75);
  CHECK(doc["wall_ms"] == 12.5);
}

TEST_CASE("an output directory collects metrics, checkpoints, and episode logs") {
  const std::filesystem::path dir = fresh_dir("acrl_trainer_out");
  TrainConfig cfg = small_config();
  cfg.out_dir = dir.string();
  cfg.log_episodes = true;
  cfg.checkpoint_every = 2;
  const TrainResult result = train(cfg);

  CHECK(line_count(dir / "metrics.jsonl") == 5);
  CHECK(std::filesystem::exists(dir / "checkpoint_final.json"));
  CHECK(std::filesystem::exists(dir / "checkpoint_000002.json"));
  CHECK(std::filesystem::exists(dir / "checkpoint_000004.json"));
  // batch_size * group_size episodes per iteration
  CHECK(line_count(dir / "episodes.jsonl") == 5 * 8 * 4);

  std::ifstream episodes(dir / "episodes.jsonl");
  std::string first_line;
  std::getline(episodes, first_line);
  const json record = json::parse(first_line);
  CHECK(record["episode_id"] == "train-0-0-0");
  CHECK(record["group_id"] == "0-0");
  CHECK(record.contains("reward"));
  CHECK(record.contains("post_action_seed"));

  const PolicyParams loaded = load_checkpoint((dir / "checkpoint_final.json").string(), cfg);
  CHECK(loaded.theta == result.params.theta);
  CHECK(loaded.step == result.params.step);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoints round-trip and reject mismatched configurations") {
  const std::filesystem::path dir = fresh_dir("acrl_ckpt");
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "ckpt.json").string();

  const TrainConfig cfg = small_config();
  PolicyParams params;
  params.theta = Matrix(1, 4);
  params.theta(0, 0) = 1.5;
  params.theta(0, 3) = -0.25;
  params.step = 42;
  save_checkpoint(params, cfg, path);

  const PolicyParams loaded = load_checkpoint(path, cfg);
  CHECK(loaded.theta == params.theta);
  CHECK(loaded.step == 42);

  TrainConfig other = cfg;
  other.env.p_guess = 0.5;
  try {
    load_checkpoint(path, other);
    FAIL("expected a digest mismatch");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "checkpoint.config_digest");
  }
  const PolicyParams forced = load_checkpoint(path, other, true);
  CHECK(forced.theta == params.theta);

  // Trainer hyperparameters do not participate in the digest.
  TrainConfig retuned = cfg;
  retuned.learning_rate = 0.5;
  retuned.total_iterations = 999;
  CHECK_NOTHROW(load_checkpoint(path, retuned));
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated and malformed checkpoints are parse errors") {
  const std::filesystem::path dir = fresh_dir("acrl_ckpt_bad");
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "ckpt.json").string();
  const TrainConfig cfg = small_config();
  PolicyParams params;
  params.theta = Matrix(1, 4, 0.1);
  save_checkpoint(params, cfg, path);

  std::string text;
  {
    std::ifstream in(path);
    std::getline(in, text, '\0');
  }
  {
    std::ofstream out(path);
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(path, cfg), ConfigError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json", cfg), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a non-finite update aborts and leaves a loadable diagnostic checkpoint") {
  const std::filesystem::path dir = fresh_dir("acrl_abort");
  TrainConfig cfg = small_config();
  // The first inner step saturates the disclosure probabilities; at the
  // clamp the KL-penalty gradient magnitude is ~2.8e-11 per entry, so this
  // lr * kl_beta product overflows theta on the second inner step.
  cfg.learning_rate = 1e308;
  cfg.kl_beta = 1e11;
  cfg.total_iterations = 3;
  cfg.out_dir = dir.string();
  CHECK_THROWS_AS(train(cfg), std::runtime_error);
  REQUIRE(std::filesystem::exists(dir / "checkpoint_diagnostic.json"));
  const PolicyParams diag =
      load_checkpoint((dir / "checkpoint_diagnostic.json").string(), cfg, false);
  CHECK(diag.step == 0);  // aborted during iteration 0
  CHECK(diag.theta.all_finite());
  std::filesystem::remove_all(dir);
}
