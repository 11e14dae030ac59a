#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acrl/core.hpp"
#include "acrl/matrix.hpp"
#include "acrl/synthenv.hpp"

namespace acrl {

/// One evaluation pass over n episodes.
struct EvalRun {
  double accuracy = 0.0;
  double clar_rate = 0.0;  // fraction of episodes with an honored clarification
  long clarifier_calls = 0;
  long n = 0;
  std::vector<Episode> episodes;
  std::vector<std::uint8_t> requested;  // reasoner asked, whether or not honored
};

/// Deployment protocol: no clarification permitted. Reasoner requests are
/// resolved as under-informed guesses; the clarifier is never invoked
/// (clarifier_calls always reads zero).
EvalRun eval_single_pass(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                         long n, std::uint64_t seed, int threads = 1);

/// Instrumented protocol: one clarification honored. Episode streams are
/// keyed by (seed, index) exactly as in eval_single_pass, so runs with the
/// same seed are paired sample-by-sample across protocols.
EvalRun eval_clar_enabled(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                          long n, std::uint64_t seed, int threads = 1);

struct Gap {
  double gap_abs = 0.0;
  double gap_rel = 0.0;
};

/// gap_abs = accuracy_clar - accuracy_single; gap_rel divides by the headroom
/// (1 - accuracy_single), and is defined as 0 at accuracy_single = 1.
Gap clarification_gap(double accuracy_clar, double accuracy_single);

/// Counterfactual on the episodes that requested clarification: replay them
/// from their stored captions and post-action seeds with the request denied.
/// Request-conditioned fields are absent when nothing was requested.
struct DenyAnalysis {
  long n_requests = 0;
  std::optional<double> acc_on_requested_clar;
  std::optional<double> acc_on_requested_denied;
  std::optional<double> delta_deny;  // clar minus denied, on the requested subset
  std::vector<Episode> denied_episodes;
  std::vector<long> requested_indices;  // positions in the source run
};

DenyAnalysis deny_analysis(const EvalRun& clar_run, const EnvConfig& env,
                           const RewardConfig& reward);

/// The table-arithmetic variant: overall single-pass accuracy minus the
/// denied accuracy on the requested subset.
double delta_deny_table(double accuracy_single, double acc_on_requested_denied);

struct Reduction {
  int percent = 0;
  double exact = 0.0;  // 1 - after/before
};

/// Relative drop between two rates, as a rounded percent plus the exact
/// value. Undefined (absent) when the before-rate is zero.
std::optional<Reduction> reduction(double rate_before, double rate_after);

/// All behavioral metrics from one paired run of the three protocols.
struct MetricsReport {
  double accuracy_single = 0.0;
  double accuracy_clar = 0.0;
  double clar_rate = 0.0;
  double gap_abs = 0.0;
  double gap_rel = 0.0;
  long n_requests = 0;
  std::optional<double> acc_on_requested_clar;
  std::optional<double> acc_on_requested_denied;
  std::optional<double> delta_deny;
  std::optional<double> delta_deny_table;
  long n_eval = 0;
};

MetricsReport full_report(const Matrix& theta, const EnvConfig& env, const RewardConfig& reward,
                          long n, std::uint64_t seed, int threads = 1);

nlohmann::json report_to_json(const MetricsReport& report);

/// Episode records in the shared schema plus a `protocol` field. Episode ids
/// are "<protocol>-<index>", with indices referring to positions in the
/// source run so paired episodes share their index across protocols.
void write_eval_records(std::ostream& out, const std::vector<Episode>& episodes,
                        const std::vector<long>& indices, const std::string& protocol);

}  // namespace acrl
