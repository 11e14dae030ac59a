#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acrl/core.hpp"

namespace acrl {

/// Thrown by render_prompt when a template slot is missing or unknown.
class TemplateError : public std::runtime_error {
 public:
  TemplateError(std::string slot, const std::string& what)
      : std::runtime_error(slot + ": " + what), slot_(std::move(slot)) {}
  const std::string& slot() const { return slot_; }

 private:
  std::string slot_;
};

/// Thrown when an endpoint cannot be reached or refuses the request.
class EndpointError : public std::runtime_error {
 public:
  EndpointError(const std::string& what, int status = 0, bool timed_out = false)
      : std::runtime_error(what), status_(status), timed_out_(timed_out) {}
  int status() const { return status_; }
  bool timed_out() const { return timed_out_; }

 private:
  int status_;
  bool timed_out_;
};

struct EndpointConfig {
  std::string base_url;               // scheme://host[:port]
  std::string model_name;
  std::string api_key_env_var_name;   // empty: send no Authorization header
  int timeout_ms = 30000;
  int max_retries = 3;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 800;
  int backoff_base_ms = 500;          // doubles per retry, plus jitter

  void validate() const;
};

/// Generation defaults for the two roles.
EndpointConfig default_captioner_endpoint();
EndpointConfig default_reasoner_endpoint();

EndpointConfig endpoint_from_json(const nlohmann::json& doc, const EndpointConfig& defaults,
                                  const std::string& field_prefix);
EndpointConfig load_endpoint_config(const std::string& path, const EndpointConfig& defaults);

enum class TemplateId { kInitial, kFocused, kAdaptiveDecision, kFinal };

using SlotMap = std::map<std::string, std::string>;

/// Verbatim template text with declared-slot substitution only; braces that
/// are not a declared slot (e.g. \boxed{answer}) stay literal. Missing or
/// unknown slot names raise TemplateError naming the slot.
std::string render_prompt(TemplateId id, const SlotMap& slots);

enum class ParseStatus { kSolved, kNeedMoreInfo, kMalformed };

struct Transcript {
  std::string raw_text;
  ParseStatus parsed_status = ParseStatus::kMalformed;
  std::optional<std::string> parsed_answer;
  std::optional<std::string> parsed_request;
};

/// Parses an adaptive-decision reply: the last "Status:" line (case
/// insensitive) decides SOLVED / NEED_MORE_INFO; the answer comes from the
/// final balanced \boxed{...} if present, else the last "Answer:" line; the
/// request from the last "Request:" line. "N/A" markers count as absent.
/// SOLVED without an answer or NEED_MORE_INFO without a request is MALFORMED.
Transcript parse_decision(const std::string& raw_text);

/// Extracts a final answer: the last balanced \boxed{...}, else the text
/// after the last "Final Answer:", else after the last "Answer:".
std::optional<std::string> parse_final_answer(const std::string& raw_text);

/// Exact-match normalization: trim, unwrap a whole-string \boxed{...},
/// strip trailing periods, casefold ASCII.
std::string normalize_answer(const std::string& text);

struct ChatMessage {
  std::string role;
  std::string content;
};

/// HTTP layer behind chat(), swappable for tests.
class ChatTransport {
 public:
  struct Response {
    int status = 0;  // 0 means no HTTP response (connection failure)
    std::string body;
    bool timed_out = false;
    std::string error;
  };

  virtual ~ChatTransport() = default;
  virtual Response post(const std::string& base_url, const std::string& path,
                        const std::string& body,
                        const std::vector<std::pair<std::string, std::string>>& headers,
                        int timeout_ms) = 0;
};

std::unique_ptr<ChatTransport> make_http_transport();

/// One chat-completions round trip. Attachments are opaque content blocks
/// appended to the last user message (multimodal payloads). Retries with
/// exponential backoff on timeouts, connection failures, and 5xx; 4xx fails
/// immediately.
std::string chat(const EndpointConfig& endpoint, const std::vector<ChatMessage>& messages,
                 const std::vector<nlohmann::json>& attachments, ChatTransport& transport);

struct CollectItem {
  std::string id;
  std::string image_path;  // optional; passed through as an attachment
  std::string question;
  std::string gold_answer;
};

std::vector<CollectItem> load_collect_items(const std::string& path);

/// One free-text episode. Infra failures are excluded from accuracy
/// denominators; parse failures count as incorrect.
struct CollectedEpisode {
  std::string item_id;
  std::string caption_text;
  std::string clar_request_text;
  std::string clar_response_text;
  bool clarified = false;
  bool answer_correct = false;
  bool parse_failed = false;
  bool infra_failed = false;
  double reward = 0.0;
};

/// Runs the captioner/reasoner protocol for one item: initial caption, then
/// either the adaptive decision (with at most one clarification) or, when
/// clarification is disallowed, the final-answer prompt directly.
CollectedEpisode collect_episode(const CollectItem& item, const EndpointConfig& captioner,
                                 const EndpointConfig& reasoner, const RewardConfig& reward_cfg,
                                 bool allow_clarification, ChatTransport& transport);

/// Shared episode-record schema with neutral values for the synthetic-only
/// fields, extended with the free-text fields.
nlohmann::json collected_to_json(const CollectedEpisode& episode);

}  // namespace acrl
