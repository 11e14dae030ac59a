#include "acrl/llmbridge.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "acrl/rng.hpp"

namespace acrl {

namespace {

using nlohmann::json;

// Prompt templates. The braces of declared slots are substituted; every
// other brace (e.g. \boxed{answer}) is literal text.

constexpr const char* kInitialTemplate =
    R"(I need your help analyzing this image to prepare for answering the following question:

{question}

IMPORTANT: DO NOT answer the question directly. Instead, provide a comprehensive and detailed description of everything visible in the image that could be relevant for answering this question.

Focus on describing:
- All objects, people, text, and visual elements in the image
- Spatial relationships between different elements
- Any text content that is visible, transcribed exactly
- Colors, shapes, patterns, and visual attributes
- Relevant contextual details and background information

Your description should be detailed enough that someone could mentally reconstruct the image without seeing it, but DO NOT provide step-by-step instructions on how to recreate it.)";

constexpr const char* kFocusedTemplate =
    R"(Original Question: {question}

Previous Description: {previous_descriptions}

CONTEXT: The description above was provided for this image, but some details might be missing or unclear. We are asking this specific follow-up question to gather additional visual details.

Your specific task: {focus_request}

CRITICAL INSTRUCTIONS:
- You are a VISUAL DESCRIBER only - DO NOT attempt to answer the original question
- DO NOT solve the problem or provide calculations
- DO NOT give step-by-step solutions or reasoning
- ONLY describe what you can see in the image that relates to the specific request
- Focus solely on visual elements: objects, text, numbers, shapes, spatial relationships
- If asked about measurements, describe what you see but don't calculate or solve
- If asked about equations, transcribe what's visible but don't solve them
- Be thorough and precise in your description since this is to clarify specific missing details)";

constexpr const char* kAdaptiveDecisionTemplate =
    R"(You are an expert visual reasoning assistant. Your task is to analyze the given image description and decide if you can solve the problem directly or if you need one specific piece of additional visual information.

Image Description: {description}

Question: {question}

ANALYSIS INSTRUCTIONS:
1. CAREFUL EVALUATION: Analyze if the description contains all specific visual details needed to solve completely and accurately.
2. BE CONSERVATIVE: If missing ANY crucial visual detail, request MORE information rather than guess.
3. ONE CLARIFICATION ONLY: You can request specific additional visual information if needed.
4. DECISION CRITERIA:
   - If you have ALL visual details needed: Status = SOLVED
   - If missing crucial visual information: Status = NEED_MORE_INFO
5. AVOID ASSUMPTIONS: Don't guess numbers, assume "typical" values, or fill in missing details.

CRITICAL PRINCIPLES:
- BE SPECIFIC in requests: Ask for exact details you need
- SOLVE CONFIDENTLY when possible: If you have enough information, provide the complete solution
- REQUEST STRATEGICALLY: Make your one request count - ask for the most crucial missing details

OUTPUT FORMAT (all fields required):
Reasoning: [Your detailed analysis of what information you have and what might be missing]
Status: [SOLVED or NEED_MORE_INFO]
Answer: [Your complete final answer if Status is SOLVED - use \boxed{answer} format, otherwise N/A]
Request: [Your specific request for additional visual information if Status is NEED_MORE_INFO, otherwise N/A])";

constexpr const char* kFinalTemplate =
    R"(You are an expert mathematical reasoning assistant. Based on the complete image description below, please solve the mathematical problem step-by-step.

Complete Image Description: {description}

Question: {question}

INSTRUCTIONS:
1. Analyze the complete image description carefully
2. Work through the problem step-by-step with clear mathematical reasoning
3. Show all calculations and logical steps
4. Provide your final answer in the required format
5. Use \boxed{answer} notation. For multiple choice, use \boxed{letter} format

You MUST follow this format:
<think>
Your detailed reasoning and thought process here...
</think>
<answer> Final Answer: your final answer here </answer>)";

struct TemplateSpec {
  const char* text;
  std::vector<std::string> slots;
};

const TemplateSpec& template_spec(TemplateId id) {
  static const TemplateSpec initial{kInitialTemplate, {"question"}};
  static const TemplateSpec focused{kFocusedTemplate,
                                    {"question", "previous_descriptions", "focus_request"}};
  static const TemplateSpec decision{kAdaptiveDecisionTemplate, {"description", "question"}};
  static const TemplateSpec final_spec{kFinalTemplate, {"description", "question"}};
  switch (id) {
    case TemplateId::kInitial: return initial;
    case TemplateId::kFocused: return focused;
    case TemplateId::kAdaptiveDecision: return decision;
    case TemplateId::kFinal: return final_spec;
  }
  throw ContractError("render_prompt: unknown template id");
}

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_absent_marker(const std::string& value) {
  const std::string v = to_lower(trim(value));
  return v.empty() || v == "n/a";
}

/// Value of the last line whose trimmed form starts with key (lowercase,
/// including the colon).
std::optional<std::string> last_line_value(const std::string& text, const std::string& key) {
  std::optional<std::string> found;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::size_t stop = end == std::string::npos ? text.size() : end;
    const std::string line = trim(text.substr(start, stop - start));
    if (to_lower(line).rfind(key, 0) == 0) found = trim(line.substr(key.size()));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return found;
}

/// Text after the last occurrence of marker (lowercase), up to end of line,
/// with a trailing </answer> tag cut off. exclude_prefix guards against
/// matching "answer:" inside "final answer:".
std::optional<std::string> after_last_marker(const std::string& text, const std::string& marker,
                                             const std::string& exclude_prefix = "") {
  const std::string lowered = to_lower(text);
  std::size_t pos = lowered.rfind(marker);
  while (pos != std::string::npos) {
    const bool excluded = !exclude_prefix.empty() && pos >= exclude_prefix.size() &&
                          lowered.compare(pos - exclude_prefix.size(), exclude_prefix.size(),
                                          exclude_prefix) == 0;
    if (!excluded) break;
    if (pos == 0) return std::nullopt;
    pos = lowered.rfind(marker, pos - 1);
  }
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t begin = pos + marker.size();
  const std::size_t eol = text.find('\n', begin);
  std::string value = text.substr(begin, (eol == std::string::npos ? text.size() : eol) - begin);
  const std::size_t tag = to_lower(value).find("</answer>");
  if (tag != std::string::npos) value = value.substr(0, tag);
  return trim(value);
}

/// Content of the last balanced \boxed{...}, scanning earlier occurrences
/// when the last one never closes.
std::optional<std::string> last_boxed(const std::string& text) {
  static const std::string kMarker = "\\boxed{";
  std::size_t pos = text.rfind(kMarker);
  while (pos != std::string::npos) {
    int depth = 1;
    for (std::size_t i = pos + kMarker.size(); i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}' && --depth == 0)
        return text.substr(pos + kMarker.size(), i - pos - kMarker.size());
    }
    if (pos == 0) break;
    pos = text.rfind(kMarker, pos - 1);
  }
  return std::nullopt;
}

std::optional<std::string> non_absent(std::optional<std::string> value) {
  if (value && !is_absent_marker(*value)) return value;
  return std::nullopt;
}

json image_attachment(const std::string& image_path) {
  return json{{"type", "image_url"}, {"image_url", json{{"url", image_path}}}};
}

class HttpTransport : public ChatTransport {
 public:
  Response post(const std::string& base_url, const std::string& path, const std::string& body,
                const std::vector<std::pair<std::string, std::string>>& headers,
                int timeout_ms) override {
    // Split a possible path prefix (e.g. http://host:1234/v1) off the origin.
    std::string origin = base_url;
    std::string prefix;
    const std::size_t scheme = base_url.find("://");
    if (scheme != std::string::npos) {
      const std::size_t slash = base_url.find('/', scheme + 3);
      if (slash != std::string::npos) {
        origin = base_url.substr(0, slash);
        prefix = base_url.substr(slash);
      }
    }
    httplib::Client client(origin);
    const auto timeout = std::chrono::milliseconds(timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers request_headers;
    for (const auto& [key, value] : headers) request_headers.emplace(key, value);

    Response response;
    const httplib::Result result =
        client.Post(prefix + path, request_headers, body, "application/json");
    if (!result) {
      response.error = httplib::to_string(result.error());
      response.timed_out = result.error() == httplib::Error::ConnectionTimeout ||
                           result.error() == httplib::Error::Read;
      return response;
    }
    response.status = result->status;
    response.body = result->body;
    return response;
  }
};

}  // namespace

void EndpointConfig::validate() const {
  if (base_url.empty()) throw ConfigError("endpoint.base_url", "must be set");
  if (model_name.empty()) throw ConfigError("endpoint.model_name", "must be set");
  if (timeout_ms <= 0) throw ConfigError("endpoint.timeout_ms", "must be > 0");
  if (max_retries < 0) throw ConfigError("endpoint.max_retries", "must be >= 0");
  if (temperature < 0.0) throw ConfigError("endpoint.temperature", "must be >= 0");
  if (top_p <= 0.0 || top_p > 1.0) throw ConfigError("endpoint.top_p", "must lie in (0, 1]");
  if (max_tokens < 1) throw ConfigError("endpoint.max_tokens", "must be >= 1");
  if (backoff_base_ms < 0) throw ConfigError("endpoint.backoff_base_ms", "must be >= 0");
}

EndpointConfig default_captioner_endpoint() {
  EndpointConfig cfg;
  cfg.temperature = 1.0;
  cfg.max_tokens = 800;
  return cfg;
}

EndpointConfig default_reasoner_endpoint() {
  EndpointConfig cfg;
  cfg.temperature = 0.6;
  cfg.top_p = 0.95;
  cfg.max_tokens = 100000;
  return cfg;
}

EndpointConfig endpoint_from_json(const nlohmann::json& doc, const EndpointConfig& defaults,
                                  const std::string& field_prefix) {
  if (!doc.is_object()) throw ConfigError(field_prefix, "must be an object");
  EndpointConfig cfg = defaults;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "base_url") cfg.base_url = value.get<std::string>();
      else if (key == "model_name") cfg.model_name = value.get<std::string>();
      else if (key == "api_key_env_var_name") cfg.api_key_env_var_name = value.get<std::string>();
      else if (key == "timeout_ms") cfg.timeout_ms = value.get<int>();
      else if (key == "max_retries") cfg.max_retries = value.get<int>();
      else if (key == "temperature") cfg.temperature = value.get<double>();
      else if (key == "top_p") cfg.top_p = value.get<double>();
      else if (key == "max_tokens") cfg.max_tokens = value.get<int>();
      else if (key == "backoff_base_ms") cfg.backoff_base_ms = value.get<int>();
      else throw ConfigError(field_prefix + "." + key, "unknown key");
    } catch (const json::exception&) {
      throw ConfigError(field_prefix + "." + key, "wrong type");
    }
  }
  cfg.validate();
  return cfg;
}

EndpointConfig load_endpoint_config(const std::string& path, const EndpointConfig& defaults) {
  std::ifstream in(path);
  if (!in) throw ConfigError("endpoint", "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("endpoint", std::string("parse error in ") + path + ": " + e.what());
  }
  return endpoint_from_json(doc, defaults, "endpoint");
}

std::string render_prompt(TemplateId id, const SlotMap& slots) {
  const TemplateSpec& spec = template_spec(id);
  for (const auto& name : spec.slots)
    if (!slots.count(name)) throw TemplateError(name, "missing template slot");
  for (const auto& [name, value] : slots)
    if (std::find(spec.slots.begin(), spec.slots.end(), name) == spec.slots.end())
      throw TemplateError(name, "unknown template slot");

  const std::string text = spec.text;
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    bool substituted = false;
    if (text[i] == '{') {
      for (const auto& name : spec.slots) {
        const std::size_t close = i + 1 + name.size();
        if (close < text.size() && text[close] == '}' && text.compare(i + 1, name.size(), name) == 0) {
          out += slots.at(name);
          i = close + 1;
          substituted = true;
          break;
        }
      }
    }
    if (!substituted) out += text[i++];
  }
  return out;
}

Transcript parse_decision(const std::string& raw_text) {
  Transcript t;
  t.raw_text = raw_text;

  std::optional<std::string> answer = last_boxed(raw_text);
  if (!answer) answer = after_last_marker(raw_text, "answer:", "final ");
  t.parsed_answer = non_absent(std::move(answer));
  t.parsed_request = non_absent(after_last_marker(raw_text, "request:"));

  const std::optional<std::string> status_value = last_line_value(raw_text, "status:");
  if (!status_value) return t;
  std::string status = trim(*status_value);
  if (status.size() >= 2 && status.front() == '[' && status.back() == ']')
    status = trim(status.substr(1, status.size() - 2));
  status = to_lower(status);

  if (status == "solved" && t.parsed_answer) {
    t.parsed_status = ParseStatus::kSolved;
  } else if (status == "need_more_info" && t.parsed_request) {
    t.parsed_status = ParseStatus::kNeedMoreInfo;
  }
  return t;
}

std::optional<std::string> parse_final_answer(const std::string& raw_text) {
  if (auto boxed = last_boxed(raw_text)) return non_absent(std::move(boxed));
  if (auto final_answer = non_absent(after_last_marker(raw_text, "final answer:")))
    return final_answer;
  return non_absent(after_last_marker(raw_text, "answer:", "final "));
}

std::string normalize_answer(const std::string& text) {
  static const std::string kBoxed = "\\boxed{";
  std::string s = trim(text);
  while (s.size() > kBoxed.size() && s.compare(0, kBoxed.size(), kBoxed) == 0 &&
         s.back() == '}') {
    int depth = 1;
    std::size_t close = std::string::npos;
    for (std::size_t i = kBoxed.size(); i < s.size(); ++i) {
      if (s[i] == '{') ++depth;
      if (s[i] == '}' && --depth == 0) {
        close = i;
        break;
      }
    }
    if (close != s.size() - 1) break;  // the wrapper does not span the whole string
    s = trim(s.substr(kBoxed.size(), close - kBoxed.size()));
  }
  while (!s.empty() && s.back() == '.') s.pop_back();
  return to_lower(trim(s));
}

std::unique_ptr<ChatTransport> make_http_transport() {
  return std::make_unique<HttpTransport>();
}

std::string chat(const EndpointConfig& endpoint, const std::vector<ChatMessage>& messages,
                 const std::vector<nlohmann::json>& attachments, ChatTransport& transport) {
  endpoint.validate();
  if (messages.empty()) throw ContractError("chat: need at least one message");

  json rendered = json::array();
  for (const ChatMessage& message : messages)
    rendered.push_back(json{{"role", message.role}, {"content", message.content}});
  if (!attachments.empty()) {
    std::size_t user_index = messages.size();
    for (std::size_t i = messages.size(); i-- > 0;)
      if (messages[i].role == "user") {
        user_index = i;
        break;
      }
    if (user_index == messages.size())
      throw ContractError("chat: attachments need a user message");
    json content = json::array();
    content.push_back(json{{"type", "text"}, {"text", messages[user_index].content}});
    for (const json& attachment : attachments) content.push_back(attachment);
    rendered[user_index]["content"] = std::move(content);
  }

  const json body{{"model", endpoint.model_name},
                  {"messages", rendered},
                  {"temperature", endpoint.temperature},
                  {"top_p", endpoint.top_p},
                  {"max_tokens", endpoint.max_tokens}};

  std::vector<std::pair<std::string, std::string>> headers;
  if (!endpoint.api_key_env_var_name.empty()) {
    const char* key = std::getenv(endpoint.api_key_env_var_name.c_str());
    if (key && *key) headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }

  ChatTransport::Response last;
  for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
    if (attempt > 0 && endpoint.backoff_base_ms > 0) {
      long delay = static_cast<long>(endpoint.backoff_base_ms) << (attempt - 1);
      Rng jitter(derive_key(0xbac0ffULL, static_cast<std::uint64_t>(attempt)));
      delay += jitter.uniform_int(static_cast<int>(std::max(delay / 4, 1L)));
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    last = transport.post(endpoint.base_url, "/chat/completions", body.dump(), headers,
                          endpoint.timeout_ms);
    if (last.status >= 200 && last.status < 300) {
      try {
        const json reply = json::parse(last.body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw EndpointError(std::string("malformed completion response: ") + e.what(),
                            last.status);
      }
    }
    if (last.status >= 400 && last.status < 500)
      throw EndpointError("endpoint rejected request with status " + std::to_string(last.status),
                          last.status);
    // 5xx, timeouts, and connection failures are retryable.
  }
  std::string what = "retries exhausted";
  if (last.status != 0) what += " (last status " + std::to_string(last.status) + ")";
  if (!last.error.empty()) what += " (" + last.error + ")";
  throw EndpointError(what, last.status, last.timed_out);
}

std::vector<CollectItem> load_collect_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("items", "cannot open " + path);
  std::vector<CollectItem> items;
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError("items",
                        "line " + std::to_string(line_number) + ": parse error: " + e.what());
    }
    CollectItem item;
    try {
      item.id = doc.at("id").get<std::string>();
      item.question = doc.at("question").get<std::string>();
      item.gold_answer = doc.at("gold_answer").get<std::string>();
      if (doc.contains("image_path") && !doc["image_path"].is_null())
        item.image_path = doc["image_path"].get<std::string>();
    } catch (const json::exception& e) {
      throw ConfigError("items",
                        "line " + std::to_string(line_number) + ": bad record: " + e.what());
    }
    items.push_back(std::move(item));
  }
  return items;
}

CollectedEpisode collect_episode(const CollectItem& item, const EndpointConfig& captioner,
                                 const EndpointConfig& reasoner, const RewardConfig& reward_cfg,
                                 bool allow_clarification, ChatTransport& transport) {
  reward_cfg.validate();
  CollectedEpisode out;
  out.item_id = item.id;

  std::vector<json> attachments;
  if (!item.image_path.empty()) attachments.push_back(image_attachment(item.image_path));

  try {
    out.caption_text = chat(
        captioner,
        {{"user", render_prompt(TemplateId::kInitial, {{"question", item.question}})}},
        attachments, transport);
    std::string description = out.caption_text;
    std::optional<std::string> answer;

    if (allow_clarification) {
      const Transcript decision = parse_decision(
          chat(reasoner,
               {{"user", render_prompt(TemplateId::kAdaptiveDecision,
                                       {{"description", description},
                                        {"question", item.question}})}},
               {}, transport));
      if (decision.parsed_status == ParseStatus::kSolved) {
        answer = decision.parsed_answer;
      } else if (decision.parsed_status == ParseStatus::kNeedMoreInfo) {
        out.clar_request_text = *decision.parsed_request;
        out.clar_response_text = chat(
            captioner,
            {{"user", render_prompt(TemplateId::kFocused,
                                    {{"question", item.question},
                                     {"previous_descriptions", description},
                                     {"focus_request", out.clar_request_text}})}},
            attachments, transport);
        out.clarified = true;
        description += "\n\n" + out.clar_response_text;
        answer = parse_final_answer(
            chat(reasoner,
                 {{"user", render_prompt(TemplateId::kFinal, {{"description", description},
                                                              {"question", item.question}})}},
                 {}, transport));
      } else {
        out.parse_failed = true;
      }
    } else {
      answer = parse_final_answer(
          chat(reasoner,
               {{"user", render_prompt(TemplateId::kFinal, {{"description", description},
                                                            {"question", item.question}})}},
               {}, transport));
    }

    if (!out.parse_failed) {
      if (answer)
        out.answer_correct = normalize_answer(*answer) == normalize_answer(item.gold_answer);
      else
        out.parse_failed = true;
    }
    out.reward = assign_reward(out.answer_correct, out.clarified, reward_cfg);
  } catch (const EndpointError&) {
    out.infra_failed = true;
    out.answer_correct = false;
    out.reward = 0.0;
  }
  return out;
}

nlohmann::json collected_to_json(const CollectedEpisode& episode) {
  return json{{"episode_id", episode.item_id},
              {"scene", json::array()},
              {"qtype", -1},
              {"required", json::array()},
              {"disclosed", json::array()},
              {"clarified", episode.clarified},
              {"clar_request", nullptr},
              {"clar_response", nullptr},
              {"answer_correct", episode.answer_correct},
              {"reward", episode.reward},
              {"caption_logprob", nullptr},
              {"post_action_seed", nullptr},
              {"caption_text", episode.caption_text},
              {"clar_request_text", episode.clar_request_text},
              {"clar_response_text", episode.clar_response_text},
              {"parse_failed", episode.parse_failed},
              {"infra_failed", episode.infra_failed}};
}

}  // namespace acrl
