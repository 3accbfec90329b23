#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "merlean/errors.hpp"
#include "merlean/util.hpp"

namespace merlean {

using json = nlohmann::json;

enum class Role { system, user, assistant };

inline std::string_view role_name(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

inline Role role_from_name(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "assistant") return Role::assistant;
  return Role::user;
}

struct ChatMessage {
  Role role = Role::user;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model_hint;
  double temperature = 0.0;
  int max_output_tokens = 8192;
  std::string request_tag;  // e.g. "formalize:Thm_2:attempt:7"
};

enum class FinishReason { stop, length, error };

inline std::string_view finish_reason_name(FinishReason f) {
  switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

inline FinishReason finish_reason_from_name(std::string_view s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  return FinishReason::error;
}

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t latency_ms = 0;
};

struct TranscriptEntry {
  std::string hash;
  std::string tag;
  ChatRequest request;
  ChatResponse response;
  std::string wall_time;  // RFC 3339
};

using Transcript = std::vector<TranscriptEntry>;

enum class BackendMode { live, scripted, record, replay };

inline std::string_view backend_mode_name(BackendMode m) {
  switch (m) {
    case BackendMode::live: return "live";
    case BackendMode::scripted: return "scripted";
    case BackendMode::record: return "record";
    case BackendMode::replay: return "replay";
  }
  return "scripted";
}

struct RetryPolicy {
  int max_retries = 5;
  std::int64_t base_backoff_ms = 500;
  std::int64_t max_backoff_ms = 30000;
};

struct BackendConfig {
  BackendMode mode = BackendMode::scripted;
  std::string endpoint;  // live/record: full chat-completions URL
  std::string credential_env = "MERLEAN_API_KEY";
  std::string model = "gpt-4o";
  RetryPolicy retry;
  std::int64_t timeout_ms = 120000;
  std::filesystem::path transcript_path;  // written in record/scripted, read in replay
  bool strict_hash = false;               // exact-byte request hashing
  std::vector<std::string> scripted_replies;
};

// Un-jittered backoff for the k-th retry (1-based): base * 2^(k-1), capped.
inline std::int64_t backoff_base_ms(const RetryPolicy& p, int retry_index) {
  std::int64_t d = p.base_backoff_ms;
  for (int i = 1; i < retry_index && d < p.max_backoff_ms; ++i) d *= 2;
  return std::min(d, p.max_backoff_ms);
}

// Jitter bounded by +/-25% of the base step.
template <typename Rng>
std::int64_t backoff_jittered_ms(const RetryPolicy& p, int retry_index, Rng& rng) {
  std::int64_t base = backoff_base_ms(p, retry_index);
  std::uniform_real_distribution<double> u(-0.25, 0.25);
  auto jittered = static_cast<std::int64_t>(static_cast<double>(base) * (1.0 + u(rng)));
  return std::max<std::int64_t>(jittered, 0);
}

inline json request_to_json(const ChatRequest& r) {
  json msgs = json::array();
  for (const auto& m : r.messages)
    msgs.push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
  return json{{"messages", msgs},
              {"model_hint", r.model_hint},
              {"temperature", r.temperature},
              {"max_output_tokens", r.max_output_tokens}};
}

inline ChatRequest request_from_json(const json& j) {
  ChatRequest r;
  for (const auto& m : j.at("messages"))
    r.messages.push_back(
        {role_from_name(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  r.model_hint = j.value("model_hint", "");
  r.temperature = j.value("temperature", 0.0);
  r.max_output_tokens = j.value("max_output_tokens", 8192);
  return r;
}

inline json response_to_json(const ChatResponse& r) {
  return json{{"content", r.content},
              {"finish_reason", std::string(finish_reason_name(r.finish_reason))},
              {"usage", {r.input_tokens, r.output_tokens}},
              {"latency_ms", r.latency_ms}};
}

inline ChatResponse response_from_json(const json& j) {
  ChatResponse r;
  r.content = j.at("content").get<std::string>();
  r.finish_reason = finish_reason_from_name(j.at("finish_reason").get<std::string>());
  if (j.contains("usage") && j["usage"].is_array() && j["usage"].size() == 2) {
    r.input_tokens = j["usage"][0].get<std::int64_t>();
    r.output_tokens = j["usage"][1].get<std::int64_t>();
  }
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  return r;
}

// Whitespace-normalized by default so replay tolerates cosmetic prompt
// edits; strict hashing is byte-exact. The tag is a label, not identity.
inline std::string request_hash(const ChatRequest& r, bool strict = false) {
  json msgs = json::array();
  for (const auto& m : r.messages) {
    msgs.push_back({{"role", std::string(role_name(m.role))},
                    {"content", strict ? m.content : normalize_ws(m.content)}});
  }
  json canon{{"messages", msgs},
             {"model_hint", r.model_hint},
             {"temperature", r.temperature},
             {"max_output_tokens", r.max_output_tokens}};
  return sha256_hex(canon.dump());
}

inline void save_transcript_file(const std::filesystem::path& path,
                                 const Transcript& transcript) {
  std::string out;
  for (const auto& e : transcript) {
    json line{{"hash", e.hash},
              {"tag", e.tag},
              {"request", request_to_json(e.request)},
              {"response", response_to_json(e.response)},
              {"t", e.wall_time}};
    out += line.dump() + "\n";
  }
  write_file_atomic(path, out);
}

inline Transcript load_transcript_file(const std::filesystem::path& path) {
  Transcript out;
  std::string bytes = read_file(path);
  std::size_t lineno = 0;
  for (const auto& line : split_lines(bytes)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("transcript line " + std::to_string(lineno) + ": " + e.what());
    }
    TranscriptEntry entry;
    entry.hash = j.at("hash").get<std::string>();
    entry.tag = j.value("tag", "");
    entry.request = request_from_json(j.at("request"));
    entry.request.request_tag = entry.tag;
    entry.response = response_from_json(j.at("response"));
    entry.wall_time = j.value("t", "");
    out.push_back(std::move(entry));
  }
  return out;
}

// Single abstraction over chat backends: live HTTP, scripted canned
// replies, record (live + transcript), and replay (transcript lookup by
// request hash, zero network). Safe for concurrent complete() calls.
class Gateway {
 public:
  explicit Gateway(BackendConfig cfg) : cfg_(std::move(cfg)), rng_(std::random_device{}()) {
    if (cfg_.mode == BackendMode::replay) {
      if (cfg_.transcript_path.empty())
        throw GatewayError("replay mode requires a transcript path");
      for (auto& e : load_transcript_file(cfg_.transcript_path)) {
        replay_[e.hash].push_back({e.response, e.wall_time});
      }
    }
    for (auto& r : cfg_.scripted_replies) scripted_.push_back(r);
    if ((cfg_.mode == BackendMode::live || cfg_.mode == BackendMode::record) &&
        cfg_.endpoint.empty())
      throw GatewayError("live backend requires an endpoint URL");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if ((cfg_.mode == BackendMode::live || cfg_.mode == BackendMode::record) &&
        cfg_.endpoint.rfind("https://", 0) == 0)
      throw GatewayError("https endpoint requires a TLS-enabled build");
#endif
  }

  const BackendConfig& config() const { return cfg_; }

  // Wall times in replay and scripted modes are derived from the
  // transcript, so artifacts stay byte-identical across runs.
  bool deterministic_timing() const {
    return cfg_.mode == BackendMode::replay || cfg_.mode == BackendMode::scripted;
  }

  void push_scripted(std::string reply) {
    std::lock_guard<std::mutex> lock(mutex_);
    scripted_.push_back(std::move(reply));
  }

  std::size_t call_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcript_.size();
  }

  std::int64_t total_latency_ms() const { return total_latency_.load(); }

  Transcript snapshot_transcript() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcript_;
  }

  ChatResponse complete(const ChatRequest& request) {
    if (request.messages.empty())
      throw GatewayError("chat request has no messages (tag '" +
                         request.request_tag + "')");
    if (request.messages.front().role == Role::assistant)
      throw GatewayError("chat request must open with a system or user message");
    switch (cfg_.mode) {
      case BackendMode::scripted:
        return complete_scripted(request);
      case BackendMode::replay:
        return complete_replay(request);
      case BackendMode::live:
      case BackendMode::record:
        return complete_live(request);
    }
    throw GatewayError("unreachable backend mode");
  }

 private:
  struct ReplaySlot {
    ChatResponse response;
    std::string wall_time;
  };

  ChatResponse complete_scripted(const ChatRequest& request) {
    std::string content;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (scripted_.empty())
        throw ScriptedUnderflowError("scripted response queue empty at tag '" +
                                     request.request_tag + "'");
      content = std::move(scripted_.front());
      scripted_.pop_front();
    }
    ChatResponse resp;
    resp.content = std::move(content);
    resp.finish_reason = FinishReason::stop;
    std::int64_t in_chars = 0;
    for (const auto& m : request.messages) in_chars += static_cast<std::int64_t>(m.content.size());
    resp.input_tokens = in_chars / 4;
    resp.output_tokens = static_cast<std::int64_t>(resp.content.size()) / 4;
    resp.latency_ms = 0;
    record_entry(request, resp, now_rfc3339());
    return resp;
  }

  ChatResponse complete_replay(const ChatRequest& request) {
    std::string hash = request_hash(request, cfg_.strict_hash);
    ChatResponse resp;
    std::string wall;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = replay_.find(hash);
      if (it == replay_.end() || it->second.empty())
        throw ReplayMissError("replay miss for tag '" + request.request_tag +
                              "' (hash " + hash + ")");
      resp = it->second.front().response;
      wall = it->second.front().wall_time;
      it->second.pop_front();
      transcript_.push_back({hash, request.request_tag, request, resp, wall});
    }
    total_latency_ += resp.latency_ms;
    return resp;
  }

  ChatResponse complete_live(const ChatRequest& request) {
    std::string scheme_host, path;
    split_endpoint(cfg_.endpoint, scheme_host, path);
    const char* key_raw =
        cfg_.credential_env.empty() ? nullptr : std::getenv(cfg_.credential_env.c_str());
    std::string key = key_raw ? key_raw : "";

    json body;
    body["model"] = request.model_hint.empty() ? cfg_.model : request.model_hint;
    json msgs = json::array();
    for (const auto& m : request.messages)
      msgs.push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
    body["messages"] = msgs;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    std::string payload = body.dump();

    std::string last_failure = "no attempt made";
    int attempts = cfg_.retry.max_retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      if (attempt > 1) {
        std::int64_t delay;
        {
          std::lock_guard<std::mutex> lock(mutex_);
          delay = backoff_jittered_ms(cfg_.retry, attempt - 1, rng_);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      std::int64_t t0 = steady_now_ms();
      httplib::Client client(scheme_host);
      client.set_connection_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
      client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
      httplib::Headers headers;
      if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
      auto res = client.Post(path, headers, payload, "application/json");
      std::int64_t latency = steady_now_ms() - t0;
      if (!res) {
        last_failure = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_failure = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw GatewayError("backend rejected request: HTTP " + std::to_string(res->status) +
                           " at tag '" + request.request_tag + "'");
      ChatResponse resp = parse_completion_body(res->body);
      resp.latency_ms = latency;
      record_entry(request, resp, now_rfc3339());
      return resp;
    }
    throw GatewayError("backend retries exhausted at tag '" + request.request_tag +
                       "': " + last_failure);
  }

  static void split_endpoint(const std::string& endpoint, std::string& scheme_host,
                             std::string& path) {
    std::size_t scheme = endpoint.find("://");
    std::size_t slash = scheme == std::string::npos
                            ? endpoint.find('/')
                            : endpoint.find('/', scheme + 3);
    if (slash == std::string::npos) {
      scheme_host = endpoint;
      path = "/v1/chat/completions";
    } else {
      scheme_host = endpoint.substr(0, slash);
      path = endpoint.substr(slash);
    }
  }

  static ChatResponse parse_completion_body(const std::string& body) {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      throw GatewayError(std::string("malformed completion body: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
      throw GatewayError("completion body has no choices");
    const auto& choice = j["choices"][0];
    ChatResponse resp;
    resp.content = choice.contains("message")
                       ? choice["message"].value("content", "")
                       : choice.value("text", "");
    std::string finish = choice.value("finish_reason", "stop");
    resp.finish_reason = finish_reason_from_name(finish);
    if (resp.finish_reason == FinishReason::stop && resp.content.empty())
      resp.finish_reason = FinishReason::error;
    if (j.contains("usage")) {
      resp.input_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
      resp.output_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return resp;
  }

  void record_entry(const ChatRequest& request, const ChatResponse& resp,
                    const std::string& wall_time) {
    total_latency_ += resp.latency_ms;
    std::string hash = request_hash(request, cfg_.strict_hash);
    TranscriptEntry entry{hash, request.request_tag, request, resp, wall_time};
    std::lock_guard<std::mutex> lock(mutex_);
    if (!cfg_.transcript_path.empty() && cfg_.mode != BackendMode::replay) {
      if (!record_stream_.is_open()) {
        auto dir = cfg_.transcript_path.parent_path();
        if (!dir.empty()) std::filesystem::create_directories(dir);
        record_stream_.open(cfg_.transcript_path, std::ios::app | std::ios::binary);
        if (!record_stream_)
          throw IoError("cannot open transcript for append: " +
                        cfg_.transcript_path.string());
      }
      json line{{"hash", entry.hash},
                {"tag", entry.tag},
                {"request", request_to_json(entry.request)},
                {"response", response_to_json(entry.response)},
                {"t", entry.wall_time}};
      record_stream_ << line.dump() << "\n";
      record_stream_.flush();
    }
    transcript_.push_back(std::move(entry));
  }

  BackendConfig cfg_;
  mutable std::mutex mutex_;
  std::deque<std::string> scripted_;
  std::unordered_map<std::string, std::deque<ReplaySlot>> replay_;
  Transcript transcript_;
  std::ofstream record_stream_;
  std::mt19937_64 rng_;
  std::atomic<std::int64_t> total_latency_{0};
};

struct AuditFinding {
  std::size_t call_index;
  std::size_t forbidden_index;
  std::size_t offset;  // into the whitespace-normalized request text

  bool operator==(const AuditFinding&) const = default;
};

// Substring scan of every request message against forbidden texts, both
// sides whitespace-normalized. Used to prove the informalization prompts
// never carried original statement or paper content.
inline std::vector<AuditFinding> audit_transcript(
    const Transcript& transcript, const std::vector<std::string>& forbidden) {
  std::vector<std::pair<std::size_t, std::string>> needles;
  for (std::size_t j = 0; j < forbidden.size(); ++j) {
    std::string n = normalize_ws(forbidden[j]);
    if (!n.empty()) needles.emplace_back(j, std::move(n));
  }
  std::vector<AuditFinding> findings;
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    std::string haystack;
    for (const auto& m : transcript[i].request.messages) {
      if (!haystack.empty()) haystack += ' ';
      haystack += normalize_ws(m.content);
    }
    for (const auto& [j, needle] : needles) {
      std::size_t pos = 0;
      while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        findings.push_back({i, j, pos});
        pos += needle.size();
      }
    }
  }
  return findings;
}

}  // namespace merlean
