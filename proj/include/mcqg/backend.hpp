#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mcqg {

struct ChatMessage {
  std::string role;  ///< "system", "user" or "assistant"
  std::string text;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_name;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  double top_p = 1.0;
  std::optional<int> max_output_tokens;

  /// Convenience for the common single-user-message case.
  static ChatRequest user(std::string model, std::string prompt);
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::string finish_reason;
  Usage usage;
  std::chrono::milliseconds latency{0};
};

/// Hex SHA-256 over the canonical JSON of (model_name, messages, temperature,
/// top_p). Keys are sorted, so serialization order does not matter.
/// max_output_tokens is deliberately left out.
std::string fingerprint(const ChatRequest& request);

/// Anything that can answer a chat request. Implementations must be safe to
/// call from several threads at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

/// The single network seam. Throws BackendError(transport) when no reply
/// could be obtained at all.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpReply post(const std::string& url, const std::map<std::string, std::string>& headers,
                         const std::string& body) = 0;
};

/// cpp-httplib transport (HTTPS via OpenSSL).
std::unique_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout);

/// Exponential backoff with seeded jitter: attempt k (0-based) waits
/// base * 2^k * (1 + jitter * u_k), u_k uniform in [0,1) from SplitMix64(seed).
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  double jitter = 0.25;
  std::uint64_t seed = 0;

  std::vector<std::chrono::milliseconds> schedule() const;
};

/// OpenAI-compatible chat-completions client.
class OpenAiBackend : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  OpenAiBackend(std::string endpoint, std::string api_key, std::unique_ptr<HttpTransport> transport,
                RetryPolicy retry = {}, Sleeper sleeper = {});

  ChatResponse complete(const ChatRequest& request) override;

  static nlohmann::json request_body(const ChatRequest& request);
  static ChatResponse parse_reply(const std::string& body);

 private:
  std::string endpoint_;
  std::string api_key_;
  std::unique_ptr<HttpTransport> transport_;
  RetryPolicy retry_;
  Sleeper sleeper_;
};

enum class CassetteMode { record, replay, passthrough };

CassetteMode parse_cassette_mode(std::string_view text);  ///< throws ConfigError
std::string_view cassette_mode_name(CassetteMode mode);

/// Request-fingerprint keyed store of responses, persisted as append-only
/// JSONL: {"fingerprint", "request_summary", "response"} per line.
///
/// replay: misses throw BackendError(replay_miss), the inner backend is never
///         touched.
/// record: hits are served from the file, misses go to the inner backend and
///         are appended.
/// passthrough: every call goes to the inner backend, nothing is stored.
class CassetteBackend : public ChatBackend {
 public:
  CassetteBackend(std::filesystem::path path, CassetteMode mode,
                  std::shared_ptr<ChatBackend> inner = nullptr);

  ChatResponse complete(const ChatRequest& request) override;

  CassetteMode mode() const noexcept { return mode_; }
  std::size_t size() const;

 private:
  void append(const std::string& fp, const ChatRequest& request, const ChatResponse& response);

  std::filesystem::path path_;
  CassetteMode mode_;
  std::shared_ptr<ChatBackend> inner_;
  std::map<std::string, ChatResponse> entries_;
  mutable std::shared_mutex entries_mutex_;
  std::mutex writer_mutex_;
  std::ofstream writer_;
};

nlohmann::json response_to_json(const ChatResponse& response);
ChatResponse response_from_json(const nlohmann::json& j);

/// Endpoint settings. Env overrides: MCQG_ENDPOINT, MCQG_API_KEY,
/// MCQG_CASSETTE_MODE, MCQG_CASSETTE.
struct BackendConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key;
  std::string model = "gpt-4-0125-preview";
  std::optional<std::filesystem::path> cassette;
  CassetteMode cassette_mode = CassetteMode::passthrough;
  std::chrono::seconds timeout{120};
  RetryPolicy retry;

  void apply_env();
};

/// Builds live and/or cassette layers as configured. A replay cassette never
/// constructs a transport.
std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config);

}  // namespace mcqg
