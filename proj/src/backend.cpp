#include "mcqg/backend.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "mcqg/digest.hpp"
#include "mcqg/error.hpp"
#include "mcqg/random.hpp"

namespace mcqg {

using json = nlohmann::json;

ChatRequest ChatRequest::user(std::string model, std::string prompt) {
  ChatRequest r;
  r.model_name = std::move(model);
  r.messages.push_back({"user", std::move(prompt)});
  return r;
}

std::string fingerprint(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.text}});
  const json canonical = {
      {"model", request.model_name},
      {"messages", messages},
      {"temperature", request.temperature},
      {"top_p", request.top_p},
  };
  return sha256_hex(canonical.dump());
}

std::vector<std::chrono::milliseconds> RetryPolicy::schedule() const {
  std::vector<std::chrono::milliseconds> out;
  SplitMix64 rng(seed);
  for (int k = 0; k < max_retries; ++k) {
    const double u = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
    const double ms = static_cast<double>(base_delay.count()) * std::ldexp(1.0, k) * (1.0 + jitter * u);
    out.emplace_back(static_cast<std::chrono::milliseconds::rep>(std::llround(ms)));
  }
  return out;
}

OpenAiBackend::OpenAiBackend(std::string endpoint, std::string api_key,
                             std::unique_ptr<HttpTransport> transport, RetryPolicy retry,
                             Sleeper sleeper)
    : endpoint_(std::move(endpoint)),
      api_key_(std::move(api_key)),
      transport_(std::move(transport)),
      retry_(retry),
      sleeper_(std::move(sleeper)) {
  if (!transport_) throw ConfigError("OpenAiBackend needs a transport");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

json OpenAiBackend::request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.text}});
  json body = {
      {"model", request.model_name},
      {"messages", messages},
      {"temperature", request.temperature},
      {"top_p", request.top_p},
  };
  if (request.max_output_tokens) body["max_tokens"] = *request.max_output_tokens;
  return body;
}

ChatResponse OpenAiBackend::parse_reply(const std::string& body) {
  try {
    const json j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    r.finish_reason = choice.value("finish_reason", "");
    const auto& content = choice.at("message").at("content");
    if (!content.is_string()) {
      throw BackendError(BackendError::Kind::malformed_reply,
                         "endpoint reply has no text content (finish_reason=" + r.finish_reason + ")");
    }
    r.text = content.get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
      const auto& u = j["usage"];
      r.usage.prompt_tokens = u.value("prompt_tokens", 0);
      r.usage.completion_tokens = u.value("completion_tokens", 0);
      r.usage.total_tokens = u.value("total_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw BackendError(BackendError::Kind::malformed_reply,
                       std::string("malformed endpoint reply: ") + e.what());
  }
}

ChatResponse OpenAiBackend::complete(const ChatRequest& request) {
  if (request.messages.empty()) throw ValidationError("chat request without messages");
  const std::string body = request_body(request).dump();
  const std::map<std::string, std::string> headers = {
      {"Authorization", "Bearer " + api_key_},
      {"Content-Type", "application/json"},
  };
  const auto delays = retry_.schedule();
  std::string last_failure;
  bool last_was_rate_limit = false;
  for (std::size_t attempt = 0;; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    std::optional<HttpReply> reply;
    try {
      reply = transport_->post(endpoint_, headers, body);
    } catch (const BackendError& e) {
      if (e.kind() != BackendError::Kind::transport) throw;
      last_failure = e.what();
      last_was_rate_limit = false;
    }
    if (reply) {
      if (reply->status == 401 || reply->status == 403) {
        throw BackendError(BackendError::Kind::auth,
                           "authentication failed (HTTP " + std::to_string(reply->status) + ")");
      }
      if (reply->status >= 200 && reply->status < 300) {
        ChatResponse r = parse_reply(reply->body);
        r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        return r;
      }
      if (reply->status != 429 && reply->status < 500) {
        throw BackendError(BackendError::Kind::transport,
                           "endpoint rejected request (HTTP " + std::to_string(reply->status) +
                               "): " + reply->body.substr(0, 200));
      }
      last_was_rate_limit = reply->status == 429;
      last_failure = "HTTP " + std::to_string(reply->status);
    }
    if (attempt >= delays.size()) break;
    sleeper_(delays[attempt]);
  }
  if (last_was_rate_limit) {
    throw BackendError(BackendError::Kind::rate_limit,
                       "rate limited after " + std::to_string(delays.size()) + " retries");
  }
  throw BackendError(BackendError::Kind::transport, "request failed after " +
                                                        std::to_string(delays.size()) +
                                                        " retries: " + last_failure);
}

CassetteMode parse_cassette_mode(std::string_view text) {
  if (text == "record") return CassetteMode::record;
  if (text == "replay") return CassetteMode::replay;
  if (text == "passthrough") return CassetteMode::passthrough;
  throw ConfigError("unknown cassette mode: " + std::string(text));
}

std::string_view cassette_mode_name(CassetteMode mode) {
  switch (mode) {
    case CassetteMode::record: return "record";
    case CassetteMode::replay: return "replay";
    case CassetteMode::passthrough: return "passthrough";
  }
  return "";
}

json response_to_json(const ChatResponse& response) {
  return {
      {"text", response.text},
      {"finish_reason", response.finish_reason},
      {"usage",
       {{"prompt_tokens", response.usage.prompt_tokens},
        {"completion_tokens", response.usage.completion_tokens},
        {"total_tokens", response.usage.total_tokens}}},
  };
}

ChatResponse response_from_json(const json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = j.value("finish_reason", "");
  if (j.contains("usage")) {
    const auto& u = j["usage"];
    r.usage.prompt_tokens = u.value("prompt_tokens", 0);
    r.usage.completion_tokens = u.value("completion_tokens", 0);
    r.usage.total_tokens = u.value("total_tokens", 0);
  }
  return r;
}

CassetteBackend::CassetteBackend(std::filesystem::path path, CassetteMode mode,
                                 std::shared_ptr<ChatBackend> inner)
    : path_(std::move(path)), mode_(mode), inner_(std::move(inner)) {
  if (mode_ != CassetteMode::replay && !inner_) {
    throw ConfigError("cassette mode " + std::string(cassette_mode_name(mode_)) +
                      " needs a live backend behind it");
  }
  if (mode_ == CassetteMode::passthrough) return;
  if (mode_ == CassetteMode::replay && !std::filesystem::exists(path_)) {
    throw ConfigError("cassette not found: " + path_.string());
  }
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        entries_.insert_or_assign(j.at("fingerprint").get<std::string>(),
                                  response_from_json(j.at("response")));
      } catch (const json::exception& e) {
        throw ConfigError("cassette " + path_.string() + " line " + std::to_string(lineno) + ": " +
                          e.what());
      }
    }
  }
  if (mode_ == CassetteMode::record) {
    writer_.open(path_, std::ios::binary | std::ios::app);
    if (!writer_) throw ConfigError("cannot open cassette for append: " + path_.string());
  }
}

std::size_t CassetteBackend::size() const {
  std::shared_lock lock(entries_mutex_);
  return entries_.size();
}

ChatResponse CassetteBackend::complete(const ChatRequest& request) {
  if (mode_ == CassetteMode::passthrough) return inner_->complete(request);
  const std::string fp = fingerprint(request);
  if (mode_ == CassetteMode::replay) {
    // Replay never mutates entries_, so lookups need no lock.
    auto it = entries_.find(fp);
    if (it == entries_.end()) {
      throw BackendError(BackendError::Kind::replay_miss, "cassette replay miss for fingerprint " + fp);
    }
    return it->second;
  }
  {
    std::shared_lock lock(entries_mutex_);
    if (auto it = entries_.find(fp); it != entries_.end()) return it->second;
  }
  ChatResponse response = inner_->complete(request);
  append(fp, request, response);
  return response;
}

void CassetteBackend::append(const std::string& fp, const ChatRequest& request,
                             const ChatResponse& response) {
  std::scoped_lock writer(writer_mutex_);
  {
    std::unique_lock lock(entries_mutex_);
    if (!entries_.emplace(fp, response).second) return;
  }
  const std::string& last = request.messages.back().text;
  const json line = {
      {"fingerprint", fp},
      {"request_summary",
       {{"model", request.model_name},
        {"temperature", request.temperature},
        {"top_p", request.top_p},
        {"messages", request.messages.size()},
        {"last_message_head", last.substr(0, 120)}}},
      {"response", response_to_json(response)},
  };
  writer_ << line.dump() << '\n';
  writer_.flush();
}

void BackendConfig::apply_env() {
  if (const char* v = std::getenv("MCQG_ENDPOINT"); v && *v) endpoint = v;
  if (const char* v = std::getenv("MCQG_API_KEY"); v && *v) api_key = v;
  if (const char* v = std::getenv("MCQG_CASSETTE_MODE"); v && *v) cassette_mode = parse_cassette_mode(v);
  if (const char* v = std::getenv("MCQG_CASSETTE"); v && *v) cassette = std::filesystem::path(v);
}

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  if (config.cassette_mode != CassetteMode::passthrough && !config.cassette) {
    throw ConfigError("cassette mode " + std::string(cassette_mode_name(config.cassette_mode)) +
                      " needs a cassette path");
  }
  std::shared_ptr<ChatBackend> live;
  if (config.cassette_mode != CassetteMode::replay) {
    if (config.api_key.empty()) throw ConfigError("no API key configured (set MCQG_API_KEY)");
    live = std::make_shared<OpenAiBackend>(config.endpoint, config.api_key,
                                           make_http_transport(config.timeout), config.retry);
  }
  if (config.cassette_mode == CassetteMode::passthrough) return live;
  return std::make_shared<CassetteBackend>(*config.cassette, config.cassette_mode, live);
}

}  // namespace mcqg
