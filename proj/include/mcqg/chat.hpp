#pragma once

#include <string>
#include <string_view>
#include <utility>

#include "mcqg/backend.hpp"
#include "mcqg/error.hpp"
#include "mcqg/parsing.hpp"

namespace mcqg {

struct ModelSettings {
  std::string model = "gpt-4-0125-preview";
  double temperature = 1.0;
  double top_p = 1.0;
};

/// Sends `prompt` and parses the reply. When the parser throws ReplyRejected
/// the conversation continues with the reply and the rejection's addendum, up
/// to `retries` more times. Then ParseError carrying the last raw reply.
template <class Parse>
auto ask(ChatBackend& backend, const ModelSettings& settings, std::string prompt, int retries,
         Parse&& parse) -> decltype(parse(std::string_view{})) {
  ChatRequest request = ChatRequest::user(settings.model, std::move(prompt));
  request.temperature = settings.temperature;
  request.top_p = settings.top_p;
  for (int attempt = 0;; ++attempt) {
    ChatResponse response = backend.complete(request);
    try {
      return parse(std::string_view(response.text));
    } catch (const ReplyRejected& rejected) {
      if (attempt >= retries) throw ParseError(rejected.what(), response.text);
      request.messages.push_back({"assistant", response.text});
      request.messages.push_back({"user", rejected.addendum()});
    }
  }
}

}  // namespace mcqg
