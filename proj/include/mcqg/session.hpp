#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcqg/core.hpp"
#include "mcqg/rubric.hpp"

namespace mcqg {

enum class StopReason { threshold, max_rounds };

std::string_view stop_reason_name(StopReason r);
StopReason parse_stop_reason(std::string_view text);

struct RefinementRound {
  int index = 1;  ///< 1-based
  Mcq mcq;
  AnswerAttempt attempt;
  CritiqueReport critique;
};

/// Where a run gave up, kept so a batch can be inspected and resumed.
struct StageError {
  std::string stage;
  std::string message;
  std::string raw_reply;
};

struct RefinementSession {
  std::string case_id;
  std::vector<TopicLabel> topics;
  std::vector<TestPoint> testpoints;
  std::vector<RefinementRound> rounds;
  int best_round_index = 0;  ///< 1-based; 0 only when no round completed
  std::optional<StopReason> stop_reason;
  std::string template_pack_id;
  std::optional<StageError> error;
  std::vector<std::string> warnings;

  bool ok() const noexcept { return !error && !rounds.empty(); }
  const RefinementRound& best_round() const;
};

nlohmann::json to_json(const TopicLabel& t);
nlohmann::json to_json(const TestPoint& t);
nlohmann::json to_json(const Mcq& m);
nlohmann::json to_json(const AnswerAttempt& a);
nlohmann::json to_json(const CritiqueReport& r);
/// `config` is echoed verbatim under "config" when not null.
nlohmann::json session_to_json(const RefinementSession& s, const nlohmann::json& config = nullptr);

TopicLabel topic_from_json(const nlohmann::json& j);
TestPoint testpoint_from_json(const nlohmann::json& j);
Mcq mcq_from_json(const nlohmann::json& j);
AnswerAttempt attempt_from_json(const nlohmann::json& j);
CritiqueReport critique_from_json(const nlohmann::json& j, const RubricRegistry& registry);
RefinementSession session_from_json(const nlohmann::json& j, const RubricRegistry& registry);

/// Topic names joined for the {topic} slot.
std::string topic_text(std::span<const TopicLabel> topics);
/// Test-point concepts joined for the {keypoint} slot.
std::string keypoint_text(std::span<const TestPoint> testpoints);

}  // namespace mcqg
