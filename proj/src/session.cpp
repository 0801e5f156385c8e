#include "mcqg/session.hpp"

#include "mcqg/error.hpp"

namespace mcqg {

using json = nlohmann::json;

std::string_view stop_reason_name(StopReason r) {
  return r == StopReason::threshold ? "threshold" : "max_rounds";
}

StopReason parse_stop_reason(std::string_view text) {
  if (text == "threshold") return StopReason::threshold;
  if (text == "max_rounds") return StopReason::max_rounds;
  throw ValidationError("unknown stop reason: " + std::string(text));
}

const RefinementRound& RefinementSession::best_round() const {
  if (best_round_index < 1 || static_cast<std::size_t>(best_round_index) > rounds.size()) {
    throw ValidationError("session " + case_id + " has no valid best round");
  }
  return rounds[static_cast<std::size_t>(best_round_index - 1)];
}

json to_json(const TopicLabel& t) { return {{"section", t.section}, {"name", t.name}}; }

json to_json(const TestPoint& t) {
  return {{"concept", t.concept_text}, {"outline_section", t.outline_section}};
}

json to_json(const Mcq& m) {
  return {{"context", m.context},
          {"question", m.question},
          {"correct_answer", m.correct_answer},
          {"distractors", m.distractors}};
}

json to_json(const AnswerAttempt& a) {
  return {{"chosen_option", std::string(1, a.chosen_option)},
          {"chosen_text", a.chosen_text},
          {"reasoning", a.reasoning},
          {"is_correct", a.is_correct}};
}

json to_json(const CritiqueReport& r) {
  json scores = json::array();
  for (const auto& e : r.entries()) {
    scores.push_back({{"aspect", e.aspect_id}, {"score", e.score}, {"rationale", e.rationale}});
  }
  json totals = json::object();
  for (Component c : kComponents) totals[std::string(component_id(c))] = r.component_total(c);
  return {{"scores", scores},
          {"component_totals", totals},
          {"raw_total", r.raw_total()},
          {"max_total", r.max_total()},
          {"normalized_total", r.normalized_total()}};
}

json session_to_json(const RefinementSession& s, const json& config) {
  json topics = json::array();
  for (const auto& t : s.topics) topics.push_back(to_json(t));
  json testpoints = json::array();
  for (const auto& t : s.testpoints) testpoints.push_back(to_json(t));
  json rounds = json::array();
  for (const auto& r : s.rounds) {
    rounds.push_back({{"index", r.index},
                      {"mcq", to_json(r.mcq)},
                      {"attempt", to_json(r.attempt)},
                      {"critique", to_json(r.critique)}});
  }
  json j = {{"case_id", s.case_id},
            {"topics", topics},
            {"testpoints", testpoints},
            {"rounds", rounds},
            {"best_round_index", s.best_round_index},
            {"stop_reason", s.stop_reason ? json(stop_reason_name(*s.stop_reason)) : json(nullptr)},
            {"template_pack_id", s.template_pack_id}};
  if (s.error) {
    j["error"] = {{"stage", s.error->stage},
                  {"message", s.error->message},
                  {"raw_reply", s.error->raw_reply}};
  }
  if (!s.warnings.empty()) j["warnings"] = s.warnings;
  if (!config.is_null()) j["config"] = config;
  return j;
}

TopicLabel topic_from_json(const json& j) {
  return {j.at("section").get<std::string>(), j.at("name").get<std::string>()};
}

TestPoint testpoint_from_json(const json& j) {
  TestPoint t;
  t.concept_text = j.at("concept").get<std::string>();
  t.outline_section = j.value("outline_section", std::string(kDerivedFromCase));
  return t;
}

Mcq mcq_from_json(const json& j) {
  Mcq m;
  m.context = j.at("context").get<std::string>();
  m.question = j.at("question").get<std::string>();
  m.correct_answer = j.at("correct_answer").get<std::string>();
  m.distractors = j.at("distractors").get<std::vector<std::string>>();
  return m;
}

AnswerAttempt attempt_from_json(const json& j) {
  AnswerAttempt a;
  const auto letter = j.at("chosen_option").get<std::string>();
  if (letter.size() != 1) throw ValidationError("chosen_option must be a single letter");
  a.chosen_option = letter[0];
  a.chosen_text = j.value("chosen_text", "");
  a.reasoning = j.at("reasoning").get<std::string>();
  a.is_correct = j.at("is_correct").get<bool>();
  return a;
}

CritiqueReport critique_from_json(const json& j, const RubricRegistry& registry) {
  std::vector<AspectScore> entries;
  for (const auto& e : j.at("scores")) {
    entries.push_back({e.at("aspect").get<std::string>(), e.at("score").get<int>(),
                       e.value("rationale", "")});
  }
  return CritiqueReport::make(registry, std::move(entries));
}

RefinementSession session_from_json(const json& j, const RubricRegistry& registry) {
  try {
    RefinementSession s;
    s.case_id = j.at("case_id").get<std::string>();
    for (const auto& t : j.at("topics")) s.topics.push_back(topic_from_json(t));
    for (const auto& t : j.at("testpoints")) s.testpoints.push_back(testpoint_from_json(t));
    for (const auto& r : j.at("rounds")) {
      s.rounds.push_back({r.at("index").get<int>(), mcq_from_json(r.at("mcq")),
                          attempt_from_json(r.at("attempt")),
                          critique_from_json(r.at("critique"), registry)});
    }
    s.best_round_index = j.at("best_round_index").get<int>();
    if (const auto& sr = j.at("stop_reason"); !sr.is_null()) {
      s.stop_reason = parse_stop_reason(sr.get<std::string>());
    }
    s.template_pack_id = j.value("template_pack_id", "");
    if (j.contains("error")) {
      const auto& e = j["error"];
      s.error = StageError{e.value("stage", ""), e.value("message", ""), e.value("raw_reply", "")};
    }
    if (j.contains("warnings")) s.warnings = j["warnings"].get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed session record: ") + e.what());
  }
}

std::string topic_text(std::span<const TopicLabel> topics) {
  std::string out;
  for (const auto& t : topics) out += (out.empty() ? "" : "; ") + t.name;
  return out;
}

std::string keypoint_text(std::span<const TestPoint> testpoints) {
  std::string out;
  for (const auto& t : testpoints) out += (out.empty() ? "" : "; ") + t.concept_text;
  return out;
}

}  // namespace mcqg
