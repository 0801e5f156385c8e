#include "mcqg/judge.hpp"

#include <algorithm>
#include <array>
#include <regex>

#include "mcqg/error.hpp"

namespace mcqg {

using json = nlohmann::json;

std::string_view preference_name(Preference p) {
  switch (p) {
    case Preference::prefer_first: return "prefer_first";
    case Preference::prefer_second: return "prefer_second";
    case Preference::tie: return "tie";
  }
  return "";
}

Preference parse_preference_name(std::string_view text) {
  if (text == "prefer_first") return Preference::prefer_first;
  if (text == "prefer_second") return Preference::prefer_second;
  if (text == "tie") return Preference::tie;
  throw ValidationError("unknown preference: " + std::string(text));
}

int outcome_code(Outcome o) { return static_cast<int>(o); }

Outcome outcome_from_code(int code) {
  switch (code) {
    case 0: return Outcome::tie;
    case 1: return Outcome::system_a;
    case 2: return Outcome::system_b;
    case -1: return Outcome::position_biased;
    default: throw ValidationError("outcome code must be -1, 0, 1 or 2, got " + std::to_string(code));
  }
}

namespace {

// Winner in system terms for a single order. first_is_a says which system sat
// in slot 1.
Outcome winner(Preference p, bool first_is_a) {
  switch (p) {
    case Preference::tie: return Outcome::tie;
    case Preference::prefer_first: return first_is_a ? Outcome::system_a : Outcome::system_b;
    case Preference::prefer_second: return first_is_a ? Outcome::system_b : Outcome::system_a;
  }
  return Outcome::tie;
}

constexpr std::array<std::string_view, 10> kDefaultAspects = {
    "context.concise",
    "context.relevant",
    "context.misdirection",
    "question.concluding",
    "question.clarity",
    "correct_answer.occurrence",
    "correct_answer.depth_of_understanding",
    "distractors.common_mistakes",
    "reasoning.logical_flow",
    "reasoning.evidence_based_reasoning",
};

}  // namespace

Outcome combine_orders(Preference order_ab, Preference order_ba) {
  const Outcome ab = winner(order_ab, true);
  const Outcome ba = winner(order_ba, false);
  return ab == ba ? ab : Outcome::position_biased;
}

std::span<const std::string_view> default_judge_aspects() { return kDefaultAspects; }

int AspectScorecard::total() const {
  int sum = 0;
  for (const auto& s : scores) sum += s.score;
  return sum;
}

const AspectScore* AspectScorecard::find(std::string_view aspect_id) const {
  for (const auto& s : scores) {
    if (s.aspect_id == aspect_id) return &s;
  }
  return nullptr;
}

std::string subset_id(std::span<const std::string> aspect_ids, const RubricRegistry& registry) {
  std::vector<std::string> sorted(aspect_ids.begin(), aspect_ids.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::string> defaults(kDefaultAspects.begin(), kDefaultAspects.end());
  std::sort(defaults.begin(), defaults.end());
  if (sorted == defaults) return "default";
  if (sorted.size() == registry.aspects().size()) return "all";
  std::string out;
  for (const auto& id : sorted) out += (out.empty() ? "" : ",") + id;
  return out;
}

Preference rating_preference(const AspectScorecard& a, const AspectScorecard& b) {
  if (a.subset_id != b.subset_id) {
    throw ValidationError("scorecards rated on different subsets: " + a.subset_id + " vs " + b.subset_id);
  }
  const int ta = a.total();
  const int tb = b.total();
  if (ta > tb) return Preference::prefer_first;
  if (tb > ta) return Preference::prefer_second;
  return Preference::tie;
}

Preference parse_preference_reply(std::string_view reply) {
  static const std::regex line(R"(preference\s*response\s*\**\s*:\s*\**\s*["'(\[]?\s*([A-Za-z0-9]+))",
                               std::regex::icase);
  const std::string text(reply);
  std::smatch m;
  std::string token;
  // The last occurrence wins: models sometimes restate the format first.
  for (auto it = std::sregex_iterator(text.begin(), text.end(), line); it != std::sregex_iterator(); ++it) {
    token = (*it)[1].str();
  }
  std::transform(token.begin(), token.end(), token.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (token == "1" || token == "a" || token == "first" || token == "one") return Preference::prefer_first;
  if (token == "2" || token == "b" || token == "second" || token == "two") return Preference::prefer_second;
  if (token == "tie" || token == "equal" || token == "both" || token == "neither" || token == "0") {
    return Preference::tie;
  }
  if (token.empty()) {
    static const std::regex declared_tie(
        R"(\b(it'?s a tie|tie\b|equal(ly)?\s+(good|quality|strong)|of equal quality|both questions are equally)\b)",
        std::regex::icase);
    if (std::regex_search(text, declared_tie)) return Preference::tie;
  }
  throw ReplyRejected("no preference in judge reply",
                      "End your reply with exactly one line: \"Preference Response: 1\", "
                      "\"Preference Response: 2\" or \"Preference Response: tie\".");
}

Judge::Judge(PipelineResources resources, PipelineConfig config)
    : pipeline_(std::move(resources), config) {}

AspectScorecard Judge::rate(const ItemContext& item, const Mcq& mcq, std::span<const std::string> aspect_ids,
                            std::optional<AnswerAttempt> attempt, std::uint64_t seed) const {
  if (aspect_ids.empty()) throw ValidationError("rate: empty aspect subset");
  const RubricRegistry& rubric = *pipeline_.resources().rubric;
  std::vector<const Aspect*> aspects;
  for (const auto& a : rubric.aspects()) {
    if (std::find(aspect_ids.begin(), aspect_ids.end(), a.id()) != aspect_ids.end()) aspects.push_back(&a);
  }
  for (const auto& id : aspect_ids) {
    if (!rubric.find(id)) throw ValidationError("rate: unknown aspect " + id);
  }
  mcq.validate();
  if (!attempt) attempt = pipeline_.answer_mcq(mcq, seed);
  AspectScorecard card;
  card.subset_id = subset_id(aspect_ids, rubric);
  auto scores = critique_aspects(pipeline_.resources(), pipeline_.config(), item, mcq, *attempt, aspects);
  // critique_aspects goes component by component; restore registry order.
  std::sort(scores.begin(), scores.end(), [&](const AspectScore& x, const AspectScore& y) {
    return rubric.index_of(x.aspect_id) < rubric.index_of(y.aspect_id);
  });
  card.scores = std::move(scores);
  return card;
}

Preference Judge::compare(const ItemContext& item, const Mcq& first, const Mcq& second) const {
  first.validate();
  second.validate();
  Bindings b = item_bindings(item);
  b["question_1"] = format_mcq(first);
  b["question_2"] = format_mcq(second);
  const auto& res = pipeline_.resources();
  std::string prompt = render(res.templates->get(TemplateId::compare), b).text;
  return ask(*res.backend, res.model, std::move(prompt), pipeline_.config().reply_retry_limit,
             [](std::string_view reply) { return parse_preference_reply(reply); });
}

DebiasedVerdict Judge::debiased_compare(const ItemContext& item, const Mcq& a, const Mcq& b) const {
  DebiasedVerdict v;
  v.order_ab = compare(item, a, b);
  v.order_ba = compare(item, b, a);
  v.outcome = combine_orders(v.order_ab, v.order_ba);
  return v;
}

json to_json(const AspectScorecard& card) {
  json scores = json::array();
  for (const auto& s : card.scores) {
    scores.push_back({{"aspect", s.aspect_id}, {"score", s.score}, {"rationale", s.rationale}});
  }
  return {{"subset_id", card.subset_id}, {"scores", scores}, {"total", card.total()}};
}

namespace {

AspectScorecard scorecard_from_json(const json& j) {
  AspectScorecard c;
  c.subset_id = j.at("subset_id").get<std::string>();
  for (const auto& s : j.at("scores")) {
    c.scores.push_back({s.at("aspect").get<std::string>(), s.at("score").get<int>(), s.value("rationale", "")});
  }
  return c;
}

}  // namespace

json to_json(const JudgmentRecord& r) {
  json j = {{"item_id", r.item_id},
            {"judge_model", r.judge_model},
            {"mode", r.mode},
            {"order_ab", r.order_ab ? json(preference_name(*r.order_ab)) : json(nullptr)},
            {"order_ba", r.order_ba ? json(preference_name(*r.order_ba)) : json(nullptr)},
            {"outcome_code", outcome_code(r.outcome)}};
  if (r.scorecard_a || r.scorecard_b) {
    j["scorecards"] = {{"a", r.scorecard_a ? to_json(*r.scorecard_a) : json(nullptr)},
                       {"b", r.scorecard_b ? to_json(*r.scorecard_b) : json(nullptr)}};
  }
  return j;
}

JudgmentRecord judgment_from_json(const json& j) {
  try {
    JudgmentRecord r;
    r.item_id = j.at("item_id").is_string() ? j.at("item_id").get<std::string>() : j.at("item_id").dump();
    r.judge_model = j.value("judge_model", "");
    r.mode = j.value("mode", "compare");
    if (j.contains("order_ab") && j["order_ab"].is_string()) {
      r.order_ab = parse_preference_name(j["order_ab"].get<std::string>());
    }
    if (j.contains("order_ba") && j["order_ba"].is_string()) {
      r.order_ba = parse_preference_name(j["order_ba"].get<std::string>());
    }
    r.outcome = outcome_from_code(j.at("outcome_code").get<int>());
    if (j.contains("scorecards") && j["scorecards"].is_object()) {
      const auto& s = j["scorecards"];
      if (s.contains("a") && !s["a"].is_null()) r.scorecard_a = scorecard_from_json(s["a"]);
      if (s.contains("b") && !s["b"].is_null()) r.scorecard_b = scorecard_from_json(s["b"]);
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed judgment record: ") + e.what());
  }
}

}  // namespace mcqg
