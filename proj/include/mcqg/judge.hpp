#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcqg/pipeline.hpp"

namespace mcqg {

enum class Preference { prefer_first, prefer_second, tie };

std::string_view preference_name(Preference p);
Preference parse_preference_name(std::string_view text);

/// Judgment-file outcome codes: 0 tie, 1 system A, 2 system B, -1 position bias.
enum class Outcome { tie = 0, system_a = 1, system_b = 2, position_biased = -1 };

int outcome_code(Outcome o);
Outcome outcome_from_code(int code);  ///< throws ValidationError

struct DebiasedVerdict {
  Outcome outcome = Outcome::tie;
  Preference order_ab = Preference::tie;  ///< A shown first
  Preference order_ba = Preference::tie;  ///< B shown first

  bool operator==(const DebiasedVerdict&) const = default;
};

/// Maps both presentation orders back to systems. Agreement gives that system
/// (or tie), disagreement gives position_biased.
Outcome combine_orders(Preference order_ab, Preference order_ba);

/// The ten aspects rated by default.
std::span<const std::string_view> default_judge_aspects();

struct AspectScorecard {
  std::string subset_id;
  std::vector<AspectScore> scores;  ///< registry order

  int total() const;
  const AspectScore* find(std::string_view aspect_id) const;
};

/// Canonical id of an aspect subset: "default" for the ten default aspects,
/// "all" for the full registry, otherwise the sorted ids joined by ",".
std::string subset_id(std::span<const std::string> aspect_ids, const RubricRegistry& registry);

/// Strictly larger total wins; equal totals tie. ValidationError when the
/// cards were rated on different subsets.
Preference rating_preference(const AspectScorecard& a, const AspectScorecard& b);

/// "Preference Response: 1|2|tie" (A/B and first/second also accepted).
/// A reply without that line but plainly declaring a tie counts as a tie.
Preference parse_preference_reply(std::string_view reply);

class Judge {
 public:
  /// `resources.model` is the judge model; the generator may differ.
  Judge(PipelineResources resources, PipelineConfig config);

  /// Critique restricted to `aspect_ids`. Without an attempt the judge first
  /// answers the item itself with `seed`.
  AspectScorecard rate(const ItemContext& item, const Mcq& mcq, std::span<const std::string> aspect_ids,
                       std::optional<AnswerAttempt> attempt = std::nullopt,
                       std::uint64_t seed = 0) const;

  /// One call with `first` labeled 1 and `second` labeled 2.
  Preference compare(const ItemContext& item, const Mcq& first, const Mcq& second) const;

  /// compare(a, b) and compare(b, a).
  DebiasedVerdict debiased_compare(const ItemContext& item, const Mcq& a, const Mcq& b) const;

  const std::string& model() const noexcept { return pipeline_.resources().model.model; }

 private:
  Pipeline pipeline_;
};

/// One line of a judgment file.
struct JudgmentRecord {
  std::string item_id;
  std::string judge_model;
  std::string mode;  ///< "compare" or "rate"
  std::optional<Preference> order_ab;
  std::optional<Preference> order_ba;
  Outcome outcome = Outcome::tie;
  std::optional<AspectScorecard> scorecard_a;
  std::optional<AspectScorecard> scorecard_b;
};

nlohmann::json to_json(const AspectScorecard& card);
nlohmann::json to_json(const JudgmentRecord& record);
JudgmentRecord judgment_from_json(const nlohmann::json& j);

}  // namespace mcqg
