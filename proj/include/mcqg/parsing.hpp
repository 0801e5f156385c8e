#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcqg/core.hpp"
#include "mcqg/error.hpp"
#include "mcqg/rubric.hpp"

namespace mcqg {

/// A reply that can be fixed by asking again. `addendum` is sent back to the
/// model as a follow-up user message.
class ReplyRejected : public Error {
 public:
  ReplyRejected(const std::string& what, std::string addendum)
      : Error(what), addendum_(std::move(addendum)) {}
  const std::string& addendum() const noexcept { return addendum_; }

 private:
  std::string addendum_;
};

std::string trim(std::string_view text);

/// Labeled sections of a free-form reply. A section starts at a line that
/// begins (case-insensitively, after markdown emphasis) with "<label>:" and
/// runs until the next line starting with any label. Lines labeled
/// "... feedback:" or "... score:" open sections that are discarded.
class LabeledSections {
 public:
  LabeledSections(std::string_view reply, std::span<const std::string_view> labels);

  /// Trimmed section text, or nullopt when the label never appeared.
  std::optional<std::string> get(std::string_view label) const;

 private:
  std::vector<std::pair<std::string, std::string>> sections_;
};

/// Text after a leading "<label>:" (if any), cut at the next known MCQ label.
std::string strip_component_label(std::string_view reply, std::string_view label);

/// Splits a distractor block into option texts, removing "a)", "B.", "-",
/// "1." style markers. Handles one-per-line, inline "a) X b) Y" and
/// semicolon-separated forms.
std::vector<std::string> split_options(std::string_view text);

/// Picks the distractors out of a reply and applies the count rules:
/// at least 3, no duplicates, none equal to the answer, truncated to `keep`.
std::vector<std::string> parse_distractors(std::string_view reply, const std::string& correct_answer,
                                           std::size_t keep);

/// Four labeled components from a correction reply; feedback sections are
/// dropped. Throws ReplyRejected when the result is not a valid Mcq.
Mcq parse_mcq_reply(std::string_view reply, std::size_t keep_distractors);

struct ParsedAnswer {
  char letter = 'A';
  std::string reasoning;
};

/// "Correct answer: B ... Reasoning: ..." or a reply that starts with the
/// letter (the prompt ends with "Correct answer: ").
ParsedAnswer parse_answer_reply(std::string_view reply, std::size_t option_count);

/// JSON skeleton shown to the critic: one key per aspect slug with
/// {"feedback", "score": "x/5"}, plus "total_score".
std::string critique_format_instructions(std::span<const Aspect* const> aspects);

/// "- Name: description" lines.
std::string rubric_lines(std::span<const Aspect* const> aspects);

/// Extracts one integer score in [0, max] per aspect from a JSON reply.
/// Rejects fractions, out-of-range values and missing aspects.
std::vector<AspectScore> parse_critique_reply(std::string_view reply,
                                              std::span<const Aspect* const> aspects);

/// One item per non-empty line, with bullets, numbering and an optional
/// "<prefix>:" removed.
std::vector<std::string> parse_list_reply(std::string_view reply, std::string_view prefix);

}  // namespace mcqg
