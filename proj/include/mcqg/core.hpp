#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcqg {

/// De-identified clinical narrative fed to the generator.
struct MedicalCase {
  std::string id;
  std::string text;
  std::optional<std::string> source_tag;

  void validate() const;
};

/// One of the 41 item-writing topics, grouped under 10 sections.
struct TopicLabel {
  std::string section;
  std::string name;

  bool operator==(const TopicLabel&) const = default;
};

/// The fixed topic registry, in section order.
std::span<const TopicLabel> topic_registry();

/// The 10 section names, in registry order.
std::span<const std::string_view> topic_sections();

/// Lowercases, maps punctuation to spaces and collapses whitespace.
std::string normalize_label(std::string_view text);

/// Matches free model output against the registry, ignoring case and
/// punctuation. Accepts "Section - topic" and "Section: topic" forms.
std::optional<TopicLabel> match_topic(std::string_view raw);

/// Throws ValidationError if the pair is not in the registry.
void validate_topic(const TopicLabel& topic);

inline constexpr std::string_view kDerivedFromCase = "derived-from-case";

/// The 18 content-outline sections test points are drawn from.
std::span<const std::string_view> outline_sections();

/// The core concept an item is engineered to assess.
struct TestPoint {
  std::string concept_text;
  std::string outline_section{kDerivedFromCase};

  bool operator==(const TestPoint&) const = default;
  void validate() const;
};

inline constexpr std::size_t kMaxTestPointWords = 20;

std::size_t word_count(std::string_view text);

/// A multiple-choice item: context, question, correct answer, distractors.
struct Mcq {
  std::string context;
  std::string question;
  std::string correct_answer;
  std::vector<std::string> distractors;

  bool operator==(const Mcq&) const = default;

  /// Non-empty fields, 3-4 pairwise distinct distractors, none equal to the
  /// correct answer.
  void validate() const;
};

inline constexpr std::size_t kMinDistractors = 3;
inline constexpr std::size_t kMaxDistractors = 4;

/// 'A' for 0, 'B' for 1, ...
char option_letter(std::size_t index);

/// Inverse of option_letter; case-insensitive. nullopt for non-letters.
std::optional<std::size_t> option_index(char letter);

/// Options in presentation order plus the letter the correct answer landed on.
struct ShuffledOptions {
  std::vector<std::string> options;
  char answer_key = 'A';
  /// permutation[i] is the source index of options[i], where source index 0
  /// is the correct answer and 1.. are the distractors in order.
  std::vector<std::size_t> permutation;

  /// "A. text\nB. text..." with no trailing newline.
  std::string labeled() const;
};

/// Fisher-Yates over {a} + d driven by SplitMix64(seed). Deterministic and
/// portable: the same (mcq, seed) gives the same order everywhere.
ShuffledOptions shuffle_options(const Mcq& mcq, std::uint64_t seed);

/// The answerer's pick and its supporting reasoning.
struct AnswerAttempt {
  char chosen_option = 'A';
  std::string chosen_text;  ///< the option text behind chosen_option
  std::string reasoning;
  bool is_correct = false;

  bool operator==(const AnswerAttempt&) const = default;
};

}  // namespace mcqg
