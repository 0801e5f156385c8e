#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcqg {

/// The five critiqued parts of an item. Reasoning is the answerer's
/// chain of thought, not a field of the Mcq itself.
enum class Component { context, question, correct_answer, distractors, reasoning };

inline constexpr std::array<Component, 5> kComponents = {
    Component::context, Component::question, Component::correct_answer,
    Component::distractors, Component::reasoning};

/// "context", "question", "correct_answer", "distractors", "reasoning".
std::string_view component_id(Component c);

/// Human label as used in prompts: "Context", "Correct answer", ...
std::string_view component_label(Component c);

/// Throws ValidationError for unknown ids.
Component parse_component(std::string_view id);

struct Aspect {
  Component component;
  std::string name;         ///< display name, e.g. "Depth of Understanding"
  std::string description;  ///< one-line definition shown to the critic
  int max_score = 5;

  /// "<component>.<slug>", e.g. "correct_answer.depth_of_understanding".
  std::string id() const;
  /// Lowercase underscore form of name.
  std::string slug() const;
};

/// Component/aspect table that drives critique prompts, parsing and totals.
/// Immutable once built.
class RubricRegistry {
 public:
  /// Validates: unique ids, every component present, scores positive.
  RubricRegistry(std::string version, std::vector<Aspect> aspects);

  /// The 30-aspect registry (9/5/5/7/4).
  static const RubricRegistry& builtin();

  /// Tab-separated file: a "# rubric <version>" line, then one
  /// "component\taspect\tdescription\tmax_score" row per aspect.
  static RubricRegistry load(const std::filesystem::path& path);
  static RubricRegistry parse(std::string_view text);
  std::string serialize() const;

  const std::string& version() const noexcept { return version_; }
  std::span<const Aspect> aspects() const noexcept { return aspects_; }
  std::vector<const Aspect*> aspects_of(Component c) const;
  const Aspect* find(std::string_view aspect_id) const;
  std::size_t index_of(std::string_view aspect_id) const;  ///< throws if unknown

  int component_max(Component c) const;
  int max_total() const;

  bool operator==(const RubricRegistry& other) const;

 private:
  std::string version_;
  std::vector<Aspect> aspects_;
};

struct AspectScore {
  std::string aspect_id;
  int score = 0;
  std::string rationale;

  bool operator==(const AspectScore&) const = default;
};

/// Per-aspect critique for one round, in registry order.
class CritiqueReport {
 public:
  CritiqueReport() = default;

  /// Entries may come in any order; every registry aspect must appear exactly
  /// once with a score in [0, max_score].
  static CritiqueReport make(const RubricRegistry& registry, std::vector<AspectScore> entries);

  std::span<const AspectScore> entries() const noexcept { return entries_; }
  const AspectScore& entry(std::string_view aspect_id) const;

  int component_total(Component c) const;
  /// As above but from an id string; throws ValidationError if unknown.
  int component_total(std::string_view component) const;
  int component_max(Component c) const;
  int raw_total() const;
  int max_total() const noexcept { return max_total_; }
  double normalized_total() const;
  double normalized_component(Component c) const;

  bool operator==(const CritiqueReport&) const = default;

 private:
  std::vector<AspectScore> entries_;
  std::array<int, 5> component_totals_{};
  std::array<int, 5> component_max_{};
  int max_total_ = 0;
};

}  // namespace mcqg
