#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcqg/rubric.hpp"

namespace mcqg {

enum class TemplateId {
  init_context,
  init_question,
  init_answer,
  init_distractors,
  answer,
  critique,
  critique_reasoning,
  correction,
  identify_topics,
  identify_testpoints,
  compare,
};

std::string_view template_name(TemplateId id);
TemplateId parse_template_id(std::string_view name);  ///< throws ConfigError

using Bindings = std::map<std::string, std::string, std::less<>>;

/// One template file. The text is split into three blocks:
///
///   [header]  emitted once, before the shots
///   [shot]    emitted once per few-shot view
///   [body]    the task itself
///
/// Placeholders are `{name}`; `{{` and `}}` are literal braces. A shot line
/// starting with `?` is dropped, together with one following blank line, when
/// any of its placeholders resolves to an empty string.
class PromptTemplate {
 public:
  static PromptTemplate parse(TemplateId id, std::string_view text);

  TemplateId id() const noexcept { return id_; }
  const std::string& header() const noexcept { return header_; }
  const std::string& shot() const noexcept { return shot_; }
  const std::string& body() const noexcept { return body_; }

  /// Placeholders used by header + body; every one must be bound.
  const std::set<std::string, std::less<>>& required_placeholders() const noexcept {
    return required_;
  }
  /// Placeholders used by the shot block.
  const std::set<std::string, std::less<>>& shot_placeholders() const noexcept {
    return shot_fields_;
  }

  std::size_t min_shots = 0;
  std::size_t max_shots = 0;

 private:
  TemplateId id_{};
  std::string header_;
  std::string shot_;
  std::string body_;
  std::set<std::string, std::less<>> required_;
  std::set<std::string, std::less<>> shot_fields_;
};

/// A directory of templates plus manifest.json:
///   {"pack_id": ..., "templates": [{"id", "file", "min_shots", "max_shots",
///    "required": [...], "sha256": ...}]}
/// Loading checks each checksum and that "required" equals the placeholders
/// actually present in the file.
class TemplatePack {
 public:
  static TemplatePack load(const std::filesystem::path& dir);

  const std::string& pack_id() const noexcept { return pack_id_; }
  const PromptTemplate& get(TemplateId id) const;
  bool contains(TemplateId id) const { return templates_.count(id) != 0; }

 private:
  std::string pack_id_;
  std::map<TemplateId, PromptTemplate> templates_;
};

struct RenderResult {
  std::string text;
  std::size_t shot_count = 0;
  /// Bindings that no placeholder consumed. Reported, never fatal.
  std::vector<std::string> unused_bindings;
};

/// Byte-exact substitution. Shot placeholders resolve from the shot view
/// first, then from `bindings`. Throws ValidationError on a missing binding
/// or when the shot count falls outside [min_shots, max_shots].
RenderResult render(const PromptTemplate& tmpl, const Bindings& bindings,
                    std::span<const Bindings> shots = {});

/// A retrieved or hand-written exemplar item. Extra fields (reasoning,
/// per-component feedback, the clinical note it came from) live in `extras`.
struct FewShotExample {
  std::string id;
  std::string context;
  std::string question;
  std::vector<std::string> options;
  std::string answer;
  Bindings extras;

  std::vector<std::string> distractors() const;
  std::optional<std::string> extra(std::string_view key) const;
};

/// Labeled text of the fields a generation stage may see: context only for
/// "context"; context and question for "question"; plus the answer for
/// "correct_answer"; all four for "distractors". A non-empty
/// "<component>_feedback" extra is appended for each retained component.
/// Throws ValidationError for any other component id.
std::string trim_example(const FewShotExample& example, std::string_view component);

/// Values for the [shot] block of `id`, already trimmed for the stage.
Bindings shot_view(const FewShotExample& example, TemplateId id);

/// "a; b; c".
std::string join(std::span<const std::string> parts, std::string_view sep);

}  // namespace mcqg
