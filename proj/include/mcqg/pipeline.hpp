#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcqg/backend.hpp"
#include "mcqg/chat.hpp"
#include "mcqg/core.hpp"
#include "mcqg/prompts.hpp"
#include "mcqg/retrieval.hpp"
#include "mcqg/rubric.hpp"
#include "mcqg/session.hpp"

namespace mcqg {

struct PipelineConfig {
  double stop_threshold = 0.9;
  int max_rounds = 4;
  std::size_t shots_per_stage = 3;     ///< INIT exemplars requested per stage, 0-3
  int critique_retry_limit = 2;
  int reply_retry_limit = 1;           ///< every other stage
  std::size_t distractor_count = 3;    ///< 3 or 4
  std::size_t testpoint_candidates = 10;
  std::size_t max_topics = 5;
  std::size_t max_testpoints = 5;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
};

struct StopDecision {
  bool stop = false;
  std::optional<StopReason> reason;
};

/// Stop once the total strictly exceeds the threshold, or at max_rounds.
StopDecision should_stop(double normalized_total, int round_index, const PipelineConfig& config);
StopDecision should_stop(const CritiqueReport& report, int round_index, const PipelineConfig& config);

/// 1-based argmax; the earliest round wins ties. Throws on an empty span.
int select_best_round(std::span<const double> totals);
int select_best_round(const RefinementSession& session);

/// Option-shuffle seed for one answer call.
std::uint64_t answer_seed(std::uint64_t run_seed, std::string_view case_id, int round_index);

/// Hand-written exemplars for the stages that use fixed shots.
struct FewShotPack {
  std::vector<FewShotExample> answer;
  std::map<Component, std::vector<FewShotExample>> critique;
  std::vector<FewShotExample> correction;

  /// Reads answer.jsonl, critique.jsonl and correction.jsonl from `dir`.
  /// Each line: {"id", "context", "question", "options", "answer",
  /// "reasoning"?, "component"? (critique only), "extras"?: {name: text}}.
  static FewShotPack load(const std::filesystem::path& dir);
};

struct PipelineResources {
  std::shared_ptr<ChatBackend> backend;
  std::shared_ptr<const TemplatePack> templates;
  std::shared_ptr<const RubricRegistry> rubric;
  std::shared_ptr<const Retriever> question_bank;  ///< INIT exemplars; may be null
  std::shared_ptr<const Retriever> outline;        ///< test-point candidates; may be null
  std::shared_ptr<const FewShotPack> fewshot;
  ModelSettings model;
};

/// The case plus its identified topics and test points.
struct ItemContext {
  const MedicalCase& medical_case;
  std::span<const TopicLabel> topics;
  std::span<const TestPoint> testpoints;
};

/// clinical_note, topic and keypoint bindings.
Bindings item_bindings(const ItemContext& item);

/// "Context: ...\nQuestion: ...\nCorrect answer: ...\nDistractor options: ...".
std::string format_mcq(const Mcq& mcq);

/// Scores `aspects` with one critique call per component that has members.
/// Shared by the refinement loop and the rating judge.
std::vector<AspectScore> critique_aspects(const PipelineResources& res, const PipelineConfig& config,
                                          const ItemContext& item, const Mcq& mcq,
                                          const AnswerAttempt& attempt,
                                          std::span<const Aspect* const> aspects);

/// Generate, answer, critique, correct. Stateless apart from its resources,
/// so one instance can serve concurrent sessions.
class Pipeline {
 public:
  Pipeline(PipelineResources resources, PipelineConfig config);

  /// At most max_topics registry topics. Unknown names are dropped with a
  /// warning. ParseError when none survive one retry.
  std::vector<TopicLabel> identify_topics(const MedicalCase& medical_case,
                                          std::vector<std::string>* warnings = nullptr) const;

  /// At most max_testpoints. A concept echoing an outline candidate carries
  /// its section; anything else is derived-from-case. ValidationError on an
  /// empty topic list.
  std::vector<TestPoint> identify_testpoints(const MedicalCase& medical_case,
                                             std::span<const TopicLabel> topics,
                                             std::vector<std::string>* warnings = nullptr) const;

  /// Outline concepts handed to the test-point prompt.
  std::vector<TestPoint> testpoint_candidates(const MedicalCase& medical_case,
                                              std::span<const TopicLabel> topics) const;

  Mcq init_mcq(const ItemContext& item) const;
  AnswerAttempt answer_mcq(const Mcq& mcq, std::uint64_t seed) const;
  CritiqueReport critique(const ItemContext& item, const Mcq& mcq, const AnswerAttempt& attempt) const;
  Mcq correct(const ItemContext& item, const Mcq& mcq, const AnswerAttempt& attempt,
              const CritiqueReport& report) const;

  /// The whole loop. Stage failures end the run early and are recorded in
  /// session.error; the rounds completed so far are kept.
  RefinementSession refine(const MedicalCase& medical_case, std::span<const TopicLabel> topics,
                           std::span<const TestPoint> testpoints) const;

  const PipelineConfig& config() const noexcept { return config_; }
  const PipelineResources& resources() const noexcept { return res_; }

 private:
  std::string render_text(TemplateId id, const Bindings& bindings,
                          std::span<const Bindings> shots = {}) const;

  PipelineResources res_;
  PipelineConfig config_;
};

}  // namespace mcqg
