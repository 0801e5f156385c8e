#include "mcqg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mcqg/error.hpp"
#include "mcqg/random.hpp"

namespace mcqg {

using json = nlohmann::json;

void PipelineConfig::validate() const {
  if (!(stop_threshold > 0.0 && stop_threshold <= 1.0)) {
    throw ConfigError("stop_threshold must be in (0, 1]");
  }
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (shots_per_stage > 3) throw ConfigError("shots_per_stage must be in [0, 3]");
  if (critique_retry_limit < 0 || reply_retry_limit < 0) {
    throw ConfigError("retry limits must be non-negative");
  }
  if (distractor_count < kMinDistractors || distractor_count > kMaxDistractors) {
    throw ConfigError("distractor_count must be 3 or 4");
  }
  if (testpoint_candidates < 1) throw ConfigError("testpoint_candidates must be >= 1");
  if (max_topics < 1 || max_testpoints < 1) throw ConfigError("topic/test point caps must be >= 1");
}

json PipelineConfig::to_json() const {
  return {{"stop_threshold", stop_threshold},
          {"max_rounds", max_rounds},
          {"shots_per_stage", shots_per_stage},
          {"critique_retry_limit", critique_retry_limit},
          {"reply_retry_limit", reply_retry_limit},
          {"distractor_count", distractor_count},
          {"testpoint_candidates", testpoint_candidates},
          {"max_topics", max_topics},
          {"max_testpoints", max_testpoints},
          {"seed", seed}};
}

StopDecision should_stop(double normalized_total, int round_index, const PipelineConfig& config) {
  if (normalized_total > config.stop_threshold) return {true, StopReason::threshold};
  if (round_index >= config.max_rounds) return {true, StopReason::max_rounds};
  return {};
}

StopDecision should_stop(const CritiqueReport& report, int round_index, const PipelineConfig& config) {
  return should_stop(report.normalized_total(), round_index, config);
}

int select_best_round(std::span<const double> totals) {
  if (totals.empty()) throw ValidationError("select_best_round: no rounds");
  std::size_t best = 0;
  for (std::size_t i = 1; i < totals.size(); ++i) {
    if (totals[i] > totals[best]) best = i;
  }
  return static_cast<int>(best + 1);
}

int select_best_round(const RefinementSession& session) {
  std::vector<double> totals;
  for (const auto& r : session.rounds) totals.push_back(r.critique.normalized_total());
  return select_best_round(totals);
}

std::uint64_t answer_seed(std::uint64_t run_seed, std::string_view case_id, int round_index) {
  return mix_seed(mix_seed(run_seed, fnv1a64(case_id)), static_cast<std::uint64_t>(round_index));
}

namespace {

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

FewShotExample exemplar_from_record(const json& record) {
  Document doc;
  doc.id = record.value("id", "");
  doc.payload = record;
  FewShotExample ex = exemplar_from_payload(doc);
  if (record.contains("extras")) {
    for (const auto& [k, v] : record["extras"].items()) ex.extras[k] = v.get<std::string>();
  }
  return ex;
}

}  // namespace

FewShotPack FewShotPack::load(const std::filesystem::path& dir) {
  FewShotPack pack;
  try {
    for (const auto& r : read_jsonl(dir / "answer.jsonl")) pack.answer.push_back(exemplar_from_record(r));
    for (const auto& r : read_jsonl(dir / "critique.jsonl")) {
      pack.critique[parse_component(r.at("component").get<std::string>())].push_back(
          exemplar_from_record(r));
    }
    for (const auto& r : read_jsonl(dir / "correction.jsonl")) {
      pack.correction.push_back(exemplar_from_record(r));
    }
  } catch (const ValidationError& e) {
    throw ConfigError("few-shot pack " + dir.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("few-shot pack " + dir.string() + ": " + e.what());
  }
  return pack;
}

Bindings item_bindings(const ItemContext& item) {
  return {{"clinical_note", item.medical_case.text},
          {"topic", topic_text(item.topics)},
          {"keypoint", keypoint_text(item.testpoints)}};
}

std::string format_mcq(const Mcq& mcq) {
  return "Context: " + mcq.context + "\nQuestion: " + mcq.question +
         "\nCorrect answer: " + mcq.correct_answer +
         "\nDistractor options: " + join(mcq.distractors, "; ");
}

namespace {

std::string attempted_answer(const AnswerAttempt& a) {
  return std::string(1, a.chosen_option) + ". " + a.chosen_text;
}

std::vector<Bindings> views(std::span<const FewShotExample> examples, TemplateId id, std::size_t limit) {
  std::vector<Bindings> out;
  for (std::size_t i = 0; i < examples.size() && i < limit; ++i) out.push_back(shot_view(examples[i], id));
  return out;
}

std::string render_with(const TemplatePack& pack, TemplateId id, const Bindings& bindings,
                        std::span<const Bindings> shots) {
  return render(pack.get(id), bindings, shots).text;
}

}  // namespace

std::vector<AspectScore> critique_aspects(const PipelineResources& res, const PipelineConfig& config,
                                          const ItemContext& item, const Mcq& mcq,
                                          const AnswerAttempt& attempt,
                                          std::span<const Aspect* const> aspects) {
  if (aspects.empty()) throw ValidationError("critique: empty aspect subset");
  Bindings base = item_bindings(item);
  base["context"] = mcq.context;
  base["question"] = mcq.question;
  base["correct_answer"] = mcq.correct_answer;
  base["distractor_options"] = join(mcq.distractors, "; ");
  base["attempted_answer"] = attempted_answer(attempt);
  base["reasoning"] = attempt.reasoning;

  std::vector<AspectScore> out;
  for (Component c : kComponents) {
    std::vector<const Aspect*> members;
    for (const Aspect* a : aspects) {
      if (a->component == c) members.push_back(a);
    }
    if (members.empty()) continue;
    Bindings b = base;
    b["component_name"] = std::string(component_label(c));
    b["reasoning_rubrics"] = rubric_lines(members);
    b["format_instructions"] = critique_format_instructions(members);
    std::string prompt;
    if (c == Component::reasoning) {
      prompt = render_with(*res.templates, TemplateId::critique_reasoning, b, {});
    } else {
      std::span<const FewShotExample> pool;
      if (auto it = res.fewshot->critique.find(c); it != res.fewshot->critique.end()) pool = it->second;
      const auto shots = views(pool, TemplateId::critique, 2);
      prompt = render_with(*res.templates, TemplateId::critique, b, shots);
    }
    auto scores = ask(*res.backend, res.model, std::move(prompt), config.critique_retry_limit,
                      [&](std::string_view reply) { return parse_critique_reply(reply, members); });
    for (auto& s : scores) out.push_back(std::move(s));
  }
  return out;
}

Pipeline::Pipeline(PipelineResources resources, PipelineConfig config)
    : res_(std::move(resources)), config_(config) {
  config_.validate();
  if (!res_.backend) throw ConfigError("pipeline needs a chat backend");
  if (!res_.templates) throw ConfigError("pipeline needs a template pack");
  if (!res_.rubric) res_.rubric = std::shared_ptr<const RubricRegistry>(&RubricRegistry::builtin(), [](auto*) {});
  if (!res_.fewshot) throw ConfigError("pipeline needs a few-shot pack");
}

std::string Pipeline::render_text(TemplateId id, const Bindings& bindings,
                                  std::span<const Bindings> shots) const {
  return render_with(*res_.templates, id, bindings, shots);
}

std::vector<TopicLabel> Pipeline::identify_topics(const MedicalCase& medical_case,
                                                  std::vector<std::string>* warnings) const {
  medical_case.validate();
  std::string list;
  std::string_view section;
  for (const auto& t : topic_registry()) {
    if (t.section != section) {
      section = t.section;
      list += (list.empty() ? "" : "\n") + t.section + ":";
    }
    list += "\n- " + t.name;
  }
  const std::string prompt =
      render_text(TemplateId::identify_topics, {{"topic_list", list}, {"clinical_note", medical_case.text}});
  std::vector<std::string> dropped;
  auto topics = ask(*res_.backend, res_.model, prompt, config_.reply_retry_limit,
                    [&](std::string_view reply) {
                      dropped.clear();
                      std::vector<TopicLabel> found;
                      for (const auto& item : parse_list_reply(reply, "Topic")) {
                        auto match = match_topic(item);
                        if (!match) {
                          dropped.push_back("dropped topic not in registry: " + item);
                          continue;
                        }
                        if (std::find(found.begin(), found.end(), *match) != found.end()) continue;
                        if (found.size() < config_.max_topics) found.push_back(*match);
                      }
                      if (found.empty()) {
                        throw ReplyRejected("no registry topic in reply",
                                            "None of those matched the topic list. Copy up to 5 topic "
                                            "names exactly as written in the list, one per line, in the "
                                            "format Topic: <topic name>.");
                      }
                      return found;
                    });
  if (warnings) warnings->insert(warnings->end(), dropped.begin(), dropped.end());
  return topics;
}

std::vector<TestPoint> Pipeline::testpoint_candidates(const MedicalCase& medical_case,
                                                      std::span<const TopicLabel> topics) const {
  std::vector<TestPoint> out;
  if (!res_.outline) return out;
  std::string query = medical_case.text;
  for (const auto& t : topics) query += "\n" + t.name;
  for (const auto& hit : res_.outline->search(query, config_.testpoint_candidates)) {
    out.push_back(testpoint_from_payload(res_.outline->document(hit.doc_id)));
  }
  return out;
}

std::vector<TestPoint> Pipeline::identify_testpoints(const MedicalCase& medical_case,
                                                     std::span<const TopicLabel> topics,
                                                     std::vector<std::string>* warnings) const {
  medical_case.validate();
  if (topics.empty()) throw ValidationError("identify_testpoints needs at least one topic");
  const auto candidates = testpoint_candidates(medical_case, topics);
  std::string listed;
  for (const auto& c : candidates) listed += (listed.empty() ? "- " : "\n- ") + c.concept_text;
  if (listed.empty()) listed = "(none)";
  const std::string prompt = render_text(
      TemplateId::identify_testpoints,
      {{"candidates", listed}, {"clinical_note", medical_case.text}, {"topic", topic_text(topics)}});
  std::vector<std::string> dropped;
  auto points = ask(*res_.backend, res_.model, prompt, config_.reply_retry_limit,
                    [&](std::string_view reply) {
                      dropped.clear();
                      std::vector<TestPoint> found;
                      for (const auto& item : parse_list_reply(reply, "Test point")) {
                        if (word_count(item) > kMaxTestPointWords) {
                          dropped.push_back("dropped test point over 20 words: " + item);
                          continue;
                        }
                        TestPoint tp{item, std::string(kDerivedFromCase)};
                        const auto key = normalize_label(item);
                        for (const auto& c : candidates) {
                          if (normalize_label(c.concept_text) == key) {
                            tp = c;
                            break;
                          }
                        }
                        if (std::find(found.begin(), found.end(), tp) != found.end()) continue;
                        if (found.size() < config_.max_testpoints) found.push_back(std::move(tp));
                      }
                      if (found.empty()) {
                        throw ReplyRejected("no test point in reply",
                                            "Write at least one test point, one per line, in the "
                                            "format Test point: <concept>.");
                      }
                      return found;
                    });
  if (warnings) warnings->insert(warnings->end(), dropped.begin(), dropped.end());
  return points;
}

Mcq Pipeline::init_mcq(const ItemContext& item) const {
  const Bindings base = item_bindings(item);
  McqPrefix prefix;
  auto shots_for = [&](TemplateId id) {
    std::vector<Bindings> out;
    if (!res_.question_bank || config_.shots_per_stage == 0) return out;
    for (const auto& ex : retrieve_shots(*res_.question_bank, item.medical_case, item.topics,
                                         item.testpoints, prefix, config_.shots_per_stage)) {
      out.push_back(shot_view(ex, id));
    }
    return out;
  };
  auto component = [&](TemplateId id, const Bindings& b, std::string_view label) {
    const auto shots = shots_for(id);
    return ask(*res_.backend, res_.model, render_text(id, b, shots), config_.reply_retry_limit,
               [&](std::string_view reply) {
                 auto text = strip_component_label(reply, label);
                 if (text.empty()) {
                   throw ReplyRejected("empty " + std::string(label),
                                       "Reply with the " + std::string(label) + " only, in the format " +
                                           std::string(label) + ": <text>.");
                 }
                 return text;
               });
  };

  Mcq mcq;
  mcq.context = component(TemplateId::init_context, base, "Context");
  prefix.context = mcq.context;

  Bindings b = base;
  b["context"] = mcq.context;
  mcq.question = component(TemplateId::init_question, b, "Question");
  prefix.question = mcq.question;

  b["question"] = mcq.question;
  mcq.correct_answer = component(TemplateId::init_answer, b, "Correct answer");
  prefix.correct_answer = mcq.correct_answer;

  const Bindings db = {{"context", mcq.context},
                       {"question", mcq.question},
                       {"correct_answer", mcq.correct_answer}};
  const auto shots = shots_for(TemplateId::init_distractors);
  mcq.distractors = ask(*res_.backend, res_.model, render_text(TemplateId::init_distractors, db, shots),
                        config_.reply_retry_limit, [&](std::string_view reply) {
                          return parse_distractors(reply, mcq.correct_answer, config_.distractor_count);
                        });
  mcq.validate();
  return mcq;
}

AnswerAttempt Pipeline::answer_mcq(const Mcq& mcq, std::uint64_t seed) const {
  mcq.validate();
  const ShuffledOptions options = shuffle_options(mcq, seed);
  const auto shots = views(res_.fewshot->answer, TemplateId::answer, 2);
  const std::string prompt = render_text(
      TemplateId::answer,
      {{"context", mcq.context}, {"question", mcq.question}, {"options", options.labeled()}}, shots);
  const ParsedAnswer parsed =
      ask(*res_.backend, res_.model, prompt, config_.reply_retry_limit, [&](std::string_view reply) {
        return parse_answer_reply(reply, options.options.size());
      });
  AnswerAttempt a;
  a.chosen_option = parsed.letter;
  a.chosen_text = options.options[*option_index(parsed.letter)];
  a.reasoning = parsed.reasoning;
  a.is_correct = parsed.letter == options.answer_key;
  return a;
}

CritiqueReport Pipeline::critique(const ItemContext& item, const Mcq& mcq,
                                  const AnswerAttempt& attempt) const {
  std::vector<const Aspect*> all;
  for (const auto& a : res_.rubric->aspects()) all.push_back(&a);
  return CritiqueReport::make(*res_.rubric, critique_aspects(res_, config_, item, mcq, attempt, all));
}

namespace {

std::string component_feedback(const RubricRegistry& rubric, const CritiqueReport& report, Component c) {
  std::string out;
  for (const Aspect* a : rubric.aspects_of(c)) {
    const auto& e = report.entry(a->id());
    if (!out.empty()) out += '\n';
    out += a->name + ": " + e.rationale + " (" + std::to_string(e.score) + "/" +
           std::to_string(a->max_score) + ")";
  }
  return out;
}

std::string component_score(const CritiqueReport& report, Component c) {
  return std::to_string(report.component_total(c)) + "/" + std::to_string(report.component_max(c));
}

}  // namespace

Mcq Pipeline::correct(const ItemContext& item, const Mcq& mcq, const AnswerAttempt& attempt,
                      const CritiqueReport& report) const {
  Bindings b = item_bindings(item);
  b["context"] = mcq.context;
  b["question"] = mcq.question;
  b["correct_answer"] = mcq.correct_answer;
  b["distractor_options"] = join(mcq.distractors, "; ");
  b["attempted_answer"] = attempted_answer(attempt);
  b["reasoning"] = attempt.reasoning;
  const std::pair<Component, const char*> slots[] = {
      {Component::context, "context"},
      {Component::question, "question"},
      {Component::correct_answer, "correct_answer"},
      {Component::distractors, "distractor_option"},
      {Component::reasoning, "reasoning"},
  };
  for (const auto& [c, name] : slots) {
    b[std::string(name) + "_feedback"] = component_feedback(*res_.rubric, report, c);
    b[std::string(name) + "_score"] = component_score(report, c);
  }
  const auto shots = views(res_.fewshot->correction, TemplateId::correction, 3);
  return ask(*res_.backend, res_.model, render_text(TemplateId::correction, b, shots),
             config_.reply_retry_limit, [&](std::string_view reply) {
               return parse_mcq_reply(reply, config_.distractor_count);
             });
}

RefinementSession Pipeline::refine(const MedicalCase& medical_case, std::span<const TopicLabel> topics,
                                   std::span<const TestPoint> testpoints) const {
  RefinementSession session;
  session.case_id = medical_case.id;
  session.topics.assign(topics.begin(), topics.end());
  session.testpoints.assign(testpoints.begin(), testpoints.end());
  session.template_pack_id = res_.templates->pack_id();
  const ItemContext item{medical_case, session.topics, session.testpoints};

  std::string stage = "init";
  try {
    medical_case.validate();
    Mcq mcq = init_mcq(item);
    for (int round = 1;; ++round) {
      stage = "answer";
      AnswerAttempt attempt = answer_mcq(mcq, answer_seed(config_.seed, medical_case.id, round));
      stage = "critique";
      CritiqueReport report = critique(item, mcq, attempt);
      session.rounds.push_back({round, mcq, attempt, report});
      const auto decision = should_stop(report, round, config_);
      if (decision.stop) {
        session.stop_reason = decision.reason;
        break;
      }
      stage = "correction";
      mcq = correct(item, mcq, attempt, report);
    }
  } catch (const ParseError& e) {
    session.error = StageError{stage, e.what(), e.raw_reply()};
  } catch (const Error& e) {
    session.error = StageError{stage, e.what(), ""};
  }
  if (!session.rounds.empty()) session.best_round_index = select_best_round(session);
  return session;
}

}  // namespace mcqg
