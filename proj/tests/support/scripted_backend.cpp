#include "scripted_backend.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mcqg/rubric.hpp"

#ifndef MCQG_TEST_DATA_DIR
#define MCQG_TEST_DATA_DIR "data"
#endif

namespace mcqg::testing {

using json = nlohmann::json;

Stage classify(std::string_view prompt) {
  static const std::vector<std::pair<std::string_view, Stage>> markers = {
      {"Select at most 5 topics from the list", Stage::identify_topics},
      {"Write at most 5 test points", Stage::identify_testpoints},
      {"Generate a context(not the question", Stage::init_context},
      {"Generate a one line question", Stage::init_question},
      {"Generate the correct answer(in the format", Stage::init_answer},
      {"Generate distractor options(in the format", Stage::init_distractors},
      {"Answer the USMLE question and provide a step by step", Stage::answer},
      {"Give the output in just this format:", Stage::critique},
      {"Improve the context,question, correct answer", Stage::correction},
      {"Indicate which question is better", Stage::compare},
  };
  for (const auto& [marker, stage] : markers) {
    if (prompt.find(marker) != std::string_view::npos) return stage;
  }
  return Stage::unknown;
}

int round_marker(std::string_view text) {
  const auto at = text.rfind("[r");
  if (at == std::string_view::npos) return 0;
  int n = 0;
  for (std::size_t i = at + 2; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
    n = n * 10 + (text[i] - '0');
  }
  return n;
}

int scripted_score(std::size_t registry_index, int raw_total) {
  const int n = static_cast<int>(RubricRegistry::builtin().aspects().size());
  return raw_total / n + (static_cast<int>(registry_index) < raw_total % n ? 1 : 0);
}

namespace {

std::string after_last(const std::string& text, std::string_view marker) {
  const auto at = text.rfind(marker);
  return at == std::string::npos ? "" : text.substr(at + marker.size());
}

std::string line_after_last(const std::string& text, std::string_view marker) {
  std::string rest = after_last(text, marker);
  return rest.substr(0, rest.find('\n'));
}

std::string between(const std::string& text, std::string_view open, std::string_view close) {
  const auto a = text.find(open);
  if (a == std::string::npos) return "";
  const auto start = a + open.size();
  const auto b = text.find(close, start);
  return text.substr(start, b == std::string::npos ? std::string::npos : b - start);
}

std::string context_text(int round) {
  return "A young woman has a firm scar growing past the margins of an earlobe piercing made months ago. [r" +
         std::to_string(round) + "]";
}

const char* kQuestion = "Which process best explains the lesion?";
const std::vector<std::string> kDistractors = {"Myofibroblast contraction of the wound",
                                               "Granuloma around a foreign body",
                                               "Melanocyte proliferation at the junction"};

std::string component_of(const std::string& prompt) {
  if (prompt.find("Reasoning rubrics:") != std::string::npos) return "reasoning";
  for (Component c : kComponents) {
    if (prompt.find(std::string(component_label(c)) + " reasoning-based rubrics:") != std::string::npos) {
      return std::string(component_id(c));
    }
  }
  return "";
}

}  // namespace

ScriptedBackend::ScriptedBackend(ScriptedOptions options) : options_(std::move(options)) {}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  std::string prompt;
  for (const auto& m : request.messages) {
    if (m.role == "user") {
      prompt = m.text;
      break;
    }
  }
  const Stage stage = classify(prompt);
  {
    std::lock_guard lock(mu_);
    ++calls_[stage];
    auto q = options_.queued.find(stage);
    if (q != options_.queued.end() && !q->second.empty()) {
      ChatResponse r;
      r.text = q->second.front();
      q->second.erase(q->second.begin());
      r.finish_reason = "stop";
      return r;
    }
  }
  ChatResponse r;
  r.text = reply_for(stage, prompt);
  r.finish_reason = "stop";
  return r;
}

std::string ScriptedBackend::reply_for(Stage stage, const std::string& prompt) {
  switch (stage) {
    case Stage::identify_topics: {
      const auto topics = topic_registry();
      return "Topic: " + topics[1].name + "\nTopic: " + topics[12].name + "\nTopic: Not a registry topic";
    }
    case Stage::identify_testpoints: {
      const std::string first = between(prompt, "Candidate concepts:\n- ", "\n");
      return "Test point: " + first + "\nTest point: scar growing after ear piercing";
    }
    case Stage::init_context:
      return "Context: " + context_text(1);
    case Stage::init_question:
      return std::string("Question: ") + kQuestion;
    case Stage::init_answer:
      return "Correct answer: " + options_.correct_answer;
    case Stage::init_distractors:
      return "Distractor options:\na) " + kDistractors[0] + "\nb) " + kDistractors[1] + "\nc) " + kDistractors[2];
    case Stage::answer: {
      const std::string options = between(after_last(prompt, "\nOptions: "), "", "\n\nCorrect answer:");
      std::istringstream in(options);
      std::string line;
      char pick = 'A';
      char other = 'A';
      while (std::getline(in, line)) {
        if (line.size() < 3) continue;
        if (line.substr(3) == options_.correct_answer) {
          pick = line[0];
        } else {
          other = line[0];
        }
      }
      if (!options_.answer_correctly) pick = other;
      return std::string(1, pick) + "\nReasoning: The lesion extends beyond the wound, so option " + pick +
             " fits best and the others are ruled out.";
    }
    case Stage::critique: {
      const int round = std::max(1, round_marker(prompt));
      const auto& totals = options_.round_totals;
      const int raw = totals[std::min<std::size_t>(round - 1, totals.size() - 1)];
      const std::string component = component_of(prompt);
      const json skeleton = json::parse(line_after_last(prompt, "Give the output in just this format: "));
      const auto& registry = RubricRegistry::builtin();
      json reply = json::object();
      int sum = 0;
      int max = 0;
      for (const auto& [slug, value] : skeleton.items()) {
        if (slug == "total_score") continue;
        const std::size_t index = registry.index_of(component + "." + slug);
        const int s = scripted_score(index, raw);
        sum += s;
        max += 5;
        reply[slug] = {{"feedback", "Scripted feedback for " + slug + "."}, {"score", std::to_string(s) + "/5"}};
      }
      reply["total_score"] = std::to_string(sum) + "/" + std::to_string(max);
      return reply.dump();
    }
    case Stage::correction: {
      const int round = round_marker(after_last(prompt, "Clinical Note: "));
      return "Context: " + context_text(round + 1) + "\nQuestion: " + kQuestion + "\nCorrect answer: " +
             options_.correct_answer + "\nDistractor options: " + kDistractors[0] + "; " + kDistractors[1] + "; " +
             kDistractors[2];
    }
    case Stage::compare: {
      const std::string first = between(prompt, "Question 1:\n", "\n\nQuestion 2:\n");
      const std::string second = between(prompt, "Question 2:\n", "\n\nIndicate which question is better");
      if (options_.compare) return options_.compare(first, second);
      return "Both are equally good.\nPreference Response: tie";
    }
    case Stage::unknown:
      break;
  }
  return "I cannot help with that.";
}

std::size_t ScriptedBackend::calls(Stage stage) const {
  std::lock_guard lock(mu_);
  auto it = calls_.find(stage);
  return it == calls_.end() ? 0 : it->second;
}

std::size_t ScriptedBackend::total_calls() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [s, c] : calls_) n += c;
  return n;
}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
  }
  return inner_->complete(request);
}

std::vector<ChatRequest> RecordingBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::string transcript(const ChatRequest& request) {
  std::string out;
  for (const auto& m : request.messages) out += "### " + m.role + "\n" + m.text + "\n";
  return out;
}

std::filesystem::path data_dir() { return MCQG_TEST_DATA_DIR; }

PipelineResources shipped_resources(std::shared_ptr<ChatBackend> backend) {
  PipelineResources r;
  r.backend = std::move(backend);
  r.templates = std::make_shared<const TemplatePack>(TemplatePack::load(data_dir() / "templates" / "v1"));
  r.rubric = std::make_shared<const RubricRegistry>(RubricRegistry::builtin());
  r.fewshot = std::make_shared<const FewShotPack>(FewShotPack::load(data_dir() / "fewshot"));
  r.question_bank = std::make_shared<const Bm25Index>(load_corpus(data_dir() / "corpora" / "question_bank.jsonl"));
  r.outline = std::make_shared<const Bm25Index>(load_corpus(data_dir() / "corpora" / "outline.jsonl"));
  return r;
}

SampleItem sample_item() {
  std::ifstream in(data_dir() / "cases" / "sample_cases.jsonl");
  std::string line;
  std::getline(in, line);
  const json j = json::parse(line);
  SampleItem s;
  s.medical_case.id = j.at("id").get<std::string>();
  s.medical_case.text = j.at("text").get<std::string>();
  s.topics = {topic_registry()[1]};
  s.testpoints = {TestPoint{"keloid formation", "Skin & Subcutaneous Tissue"}};
  return s;
}

Mcq sample_mcq(std::string_view tag) {
  Mcq m;
  m.context = "A woman has a growing scar on her earlobe." + std::string(tag.empty() ? "" : " ") + std::string(tag);
  m.question = kQuestion;
  m.correct_answer = "Excess disorganized collagen deposition";
  m.distractors = kDistractors;
  return m;
}

}  // namespace mcqg::testing
