#include "mcqg/rubric.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mcqg/error.hpp"

namespace mcqg {

std::string_view component_id(Component c) {
  switch (c) {
    case Component::context: return "context";
    case Component::question: return "question";
    case Component::correct_answer: return "correct_answer";
    case Component::distractors: return "distractors";
    case Component::reasoning: return "reasoning";
  }
  return "";
}

std::string_view component_label(Component c) {
  switch (c) {
    case Component::context: return "Context";
    case Component::question: return "Question";
    case Component::correct_answer: return "Correct answer";
    case Component::distractors: return "Distractor options";
    case Component::reasoning: return "Reasoning";
  }
  return "";
}

Component parse_component(std::string_view id) {
  for (Component c : kComponents) {
    if (component_id(c) == id) return c;
  }
  throw ValidationError("unknown component id: " + std::string(id));
}

std::string Aspect::slug() const {
  std::string out;
  bool gap = false;
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      if (gap && !out.empty()) out.push_back('_');
      gap = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      gap = true;
    }
  }
  return out;
}

std::string Aspect::id() const { return std::string(component_id(component)) + "." + slug(); }

RubricRegistry::RubricRegistry(std::string version, std::vector<Aspect> aspects)
    : version_(std::move(version)), aspects_(std::move(aspects)) {
  if (version_.empty()) throw ValidationError("rubric: empty version");
  std::set<std::string> ids;
  std::set<Component> seen;
  for (const auto& a : aspects_) {
    if (a.name.empty()) throw ValidationError("rubric: aspect without a name");
    if (a.max_score <= 0) throw ValidationError("rubric: non-positive max score for " + a.id());
    if (!ids.insert(a.id()).second) throw ValidationError("rubric: duplicate aspect " + a.id());
    seen.insert(a.component);
  }
  if (seen.size() != kComponents.size()) {
    throw ValidationError("rubric: every component needs at least one aspect");
  }
}

const RubricRegistry& RubricRegistry::builtin() {
  static const RubricRegistry reg = [] {
    using C = Component;
    std::vector<Aspect> a = {
        {C::context, "Relevant", "The context is relevant to the given topic."},
        {C::context, "Concise",
         "The context avoids extraneous information and is not a copy of the clinical note."},
        {C::context, "Coherent", "The context is built up organically toward the question at the end."},
        {C::context, "Consistent", "The context agrees with the clinical note and the topic."},
        {C::context, "Specific", "The context is specific and addresses the topic."},
        {C::context, "Fluent", "Grammar and the flow of words and ideas are fluent."},
        {C::context, "Clueing",
         "Diagnoses are clued through symptoms and findings instead of being named outright."},
        {C::context, "Completeness",
         "No gaps or missing information that would make the question ambiguous."},
        {C::context, "Misdirection",
         "The context does not mislead the test taker, intentionally or not."},
        {C::question, "Relevant",
         "The question is answerable from the context and does not appear abruptly."},
        {C::question, "Clear", "The question is neither vague nor ambiguous."},
        {C::question, "Concluding", "The question follows naturally from the flow of the context."},
        {C::question, "Difficulty", "The question is not too easy."},
        {C::question, "Clarity",
         "The wording leaves no room for interpretations that lead to a wrong answer."},
        {C::correct_answer, "Relevant", "The correct answer is the keypoint or closely related to it."},
        {C::correct_answer, "Occurrence",
         "Neither the answer nor its variants or directly related concepts appear in the context."},
        {C::correct_answer, "Justification",
         "The answer is logically supported by the context and the given information."},
        {C::correct_answer, "Depth of Understanding",
         "Choosing the answer requires a nuanced grasp of the context and concepts."},
        {C::correct_answer, "Prevention of Guesswork",
         "The answer cannot be reached by guessing and avoids common misconceptions."},
        {C::distractors, "Format",
         "Distractors share the correct answer's format (abbreviation, phrase, explanation)."},
        {C::distractors, "Length", "Distractors have a length similar to the correct answer."},
        {C::distractors, "Relation",
         "Distractors are the same kind of medical entity as, or conceptually related to, the answer."},
        {C::distractors, "Variation", "Distractors are distinct from each other and from the answer."},
        {C::distractors, "Plausibility",
         "Options fit the context and make the test taker think critically."},
        {C::distractors, "Differentiation",
         "Options are distinct and the correct answer clearly wins on the available information."},
        {C::distractors, "Common Mistakes",
         "Distractors reflect common misconceptions, testing genuine understanding."},
        {C::reasoning, "Logical Flow",
         "Each step of the reasoning follows from the previous one without jumps."},
        {C::reasoning, "Evidence-Based Reasoning",
         "The reasoning cites findings from the context to support each claim."},
        {C::reasoning, "Consideration of Options",
         "Every option is weighed and the rejected ones are ruled out explicitly."},
        {C::reasoning, "Correctness",
         "The reasoning reaches the keyed correct answer without medical errors."},
    };
    return RubricRegistry("v1", std::move(a));
  }();
  return reg;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

RubricRegistry RubricRegistry::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string version;
  std::vector<Aspect> aspects;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# rubric ", 0) == 0) {
      version = line.substr(9);
      continue;
    }
    if (line[0] == '#') continue;
    auto cells = split_tabs(line);
    if (cells.size() != 4) {
      throw ConfigError("rubric line " + std::to_string(lineno) + ": expected 4 tab-separated fields");
    }
    if (!header_seen && cells[0] == "component") {
      header_seen = true;
      continue;
    }
    Aspect a{parse_component(cells[0]), cells[1], cells[2], 0};
    try {
      std::size_t used = 0;
      a.max_score = std::stoi(cells[3], &used);
      if (used != cells[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("rubric line " + std::to_string(lineno) + ": bad max_score '" + cells[3] + "'");
    }
    aspects.push_back(std::move(a));
  }
  if (version.empty()) throw ConfigError("rubric: missing '# rubric <version>' line");
  return RubricRegistry(version, std::move(aspects));
}

RubricRegistry RubricRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open rubric file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RubricRegistry::serialize() const {
  std::ostringstream out;
  out << "# rubric " << version_ << '\n';
  out << "component\taspect\tdescription\tmax_score\n";
  for (const auto& a : aspects_) {
    out << component_id(a.component) << '\t' << a.name << '\t' << a.description << '\t'
        << a.max_score << '\n';
  }
  return out.str();
}

std::vector<const Aspect*> RubricRegistry::aspects_of(Component c) const {
  std::vector<const Aspect*> out;
  for (const auto& a : aspects_) {
    if (a.component == c) out.push_back(&a);
  }
  return out;
}

const Aspect* RubricRegistry::find(std::string_view aspect_id) const {
  for (const auto& a : aspects_) {
    if (a.id() == aspect_id) return &a;
  }
  return nullptr;
}

std::size_t RubricRegistry::index_of(std::string_view aspect_id) const {
  for (std::size_t i = 0; i < aspects_.size(); ++i) {
    if (aspects_[i].id() == aspect_id) return i;
  }
  throw ValidationError("unknown aspect id: " + std::string(aspect_id));
}

int RubricRegistry::component_max(Component c) const {
  int total = 0;
  for (const auto& a : aspects_) {
    if (a.component == c) total += a.max_score;
  }
  return total;
}

int RubricRegistry::max_total() const {
  int total = 0;
  for (const auto& a : aspects_) total += a.max_score;
  return total;
}

bool RubricRegistry::operator==(const RubricRegistry& other) const {
  if (version_ != other.version_ || aspects_.size() != other.aspects_.size()) return false;
  for (std::size_t i = 0; i < aspects_.size(); ++i) {
    const auto& x = aspects_[i];
    const auto& y = other.aspects_[i];
    if (x.component != y.component || x.name != y.name || x.description != y.description ||
        x.max_score != y.max_score) {
      return false;
    }
  }
  return true;
}

CritiqueReport CritiqueReport::make(const RubricRegistry& registry,
                                    std::vector<AspectScore> entries) {
  std::map<std::string, AspectScore> by_id;
  for (auto& e : entries) {
    const Aspect* aspect = registry.find(e.aspect_id);
    if (!aspect) throw ValidationError("critique: unknown aspect " + e.aspect_id);
    if (e.score < 0 || e.score > aspect->max_score) {
      throw ValidationError("critique: score " + std::to_string(e.score) + " out of range for " +
                            e.aspect_id);
    }
    std::string id = e.aspect_id;
    if (!by_id.emplace(id, std::move(e)).second) {
      throw ValidationError("critique: aspect listed twice: " + id);
    }
  }
  CritiqueReport report;
  report.max_total_ = registry.max_total();
  for (const auto& aspect : registry.aspects()) {
    auto it = by_id.find(aspect.id());
    if (it == by_id.end()) throw ValidationError("critique: missing aspect " + aspect.id());
    const auto slot = static_cast<std::size_t>(aspect.component);
    report.component_totals_[slot] += it->second.score;
    report.component_max_[slot] += aspect.max_score;
    report.entries_.push_back(std::move(it->second));
  }
  return report;
}

const AspectScore& CritiqueReport::entry(std::string_view aspect_id) const {
  for (const auto& e : entries_) {
    if (e.aspect_id == aspect_id) return e;
  }
  throw ValidationError("critique: no entry for aspect " + std::string(aspect_id));
}

int CritiqueReport::component_total(Component c) const {
  return component_totals_[static_cast<std::size_t>(c)];
}

int CritiqueReport::component_total(std::string_view component) const {
  return component_total(parse_component(component));
}

int CritiqueReport::component_max(Component c) const {
  return component_max_[static_cast<std::size_t>(c)];
}

int CritiqueReport::raw_total() const {
  int total = 0;
  for (int t : component_totals_) total += t;
  return total;
}

double CritiqueReport::normalized_total() const {
  if (max_total_ == 0) return 0.0;
  return static_cast<double>(raw_total()) / static_cast<double>(max_total_);
}

double CritiqueReport::normalized_component(Component c) const {
  const int max = component_max(c);
  if (max == 0) return 0.0;
  return static_cast<double>(component_total(c)) / static_cast<double>(max);
}

}  // namespace mcqg
