#include "mcqg/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mcqg {

using json = nlohmann::json;

namespace {

constexpr std::string_view kContext = "Context";
constexpr std::string_view kQuestion = "Question";
constexpr std::string_view kAnswer = "Correct answer";
constexpr std::string_view kDistractors = "Distractor options";
constexpr std::array<std::string_view, 4> kMcqLabels = {kContext, kQuestion, kAnswer, kDistractors};

// Labels that can appear in a correction reply but carry nothing we keep.
constexpr std::array<std::string_view, 6> kIgnoredLabels = {
    "Attempted answer", "Reasoning", "Clinical note", "Topic", "Keypoint", "Options"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

// Drops leading whitespace, markdown heading marks and emphasis.
std::string_view strip_decoration(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) || line[i] == '*' ||
                             line[i] == '#' || line[i] == '_')) {
    ++i;
  }
  return line.substr(i);
}

// If `line` opens with "<label>:" (optionally "**label:**"), returns the rest.
std::optional<std::string> after_label(std::string_view line, std::string_view label) {
  const auto body = strip_decoration(line);
  if (body.size() <= label.size()) return std::nullopt;
  if (lower(body.substr(0, label.size())) != lower(label)) return std::nullopt;
  std::size_t i = label.size();
  while (i < body.size() && (body[i] == '*' || body[i] == ' ')) ++i;
  if (i >= body.size() || body[i] != ':') return std::nullopt;
  ++i;
  while (i < body.size() && (body[i] == '*' || body[i] == ' ')) ++i;
  return std::string(body.substr(i));
}

bool is_feedback_label(std::string_view line) {
  static const std::regex re(R"(^[A-Za-z][A-Za-z ]{0,40}(feedback|score)\s*\**\s*:)",
                             std::regex::icase);
  static const std::regex heading(R"(^(feedback for the above components|feedback on the generated content)\b)",
                                  std::regex::icase);
  const std::string body(strip_decoration(line));
  return std::regex_search(body, re) || std::regex_search(body, heading);
}

std::string strip_marker(std::string_view item) {
  static const std::regex marker(R"(^\s*(?:[-*•]+\s*|\(?[a-eA-E][\)\.]\s+|\(?\d{1,2}[\)\.]\s+))");
  return trim(std::regex_replace(std::string(item), marker, "", std::regex_constants::format_first_only));
}

}  // namespace

std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

LabeledSections::LabeledSections(std::string_view reply, std::span<const std::string_view> labels) {
  // Longest label first so "Correct answer" wins over "Answer".
  std::vector<std::string_view> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end(),
            [](std::string_view a, std::string_view b) { return a.size() > b.size(); });
  std::string current;  // "" is the preamble
  std::string buffer;
  bool discard = false;
  auto commit = [&] {
    if (!discard) sections_.emplace_back(current, trim(buffer));
    buffer.clear();
  };
  for (const auto& line : lines_of(reply)) {
    std::optional<std::string> rest;
    std::string_view hit;
    for (auto label : sorted) {
      if ((rest = after_label(line, label))) {
        hit = label;
        break;
      }
    }
    if (rest) {
      commit();
      current = lower(hit);
      discard = false;
      buffer = *rest;
      continue;
    }
    if (is_feedback_label(line)) {
      commit();
      discard = true;
      continue;
    }
    bool ignored = false;
    for (auto label : kIgnoredLabels) {
      if (std::find(sorted.begin(), sorted.end(), label) != sorted.end()) continue;
      if (after_label(line, label)) {
        ignored = true;
        break;
      }
    }
    if (ignored) {
      commit();
      discard = true;
      continue;
    }
    if (!buffer.empty()) buffer += '\n';
    buffer += line;
  }
  commit();
}

std::optional<std::string> LabeledSections::get(std::string_view label) const {
  const std::string key = lower(label);
  for (const auto& [name, text] : sections_) {
    if (name == key) return text;
  }
  return std::nullopt;
}

std::string strip_component_label(std::string_view reply, std::string_view label) {
  const LabeledSections sections(reply, kMcqLabels);
  if (auto s = sections.get(label); s && !s->empty()) return *s;
  return sections.get("").value_or("");
}

std::vector<std::string> split_options(std::string_view text) {
  std::vector<std::string> items;
  std::vector<std::string> lines;
  for (const auto& l : lines_of(text)) {
    if (!trim(l).empty()) lines.push_back(l);
  }
  if (lines.size() >= 2) {
    for (const auto& l : lines) {
      auto item = strip_marker(l);
      if (!item.empty()) items.push_back(std::move(item));
    }
    return items;
  }
  const std::string line = lines.empty() ? std::string() : trim(lines.front());
  if (line.empty()) return items;

  static const std::regex inline_marker(R"((^|\s)\(?([a-eA-E])[\)\.]\s+)");
  std::vector<std::pair<std::size_t, std::size_t>> marks;  // (marker start, text start)
  for (auto it = std::sregex_iterator(line.begin(), line.end(), inline_marker);
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    marks.emplace_back(static_cast<std::size_t>(m.position(0)),
                       static_cast<std::size_t>(m.position(0) + m.length(0)));
  }
  if (marks.size() >= 2 && marks.front().first == 0) {
    for (std::size_t i = 0; i < marks.size(); ++i) {
      const std::size_t end = i + 1 < marks.size() ? marks[i + 1].first : line.size();
      auto item = trim(std::string_view(line).substr(marks[i].second, end - marks[i].second));
      while (!item.empty() && (item.back() == ',' || item.back() == ';')) item.pop_back();
      if (!item.empty()) items.push_back(trim(item));
    }
    return items;
  }
  if (line.find(';') != std::string::npos) {
    std::istringstream in(line);
    std::string part;
    while (std::getline(in, part, ';')) {
      auto item = strip_marker(part);
      if (!item.empty()) items.push_back(std::move(item));
    }
    return items;
  }
  items.push_back(strip_marker(line));
  return items;
}

std::vector<std::string> parse_distractors(std::string_view reply, const std::string& correct_answer,
                                           std::size_t keep) {
  const auto items = split_options(strip_component_label(reply, kDistractors));
  if (items.size() < kMinDistractors) {
    throw ReplyRejected("expected at least 3 distractors, got " + std::to_string(items.size()),
                        "Give at least 3 distractor options in the format Distractor options: a) ... "
                        "b) ... c) ...");
  }
  std::set<std::string> seen;
  for (const auto& d : items) {
    if (d == correct_answer) {
      throw ReplyRejected("distractor equals the correct answer: " + d,
                          "A distractor option repeats the correct answer (" + d +
                              "). Give distractor options that are all different from the correct "
                              "answer.");
    }
    if (!seen.insert(d).second) {
      throw ReplyRejected("duplicate distractor: " + d,
                          "The distractor option \"" + d +
                              "\" appears more than once. Give distinct distractor options.");
    }
  }
  std::vector<std::string> out(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(
                                                                  std::min(keep, items.size())));
  return out;
}

Mcq parse_mcq_reply(std::string_view reply, std::size_t keep_distractors) {
  const LabeledSections sections(reply, kMcqLabels);
  Mcq mcq;
  std::vector<std::string> missing;
  auto take = [&](std::string_view label, std::string& into) {
    auto v = sections.get(label);
    if (!v || v->empty()) {
      missing.emplace_back(label);
    } else {
      into = *v;
    }
  };
  take(kContext, mcq.context);
  take(kQuestion, mcq.question);
  take(kAnswer, mcq.correct_answer);
  std::string distractors;
  take(kDistractors, distractors);
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw ReplyRejected("reply lacks components: " + names,
                        "Your reply is missing: " + names +
                            ". Output all four components, each starting with its label (Context:, "
                            "Question:, Correct answer:, Distractor options:), and no feedback.");
  }
  mcq.distractors = parse_distractors("Distractor options: " + distractors, mcq.correct_answer,
                                      keep_distractors);
  try {
    mcq.validate();
  } catch (const ValidationError& e) {
    throw ReplyRejected(e.what(), std::string("The generated question is invalid: ") + e.what() +
                                      ". Output a corrected version.");
  }
  return mcq;
}

ParsedAnswer parse_answer_reply(std::string_view reply, std::size_t option_count) {
  constexpr std::array<std::string_view, 3> labels = {"Correct answer", "Answer", "Reasoning"};
  const LabeledSections sections(reply, labels);
  std::string answer = sections.get("Correct answer").value_or("");
  if (answer.empty()) answer = sections.get("Answer").value_or("");
  if (answer.empty()) answer = sections.get("").value_or("");

  static const std::regex letter_re(R"(^\s*\(?\**([A-Za-z])\**(?:[\)\.:,]|\s|$))");
  std::smatch m;
  if (!std::regex_search(answer, m, letter_re)) {
    throw ReplyRejected("no option letter in answer reply",
                        "Start your reply with \"Correct answer: <letter>\" followed by "
                        "\"Reasoning: ...\".");
  }
  const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
  const auto idx = option_index(letter);
  if (!idx || *idx >= option_count) {
    throw ReplyRejected(std::string("option letter out of range: ") + letter,
                        std::string("Choose one of the letters A-") + option_letter(option_count - 1) +
                            ".");
  }
  ParsedAnswer out;
  out.letter = letter;
  if (auto r = sections.get("Reasoning"); r && !r->empty()) {
    out.reasoning = *r;
  } else {
    out.reasoning = trim(std::string_view(answer).substr(static_cast<std::size_t>(m.length(0))));
  }
  return out;
}

std::string critique_format_instructions(std::span<const Aspect* const> aspects) {
  std::string out = "{";
  int max_total = 0;
  for (const Aspect* a : aspects) {
    out += "\"" + a->slug() + "\": {\"feedback\": \"<feedback with supporting evidence>\", \"score\": \"<x>/" +
           std::to_string(a->max_score) + "\"}, ";
    max_total += a->max_score;
  }
  out += "\"total_score\": \"<sum>/" + std::to_string(max_total) + "\"}";
  return out;
}

std::string rubric_lines(std::span<const Aspect* const> aspects) {
  std::string out;
  for (const Aspect* a : aspects) {
    if (!out.empty()) out += '\n';
    out += "- " + a->name + ": " + a->description;
  }
  return out;
}

namespace {

std::string key_slug(std::string_view key) {
  std::string out;
  bool gap = false;
  for (unsigned char c : key) {
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

// nullopt with `problem` set when the value is not an acceptable grade.
std::optional<int> read_score(const json& v, int max, std::string& problem) {
  double value = 0;
  if (v.is_number()) {
    value = v.get<double>();
  } else if (v.is_string()) {
    static const std::regex re(R"(^\s*(-?\d+(?:\.\d+)?)\s*(?:/\s*(\d+))?\s*$)");
    const std::string s = v.get<std::string>();
    std::smatch m;
    if (!std::regex_match(s, m, re)) {
      problem = "unreadable score \"" + s + "\"";
      return std::nullopt;
    }
    value = std::stod(m[1].str());
    if (m[2].matched && std::stoi(m[2].str()) != max) {
      problem = "score \"" + s + "\" is not out of " + std::to_string(max);
      return std::nullopt;
    }
  } else {
    problem = "score is not a number or \"x/" + std::to_string(max) + "\" string";
    return std::nullopt;
  }
  if (value != std::floor(value)) {
    problem = "fractional score " + v.dump();
    return std::nullopt;
  }
  if (value < 0 || value > max) {
    problem = "score " + v.dump() + " outside 0-" + std::to_string(max);
    return std::nullopt;
  }
  return static_cast<int>(value);
}

}  // namespace

std::vector<AspectScore> parse_critique_reply(std::string_view reply,
                                              std::span<const Aspect* const> aspects) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  json doc;
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    doc = json::parse(reply.substr(open, close - open + 1), nullptr, false);
  }
  if (!doc.is_object()) {
    throw ReplyRejected("critique reply is not a JSON object",
                        "Output just the JSON instance in the requested format and nothing else.");
  }
  // Accept {"aspects": {...}} / {"aspects": [...]} wrappers too.
  json body = doc;
  if (doc.contains("aspects")) body = doc["aspects"];
  std::map<std::string, json> by_slug;
  if (body.is_array()) {
    for (const auto& item : body) {
      if (!item.is_object()) continue;
      const std::string name = item.value("aspect", item.value("name", std::string()));
      by_slug[key_slug(name)] = item;
    }
  } else if (body.is_object()) {
    for (const auto& [key, value] : body.items()) {
      std::string slug = key_slug(key);
      if (auto dot = key.find('.'); dot != std::string::npos) slug = key_slug(key.substr(dot + 1));
      by_slug[slug] = value;
    }
  }
  std::vector<AspectScore> out;
  std::vector<std::string> missing;
  std::vector<std::string> bad;
  for (const Aspect* a : aspects) {
    auto it = by_slug.find(a->slug());
    if (it == by_slug.end()) {
      missing.push_back(a->slug());
      continue;
    }
    const json& entry = it->second;
    json score_value;
    std::string rationale;
    if (entry.is_object()) {
      score_value = entry.contains("score") ? entry["score"] : json();
      for (const char* k : {"feedback", "rationale", "reason"}) {
        if (entry.contains(k) && entry[k].is_string()) {
          rationale = entry[k].get<std::string>();
          break;
        }
      }
    } else {
      score_value = entry;
    }
    std::string problem;
    const auto score = read_score(score_value, a->max_score, problem);
    if (!score) {
      bad.push_back(a->slug() + " (" + problem + ")");
      continue;
    }
    out.push_back({a->id(), *score, rationale});
  }
  if (!missing.empty() || !bad.empty()) {
    std::string addendum;
    std::string what;
    if (!missing.empty()) {
      std::string names;
      for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
      addendum += "Your reply is missing these aspects: " + names + ". ";
      what += "missing aspects: " + names + "; ";
    }
    if (!bad.empty()) {
      std::string names;
      for (const auto& b : bad) names += (names.empty() ? "" : ", ") + b;
      addendum += "Scores must be whole numbers from 0 to 5 written as \"x/5\"; fix: " + names + ". ";
      what += "invalid scores: " + names;
    }
    addendum += "Output the complete JSON instance again and nothing else.";
    throw ReplyRejected("critique reply rejected: " + what, addendum);
  }
  return out;
}

std::vector<std::string> parse_list_reply(std::string_view reply, std::string_view prefix) {
  static const std::regex bullet(R"(^\s*(?:[-*•]+|\d{1,2}[\.\)])\s*)");
  std::vector<std::string> out;
  for (const auto& raw : lines_of(reply)) {
    std::string line = std::regex_replace(raw, bullet, "", std::regex_constants::format_first_only);
    if (auto rest = after_label(line, prefix)) line = *rest;
    line = trim(line);
    // Unwrap **bold** and "quotes".
    for (bool changed = true; changed && !line.empty();) {
      changed = false;
      if (line.front() == '*' || line.back() == '*') {
        const auto first = line.find_first_not_of('*');
        const auto last = line.find_last_not_of('*');
        line = first == std::string::npos ? "" : trim(std::string_view(line).substr(first, last - first + 1));
        changed = true;
      }
      if (line.size() >= 2 && line.front() == '"' && line.back() == '"') {
        line = trim(std::string_view(line).substr(1, line.size() - 2));
        changed = true;
      }
    }
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

}  // namespace mcqg
