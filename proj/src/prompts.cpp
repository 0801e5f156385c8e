#include "mcqg/prompts.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "mcqg/digest.hpp"
#include "mcqg/error.hpp"

namespace mcqg {

namespace {

constexpr std::array<std::pair<TemplateId, std::string_view>, 11> kTemplateNames = {{
    {TemplateId::init_context, "init_context"},
    {TemplateId::init_question, "init_question"},
    {TemplateId::init_answer, "init_answer"},
    {TemplateId::init_distractors, "init_distractors"},
    {TemplateId::answer, "answer"},
    {TemplateId::critique, "critique"},
    {TemplateId::critique_reasoning, "critique_reasoning"},
    {TemplateId::correction, "correction"},
    {TemplateId::identify_topics, "identify_topics"},
    {TemplateId::identify_testpoints, "identify_testpoints"},
    {TemplateId::compare, "compare"},
}};

bool name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// One lexed piece of template text: either a literal run or a placeholder.
struct Piece {
  bool placeholder = false;
  std::string text;
};

std::vector<Piece> lex(std::string_view text) {
  std::vector<Piece> out;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) out.push_back({false, std::exchange(literal, {})});
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        literal.push_back('{');
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      if (j < text.size() && name_start(text[j])) {
        while (j < text.size() && name_char(text[j])) ++j;
        if (j < text.size() && text[j] == '}') {
          flush();
          out.push_back({true, std::string(text.substr(i + 1, j - i - 1))});
          i = j;
          continue;
        }
      }
      throw ConfigError("template: stray '{' at offset " + std::to_string(i));
    }
    if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        literal.push_back('}');
        ++i;
        continue;
      }
      throw ConfigError("template: stray '}' at offset " + std::to_string(i));
    }
    literal.push_back(c);
  }
  flush();
  return out;
}

void collect(std::string_view text, std::set<std::string, std::less<>>& names) {
  for (const auto& p : lex(text)) {
    if (p.placeholder) names.insert(p.text);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Resolves placeholders against up to two binding maps, in order.
class Substituter {
 public:
  Substituter(const Bindings* first, const Bindings& second, std::set<std::string>& used)
      : first_(first), second_(second), used_(used) {}

  const std::string* lookup(const std::string& name) const {
    if (first_) {
      if (auto it = first_->find(name); it != first_->end()) return &it->second;
    }
    if (auto it = second_.find(name); it != second_.end()) {
      used_.insert(name);
      return &it->second;
    }
    return nullptr;
  }

  std::string apply(std::string_view text) const {
    std::string out;
    for (const auto& p : lex(text)) {
      if (!p.placeholder) {
        out += p.text;
        continue;
      }
      const std::string* value = lookup(p.text);
      if (!value) throw ValidationError("missing binding for placeholder {" + p.text + "}");
      out += *value;
    }
    return out;
  }

  bool any_empty(std::string_view text) const {
    for (const auto& p : lex(text)) {
      if (!p.placeholder) continue;
      const std::string* value = lookup(p.text);
      if (!value || value->empty()) return true;
    }
    return false;
  }

 private:
  const Bindings* first_;
  const Bindings& second_;
  std::set<std::string>& used_;
};

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string render_shot(const std::string& shot_text, const Substituter& sub) {
  const auto lines = split_lines(shot_text);
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (!line.empty() && line[0] == '?') {
      std::string_view rest(line);
      rest.remove_prefix(1);
      if (sub.any_empty(rest)) {
        if (i + 1 < lines.size() && lines[i + 1].empty()) ++i;
        continue;
      }
      kept.push_back(sub.apply(rest));
      continue;
    }
    kept.push_back(sub.apply(line));
  }
  std::string out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i) out += '\n';
    out += kept[i];
  }
  return out;
}

}  // namespace

std::string_view template_name(TemplateId id) {
  for (const auto& [tid, name] : kTemplateNames) {
    if (tid == id) return name;
  }
  return "";
}

TemplateId parse_template_id(std::string_view name) {
  for (const auto& [tid, n] : kTemplateNames) {
    if (n == name) return tid;
  }
  throw ConfigError("unknown template id: " + std::string(name));
}

PromptTemplate PromptTemplate::parse(TemplateId id, std::string_view text) {
  PromptTemplate t;
  t.id_ = id;
  std::string* current = nullptr;
  bool header_seen = false;
  bool shot_seen = false;
  bool body_seen = false;
  std::vector<std::string> buffer;
  auto commit = [&] {
    if (!current) return;
    std::string joined;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      if (i) joined += '\n';
      joined += buffer[i];
    }
    *current = std::move(joined);
    buffer.clear();
  };
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "[header]" || line == "[shot]" || line == "[body]") {
      commit();
      bool& seen = line == "[header]" ? header_seen : line == "[shot]" ? shot_seen : body_seen;
      if (seen) throw ConfigError("template " + std::string(template_name(id)) + ": repeated " + line);
      seen = true;
      current = line == "[header]" ? &t.header_ : line == "[shot]" ? &t.shot_ : &t.body_;
      continue;
    }
    if (!current) {
      if (line.empty() || line[0] == '#') continue;
      throw ConfigError("template " + std::string(template_name(id)) +
                        ": text before the first block marker");
    }
    buffer.push_back(line);
  }
  commit();
  if (!body_seen) throw ConfigError("template " + std::string(template_name(id)) + ": no [body]");
  collect(t.header_, t.required_);
  collect(t.body_, t.required_);
  std::string shot_plain;
  for (const auto& l : split_lines(t.shot_)) {
    shot_plain += (!l.empty() && l[0] == '?') ? l.substr(1) : l;
    shot_plain += '\n';
  }
  collect(shot_plain, t.shot_fields_);
  return t;
}

TemplatePack TemplatePack::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("template manifest " + manifest_path.string() + ": " + e.what());
  }
  TemplatePack pack;
  try {
    pack.pack_id_ = manifest.at("pack_id").get<std::string>();
    for (const auto& entry : manifest.at("templates")) {
      const TemplateId id = parse_template_id(entry.at("id").get<std::string>());
      const auto file = dir / entry.at("file").get<std::string>();
      const std::string text = read_file(file);
      const auto expected = entry.at("sha256").get<std::string>();
      if (sha256_hex(text) != expected) {
        throw ConfigError("checksum mismatch for " + file.string());
      }
      auto tmpl = PromptTemplate::parse(id, text);
      tmpl.min_shots = entry.value("min_shots", std::size_t{0});
      tmpl.max_shots = entry.value("max_shots", std::size_t{0});
      if (tmpl.min_shots > tmpl.max_shots) {
        throw ConfigError("template " + std::string(template_name(id)) + ": min_shots > max_shots");
      }
      if (tmpl.max_shots > 0 && tmpl.shot().empty()) {
        throw ConfigError("template " + std::string(template_name(id)) + ": shots without [shot]");
      }
      std::set<std::string, std::less<>> listed;
      for (const auto& r : entry.at("required")) listed.insert(r.get<std::string>());
      if (listed != tmpl.required_placeholders()) {
        throw ConfigError("template " + std::string(template_name(id)) +
                          ": manifest placeholder list disagrees with the template body");
      }
      if (!pack.templates_.emplace(id, std::move(tmpl)).second) {
        throw ConfigError("template listed twice: " + std::string(template_name(id)));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("template manifest " + manifest_path.string() + ": " + e.what());
  }
  return pack;
}

const PromptTemplate& TemplatePack::get(TemplateId id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) {
    throw ConfigError("template pack " + pack_id_ + " has no template " +
                      std::string(template_name(id)));
  }
  return it->second;
}

RenderResult render(const PromptTemplate& tmpl, const Bindings& bindings,
                    std::span<const Bindings> shots) {
  if (shots.size() < tmpl.min_shots || shots.size() > tmpl.max_shots) {
    throw ValidationError("template " + std::string(template_name(tmpl.id())) + " takes " +
                          std::to_string(tmpl.min_shots) + "-" + std::to_string(tmpl.max_shots) +
                          " shots, got " + std::to_string(shots.size()));
  }
  for (const auto& name : tmpl.required_placeholders()) {
    if (!bindings.count(name)) {
      throw ValidationError("missing binding for placeholder {" + name + "} in template " +
                            std::string(template_name(tmpl.id())));
    }
  }
  std::set<std::string> used;
  const Substituter main(nullptr, bindings, used);
  std::vector<std::string> pieces;
  if (!tmpl.header().empty()) pieces.push_back(main.apply(tmpl.header()));
  for (const auto& shot : shots) {
    const Substituter sub(&shot, bindings, used);
    pieces.push_back(render_shot(tmpl.shot(), sub));
  }
  pieces.push_back(main.apply(tmpl.body()));

  RenderResult result;
  result.shot_count = shots.size();
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (i) result.text += '\n';
    result.text += pieces[i];
  }
  for (const auto& [name, value] : bindings) {
    if (!used.count(name)) result.unused_bindings.push_back(name);
  }
  return result;
}

std::vector<std::string> FewShotExample::distractors() const {
  std::vector<std::string> out;
  for (const auto& o : options) {
    if (o != answer) out.push_back(o);
  }
  return out;
}

std::optional<std::string> FewShotExample::extra(std::string_view key) const {
  if (auto it = extras.find(key); it != extras.end()) return it->second;
  return std::nullopt;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string trim_example(const FewShotExample& example, std::string_view component) {
  int depth = 0;
  if (component == "context") {
    depth = 1;
  } else if (component == "question") {
    depth = 2;
  } else if (component == "correct_answer") {
    depth = 3;
  } else if (component == "distractors") {
    depth = 4;
  } else {
    throw ValidationError("trim_example: unknown component " + std::string(component));
  }
  std::string out;
  auto add = [&](std::string_view label, const std::string& value, std::string_view feedback_key) {
    if (!out.empty()) out += '\n';
    out += label;
    out += ": ";
    out += value;
    if (auto fb = example.extra(feedback_key); fb && !fb->empty()) {
      out += '\n';
      out += label;
      out += " feedback: ";
      out += *fb;
    }
  };
  add("Context", example.context, "context_feedback");
  if (depth >= 2) add("Question", example.question, "question_feedback");
  if (depth >= 3) add("Correct answer", example.answer, "correct_answer_feedback");
  if (depth >= 4) {
    const auto d = example.distractors();
    add("Distractor options", join(d, "; "), "distractors_feedback");
  }
  return out;
}

Bindings shot_view(const FewShotExample& example, TemplateId id) {
  Bindings b;
  const std::string context_question = example.context + "\n" + example.question;
  const auto distractors = example.distractors();
  switch (id) {
    case TemplateId::init_context:
      b["context_question"] = example.context;
      break;
    case TemplateId::init_question:
      b["context_question"] = context_question;
      break;
    case TemplateId::init_answer:
      b["context_question"] = context_question;
      b["correct_answer"] = example.answer;
      break;
    case TemplateId::init_distractors:
      b["question"] = context_question;
      b["correct_answer"] = example.answer;
      b["distractor_options"] = join(distractors, "; ");
      break;
    case TemplateId::answer: {
      std::string options;
      std::string answer = example.answer;
      for (std::size_t i = 0; i < example.options.size(); ++i) {
        if (i) options += '\n';
        const char letter = static_cast<char>('A' + i);
        options += letter;
        options += ". ";
        options += example.options[i];
        if (example.options[i] == example.answer) answer = std::string(1, letter) + ". " + example.answer;
      }
      b["context"] = example.context;
      b["question"] = example.question;
      b["options"] = options;
      b["answer"] = answer;
      b["reasoning"] = example.extra("reasoning").value_or("");
      break;
    }
    default:
      b["context"] = example.context;
      b["question"] = example.question;
      b["correct_answer"] = example.answer;
      b["distractor_options"] = join(distractors, "; ");
      break;
  }
  // Stage-specific fields (feedback, scores, the source note) pass through.
  for (const auto& [k, v] : example.extras) {
    if (id == TemplateId::answer && k != "reasoning") continue;
    if (id == TemplateId::init_context || id == TemplateId::init_question ||
        id == TemplateId::init_answer || id == TemplateId::init_distractors) {
      continue;
    }
    b.emplace(k, v);
  }
  return b;
}

}  // namespace mcqg
