#include "mcqg/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>
#include <set>

#include "mcqg/error.hpp"
#include "mcqg/random.hpp"

namespace mcqg {

namespace {

constexpr std::string_view kCauses = "Diagnosis - Causes and Mechanisms";
constexpr std::string_view kHistory =
    "Diagnosis - Obtaining and Predicting History and Physical Examination";
constexpr std::string_view kStudies =
    "Diagnosis - Selecting and Interpreting Laboratory and Diagnostic Studies";
constexpr std::string_view kFormulating = "Diagnosis - Formulating the Diagnosis";
constexpr std::string_view kPrognosis = "Diagnosis - Determining Prognosis/Outcome";
constexpr std::string_view kPrevention =
    "Management - Health Maintenance and Disease Prevention";
constexpr std::string_view kPharmacotherapy =
    "Management - Selecting and Monitoring Pharmacotherapy";
constexpr std::string_view kInterventions = "Management - Clinical Interventions/Treatments";
constexpr std::string_view kMixed =
    "Management - Selecting Clinical Interventions (Mixed Management)";
constexpr std::string_view kSurveillance =
    "Management - Monitoring/Surveillance for Disease Recurrence or Progression";

const std::array<std::string_view, 10> kSections = {
    kCauses,     kHistory,          kStudies,       kFormulating, kPrognosis,
    kPrevention, kPharmacotherapy, kInterventions, kMixed,       kSurveillance,
};

const std::vector<TopicLabel>& registry() {
  static const std::vector<TopicLabel> topics = [] {
    const std::vector<std::pair<std::string_view, std::string_view>> rows = {
        {kCauses, "The cause/infectious agent or predisposing factor(s)"},
        {kCauses, "Underlying processes/pathways"},
        {kCauses, "Underlying anatomic structure or physical location"},
        {kCauses, "Mechanisms, drugs"},
        {kHistory, "Knows signs/symptoms of selected disorders"},
        {kHistory, "Knows individual's risk factors for development of condition"},
        {kHistory, "Knows what to ask to obtain pertinent additional history"},
        {kHistory, "Predicts the most likely additional physical finding"},
        {kStudies, "Select most appropriate laboratory or diagnostic study"},
        {kStudies, "Interprets laboratory or other study findings"},
        {kStudies, "Predicts the most likely laboratory or diagnostic study result"},
        {kStudies,
         "Most appropriate laboratory or diagnostic study after change in patient status"},
        {kFormulating, "Select most likely diagnosis"},
        {kPrognosis, "Recognizes factors in the history, or physical or laboratory study findings"},
        {kPrognosis,
         "Interprets laboratory or other diagnostic study results and identifies current/future "
         "status of patient"},
        {kPrognosis, "Recognizes associated conditions of a disease"},
        {kPrognosis,
         "Recognizes characteristics of disease relating to natural history or course of disease"},
        {kPrevention, "Risk factors for conditions amenable to prevention or detection"},
        {kPrevention, "Identifies patient groups at risk"},
        {kPrevention, "Knows common screening tests"},
        {kPrevention, "Selects appropriate preventive agent or technique"},
        {kPrevention, "Knows appropriate counseling regarding current and future problems"},
        {kPrevention, "Educates patients"},
        {kPharmacotherapy, "Selects most appropriate pharmacotherapy"},
        {kPharmacotherapy,
         "Assesses patient adherence, recognizes techniques to increase adherence"},
        {kPharmacotherapy, "Recognizes factors that alter drug requirements"},
        {kPharmacotherapy,
         "Knows adverse effects of various drugs or recognizes signs and symptoms of drug (and "
         "drug-drug) interactions"},
        {kPharmacotherapy, "Knows contraindications of various medications"},
        {kPharmacotherapy,
         "Knows modifications of a therapeutic regimen within the context of continuing care"},
        {kPharmacotherapy,
         "Appropriate monitoring to evaluate effectiveness of pharmacotherapy or adverse effects"},
        {kInterventions, "Most appropriate management of selected conditions"},
        {kInterventions, "Immediate management or priority in management"},
        {kInterventions, "Follow-up or monitoring approach regarding the management plan"},
        {kInterventions, "Current/short-term management"},
        {kInterventions,
         "Severity of patient condition in terms of need for referral for surgical "
         "treatments/procedures"},
        {kInterventions, "Appropriate surgical management"},
        {kInterventions, "Preoperative/postoperative"},
        {kMixed, "Selecting Clinical Interventions (Mixed Management)"},
        {kSurveillance,
         "Indications for surveillance for recurrence or progression of disease following "
         "treatment"},
        {kSurveillance,
         "How to monitor a chronic disease in a stable patient where a change in patient status "
         "might indicate a need to change therapy"},
        {kSurveillance, "Most appropriate long-term treatment"},
    };
    std::vector<TopicLabel> out;
    out.reserve(rows.size());
    for (const auto& [section, name] : rows) out.push_back({std::string(section), std::string(name)});
    return out;
  }();
  return topics;
}

const std::array<std::string_view, 18> kOutlineSections = {
    "General Principles of Foundational Science",
    "Immune System",
    "Blood & Lymphoreticular System",
    "Behavioral Health",
    "Nervous System & Special Senses",
    "Skin & Subcutaneous Tissue",
    "Musculoskeletal System",
    "Cardiovascular System",
    "Respiratory System",
    "Gastrointestinal System",
    "Renal & Urinary System",
    "Pregnancy, Childbirth, & the Puerperium",
    "Female Reproductive System & Breast",
    "Male Reproductive System",
    "Endocrine System",
    "Multisystem Processes & Disorders",
    "Biostatistics, Epidemiology/Population Health, & Interpretation of the Medical Literature",
    "Social Sciences",
};

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void MedicalCase::validate() const {
  if (id.empty()) throw ValidationError("medical case: empty id");
  if (is_blank(text)) throw ValidationError("medical case " + id + ": empty text");
}

std::span<const TopicLabel> topic_registry() { return registry(); }

std::span<const std::string_view> topic_sections() { return kSections; }

std::span<const std::string_view> outline_sections() { return kOutlineSections; }

std::string normalize_label(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    // Apostrophes vanish so "individual's" and "individuals" meet.
    if (c == '\'') continue;
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::optional<TopicLabel> match_topic(std::string_view raw) {
  auto lookup = [](const std::string& key) -> std::optional<TopicLabel> {
    if (key.empty()) return std::nullopt;
    for (const auto& t : registry()) {
      if (normalize_label(t.name) == key) return t;
    }
    return std::nullopt;
  };
  if (auto hit = lookup(normalize_label(raw))) return hit;
  // "Section - topic" or "Section: topic": try the trailing part.
  for (std::string_view sep : {std::string_view(" - "), std::string_view(":")}) {
    if (auto pos = raw.rfind(sep); pos != std::string_view::npos) {
      if (auto hit = lookup(normalize_label(raw.substr(pos + sep.size())))) return hit;
    }
  }
  return std::nullopt;
}

void validate_topic(const TopicLabel& topic) {
  const auto& all = registry();
  if (std::find(all.begin(), all.end(), topic) == all.end()) {
    throw ValidationError("topic not in registry: " + topic.section + " / " + topic.name);
  }
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

void TestPoint::validate() const {
  if (is_blank(concept_text)) throw ValidationError("test point: empty concept");
  if (word_count(concept_text) > kMaxTestPointWords) {
    throw ValidationError("test point longer than 20 words: " + concept_text);
  }
  if (outline_section != kDerivedFromCase &&
      std::find(kOutlineSections.begin(), kOutlineSections.end(), outline_section) ==
          kOutlineSections.end()) {
    throw ValidationError("unknown outline section: " + outline_section);
  }
}

void Mcq::validate() const {
  if (is_blank(context)) throw ValidationError("mcq: empty context");
  if (is_blank(question)) throw ValidationError("mcq: empty question");
  if (is_blank(correct_answer)) throw ValidationError("mcq: empty correct answer");
  if (distractors.size() < kMinDistractors || distractors.size() > kMaxDistractors) {
    throw ValidationError("mcq: expected 3-4 distractors, got " +
                          std::to_string(distractors.size()));
  }
  std::set<std::string> seen;
  for (const auto& d : distractors) {
    if (is_blank(d)) throw ValidationError("mcq: empty distractor");
    if (d == correct_answer) throw ValidationError("mcq: distractor equals correct answer: " + d);
    if (!seen.insert(d).second) throw ValidationError("mcq: duplicate distractor: " + d);
  }
}

char option_letter(std::size_t index) { return static_cast<char>('A' + index); }

std::optional<std::size_t> option_index(char letter) {
  const auto c = static_cast<unsigned char>(std::toupper(static_cast<unsigned char>(letter)));
  if (c < 'A' || c > 'Z') return std::nullopt;
  return static_cast<std::size_t>(c - 'A');
}

std::string ShuffledOptions::labeled() const {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out += '\n';
    out += option_letter(i);
    out += ". ";
    out += options[i];
  }
  return out;
}

ShuffledOptions shuffle_options(const Mcq& mcq, std::uint64_t seed) {
  ShuffledOptions out;
  out.permutation.resize(mcq.distractors.size() + 1);
  std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = out.permutation.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(out.permutation[i - 1], out.permutation[j]);
  }
  out.options.reserve(out.permutation.size());
  for (std::size_t i = 0; i < out.permutation.size(); ++i) {
    const std::size_t src = out.permutation[i];
    if (src == 0) {
      out.answer_key = option_letter(i);
      out.options.push_back(mcq.correct_answer);
    } else {
      out.options.push_back(mcq.distractors[src - 1]);
    }
  }
  return out;
}

}  // namespace mcqg
