#include <gtest/gtest.h>

#include <random>
#include <set>

#include "mcqg/core.hpp"
#include "mcqg/error.hpp"
#include "mcqg/random.hpp"
#include "mcqg/rubric.hpp"
#include "mcqg/session.hpp"
#include "scripted_backend.hpp"

namespace mcqg {
namespace {

TEST(SplitMix64, ReferenceSequenceForSeedZero) {
  SplitMix64 g(0);
  EXPECT_EQ(g.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(g.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(g.next(), 0x06c45d188009454fULL);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(TopicRegistry, FortyOneTopicsInTenSections) {
  EXPECT_EQ(topic_registry().size(), 41u);
  EXPECT_EQ(topic_sections().size(), 10u);
  std::set<std::string> sections;
  for (const auto& t : topic_registry()) sections.insert(t.section);
  EXPECT_EQ(sections.size(), 10u);
}

TEST(TopicRegistry, MatchIgnoresCaseAndPunctuation) {
  const auto& t = topic_registry()[1];
  auto m = match_topic("  UNDERLYING processes / pathways ");
  ASSERT_TRUE(m);
  EXPECT_EQ(*m, t);
  auto prefixed = match_topic(t.section + " - " + t.name);
  ASSERT_TRUE(prefixed);
  EXPECT_EQ(*prefixed, t);
  EXPECT_FALSE(match_topic("Not a registry topic"));
}

TEST(TopicRegistry, ValidateRejectsWrongSection) {
  TopicLabel bad = topic_registry()[1];
  bad.section = std::string(topic_sections()[5]);
  EXPECT_THROW(validate_topic(bad), ValidationError);
  EXPECT_NO_THROW(validate_topic(topic_registry()[1]));
}

TEST(Outline, EighteenSections) { EXPECT_EQ(outline_sections().size(), 18u); }

TEST(TestPoint, WordLimitAndSection) {
  TestPoint ok{"keloid formation", "Skin & Subcutaneous Tissue"};
  EXPECT_NO_THROW(ok.validate());
  TestPoint derived{"scar after piercing"};
  EXPECT_NO_THROW(derived.validate());
  std::string long_concept;
  for (int i = 0; i < 21; ++i) long_concept += "word ";
  EXPECT_THROW((TestPoint{long_concept}).validate(), ValidationError);
  EXPECT_THROW((TestPoint{""}).validate(), ValidationError);
  EXPECT_THROW((TestPoint{"x", "Nowhere"}).validate(), ValidationError);
}

TEST(Mcq, Invariants) {
  Mcq m = testing::sample_mcq();
  EXPECT_NO_THROW(m.validate());
  Mcq dup = m;
  dup.distractors[2] = dup.distractors[0];
  EXPECT_THROW(dup.validate(), ValidationError);
  Mcq same = m;
  same.distractors[1] = same.correct_answer;
  EXPECT_THROW(same.validate(), ValidationError);
  Mcq few = m;
  few.distractors.pop_back();
  EXPECT_THROW(few.validate(), ValidationError);
  Mcq empty = m;
  empty.question = " ";
  EXPECT_THROW(empty.validate(), ValidationError);
}

TEST(MedicalCase, Validate) {
  EXPECT_THROW((MedicalCase{"", "text", {}}).validate(), ValidationError);
  EXPECT_THROW((MedicalCase{"c1", "  \n", {}}).validate(), ValidationError);
  EXPECT_NO_THROW((MedicalCase{"c1", "A note.", {}}).validate());
}

TEST(Shuffle, PermutationMapsAnswerKey) {
  const Mcq m = testing::sample_mcq();
  std::set<char> keys;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = shuffle_options(m, seed);
    ASSERT_EQ(s.options.size(), 4u);
    const auto idx = option_index(s.answer_key);
    ASSERT_TRUE(idx);
    EXPECT_EQ(s.options[*idx], m.correct_answer);
    for (std::size_t i = 0; i < s.options.size(); ++i) {
      const std::size_t src = s.permutation[i];
      EXPECT_EQ(s.options[i], src == 0 ? m.correct_answer : m.distractors[src - 1]);
    }
    keys.insert(s.answer_key);
    EXPECT_EQ(shuffle_options(m, seed).options, s.options);
  }
  EXPECT_EQ(keys.size(), 4u);
}

TEST(Shuffle, LabeledFormat) {
  const auto s = shuffle_options(testing::sample_mcq(), 7);
  const std::string text = s.labeled();
  EXPECT_EQ(text.rfind("A. ", 0), 0u);
  EXPECT_NE(text.find("\nD. "), std::string::npos);
  EXPECT_NE(text.back(), '\n');
}

TEST(OptionLetters, RoundTrip) {
  EXPECT_EQ(option_letter(0), 'A');
  EXPECT_EQ(option_index('c'), 2u);
  EXPECT_FALSE(option_index('?'));
}

// ------------------------------------------------------------------ rubric

TEST(Rubric, ThirtyLiteralAspects) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
      {"context",
       {"Relevant", "Concise", "Coherent", "Consistent", "Specific", "Fluent", "Clueing", "Completeness",
        "Misdirection"}},
      {"question", {"Relevant", "Clear", "Concluding", "Difficulty", "Clarity"}},
      {"correct_answer",
       {"Relevant", "Occurrence", "Justification", "Depth of Understanding", "Prevention of Guesswork"}},
      {"distractors",
       {"Format", "Length", "Relation", "Variation", "Plausibility", "Differentiation", "Common Mistakes"}},
      {"reasoning", {"Logical Flow", "Evidence-Based Reasoning", "Consideration of Options", "Correctness"}},
  };
  const auto& reg = RubricRegistry::builtin();
  std::size_t i = 0;
  for (const auto& [component, names] : expected) {
    for (const auto& name : names) {
      ASSERT_LT(i, reg.aspects().size());
      EXPECT_EQ(component_id(reg.aspects()[i].component), component);
      EXPECT_EQ(reg.aspects()[i].name, name);
      EXPECT_EQ(reg.aspects()[i].max_score, 5);
      ++i;
    }
  }
  EXPECT_EQ(reg.aspects().size(), 30u);
  EXPECT_EQ(reg.max_total(), 150);
  EXPECT_EQ(reg.component_max(Component::distractors), 35);
}

TEST(Rubric, SlugsAndIds) {
  const auto& reg = RubricRegistry::builtin();
  ASSERT_NE(reg.find("reasoning.evidence_based_reasoning"), nullptr);
  ASSERT_NE(reg.find("correct_answer.depth_of_understanding"), nullptr);
  EXPECT_EQ(reg.find("reasoning.evidence_based_reasoning")->slug(), "evidence_based_reasoning");
  EXPECT_EQ(reg.find("nope"), nullptr);
  EXPECT_THROW(reg.index_of("nope"), ValidationError);
  std::set<std::string> ids;
  for (const auto& a : reg.aspects()) ids.insert(a.id());
  EXPECT_EQ(ids.size(), 30u);
}

TEST(Rubric, ShippedFileEqualsBuiltin) {
  const auto loaded = RubricRegistry::load(testing::data_dir() / "rubric" / "rubric_v1.tsv");
  EXPECT_TRUE(loaded == RubricRegistry::builtin());
  EXPECT_TRUE(RubricRegistry::parse(RubricRegistry::builtin().serialize()) == RubricRegistry::builtin());
}

TEST(Rubric, RejectsDuplicatesAndMissingComponents) {
  std::vector<Aspect> aspects(RubricRegistry::builtin().aspects().begin(), RubricRegistry::builtin().aspects().end());
  auto dup = aspects;
  dup.push_back(dup.front());
  EXPECT_THROW(RubricRegistry("x", dup), ValidationError);
  std::vector<Aspect> no_reasoning;
  for (const auto& a : aspects) {
    if (a.component != Component::reasoning) no_reasoning.push_back(a);
  }
  EXPECT_THROW(RubricRegistry("x", no_reasoning), ValidationError);
}

std::vector<AspectScore> random_scores(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 5);
  std::vector<AspectScore> out;
  for (const auto& a : RubricRegistry::builtin().aspects()) out.push_back({a.id(), d(rng), "r"});
  return out;
}

TEST(CritiqueReport, NormalizedTotalIsExactSumOver150) {
  std::mt19937_64 rng(42);
  const auto& reg = RubricRegistry::builtin();
  for (int trial = 0; trial < 500; ++trial) {
    auto scores = random_scores(rng);
    int sum = 0;
    std::array<int, 5> per{};
    for (const auto& s : scores) {
      sum += s.score;
      per[static_cast<std::size_t>(reg.find(s.aspect_id)->component)] += s.score;
    }
    std::shuffle(scores.begin(), scores.end(), rng);
    const auto r = CritiqueReport::make(reg, scores);
    EXPECT_EQ(r.raw_total(), sum);
    EXPECT_EQ(r.normalized_total(), static_cast<double>(sum) / 150.0);
    for (Component c : kComponents) EXPECT_EQ(r.component_total(c), per[static_cast<std::size_t>(c)]);
    EXPECT_EQ(r.entries()[0].aspect_id, reg.aspects()[0].id());
  }
}

TEST(CritiqueReport, RejectsMissingDuplicateAndOutOfRange) {
  std::mt19937_64 rng(1);
  const auto& reg = RubricRegistry::builtin();
  auto scores = random_scores(rng);
  auto missing = scores;
  missing.pop_back();
  EXPECT_THROW(CritiqueReport::make(reg, missing), ValidationError);
  auto dup = scores;
  dup.back() = dup.front();
  EXPECT_THROW(CritiqueReport::make(reg, dup), ValidationError);
  auto high = scores;
  high[3].score = 6;
  EXPECT_THROW(CritiqueReport::make(reg, high), ValidationError);
  auto unknown = scores;
  unknown[0].aspect_id = "context.nope";
  EXPECT_THROW(CritiqueReport::make(reg, unknown), ValidationError);
}

// ----------------------------------------------------------------- session

TEST(Session, JsonRoundTrip) {
  std::mt19937_64 rng(3);
  const auto& reg = RubricRegistry::builtin();
  RefinementSession s;
  s.case_id = "case-1";
  s.topics = {topic_registry()[0]};
  s.testpoints = {TestPoint{"keloid formation", "Skin & Subcutaneous Tissue"}, TestPoint{"scar"}};
  for (int i = 1; i <= 2; ++i) {
    RefinementRound r;
    r.index = i;
    r.mcq = testing::sample_mcq("round " + std::to_string(i));
    r.attempt = {'B', r.mcq.correct_answer, "because", true};
    r.critique = CritiqueReport::make(reg, random_scores(rng));
    s.rounds.push_back(r);
  }
  s.best_round_index = 2;
  s.stop_reason = StopReason::max_rounds;
  s.template_pack_id = "pack";
  s.warnings = {"w"};
  const auto j = session_to_json(s, nlohmann::json{{"k", 1}});
  EXPECT_EQ(j["config"]["k"], 1);
  EXPECT_EQ(j["testpoints"][0]["concept"], "keloid formation");
  const auto back = session_from_json(j, reg);
  EXPECT_EQ(back.case_id, s.case_id);
  EXPECT_EQ(back.topics, s.topics);
  EXPECT_EQ(back.testpoints, s.testpoints);
  ASSERT_EQ(back.rounds.size(), 2u);
  EXPECT_EQ(back.rounds[1].mcq, s.rounds[1].mcq);
  EXPECT_EQ(back.rounds[1].attempt, s.rounds[1].attempt);
  EXPECT_EQ(back.rounds[1].critique, s.rounds[1].critique);
  EXPECT_EQ(back.best_round_index, 2);
  EXPECT_EQ(back.stop_reason, StopReason::max_rounds);
  EXPECT_EQ(back.warnings, s.warnings);
  EXPECT_EQ(session_to_json(back, nlohmann::json{{"k", 1}}).dump(), j.dump());
}

TEST(Session, ErrorIsKept) {
  RefinementSession s;
  s.case_id = "c";
  s.error = StageError{"critique", "bad reply", "raw"};
  const auto back = session_from_json(session_to_json(s), RubricRegistry::builtin());
  ASSERT_TRUE(back.error);
  EXPECT_EQ(back.error->stage, "critique");
  EXPECT_EQ(back.error->raw_reply, "raw");
  EXPECT_FALSE(back.ok());
}

}  // namespace
}  // namespace mcqg
