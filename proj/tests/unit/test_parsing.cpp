#include <gtest/gtest.h>

#include "mcqg/parsing.hpp"
#include "mcqg/rubric.hpp"

namespace mcqg {
namespace {

TEST(LabeledSections, SplitsOnLabelsAndDropsFeedback) {
  constexpr std::array<std::string_view, 4> labels = {"Context", "Question", "Correct answer", "Distractor options"};
  const LabeledSections s(
      "Intro text\n**Context:** A patient.\nMore context.\nContext feedback: nice\nQuestion: Why?\n"
      "Correct answer: X\nDistractor options: a; b; c",
      labels);
  EXPECT_EQ(s.get("Context"), "A patient.\nMore context.");
  EXPECT_EQ(s.get("Question"), "Why?");
  EXPECT_EQ(s.get(""), "Intro text");
  EXPECT_FALSE(s.get("Nope"));
}

TEST(SplitOptions, Forms) {
  EXPECT_EQ(split_options("a) One\nb) Two\nc) Three"), (std::vector<std::string>{"One", "Two", "Three"}));
  EXPECT_EQ(split_options("A. One B. Two C. Three"), (std::vector<std::string>{"One", "Two", "Three"}));
  EXPECT_EQ(split_options("One; Two; Three"), (std::vector<std::string>{"One", "Two", "Three"}));
  EXPECT_EQ(split_options("- One\n- Two\n1. Three"), (std::vector<std::string>{"One", "Two", "Three"}));
  EXPECT_TRUE(split_options("  ").empty());
}

TEST(ParseDistractors, CountAndUniquenessRules) {
  EXPECT_EQ(parse_distractors("Distractor options: a) X b) Y c) Z d) W", "ans", 3),
            (std::vector<std::string>{"X", "Y", "Z"}));
  EXPECT_THROW(parse_distractors("Distractor options: X; Y", "ans", 3), ReplyRejected);
  EXPECT_THROW(parse_distractors("Distractor options: X; Y; X", "ans", 3), ReplyRejected);
  EXPECT_THROW(parse_distractors("Distractor options: X; ans; Z", "ans", 3), ReplyRejected);
  EXPECT_EQ(parse_distractors("X; Y; Z; W", "ans", 4).size(), 4u);
}

TEST(ParseMcqReply, FullReply) {
  const auto m = parse_mcq_reply(
      "Here is the improved version.\nContext: A patient has a scar.\nQuestion: What is it?\n"
      "Correct answer: Keloid\nDistractor options:\na) Hypertrophic scar\nb) Dermatofibroma\nc) Lipoma\n",
      3);
  EXPECT_EQ(m.context, "A patient has a scar.");
  EXPECT_EQ(m.question, "What is it?");
  EXPECT_EQ(m.correct_answer, "Keloid");
  EXPECT_EQ(m.distractors, (std::vector<std::string>{"Hypertrophic scar", "Dermatofibroma", "Lipoma"}));
}

TEST(ParseMcqReply, MissingComponentsNamedInAddendum) {
  try {
    parse_mcq_reply("Context: x\nCorrect answer: y", 3);
    FAIL();
  } catch (const ReplyRejected& e) {
    EXPECT_NE(e.addendum().find("Question"), std::string::npos);
    EXPECT_NE(e.addendum().find("Distractor options"), std::string::npos);
  }
}

TEST(ParseAnswerReply, Forms) {
  auto a = parse_answer_reply("Correct answer: C. Lipoma\nReasoning: step by step", 4);
  EXPECT_EQ(a.letter, 'C');
  EXPECT_EQ(a.reasoning, "step by step");
  auto b = parse_answer_reply("b) because the scar grew", 4);
  EXPECT_EQ(b.letter, 'B');
  EXPECT_EQ(b.reasoning, "because the scar grew");
  EXPECT_EQ(parse_answer_reply("**D**\nReasoning: r", 4).letter, 'D');
  EXPECT_THROW(parse_answer_reply("E. too far", 4), ReplyRejected);
  EXPECT_THROW(parse_answer_reply("I am not sure.", 4), ReplyRejected);
}

std::vector<const Aspect*> question_aspects() {
  return RubricRegistry::builtin().aspects_of(Component::question);
}

TEST(CritiqueFormat, SkeletonListsSlugs) {
  const auto a = question_aspects();
  const std::string f = critique_format_instructions(a);
  EXPECT_EQ(f.rfind("{\"relevant\": {\"feedback\"", 0), 0u);
  EXPECT_NE(f.find("\"total_score\": \"<sum>/25\"}"), std::string::npos);
  EXPECT_EQ(rubric_lines(std::span(a).first(1)), "- Relevant: " + a[0]->description);
}

TEST(ParseCritiqueReply, AcceptsCommonShapes) {
  const auto a = question_aspects();
  const auto s = parse_critique_reply(
      "Sure! {\"Relevant\": {\"feedback\": \"ok\", \"score\": \"4/5\"}, \"clear\": {\"score\": 5}, "
      "\"question.concluding\": 3, \"Difficulty\": {\"rationale\": \"easy\", \"score\": \"2\"}, "
      "\"clarity\": {\"score\": \"0/5\"}, \"total_score\": \"14/25\"} done",
      a);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0].aspect_id, "question.relevant");
  EXPECT_EQ(s[0].score, 4);
  EXPECT_EQ(s[0].rationale, "ok");
  EXPECT_EQ(s[2].score, 3);
  EXPECT_EQ(s[3].rationale, "easy");
  EXPECT_EQ(s[4].score, 0);

  const auto wrapped = parse_critique_reply(
      R"({"aspects": [{"aspect": "Relevant", "score": 1}, {"aspect": "Clear", "score": 2},
          {"aspect": "Concluding", "score": 3}, {"aspect": "Difficulty", "score": 4}, {"aspect": "Clarity", "score": 5}]})",
      a);
  EXPECT_EQ(wrapped[4].score, 5);
}

TEST(ParseCritiqueReply, Rejections) {
  const auto a = question_aspects();
  const std::string rest = R"("clear": 5, "concluding": 5, "difficulty": 5, "clarity": 5})";
  EXPECT_THROW(parse_critique_reply("no json here", a), ReplyRejected);
  EXPECT_THROW(parse_critique_reply(R"({"relevant": 4.5, )" + rest, a), ReplyRejected);
  EXPECT_THROW(parse_critique_reply(R"({"relevant": 6, )" + rest, a), ReplyRejected);
  EXPECT_THROW(parse_critique_reply(R"({"relevant": "4/10", )" + rest, a), ReplyRejected);
  EXPECT_THROW(parse_critique_reply(R"({"relevant": "good", )" + rest, a), ReplyRejected);
  try {
    parse_critique_reply(R"({"clear": 5})", a);
    FAIL();
  } catch (const ReplyRejected& e) {
    EXPECT_NE(e.addendum().find("relevant"), std::string::npos);
    EXPECT_NE(e.addendum().find("clarity"), std::string::npos);
  }
}

TEST(ParseListReply, StripsDecoration) {
  EXPECT_EQ(parse_list_reply("Topics:\n1. Topic: **Select most likely diagnosis**\n- \"Mechanisms, drugs\"\n\n", "Topic"),
            (std::vector<std::string>{"Topics:", "Select most likely diagnosis", "Mechanisms, drugs"}));
}

}  // namespace
}  // namespace mcqg
