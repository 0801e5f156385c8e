#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mcqg/digest.hpp"
#include "mcqg/error.hpp"
#include "mcqg/pipeline.hpp"
#include "mcqg/prompts.hpp"
#include "scripted_backend.hpp"

namespace mcqg {
namespace {

namespace fs = std::filesystem;

const char* kSmall =
    "# comment before the first block\n"
    "[header]\n"
    "Header for {topic}\n"
    "[shot]\n"
    "Q: {question}\n"
    "?Note: {note}\n"
    "\n"
    "A: {answer}\n"
    "[body]\n"
    "Now {topic}: {{literal}}\n"
    "Q: {question}";

TEST(PromptTemplate, SplitsBlocksAndCollectsPlaceholders) {
  const auto t = PromptTemplate::parse(TemplateId::answer, kSmall);
  EXPECT_EQ(t.header(), "Header for {topic}");
  EXPECT_EQ(t.body(), "Now {topic}: {{literal}}\nQ: {question}");
  EXPECT_EQ(t.required_placeholders(), (std::set<std::string, std::less<>>{"question", "topic"}));
  EXPECT_EQ(t.shot_placeholders(), (std::set<std::string, std::less<>>{"answer", "note", "question"}));
}

TEST(PromptTemplate, RejectsMalformedText) {
  EXPECT_THROW(PromptTemplate::parse(TemplateId::answer, "[body]\nx {y"), ConfigError);
  EXPECT_THROW(PromptTemplate::parse(TemplateId::answer, "[body]\nx }"), ConfigError);
  EXPECT_THROW(PromptTemplate::parse(TemplateId::answer, "[shot]\nx"), ConfigError);
  EXPECT_THROW(PromptTemplate::parse(TemplateId::answer, "[body]\na\n[body]\nb"), ConfigError);
  EXPECT_THROW(PromptTemplate::parse(TemplateId::answer, "stray\n[body]\na"), ConfigError);
}

TEST(Render, ByteExactAgainstHandWrittenExpectation) {
  auto t = PromptTemplate::parse(TemplateId::answer, kSmall);
  t.max_shots = 3;
  const Bindings b{{"topic", "Keloids"}, {"question", "Why?"}, {"unused", "x"}};
  const std::vector<Bindings> shots = {
      {{"question", "S1"}, {"note", "n1"}, {"answer", "A1"}},
      {{"question", "S2"}, {"note", ""}, {"answer", "A2"}},
  };
  const auto r = render(t, b, shots);
  const std::string expected =
      "Header for Keloids\n"
      "Q: S1\nNote: n1\n\nA: A1\n"
      "Q: S2\nA: A2\n"
      "Now Keloids: {literal}\nQ: Why?";
  EXPECT_EQ(r.text, expected);
  EXPECT_EQ(r.shot_count, 2u);
  EXPECT_EQ(r.unused_bindings, std::vector<std::string>{"unused"});
}

TEST(Render, ShotFallsBackToBodyBindings) {
  auto t = PromptTemplate::parse(TemplateId::answer, kSmall);
  t.max_shots = 1;
  const Bindings b{{"topic", "T"}, {"question", "Q"}, {"note", "from body"}, {"answer", "fallback"}};
  const std::vector<Bindings> shots = {{{"question", "S"}}};
  const auto r = render(t, b, shots);
  EXPECT_NE(r.text.find("Note: from body"), std::string::npos);
  EXPECT_NE(r.text.find("A: fallback"), std::string::npos);
}

TEST(Render, MissingBindingAndShotCount) {
  auto t = PromptTemplate::parse(TemplateId::answer, kSmall);
  t.min_shots = 1;
  t.max_shots = 1;
  const std::vector<Bindings> one = {{{"question", "S"}, {"answer", "A"}}};
  EXPECT_THROW(render(t, {{"topic", "T"}}, one), ValidationError);
  EXPECT_THROW(render(t, {{"topic", "T"}, {"question", "Q"}}), ValidationError);
  const std::vector<Bindings> two(2, one[0]);
  EXPECT_THROW(render(t, {{"topic", "T"}, {"question", "Q"}}, two), ValidationError);
}

TEST(TemplatePack, ShippedPackLoadsAllTemplates) {
  const auto pack = TemplatePack::load(testing::data_dir() / "templates" / "v1");
  EXPECT_EQ(pack.pack_id(), "mcqg-prompts-v1");
  for (auto id : {TemplateId::init_context, TemplateId::init_question, TemplateId::init_answer,
                  TemplateId::init_distractors, TemplateId::answer, TemplateId::critique,
                  TemplateId::critique_reasoning, TemplateId::correction, TemplateId::identify_topics,
                  TemplateId::identify_testpoints, TemplateId::compare}) {
    EXPECT_TRUE(pack.contains(id)) << template_name(id);
    EXPECT_EQ(parse_template_id(template_name(id)), id);
  }
  EXPECT_THROW(parse_template_id("nope"), ConfigError);
}

void copy_pack(const fs::path& to) {
  fs::create_directories(to);
  for (const auto& e : fs::directory_iterator(testing::data_dir() / "templates" / "v1")) {
    fs::copy_file(e.path(), to / e.path().filename(), fs::copy_options::overwrite_existing);
  }
}

TEST(TemplatePack, ChecksumMismatchIsConfigError) {
  const fs::path dir = fs::temp_directory_path() / "mcqg_pack_checksum";
  fs::remove_all(dir);
  copy_pack(dir);
  std::ofstream(dir / "answer.tmpl", std::ios::app) << "\nextra";
  EXPECT_THROW(TemplatePack::load(dir), ConfigError);
  fs::remove_all(dir);
}

TEST(TemplatePack, MissingDirectoryIsConfigError) {
  EXPECT_THROW(TemplatePack::load("/nonexistent/pack"), ConfigError);
}

FewShotExample example() {
  FewShotExample ex;
  ex.id = "e1";
  ex.context = "Ctx.";
  ex.question = "Q?";
  ex.options = {"wrong one", "right", "wrong two", "wrong three"};
  ex.answer = "right";
  ex.extras = {{"reasoning", "because"}, {"context_feedback", "good context"}};
  return ex;
}

TEST(TrimExample, StagesSeeOnlyEarlierComponents) {
  const auto ex = example();
  EXPECT_EQ(trim_example(ex, "context"), "Context: Ctx.\nContext feedback: good context");
  EXPECT_EQ(trim_example(ex, "question"), "Context: Ctx.\nContext feedback: good context\nQuestion: Q?");
  EXPECT_EQ(trim_example(ex, "distractors"),
            "Context: Ctx.\nContext feedback: good context\nQuestion: Q?\nCorrect answer: right\n"
            "Distractor options: wrong one; wrong two; wrong three");
  EXPECT_THROW(trim_example(ex, "reasoning"), ValidationError);
}

TEST(ShotView, AnswerShotLettersTheKey) {
  const auto b = shot_view(example(), TemplateId::answer);
  EXPECT_EQ(b.at("options"), "A. wrong one\nB. right\nC. wrong two\nD. wrong three");
  EXPECT_EQ(b.at("answer"), "B. right");
  EXPECT_EQ(b.at("reasoning"), "because");
  EXPECT_FALSE(b.count("context_feedback"));
}

TEST(ShotView, InitStagesAreTrimmed) {
  const auto ex = example();
  EXPECT_EQ(shot_view(ex, TemplateId::init_context).at("context_question"), "Ctx.");
  EXPECT_EQ(shot_view(ex, TemplateId::init_question).at("context_question"), "Ctx.\nQ?");
  const auto d = shot_view(ex, TemplateId::init_distractors);
  EXPECT_EQ(d.at("distractor_options"), "wrong one; wrong two; wrong three");
  EXPECT_FALSE(d.count("reasoning"));
  EXPECT_EQ(shot_view(ex, TemplateId::correction).at("context_feedback"), "good context");
}

// Golden renders of every shipped template with fixed bindings. Set
// MCQG_UPDATE_GOLDEN=1 to rewrite them after an intentional template change.
Bindings fixed_bindings(const PromptTemplate& t) {
  Bindings b;
  for (const auto& name : t.required_placeholders()) b[name] = "<" + name + ">";
  return b;
}

std::vector<Bindings> fixed_shots(const PromptTemplate& t) {
  std::vector<Bindings> shots;
  for (std::size_t i = 0; i < t.max_shots && i < 2; ++i) {
    Bindings s;
    for (const auto& name : t.shot_placeholders()) s[name] = "<shot" + std::to_string(i + 1) + " " + name + ">";
    shots.push_back(s);
  }
  while (shots.size() < t.min_shots) shots.push_back(shots.empty() ? Bindings{} : shots.back());
  return shots;
}

TEST(TemplatePack, RendersMatchGoldenFiles) {
  const auto pack = TemplatePack::load(testing::data_dir() / "templates" / "v1");
  const fs::path dir = fs::path(MCQG_TEST_FIXTURE_DIR) / "golden" / "render";
  const bool update = std::getenv("MCQG_UPDATE_GOLDEN") != nullptr;
  for (auto id : {TemplateId::init_context, TemplateId::init_question, TemplateId::init_answer,
                  TemplateId::init_distractors, TemplateId::answer, TemplateId::critique,
                  TemplateId::critique_reasoning, TemplateId::correction, TemplateId::identify_topics,
                  TemplateId::identify_testpoints, TemplateId::compare}) {
    const auto& t = pack.get(id);
    const std::string text = render(t, fixed_bindings(t), fixed_shots(t)).text;
    const fs::path golden = dir / (std::string(template_name(id)) + ".txt");
    if (update) {
      fs::create_directories(dir);
      std::ofstream(golden, std::ios::binary) << text;
      continue;
    }
    std::ifstream in(golden, std::ios::binary);
    ASSERT_TRUE(in) << "missing golden file " << golden;
    std::ostringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(text, ss.str()) << template_name(id);
  }
}

TEST(FewShotPack, ShippedPackShape) {
  const auto pack = FewShotPack::load(testing::data_dir() / "fewshot");
  EXPECT_EQ(pack.answer.size(), 2u);
  EXPECT_EQ(pack.correction.size(), 3u);
  for (Component c : {Component::context, Component::question, Component::correct_answer, Component::distractors}) {
    ASSERT_EQ(pack.critique.at(c).size(), 2u) << component_id(c);
    for (const auto& ex : pack.critique.at(c)) {
      for (const char* key : {"clinical_note", "topic", "keypoint", "feedback", "score"}) {
        EXPECT_TRUE(ex.extra(key)) << ex.id << " lacks " << key;
      }
    }
  }
  EXPECT_TRUE(pack.answer[0].extra("reasoning"));
}

TEST(Digest, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace mcqg
