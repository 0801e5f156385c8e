#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "mcqg/metrics.hpp"
#include "mcqg/pipeline.hpp"
#include "scripted_backend.hpp"

namespace mcqg {
namespace {

using L = PrefLabel;

// ------------------------------------------------------------- agreement

TEST(Agreement, HandFixture) {
  const std::vector<L> x = {L::a, L::a, L::b, L::b};
  const std::vector<L> y = {L::a, L::a, L::b, L::a};
  // p_o = 3/4, p_e = (2*3 + 2*1) / 16 = 1/2, kappa = (3/4 - 1/2) / (1/2).
  EXPECT_NEAR(cohen_kappa<L>(x, y), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(percentage_agreement<L>(x, y), 0.75);
  EXPECT_EQ(cohen_kappa<L>(x, x), 1.0);
  const std::vector<L> constant = {L::tie, L::tie, L::tie};
  EXPECT_EQ(cohen_kappa<L>(constant, constant), 1.0);
  EXPECT_THROW(cohen_kappa<L>(x, constant), ValidationError);
  EXPECT_THROW(cohen_kappa<L>(std::vector<L>{}, std::vector<L>{}), ValidationError);
}

// O(n^2) pair count.
std::optional<double> kendall_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      ++pairs;
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0) ++tie_x;
      if (dy == 0) ++tie_y;
      if (dx == 0 || dy == 0) continue;
      if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double den = std::sqrt(static_cast<double>(pairs - tie_x) * static_cast<double>(pairs - tie_y));
  if (den == 0.0) return std::nullopt;
  return static_cast<double>(concordant - discordant) / den;
}

TEST(Kendall, MatchesPairCountOracleOnFivePointScales) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = 1 + rng() % 5;
    for (auto& v : y) v = 1 + rng() % 5;
    const auto got = kendall_tau_b(x, y);
    const auto want = kendall_oracle(x, y);
    ASSERT_EQ(got.has_value(), want.has_value()) << trial;
    if (want) {
      EXPECT_EQ(*got, *want) << trial;
    }
  }
  const std::vector<double> a = {1, 2, 3, 4, 5};
  const std::vector<double> b = {5, 4, 3, 2, 1};
  EXPECT_EQ(*kendall_tau_b(a, a), 1.0);
  EXPECT_EQ(*kendall_tau_b(a, b), -1.0);
  EXPECT_FALSE(kendall_tau_b(a, std::vector<double>{3, 3, 3, 3, 3}));
}

TEST(RankCorrelations, PearsonAndSpearman) {
  const std::vector<double> x = {1, 2, 3, 4};
  const std::vector<double> y = {2, 4, 6, 9};
  const auto r = rank_correlations(x, y);
  EXPECT_NEAR(*r.spearman, 1.0, 1e-12);
  EXPECT_NEAR(*r.pearson, 11.5 / std::sqrt(5 * 26.75), 1e-12);
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  EXPECT_THROW(rank_correlations(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
}

// ------------------------------------------------------- aspect selection

struct Frac {
  __int128 num, den;
  bool operator==(const Frac& o) const { return num * o.den == o.num * den; }
  bool operator>(const Frac& o) const { return num * o.den > o.num * den; }
};

struct Agreement {
  Frac pa, kappa;
};

Agreement oracle_agreement(const std::vector<RatedItem>& items, const std::vector<std::string>& subset) {
  long long m[3][3] = {};
  auto idx = [](L l) { return l == L::a ? 0 : l == L::b ? 1 : 2; };
  for (const auto& it : items) {
    long long d = 0;
    for (const auto& a : subset) d += it.score_a.at(a) - it.score_b.at(a);
    const L pred = d > 0 ? L::a : d < 0 ? L::b : L::tie;
    ++m[idx(pred)][idx(it.expert)];
  }
  const long long n = static_cast<long long>(items.size());
  long long agree = 0, chance = 0;
  for (int i = 0; i < 3; ++i) {
    agree += m[i][i];
    long long row = 0, col = 0;
    for (int j = 0; j < 3; ++j) {
      row += m[i][j];
      col += m[j][i];
    }
    chance += row * col;
  }
  Agreement out{{agree, n}, {n * agree - chance, n * n - chance}};
  if (n * n == chance) out.kappa = {1, 1};
  return out;
}

Frac pick(const Agreement& a, Objective o) { return o == Objective::pa ? a.pa : a.kappa; }

struct Dataset {
  std::vector<RatedItem> items;
  std::vector<std::string> aspects;
};

Dataset random_dataset(std::mt19937& rng) {
  Dataset d;
  const std::size_t k = 1 + rng() % 8;
  const std::size_t n = 1 + rng() % 30;
  std::vector<std::string> names = {"zeta", "alpha", "mu", "beta", "omega", "kappa", "eta", "chi"};
  std::shuffle(names.begin(), names.end(), rng);
  d.aspects.assign(names.begin(), names.begin() + k);
  const int spread = 1 + rng() % 5;
  for (std::size_t i = 0; i < n; ++i) {
    RatedItem it;
    it.item_id = "i" + std::to_string(i);
    for (const auto& a : d.aspects) {
      it.score_a[a] = static_cast<int>(rng() % (spread + 1));
      it.score_b[a] = static_cast<int>(rng() % (spread + 1));
    }
    it.expert = static_cast<L>(rng() % 3);
    d.items.push_back(std::move(it));
  }
  return d;
}

struct OracleBest {
  Frac value{0, 1};
  std::vector<std::string> ids;
};

OracleBest brute_force(const Dataset& d, Objective o) {
  OracleBest best;
  const std::size_t k = d.aspects.size();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    std::vector<std::string> subset;
    for (std::size_t b = 0; b < k; ++b) {
      if (mask >> b & 1) subset.push_back(d.aspects[b]);
    }
    std::sort(subset.begin(), subset.end());
    const Frac v = pick(oracle_agreement(d.items, subset), o);
    if (v > best.value || (!best.ids.empty() && v == best.value && subset < best.ids)) best = {v, subset};
  }
  return best;
}

OracleBest greedy_replay(const Dataset& d, Objective o) {
  std::vector<std::pair<Frac, std::string>> ranked;
  for (const auto& a : d.aspects) ranked.push_back({pick(oracle_agreement(d.items, {a}), o), a});
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (!(x.first == y.first)) return x.first > y.first;
    return x.second < y.second;
  });
  OracleBest best;
  for (const auto& [unused, a] : ranked) {
    auto candidate = best.ids;
    candidate.push_back(a);
    const Frac v = pick(oracle_agreement(d.items, candidate), o);
    if (v > best.value) best = {v, candidate};
  }
  return best;
}

Frac as_frac(const Ratio& r) { return {r.num, r.den}; }

TEST(AspectSelection, AllComboAndGreedyMatchOracles) {
  std::mt19937 rng(2024);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 60; ++trial) {
    const Dataset d = random_dataset(rng);
    const auto combo = all_combo_select(d.items, d.aspects, d.aspects.size());
    EXPECT_EQ(combo.subsets_evaluated, (std::size_t{1} << d.aspects.size()) - 1);
    for (Objective o : {Objective::pa, Objective::kappa}) {
      const auto& got = o == Objective::pa ? combo.best_pa : combo.best_kappa;
      const OracleBest want = brute_force(d, o);
      EXPECT_EQ(got.aspects, want.ids) << trial;
      EXPECT_TRUE(as_frac(got.objective_value) == want.value) << trial;

      const auto greedy = greedy_select(d.items, d.aspects, o);
      const OracleBest replay = greedy_replay(d, o);
      EXPECT_EQ(greedy.aspects, replay.ids) << trial;
      EXPECT_TRUE(as_frac(greedy.objective_value) == replay.value) << trial;
      EXPECT_FALSE(as_frac(greedy.objective_value) > as_frac(got.objective_value)) << trial;
    }
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
}

TEST(AspectSelection, PerAspectCorrelationSkipsMissingScores) {
  RatedItem full{"1", {{"x", 3}, {"y", 1}}, {{"x", 1}, {"y", 1}}, L::a};
  RatedItem partial{"2", {{"x", 1}}, {{"x", 4}}, L::b};
  const std::vector<RatedItem> items = {full, partial};
  const std::vector<std::string> ids = {"x", "y"};
  const auto c = per_aspect_correlation(items, ids);
  EXPECT_EQ(c[0].items, 2u);
  EXPECT_EQ(c[0].percentage_agreement, 1.0);
  EXPECT_EQ(c[1].items, 1u);
  EXPECT_EQ(c[1].skipped, 1u);
  EXPECT_EQ(c[1].percentage_agreement, 0.0);
  EXPECT_THROW(greedy_select(items, ids, Objective::pa), ValidationError);
}

TEST(AspectSelection, AllComboLimits) {
  std::mt19937 rng(3);
  Dataset d;
  do d = random_dataset(rng);
  while (d.aspects.size() < 4);
  EXPECT_THROW(all_combo_select(d.items, d.aspects, 0), ValidationError);
  EXPECT_THROW(all_combo_select(d.items, d.aspects, d.aspects.size() + 1), ValidationError);
  EXPECT_THROW(all_combo_select(d.items, d.aspects, 4, Objective::pa, 14), BudgetError);
  EXPECT_EQ(all_combo_select(d.items, d.aspects, 3).subsets_evaluated, 7u);
}

TEST(AspectSelection, ObjectiveNames) {
  EXPECT_EQ(parse_objective("CK"), Objective::kappa);
  EXPECT_EQ(parse_objective("pa"), Objective::pa);
  EXPECT_THROW(parse_objective("f1"), ConfigError);
  EXPECT_EQ(parse_pref_label("Tie"), L::tie);
}

// ----------------------------------------------------------------- self-BLEU

TEST(SelfBleu, IdenticalCorpusIsOne) {
  const std::vector<std::string> corpus(3, "A woman has a firm scar growing on her earlobe after a piercing.");
  EXPECT_NEAR(self_bleu(corpus), 1.0, 1e-9);
}

TEST(SelfBleu, DisjointVocabularyIsNearZero) {
  std::vector<std::string> corpus;
  for (int d = 0; d < 4; ++d) {
    std::string doc;
    for (int w = 0; w < 16; ++w) doc += "d" + std::to_string(d) + "w" + std::to_string(w) + " ";
    corpus.push_back(doc);
  }
  EXPECT_LT(self_bleu(corpus), 0.01);
}

TEST(SelfBleu, ThreeDocumentHandCount) {
  const std::vector<std::string> corpus = {"the cat sat on the mat", "the cat ate the fish", "a dog sat on a log"};
  const double e = 0.1;
  // Clipped n-gram matches per order, counted by hand against the other two documents.
  const double d1 = std::exp((std::log(5.0 / 6) + std::log(2.0 / 5) + std::log(e / 4) + std::log(e / 3)) / 4);
  const double d2 = std::exp(1.0 - 6.0 / 5) *
                    std::exp((std::log(3.0 / 5) + std::log(1.0 / 4) + std::log(e / 3) + std::log(e / 2)) / 4);
  const double d3 = std::exp((std::log(2.0 / 6) + std::log(1.0 / 5) + std::log(e / 4) + std::log(e / 3)) / 4);
  EXPECT_NEAR(self_bleu(corpus), (d1 + d2 + d3) / 3, 1e-9);
}

TEST(SelfBleu, PermutationInvariant) {
  std::vector<std::string> corpus = {"the cat sat on the mat", "the cat ate the fish", "a dog sat on a log",
                                     "a cat sat on a dog", "fish ate the log"};
  const double base = self_bleu(corpus);
  std::sort(corpus.begin(), corpus.end());
  do EXPECT_EQ(self_bleu(corpus), base);
  while (std::next_permutation(corpus.begin(), corpus.end()));
  EXPECT_THROW(self_bleu(std::vector<std::string>{"one"}), ValidationError);
}

TEST(SentenceBleu, ShortHypothesisDropsLongOrders) {
  const std::vector<std::string> hyp = {"a", "b"};
  const std::vector<std::vector<std::string>> refs = {{"a", "b"}};
  EXPECT_NEAR(sentence_bleu(hyp, refs), 1.0, 1e-12);
  EXPECT_EQ(sentence_bleu(std::vector<std::string>{}, refs), 0.0);
}

// --------------------------------------------------------------- fixture

TEST(JudgeFixture, Gpt4ColumnHasFourteenBiasedRows) {
  const auto table = load_judge_comparison(testing::data_dir() / "fixtures" / "llm_judge_comparison.csv");
  ASSERT_EQ(table.cases.size(), 40u);
  const auto f = fixture_agreement(table, "gpt4");
  EXPECT_EQ(f.rows, 40u);
  EXPECT_EQ(f.biased, 14u);
  EXPECT_DOUBLE_EQ(f.unbiased_fraction, 0.65);
  EXPECT_TRUE(f.percentage_agreement.has_value());
  EXPECT_TRUE(f.kendall_tau.has_value());
  EXPECT_THROW(table.column("gpt5"), ValidationError);
}

// ------------------------------------------------------------------ rest

TEST(MeanStd, Population) {
  const std::vector<double> v = {2, 4, 4, 4, 5, 5, 7, 9};
  const auto m = mean_std(v);
  EXPECT_EQ(m.mean, 5.0);
  EXPECT_EQ(m.std, 2.0);
  EXPECT_EQ(m.n, 8u);
}

TEST(RoundStats, AggregatesByRoundIndex) {
  auto run = [](std::vector<int> totals) {
    testing::ScriptedOptions o;
    o.round_totals = std::move(totals);
    auto backend = std::make_shared<testing::ScriptedBackend>(o);
    const Pipeline p(testing::shipped_resources(backend), PipelineConfig{});
    const auto s = testing::sample_item();
    return p.refine(s.medical_case, s.topics, s.testpoints);
  };
  std::vector<RefinementSession> sessions = {run({120, 150}), run({90, 120, 150}), RefinementSession{}};
  sessions[2].case_id = "empty";
  const auto st = round_stats(sessions);
  EXPECT_EQ(st.sessions, 2u);
  EXPECT_EQ(st.skipped, 1u);
  ASSERT_EQ(st.rounds.size(), 3u);
  EXPECT_EQ(st.rounds[0].sessions, 2u);
  EXPECT_NEAR(st.rounds[0].total.mean, 0.7, 1e-12);
  EXPECT_NEAR(st.rounds[0].total.std, 0.1, 1e-12);
  EXPECT_EQ(st.rounds[2].sessions, 1u);
  EXPECT_EQ(st.rounds[2].total.mean, 1.0);
  EXPECT_EQ(st.rounds[0].qa_accuracy, 1.0);
  EXPECT_EQ(st.best_round_histogram.at(2), 1u);
  EXPECT_EQ(st.best_round_histogram.at(3), 1u);
  EXPECT_THROW(round_stats(std::vector<RefinementSession>{}), ValidationError);
}

TEST(AnswerIsKeypoint, TrimmedCaseInsensitive) {
  Mcq m = testing::sample_mcq();
  m.correct_answer = "  Keloid Formation ";
  const std::vector<TestPoint> tps = {{"keloid formation", "Skin & Subcutaneous Tissue"}};
  EXPECT_TRUE(answer_is_keypoint(m, tps));
  m.correct_answer = "keloid";
  EXPECT_FALSE(answer_is_keypoint(m, tps));
}

TEST(ExpertLabels, AdjudicationThenUnanimity) {
  const std::vector<Annotation> ann = {{"q1", "e1", L::a, "", ""}, {"q1", "e2", L::a, "", ""},
                                       {"q2", "e1", L::a, "", ""}, {"q2", "e2", L::b, "", ""},
                                       {"q3", "e1", L::tie, "", ""}, {"q3", "e2", L::b, "", ""}};
  const std::vector<Adjudication> adj = {{"q3", L::b}};
  const auto c = consolidate_expert_labels(ann, adj);
  ASSERT_EQ(c.labels.size(), 2u);
  EXPECT_EQ(c.labels[0], (std::pair<std::string, L>{"q1", L::a}));
  EXPECT_EQ(c.labels[1], (std::pair<std::string, L>{"q3", L::b}));
  EXPECT_EQ(c.needs_adjudication, std::vector<std::string>{"q2"});
  const auto a = annotation_from_json({{"item_id", 7}, {"expert_id", "e1"}, {"preference", "B"}});
  EXPECT_EQ(a.item_id, "7");
  EXPECT_THROW(annotation_from_json({{"item_id", "x"}}), ValidationError);
}

TEST(Tally, SharesOverUnbiasedOutcomes) {
  const std::vector<int> codes = {1, 1, 1, 1, 2, 0, -1, -1};
  const auto t = tally_outcomes(codes);
  EXPECT_EQ(t.total(), 8u);
  EXPECT_EQ(t.valid(), 6u);
  EXPECT_DOUBLE_EQ(t.share_a(), 4.0 / 6);
  EXPECT_DOUBLE_EQ(t.share_tie(), 1.0 / 6);
  EXPECT_EQ(tally_outcomes(std::vector<int>{-1}).share_a(), 0.0);
  EXPECT_THROW(tally_outcomes(std::vector<int>{5}), ValidationError);
}

}  // namespace
}  // namespace mcqg
