#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcqg/error.hpp"
#include "mcqg/rubric.hpp"
#include "mcqg/session.hpp"

namespace mcqg {

// ---------------------------------------------------------------- agreement

namespace detail {
template <class T>
void check_pair(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size()) {
    throw ValidationError("label lists differ in length: " + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()));
  }
  if (x.empty()) throw ValidationError("label lists are empty");
}
}  // namespace detail

/// Exact a/b with b > 0, compared by cross-multiplication.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator<(const Ratio& a, const Ratio& b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
  }
  friend bool operator>(const Ratio& a, const Ratio& b) { return b < a; }
  friend bool operator==(const Ratio& a, const Ratio& b) {
    return static_cast<__int128>(a.num) * b.den == static_cast<__int128>(b.num) * a.den;
  }
};

/// Agreement counts behind PA and kappa: n items, `agree` equal pairs and
/// S = sum over labels of count_x(label) * count_y(label).
struct AgreementCounts {
  std::int64_t n = 0;
  std::int64_t agree = 0;
  std::int64_t marginal_product = 0;

  Ratio percentage_agreement() const { return {agree, n}; }
  /// (n*agree - S) / (n^2 - S); 1 when n^2 == S (both raters constant and equal).
  Ratio kappa() const {
    const std::int64_t den = n * n - marginal_product;
    if (den == 0) return {1, 1};
    return {n * agree - marginal_product, den};
  }
};

template <class T>
AgreementCounts agreement_counts(std::span<const T> x, std::span<const T> y) {
  detail::check_pair(x, y);
  std::map<T, std::array<std::int64_t, 2>> marginals;
  AgreementCounts c;
  c.n = static_cast<std::int64_t>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == y[i]) ++c.agree;
    ++marginals[x[i]][0];
    ++marginals[y[i]][1];
  }
  for (const auto& [label, m] : marginals) c.marginal_product += m[0] * m[1];
  return c;
}

/// Fraction of index-wise equal labels.
template <class T>
double percentage_agreement(std::span<const T> x, std::span<const T> y) {
  return agreement_counts(x, y).percentage_agreement().value();
}

/// Cohen's kappa (p_o - p_e) / (1 - p_e) with p_e from the two marginals.
template <class T>
double cohen_kappa(std::span<const T> x, std::span<const T> y) {
  return agreement_counts(x, y).kappa().value();
}

struct RankCorrelations {
  std::optional<double> pearson;   ///< nullopt when either series is constant
  std::optional<double> spearman;  ///< nullopt when either series is constant
  std::optional<double> kendall_tau;  ///< tau-b; nullopt when a series is constant
};

/// Requires equal lengths >= 2.
RankCorrelations rank_correlations(std::span<const double> x, std::span<const double> y);

/// Tau-b by Knight's O(n log n) method.
std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y);
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> x);

// ------------------------------------------------------- aspect selection

/// A preference between system A and system B.
enum class PrefLabel { a, b, tie };

std::string_view pref_label_name(PrefLabel l);
PrefLabel parse_pref_label(std::string_view text);  ///< "A", "B", "tie" (any case)

/// Aspect ratings of both systems for one item plus the expert preference.
struct RatedItem {
  std::string item_id;
  std::map<std::string, int, std::less<>> score_a;
  std::map<std::string, int, std::less<>> score_b;
  PrefLabel expert = PrefLabel::tie;
};

/// A if the subset sum of A is larger, B if smaller, tie if equal.
PrefLabel predict_preference(const RatedItem& item, std::span<const std::string> aspects);

enum class Objective { pa, kappa };

std::string_view objective_name(Objective o);
Objective parse_objective(std::string_view text);  ///< "pa" or "ck"/"kappa"

struct AspectCorrelation {
  std::string aspect_id;
  double percentage_agreement = 0.0;
  double cohen_kappa = 0.0;
  Ratio pa_exact;
  Ratio kappa_exact;
  std::size_t items = 0;
  std::size_t skipped = 0;  ///< items lacking a score for this aspect
};

/// One entry per aspect in `aspects`, same order.
std::vector<AspectCorrelation> per_aspect_correlation(std::span<const RatedItem> items,
                                                      std::span<const std::string> aspects);

enum class SelectionMethod { greedy_pa, greedy_ck, all_combo_pa, all_combo_ck };
std::string_view selection_method_name(SelectionMethod m);

struct SubsetSelection {
  std::vector<std::string> aspects;  ///< greedy: addition order; all-combo: sorted ids
  double percentage_agreement = 0.0;
  double cohen_kappa = 0.0;
  Ratio objective_value;  ///< c_best; 0/1 when nothing was selected
  SelectionMethod method = SelectionMethod::greedy_pa;
  std::size_t subsets_evaluated = 0;
};

/// Exact PA and kappa of the subset-sum predictor against the expert labels.
AgreementCounts subset_agreement(std::span<const RatedItem> items, std::span<const std::string> aspects);

/// Candidates sorted by their own objective value, descending; ties by id.
std::vector<std::string> rank_aspects(std::span<const RatedItem> items, std::span<const std::string> aspects,
                                      Objective objective);

/// Greedy aspect selection: walk the ranked aspects and keep one only when
/// it strictly raises the objective above the best so far (starting at 0).
/// Items must carry scores for every candidate aspect.
SubsetSelection greedy_select(std::span<const RatedItem> items, std::span<const std::string> aspects,
                              Objective objective);

struct AllComboResult {
  SubsetSelection best_pa;
  SubsetSelection best_kappa;
  std::size_t subsets_evaluated = 0;
};

/// Every non-empty subset of the top `n_max` ranked aspects (ranked by
/// `rank_by`). A subset replaces the incumbent only with a strictly larger
/// value (starting at 0); among equal maxima the lexicographically smallest
/// sorted id list wins. Throws ValidationError when n_max is 0 or exceeds the
/// candidates, and BudgetError when 2^n_max - 1 exceeds `subset_budget`.
AllComboResult all_combo_select(std::span<const RatedItem> items, std::span<const std::string> aspects,
                                std::size_t n_max = 11, Objective rank_by = Objective::pa,
                                std::uint64_t subset_budget = std::uint64_t{1} << 20);

class BudgetError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// ----------------------------------------------------------------- diversity

struct BleuOptions {
  int max_order = 4;
  double epsilon = 0.1;  ///< added to zero clipped counts
};

/// Modified-precision BLEU of `hypothesis` against `references` (tokens),
/// uniform weights, add-epsilon smoothing, closest-length brevity penalty.
/// Orders longer than the hypothesis are left out of the geometric mean.
double sentence_bleu(std::span<const std::string> hypothesis,
                     std::span<const std::vector<std::string>> references, const BleuOptions& options = {});

/// Mean over documents of BLEU against all other documents. Documents are
/// tokenized with the retrieval tokenizer. Throws on fewer than 2 documents.
double self_bleu(std::span<const std::string> corpus, const BleuOptions& options = {});

// ------------------------------------------------------------ round analytics

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< population standard deviation
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);

struct RoundRow {
  int round = 1;
  std::size_t sessions = 0;
  std::array<MeanStd, 5> components{};  ///< normalized, in kComponents order
  MeanStd total;
  double qa_accuracy = 0.0;
  double answer_is_keypoint = 0.0;
  MeanStd context_words;
};

struct RoundStats {
  std::vector<RoundRow> rounds;
  std::map<int, std::size_t> best_round_histogram;
  std::size_t sessions = 0;
  std::size_t skipped = 0;  ///< sessions without a completed round
};

/// Throws ValidationError on an empty input.
RoundStats round_stats(std::span<const RefinementSession> sessions);

/// Case-insensitive, whitespace-trimmed equality with any test point.
bool answer_is_keypoint(const Mcq& mcq, std::span<const TestPoint> testpoints);

// -------------------------------------------------------------- expert labels

struct Annotation {
  std::string item_id;
  std::string expert_id;
  PrefLabel preference = PrefLabel::tie;
  std::string difficulty;
  std::string errors;
};

struct Adjudication {
  std::string item_id;
  PrefLabel final_preference = PrefLabel::tie;
};

struct ConsolidatedLabels {
  std::vector<std::pair<std::string, PrefLabel>> labels;  ///< first-seen item order
  std::vector<std::string> needs_adjudication;
};

/// Adjudication wins, then unanimity; anything else is flagged and left out.
ConsolidatedLabels consolidate_expert_labels(std::span<const Annotation> annotations,
                                             std::span<const Adjudication> adjudications);

Annotation annotation_from_json(const nlohmann::json& j);
Adjudication adjudication_from_json(const nlohmann::json& j);

// -------------------------------------------------------------- preferences

struct PreferenceTally {
  std::size_t system_a = 0;
  std::size_t system_b = 0;
  std::size_t ties = 0;
  std::size_t position_biased = 0;

  std::size_t valid() const noexcept { return system_a + system_b + ties; }
  std::size_t total() const noexcept { return valid() + position_biased; }
  /// Shares of the valid (unbiased) outcomes; 0 when there are none.
  double share_a() const;
  double share_b() const;
  double share_tie() const;
};

/// Counts outcome codes -1/0/1/2.
PreferenceTally tally_outcomes(std::span<const int> codes);

// ------------------------------------------------ judge comparison table

/// Per-case judge outcome codes for several judges plus Expert X.
struct JudgeComparisonTable {
  std::vector<std::string> judges;          ///< column names, in file order
  std::vector<int> cases;
  std::vector<std::vector<int>> outcomes;   ///< [judge][row]
  std::vector<int> expert;                  ///< Expert X code per row

  std::span<const int> column(std::string_view judge) const;  ///< throws if unknown
};

/// CSV with header "case,<judge>...,expert_x" and integer cells.
JudgeComparisonTable load_judge_comparison(const std::filesystem::path& path);

struct FixtureAgreement {
  std::size_t rows = 0;
  std::size_t biased = 0;
  double unbiased_fraction = 0.0;
  std::optional<double> percentage_agreement;  ///< over unbiased rows
  std::optional<double> kendall_tau;
};

/// Bias count plus PA and tau-b against Expert X over the judge's unbiased rows.
FixtureAgreement fixture_agreement(const JudgeComparisonTable& table, std::string_view judge);

}  // namespace mcqg
