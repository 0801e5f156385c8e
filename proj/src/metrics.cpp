#include "mcqg/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mcqg/retrieval.hpp"

namespace mcqg {

using json = nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trimmed(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

void check_series(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("series differ in length");
  if (x.size() < 2) throw ValidationError("correlation needs at least 2 points");
}

}  // namespace

// ---------------------------------------------------------------- agreement

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  check_series(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Sorts v[lo, hi) and returns the number of strict inversions.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

template <class Eq>
std::int64_t tied_pairs(std::size_t n, Eq same_as_previous) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && same_as_previous(i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  check_series(x, y);
  const std::size_t n = x.size();
  std::vector<std::pair<double, double>> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = {x[i], y[i]};
  std::sort(p.begin(), p.end());
  const auto n0 = static_cast<std::int64_t>(n * (n - 1) / 2);
  const std::int64_t n1 = tied_pairs(n, [&](std::size_t i) { return p[i].first == p[i - 1].first; });
  const std::int64_t n3 = tied_pairs(n, [&](std::size_t i) { return p[i] == p[i - 1]; });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = p[i].second;
  std::vector<double> buf(n);
  const std::int64_t swaps = merge_count(ys, buf, 0, n);
  const std::int64_t n2 = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });
  const double den = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  if (den == 0.0) return std::nullopt;
  const std::int64_t num = n0 - n1 - n2 + n3 - 2 * swaps;
  return static_cast<double>(num) / den;
}

RankCorrelations rank_correlations(std::span<const double> x, std::span<const double> y) {
  check_series(x, y);
  RankCorrelations r;
  r.pearson = pearson(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  r.spearman = pearson(rx, ry);
  r.kendall_tau = kendall_tau_b(x, y);
  return r;
}

// ------------------------------------------------------- aspect selection

std::string_view pref_label_name(PrefLabel l) {
  switch (l) {
    case PrefLabel::a: return "A";
    case PrefLabel::b: return "B";
    case PrefLabel::tie: return "tie";
  }
  return "";
}

PrefLabel parse_pref_label(std::string_view text) {
  const std::string t = lower(trimmed(text));
  if (t == "a") return PrefLabel::a;
  if (t == "b") return PrefLabel::b;
  if (t == "tie") return PrefLabel::tie;
  throw ValidationError("preference must be A, B or tie, got \"" + std::string(text) + "\"");
}

namespace {

int score_of(const std::map<std::string, int, std::less<>>& scores, std::string_view aspect,
             const std::string& item_id) {
  auto it = scores.find(aspect);
  if (it == scores.end()) {
    throw ValidationError("item " + item_id + " has no score for " + std::string(aspect));
  }
  return it->second;
}

PrefLabel from_difference(long long diff) {
  if (diff > 0) return PrefLabel::a;
  if (diff < 0) return PrefLabel::b;
  return PrefLabel::tie;
}

}  // namespace

PrefLabel predict_preference(const RatedItem& item, std::span<const std::string> aspects) {
  long long diff = 0;
  for (const auto& a : aspects) diff += score_of(item.score_a, a, item.item_id) - score_of(item.score_b, a, item.item_id);
  return from_difference(diff);
}

std::string_view objective_name(Objective o) { return o == Objective::pa ? "pa" : "ck"; }

Objective parse_objective(std::string_view text) {
  const std::string t = lower(text);
  if (t == "pa") return Objective::pa;
  if (t == "ck" || t == "kappa") return Objective::kappa;
  throw ConfigError("objective must be pa or ck, got " + std::string(text));
}

std::vector<AspectCorrelation> per_aspect_correlation(std::span<const RatedItem> items,
                                                      std::span<const std::string> aspects) {
  std::vector<AspectCorrelation> out;
  for (const auto& aspect : aspects) {
    AspectCorrelation c;
    c.aspect_id = aspect;
    std::vector<PrefLabel> predicted;
    std::vector<PrefLabel> expert;
    for (const auto& item : items) {
      auto a = item.score_a.find(aspect);
      auto b = item.score_b.find(aspect);
      if (a == item.score_a.end() || b == item.score_b.end()) {
        ++c.skipped;
        continue;
      }
      predicted.push_back(from_difference(a->second - b->second));
      expert.push_back(item.expert);
    }
    c.items = predicted.size();
    if (!predicted.empty()) {
      const auto counts = agreement_counts<PrefLabel>(predicted, expert);
      c.pa_exact = counts.percentage_agreement();
      c.kappa_exact = counts.kappa();
      c.percentage_agreement = c.pa_exact.value();
      c.cohen_kappa = c.kappa_exact.value();
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string_view selection_method_name(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::greedy_pa: return "greedy_pa";
    case SelectionMethod::greedy_ck: return "greedy_ck";
    case SelectionMethod::all_combo_pa: return "all_combo_pa";
    case SelectionMethod::all_combo_ck: return "all_combo_ck";
  }
  return "";
}

AgreementCounts subset_agreement(std::span<const RatedItem> items, std::span<const std::string> aspects) {
  std::vector<PrefLabel> predicted;
  std::vector<PrefLabel> expert;
  for (const auto& item : items) {
    predicted.push_back(predict_preference(item, aspects));
    expert.push_back(item.expert);
  }
  return agreement_counts<PrefLabel>(predicted, expert);
}

namespace {

Ratio objective_of(const AgreementCounts& c, Objective o) {
  return o == Objective::pa ? c.percentage_agreement() : c.kappa();
}

void require_complete(std::span<const RatedItem> items, std::span<const std::string> aspects) {
  if (items.empty()) throw ValidationError("aspect selection needs at least one item");
  if (aspects.empty()) throw ValidationError("aspect selection needs at least one aspect");
  for (const auto& item : items) {
    for (const auto& a : aspects) {
      score_of(item.score_a, a, item.item_id);
      score_of(item.score_b, a, item.item_id);
    }
  }
}

}  // namespace

std::vector<std::string> rank_aspects(std::span<const RatedItem> items, std::span<const std::string> aspects,
                                      Objective objective) {
  require_complete(items, aspects);
  std::vector<std::pair<Ratio, std::string>> scored;
  for (const auto& a : aspects) {
    const std::string one[] = {a};
    scored.emplace_back(objective_of(subset_agreement(items, one), objective), a);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (!(x.first == y.first)) return x.first > y.first;
    return x.second < y.second;
  });
  std::vector<std::string> out;
  for (auto& [r, id] : scored) out.push_back(std::move(id));
  return out;
}

SubsetSelection greedy_select(std::span<const RatedItem> items, std::span<const std::string> aspects,
                              Objective objective) {
  SubsetSelection sel;
  sel.method = objective == Objective::pa ? SelectionMethod::greedy_pa : SelectionMethod::greedy_ck;
  sel.objective_value = {0, 1};
  for (const auto& a : rank_aspects(items, aspects, objective)) {
    std::vector<std::string> candidate = sel.aspects;
    candidate.push_back(a);
    const Ratio c = objective_of(subset_agreement(items, candidate), objective);
    ++sel.subsets_evaluated;
    if (c > sel.objective_value) {
      sel.aspects = std::move(candidate);
      sel.objective_value = c;
    }
  }
  if (!sel.aspects.empty()) {
    const auto counts = subset_agreement(items, sel.aspects);
    sel.percentage_agreement = counts.percentage_agreement().value();
    sel.cohen_kappa = counts.kappa().value();
  }
  return sel;
}

AllComboResult all_combo_select(std::span<const RatedItem> items, std::span<const std::string> aspects,
                                std::size_t n_max, Objective rank_by, std::uint64_t subset_budget) {
  if (n_max < 1 || n_max > aspects.size()) {
    throw ValidationError("all-combo: n_max must be in [1, " + std::to_string(aspects.size()) + "], got " +
                          std::to_string(n_max));
  }
  if (n_max >= 63 || ((std::uint64_t{1} << n_max) - 1) > subset_budget) {
    throw BudgetError("all-combo: top " + std::to_string(n_max) + " aspects give 2^" + std::to_string(n_max) +
                      "-1 subsets, over the budget of " + std::to_string(subset_budget));
  }
  auto top = rank_aspects(items, aspects, rank_by);
  top.resize(n_max);

  // Score differences per item and aspect, so each subset is a row sum.
  std::vector<std::vector<long long>> diff(items.size(), std::vector<long long>(n_max));
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t k = 0; k < n_max; ++k) {
      diff[i][k] = score_of(items[i].score_a, top[k], items[i].item_id) -
                   score_of(items[i].score_b, top[k], items[i].item_id);
    }
  }
  std::vector<PrefLabel> expert;
  for (const auto& item : items) expert.push_back(item.expert);

  struct Best {
    Ratio value{0, 1};
    std::vector<std::string> ids;
    AgreementCounts counts;
  };
  Best best_pa;
  Best best_kappa;
  auto offer = [](Best& best, const Ratio& value, const std::vector<std::string>& ids,
                  const AgreementCounts& counts) {
    const bool better = value > best.value;
    const bool tie_smaller = !best.ids.empty() && value == best.value && ids < best.ids;
    if (better || tie_smaller) best = {value, ids, counts};
  };

  AllComboResult result;
  std::vector<PrefLabel> predicted(items.size());
  const std::uint64_t limit = std::uint64_t{1} << n_max;
  for (std::uint64_t mask = 1; mask < limit; ++mask) {
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < n_max; ++k) {
      if (mask & (std::uint64_t{1} << k)) ids.push_back(top[k]);
    }
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < items.size(); ++i) {
      long long sum = 0;
      for (std::size_t k = 0; k < n_max; ++k) {
        if (mask & (std::uint64_t{1} << k)) sum += diff[i][k];
      }
      predicted[i] = from_difference(sum);
    }
    const auto counts = agreement_counts<PrefLabel>(predicted, expert);
    offer(best_pa, counts.percentage_agreement(), ids, counts);
    offer(best_kappa, counts.kappa(), ids, counts);
    ++result.subsets_evaluated;
  }

  auto to_selection = [&](const Best& best, SelectionMethod method) {
    SubsetSelection s;
    s.method = method;
    s.aspects = best.ids;
    s.objective_value = best.value;
    s.subsets_evaluated = result.subsets_evaluated;
    if (!best.ids.empty()) {
      s.percentage_agreement = best.counts.percentage_agreement().value();
      s.cohen_kappa = best.counts.kappa().value();
    }
    return s;
  };
  result.best_pa = to_selection(best_pa, SelectionMethod::all_combo_pa);
  result.best_kappa = to_selection(best_kappa, SelectionMethod::all_combo_ck);
  return result;
}

// ----------------------------------------------------------------- diversity

namespace {

using NgramCounts = std::map<std::string, int>;

NgramCounts ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key += '\x1f';
      key += tokens[i + k];
    }
    ++out[key];
  }
  return out;
}

}  // namespace

double sentence_bleu(std::span<const std::string> hypothesis,
                     std::span<const std::vector<std::string>> references, const BleuOptions& options) {
  if (references.empty()) throw ValidationError("BLEU needs at least one reference");
  if (options.max_order < 1 || !(options.epsilon > 0.0)) {
    throw ValidationError("BLEU needs max_order >= 1 and epsilon > 0");
  }
  const std::size_t c = hypothesis.size();
  if (c == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(options.max_order) && n <= c; ++n) {
    const auto hyp = ngrams(hypothesis, n);
    NgramCounts ref_max;
    for (const auto& ref : references) {
      for (const auto& [g, count] : ngrams(ref, n)) ref_max[g] = std::max(ref_max[g], count);
    }
    long long clipped = 0;
    for (const auto& [g, count] : hyp) {
      auto it = ref_max.find(g);
      if (it != ref_max.end()) clipped += std::min(count, it->second);
    }
    const auto total = static_cast<double>(c - n + 1);
    const double p = clipped > 0 ? static_cast<double>(clipped) / total : options.epsilon / total;
    log_sum += std::log(p);
    ++orders;
  }
  std::size_t r = references.front().size();
  for (const auto& ref : references) {
    const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / orders);
}

double self_bleu(std::span<const std::string> corpus, const BleuOptions& options) {
  if (corpus.size() < 2) throw ValidationError("self-BLEU needs at least 2 documents");
  std::vector<std::vector<std::string>> docs;
  for (const auto& d : corpus) docs.push_back(tokenize(d));
  std::vector<double> scores;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::vector<std::vector<std::string>> refs;
    for (std::size_t j = 0; j < docs.size(); ++j) {
      if (j != i) refs.push_back(docs[j]);
    }
    scores.push_back(sentence_bleu(docs[i], refs, options));
  }
  // Sorted summation keeps the mean bit-identical under corpus permutation.
  std::sort(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

// ------------------------------------------------------------ round analytics

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  m.n = values.size();
  if (values.empty()) return m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m.n);
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(m.n));
  return m;
}

bool answer_is_keypoint(const Mcq& mcq, std::span<const TestPoint> testpoints) {
  const std::string answer = lower(trimmed(mcq.correct_answer));
  return std::any_of(testpoints.begin(), testpoints.end(),
                     [&](const TestPoint& t) { return lower(trimmed(t.concept_text)) == answer; });
}

RoundStats round_stats(std::span<const RefinementSession> sessions) {
  if (sessions.empty()) throw ValidationError("round_stats needs at least one session");
  RoundStats stats;
  int max_round = 0;
  for (const auto& s : sessions) {
    if (s.rounds.empty()) {
      ++stats.skipped;
      continue;
    }
    ++stats.sessions;
    ++stats.best_round_histogram[s.best_round_index];
    for (const auto& r : s.rounds) max_round = std::max(max_round, r.index);
  }
  for (int round = 1; round <= max_round; ++round) {
    RoundRow row;
    row.round = round;
    std::array<std::vector<double>, 5> comp;
    std::vector<double> totals;
    std::vector<double> words;
    std::size_t correct = 0;
    std::size_t keypoint = 0;
    for (const auto& s : sessions) {
      for (const auto& r : s.rounds) {
        if (r.index != round) continue;
        for (std::size_t c = 0; c < kComponents.size(); ++c) {
          comp[c].push_back(r.critique.normalized_component(kComponents[c]));
        }
        totals.push_back(r.critique.normalized_total());
        words.push_back(static_cast<double>(word_count(r.mcq.context)));
        if (r.attempt.is_correct) ++correct;
        if (answer_is_keypoint(r.mcq, s.testpoints)) ++keypoint;
      }
    }
    row.sessions = totals.size();
    if (row.sessions == 0) continue;
    for (std::size_t c = 0; c < kComponents.size(); ++c) row.components[c] = mean_std(comp[c]);
    row.total = mean_std(totals);
    row.context_words = mean_std(words);
    row.qa_accuracy = static_cast<double>(correct) / static_cast<double>(row.sessions);
    row.answer_is_keypoint = static_cast<double>(keypoint) / static_cast<double>(row.sessions);
    stats.rounds.push_back(row);
  }
  return stats;
}

// -------------------------------------------------------------- expert labels

ConsolidatedLabels consolidate_expert_labels(std::span<const Annotation> annotations,
                                             std::span<const Adjudication> adjudications) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<PrefLabel>> by_item;
  for (const auto& a : annotations) {
    auto [it, fresh] = by_item.try_emplace(a.item_id);
    if (fresh) order.push_back(a.item_id);
    it->second.push_back(a.preference);
  }
  std::map<std::string, PrefLabel> final_label;
  for (const auto& adj : adjudications) final_label[adj.item_id] = adj.final_preference;

  ConsolidatedLabels out;
  for (const auto& id : order) {
    if (auto it = final_label.find(id); it != final_label.end()) {
      out.labels.emplace_back(id, it->second);
      continue;
    }
    const auto& labels = by_item[id];
    if (std::all_of(labels.begin(), labels.end(), [&](PrefLabel l) { return l == labels.front(); })) {
      out.labels.emplace_back(id, labels.front());
    } else {
      out.needs_adjudication.push_back(id);
    }
  }
  return out;
}

Annotation annotation_from_json(const json& j) {
  try {
    Annotation a;
    a.item_id = j.at("item_id").is_string() ? j.at("item_id").get<std::string>() : j.at("item_id").dump();
    a.expert_id = j.at("expert_id").get<std::string>();
    a.preference = parse_pref_label(j.at("preference").get<std::string>());
    a.difficulty = j.value("difficulty", "");
    a.errors = j.value("errors", "");
    return a;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed annotation: ") + e.what());
  }
}

Adjudication adjudication_from_json(const json& j) {
  try {
    Adjudication a;
    a.item_id = j.at("item_id").is_string() ? j.at("item_id").get<std::string>() : j.at("item_id").dump();
    a.final_preference = parse_pref_label(j.at("final_preference").get<std::string>());
    return a;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed adjudication: ") + e.what());
  }
}

// -------------------------------------------------------------- preferences

namespace {
double share(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(whole);
}
}  // namespace

double PreferenceTally::share_a() const { return share(system_a, valid()); }
double PreferenceTally::share_b() const { return share(system_b, valid()); }
double PreferenceTally::share_tie() const { return share(ties, valid()); }

PreferenceTally tally_outcomes(std::span<const int> codes) {
  PreferenceTally t;
  for (int c : codes) {
    switch (c) {
      case 0: ++t.ties; break;
      case 1: ++t.system_a; break;
      case 2: ++t.system_b; break;
      case -1: ++t.position_biased; break;
      default: throw ValidationError("outcome code must be -1, 0, 1 or 2, got " + std::to_string(c));
    }
  }
  return t;
}

// ------------------------------------------------ judge comparison table

std::span<const int> JudgeComparisonTable::column(std::string_view judge) const {
  for (std::size_t i = 0; i < judges.size(); ++i) {
    if (judges[i] == judge) return outcomes[i];
  }
  throw ValidationError("no judge column named " + std::string(judge));
}

JudgeComparisonTable load_judge_comparison(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trimmed(cell));
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  const auto header = split(line);
  if (header.size() < 3 || lower(header.front()) != "case" || lower(header.back()) != "expert_x") {
    throw ValidationError(path.string() + ": header must be case,<judges...>,expert_x");
  }
  JudgeComparisonTable t;
  t.judges.assign(header.begin() + 1, header.end() - 1);
  t.outcomes.resize(t.judges.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trimmed(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " cells");
    }
    try {
      t.cases.push_back(std::stoi(cells.front()));
      for (std::size_t j = 0; j < t.judges.size(); ++j) {
        const int code = std::stoi(cells[j + 1]);
        if (code < -1 || code > 2) throw ValidationError("bad outcome code " + cells[j + 1]);
        t.outcomes[j].push_back(code);
      }
      t.expert.push_back(std::stoi(cells.back()));
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": non-integer cell");
    }
  }
  return t;
}

FixtureAgreement fixture_agreement(const JudgeComparisonTable& table, std::string_view judge) {
  const auto col = table.column(judge);
  FixtureAgreement f;
  f.rows = col.size();
  std::vector<int> judged;
  std::vector<int> expert;
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (col[i] == -1) {
      ++f.biased;
      continue;
    }
    judged.push_back(col[i]);
    expert.push_back(table.expert[i]);
  }
  f.unbiased_fraction = f.rows == 0 ? 0.0 : static_cast<double>(f.rows - f.biased) / static_cast<double>(f.rows);
  if (!judged.empty()) f.percentage_agreement = percentage_agreement<int>(judged, expert);
  if (judged.size() >= 2) {
    std::vector<double> x(judged.begin(), judged.end());
    std::vector<double> y(expert.begin(), expert.end());
    f.kendall_tau = kendall_tau_b(x, y);
  }
  return f;
}

}  // namespace mcqg
