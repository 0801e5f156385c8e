#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcqg/core.hpp"
#include "mcqg/prompts.hpp"

namespace mcqg {

struct Document {
  std::string id;
  std::string text;
  nlohmann::json payload;
};

struct RankedHit {
  std::string doc_id;
  double score = 0.0;
  std::size_t rank = 0;  ///< 1-based

  bool operator==(const RankedHit&) const = default;
};

/// Lowercase ASCII, split on anything that is not alphanumeric. Bytes >= 0x80
/// stay inside tokens so UTF-8 words are not torn apart.
std::vector<std::string> tokenize(std::string_view text);

/// Anything that can rank a fixed corpus for a query. Implementations are
/// immutable after construction and safe for concurrent search.
class Retriever {
 public:
  virtual ~Retriever() = default;
  /// At most top_k hits, score descending, ties by doc id ascending. An empty
  /// token list gives an empty result. Throws ValidationError if top_k < 1.
  virtual std::vector<RankedHit> search(std::string_view query, std::size_t top_k) const = 0;
  virtual const Document& document(std::string_view id) const = 0;
  virtual std::size_t size() const = 0;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Okapi BM25 over an in-memory inverted index.
///
///   score(d, q) = sum over distinct query terms t present in d of
///     idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
///   idf(t) = max(0, ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5)))
class Bm25Index : public Retriever {
 public:
  /// Throws ValidationError on an empty corpus or a duplicate id.
  explicit Bm25Index(std::vector<Document> corpus, Bm25Params params = {});

  std::vector<RankedHit> search(std::string_view query, std::size_t top_k) const override;
  const Document& document(std::string_view id) const override;
  std::size_t size() const override { return docs_.size(); }

  double average_length() const noexcept { return avg_length_; }
  std::size_t document_frequency(std::string_view term) const;
  std::size_t length_of(std::string_view id) const;
  const Bm25Params& params() const noexcept { return params_; }

 private:
  struct Posting {
    std::size_t doc;
    std::size_t tf;
  };

  Bm25Params params_;
  std::vector<Document> docs_;
  std::vector<std::size_t> lengths_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_length_ = 0.0;
};

/// One JSON object per line: {"id", "text", "payload"}. Blank lines skipped.
std::vector<Document> load_corpus(const std::filesystem::path& path);

/// Question-bank payload {context, question, options, answer} as an
/// exemplar. `options` may be an array or a letter-keyed object; `answer` may
/// be the option text or its key.
FewShotExample exemplar_from_payload(const Document& doc);

/// Outline payload {section, concept}.
TestPoint testpoint_from_payload(const Document& doc);

/// Components generated so far; each later stage extends the query with them.
struct McqPrefix {
  std::optional<std::string> context;
  std::optional<std::string> question;
  std::optional<std::string> correct_answer;
};

/// Case text, topic names, test-point concepts and any prefix components,
/// newline-joined.
std::string shot_query(const MedicalCase& medical_case, std::span<const TopicLabel> topics,
                       std::span<const TestPoint> testpoints, const McqPrefix& prefix);

/// Top hits for shot_query as exemplars. top_k must be in [1, 3].
std::vector<FewShotExample> retrieve_shots(const Retriever& index, const MedicalCase& medical_case,
                                           std::span<const TopicLabel> topics,
                                           std::span<const TestPoint> testpoints,
                                           const McqPrefix& prefix, std::size_t top_k);

}  // namespace mcqg
