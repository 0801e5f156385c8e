#include "mcqg/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "mcqg/error.hpp"

namespace mcqg {

using json = nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Bm25Index::Bm25Index(std::vector<Document> corpus, Bm25Params params)
    : params_(params), docs_(std::move(corpus)) {
  if (docs_.empty()) throw ValidationError("cannot index an empty corpus");
  // Index in id order so statistics and postings never depend on input order.
  std::sort(docs_.begin(), docs_.end(),
            [](const Document& a, const Document& b) { return a.id < b.id; });
  std::size_t total = 0;
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (!by_id_.emplace(docs_[i].id, i).second) {
      throw ValidationError("duplicate document id: " + docs_[i].id);
    }
    const auto tokens = tokenize(docs_[i].text);
    lengths_.push_back(tokens.size());
    total += tokens.size();
    std::map<std::string, std::size_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (auto& [term, count] : tf) postings_[term].push_back({i, count});
  }
  avg_length_ = static_cast<double>(total) / static_cast<double>(docs_.size());
}

std::vector<RankedHit> Bm25Index::search(std::string_view query, std::size_t top_k) const {
  if (top_k < 1) throw ValidationError("search: top_k must be >= 1");
  const auto tokens = tokenize(query);
  const std::set<std::string> terms(tokens.begin(), tokens.end());
  const auto n = static_cast<double>(docs_.size());
  std::map<std::size_t, double> scores;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const auto df = static_cast<double>(it->second.size());
    const double idf = std::max(0.0, std::log(1.0 + (n - df + 0.5) / (df + 0.5)));
    for (const auto& p : it->second) {
      const auto tf = static_cast<double>(p.tf);
      const double norm =
          1.0 - params_.b + params_.b * static_cast<double>(lengths_[p.doc]) / avg_length_;
      scores[p.doc] += idf * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
    }
  }
  std::vector<RankedHit> hits;
  hits.reserve(scores.size());
  for (const auto& [doc, score] : scores) hits.push_back({docs_[doc].id, score, 0});
  std::sort(hits.begin(), hits.end(), [](const RankedHit& a, const RankedHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (hits.size() > top_k) hits.resize(top_k);
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
  return hits;
}

const Document& Bm25Index::document(std::string_view id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw ValidationError("no document with id " + std::string(id));
  return docs_[it->second];
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  return it == postings_.end() ? 0 : it->second.size();
}

std::size_t Bm25Index::length_of(std::string_view id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw ValidationError("no document with id " + std::string(id));
  return lengths_[it->second];
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open corpus: " + path.string());
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Document d;
      d.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      d.text = j.at("text").get<std::string>();
      d.payload = j.value("payload", json::object());
      docs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return docs;
}

FewShotExample exemplar_from_payload(const Document& doc) {
  try {
    const json& p = doc.payload;
    FewShotExample ex;
    ex.id = doc.id;
    ex.context = p.at("context").get<std::string>();
    ex.question = p.at("question").get<std::string>();
    std::map<std::string, std::string> keyed;
    const json& options = p.at("options");
    if (options.is_array()) {
      for (std::size_t i = 0; i < options.size(); ++i) {
        ex.options.push_back(options[i].get<std::string>());
        keyed[std::string(1, option_letter(i))] = ex.options.back();
      }
    } else {
      for (const auto& [key, value] : options.items()) {
        keyed[key] = value.get<std::string>();
        ex.options.push_back(value.get<std::string>());
      }
    }
    const std::string answer = p.at("answer").get<std::string>();
    if (std::find(ex.options.begin(), ex.options.end(), answer) != ex.options.end()) {
      ex.answer = answer;
    } else if (auto it = keyed.find(answer); it != keyed.end()) {
      ex.answer = it->second;
    } else {
      throw ValidationError("question bank item " + doc.id + ": answer is not among the options");
    }
    if (p.contains("reasoning")) ex.extras["reasoning"] = p["reasoning"].get<std::string>();
    return ex;
  } catch (const json::exception& e) {
    throw ValidationError("question bank item " + doc.id + ": " + e.what());
  }
}

TestPoint testpoint_from_payload(const Document& doc) {
  try {
    TestPoint tp{doc.payload.at("concept").get<std::string>(),
                 doc.payload.at("section").get<std::string>()};
    tp.validate();
    return tp;
  } catch (const json::exception& e) {
    throw ValidationError("outline item " + doc.id + ": " + e.what());
  }
}

std::string shot_query(const MedicalCase& medical_case, std::span<const TopicLabel> topics,
                       std::span<const TestPoint> testpoints, const McqPrefix& prefix) {
  std::string q = medical_case.text;
  for (const auto& t : topics) q += "\n" + t.name;
  for (const auto& k : testpoints) q += "\n" + k.concept_text;
  if (prefix.context) q += "\n" + *prefix.context;
  if (prefix.question) q += "\n" + *prefix.question;
  if (prefix.correct_answer) q += "\n" + *prefix.correct_answer;
  return q;
}

std::vector<FewShotExample> retrieve_shots(const Retriever& index, const MedicalCase& medical_case,
                                           std::span<const TopicLabel> topics,
                                           std::span<const TestPoint> testpoints,
                                           const McqPrefix& prefix, std::size_t top_k) {
  if (top_k < 1 || top_k > 3) throw ValidationError("retrieve_shots: top_k must be in [1, 3]");
  std::vector<FewShotExample> out;
  for (const auto& hit : index.search(shot_query(medical_case, topics, testpoints, prefix), top_k)) {
    out.push_back(exemplar_from_payload(index.document(hit.doc_id)));
  }
  return out;
}

}  // namespace mcqg
