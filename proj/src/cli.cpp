#include "mcqg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mcqg/digest.hpp"
#include "mcqg/error.hpp"
#include "mcqg/judge.hpp"
#include "mcqg/metrics.hpp"
#include "mcqg/retrieval.hpp"

#ifndef MCQG_DATA_DIR
#define MCQG_DATA_DIR "data"
#endif
#ifndef MCQG_VERSION
#define MCQG_VERSION "0.0.0"
#endif

namespace mcqg {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path default_data_dir() {
  if (const char* v = std::getenv("MCQG_DATA_DIR"); v && *v) return v;
  return MCQG_DATA_DIR;
}

// ------------------------------------------------------------------ config

namespace {

template <class T>
T get_or(const boost::property_tree::ptree& tree, const std::string& key, T fallback) {
  try {
    return tree.get<T>(key, fallback);
  } catch (const boost::property_tree::ptree_error& e) {
    throw ConfigError("config value " + key + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_relative() ? base / p : p;
}

void require_exists(const fs::path& p, std::string_view what) {
  if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

}  // namespace

RunConfig RunConfig::load(const std::optional<fs::path>& ini) {
  boost::property_tree::ptree tree;
  fs::path base = default_data_dir();
  if (ini) {
    require_exists(*ini, "config file");
    try {
      boost::property_tree::ini_parser::read_ini(ini->string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    base = ini->parent_path().empty() ? fs::path(".") : ini->parent_path();
  }
  RunConfig c;
  c.backend.endpoint = get_or<std::string>(tree, "backend.endpoint", c.backend.endpoint);
  c.backend.api_key = get_or<std::string>(tree, "backend.api_key", "");
  if (auto cassette = get_or<std::string>(tree, "backend.cassette", ""); !cassette.empty()) {
    c.backend.cassette = resolve(base, cassette);
  }
  c.backend.cassette_mode = parse_cassette_mode(get_or<std::string>(tree, "backend.cassette_mode", "passthrough"));
  c.backend.timeout = std::chrono::seconds(get_or<int>(tree, "backend.timeout_seconds", 120));
  c.backend.retry.max_retries = get_or<int>(tree, "backend.max_retries", 3);
  c.backend.apply_env();

  c.generator.model = get_or<std::string>(tree, "model.name", c.backend.model);
  c.generator.temperature = get_or<double>(tree, "model.temperature", 1.0);
  c.generator.top_p = get_or<double>(tree, "model.top_p", 1.0);
  c.backend.model = c.generator.model;
  c.judge.model = get_or<std::string>(tree, "judge.model", c.generator.model);
  c.judge.temperature = get_or<double>(tree, "judge.temperature", c.generator.temperature);
  c.judge.top_p = get_or<double>(tree, "judge.top_p", c.generator.top_p);

  const fs::path data = default_data_dir();
  auto path_or = [&](const std::string& key, const fs::path& fallback) {
    const auto v = get_or<std::string>(tree, key, "");
    return v.empty() ? fallback : resolve(base, v);
  };
  c.templates = path_or("paths.templates", data / "templates" / "v1");
  c.fewshot = path_or("paths.fewshot", data / "fewshot");
  c.rubric = path_or("paths.rubric", data / "rubric" / "rubric_v1.tsv");
  c.question_bank = path_or("paths.question_bank", data / "corpora" / "question_bank.jsonl");
  c.outline = path_or("paths.outline", data / "corpora" / "outline.jsonl");
  require_exists(c.templates, "template pack");
  require_exists(c.fewshot, "few-shot pack");
  require_exists(*c.rubric, "rubric file");
  require_exists(*c.question_bank, "question bank corpus");
  require_exists(*c.outline, "outline corpus");

  auto& p = c.pipeline;
  p.stop_threshold = get_or<double>(tree, "pipeline.stop_threshold", p.stop_threshold);
  p.max_rounds = get_or<int>(tree, "pipeline.max_rounds", p.max_rounds);
  p.shots_per_stage = get_or<std::size_t>(tree, "pipeline.shots_per_stage", p.shots_per_stage);
  p.critique_retry_limit = get_or<int>(tree, "pipeline.critique_retry_limit", p.critique_retry_limit);
  p.reply_retry_limit = get_or<int>(tree, "pipeline.reply_retry_limit", p.reply_retry_limit);
  p.distractor_count = get_or<std::size_t>(tree, "pipeline.distractor_count", p.distractor_count);
  p.testpoint_candidates = get_or<std::size_t>(tree, "pipeline.testpoint_candidates", p.testpoint_candidates);
  p.seed = get_or<std::uint64_t>(tree, "pipeline.seed", p.seed);
  p.validate();
  return c;
}

json RunConfig::echo() const {
  // Paths are echoed by file name only so outputs do not depend on checkout location.
  auto name = [](const std::optional<fs::path>& p) { return p ? json(p->filename().string()) : json(nullptr); };
  return {{"backend",
           {{"endpoint", backend.endpoint},
            {"api_key", backend.api_key.empty() ? "" : "<redacted>"},
            {"cassette_mode", cassette_mode_name(backend.cassette_mode)},
            {"max_retries", backend.retry.max_retries}}},
          {"model", {{"name", generator.model}, {"temperature", generator.temperature}, {"top_p", generator.top_p}}},
          {"judge", {{"model", judge.model}, {"temperature", judge.temperature}, {"top_p", judge.top_p}}},
          {"paths",
           {{"templates", templates.filename().string()},
            {"rubric", name(rubric)},
            {"fewshot", fewshot.filename().string()},
            {"question_bank", name(question_bank)},
            {"outline", name(outline)}}},
          {"pipeline", pipeline.to_json()}};
}

std::string RunConfig::digest() const { return sha256_hex(echo().dump()); }

// ---------------------------------------------------------------- file I/O

namespace {

struct JsonlFile {
  std::vector<json> records;
  std::size_t malformed = 0;
};

bool is_header(const json& j) { return j.is_object() && j.value("record", "") == "header"; }

JsonlFile read_jsonl(const fs::path& path, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  JsonlFile f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++f.malformed;
      err << "warning: " << path.string() << " line " << lineno << ": malformed record skipped\n";
      continue;
    }
    if (is_header(j)) continue;
    f.records.push_back(std::move(j));
  }
  return f;
}

class JsonlWriter {
 public:
  JsonlWriter(const fs::path& path, bool append) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out_) throw ConfigError("cannot write " + path.string());
  }
  void write(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

json header_record(const RunConfig& config, const std::string& pack_id, std::string_view command) {
  return {{"record", "header"},
          {"tool_version", MCQG_VERSION},
          {"command", command},
          {"config_digest", config.digest()},
          {"template_pack_id", pack_id},
          {"config", config.echo()}};
}

std::map<std::string, MedicalCase> load_cases(const fs::path& path, std::ostream& err,
                                              std::vector<std::string>* order = nullptr) {
  std::map<std::string, MedicalCase> cases;
  for (const auto& j : read_jsonl(path, err).records) {
    MedicalCase c;
    c.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump()) : "";
    c.text = j.value("text", "");
    if (j.contains("source_tag") && j["source_tag"].is_string()) c.source_tag = j["source_tag"].get<std::string>();
    try {
      c.validate();
    } catch (const ValidationError& e) {
      err << "warning: " << path.string() << ": case skipped: " << e.what() << "\n";
      continue;
    }
    if (order) order->push_back(c.id);
    if (!cases.emplace(c.id, c).second) throw ConfigError(path.string() + ": duplicate case id " + c.id);
  }
  return cases;
}

struct Loaded {
  std::shared_ptr<const TemplatePack> templates;
  std::shared_ptr<const RubricRegistry> rubric;
  std::shared_ptr<const FewShotPack> fewshot;
  std::shared_ptr<const Retriever> question_bank;
  std::shared_ptr<const Retriever> outline;
};

Loaded load_resources(const RunConfig& config) {
  Loaded l;
  l.templates = std::make_shared<const TemplatePack>(TemplatePack::load(config.templates));
  l.rubric = std::make_shared<const RubricRegistry>(config.rubric ? RubricRegistry::load(*config.rubric)
                                                                  : RubricRegistry::builtin());
  l.fewshot = std::make_shared<const FewShotPack>(FewShotPack::load(config.fewshot));
  try {
    if (config.question_bank) l.question_bank = std::make_shared<const Bm25Index>(load_corpus(*config.question_bank));
    if (config.outline) l.outline = std::make_shared<const Bm25Index>(load_corpus(*config.outline));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("corpus: ") + e.what());
  }
  return l;
}

PipelineResources resources_for(const Loaded& l, std::shared_ptr<ChatBackend> backend, const ModelSettings& model) {
  PipelineResources r;
  r.backend = std::move(backend);
  r.templates = l.templates;
  r.rubric = l.rubric;
  r.fewshot = l.fewshot;
  r.question_bank = l.question_bank;
  r.outline = l.outline;
  r.model = model;
  return r;
}

std::string percent(double share) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << share * 100.0 << "%";
  return s.str();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string fixed(const std::optional<double>& v, int digits = 4) { return v ? fixed(*v, digits) : "undefined"; }

// ---------------------------------------------------------------- identify

struct Common {
  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> seed;
  std::shared_ptr<ChatBackend> backend_override;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  RunConfig config() const {
    RunConfig c = RunConfig::load(config_path);
    if (seed) c.pipeline.seed = *seed;
    c.backend.retry.seed = c.pipeline.seed;
    return c;
  }
  std::shared_ptr<ChatBackend> backend(const RunConfig& c) const {
    return backend_override ? backend_override : make_backend(c.backend);
  }
};

struct IdentifyArgs {
  fs::path cases;
  fs::path out;
  std::optional<fs::path> human;
};

int cmd_identify(const Common& common, const IdentifyArgs& args) {
  auto& err = *common.err;
  const RunConfig config = common.config();
  std::vector<std::string> order;
  require_exists(args.cases, "cases file");
  const auto cases = load_cases(args.cases, err, &order);

  std::map<std::string, json> human;
  if (args.human) {
    require_exists(*args.human, "human annotation file");
    for (auto& j : read_jsonl(*args.human, err).records) {
      const auto id = j.value("case_id", "");
      for (const auto& t : j.value("topics", json::array())) validate_topic(topic_from_json(t));
      j["provenance"] = "human";
      human[id] = std::move(j);
    }
  }

  const Loaded loaded = load_resources(config);
  std::shared_ptr<ChatBackend> backend;
  std::optional<Pipeline> pipeline;
  JsonlWriter writer(args.out, false);
  writer.write(header_record(config, loaded.templates->pack_id(), "identify"));
  std::size_t failed = 0;
  for (const auto& id : order) {
    if (auto it = human.find(id); it != human.end()) {
      writer.write(it->second);
      continue;
    }
    if (!pipeline) {
      backend = common.backend(config);
      pipeline.emplace(resources_for(loaded, backend, config.generator), config.pipeline);
    }
    const MedicalCase& c = cases.at(id);
    json record = {{"case_id", id}, {"provenance", "machine"}};
    std::vector<std::string> warnings;
    try {
      const auto topics = pipeline->identify_topics(c, &warnings);
      const auto points = pipeline->identify_testpoints(c, topics, &warnings);
      record["topics"] = json::array();
      for (const auto& t : topics) record["topics"].push_back(to_json(t));
      record["testpoints"] = json::array();
      for (const auto& t : points) record["testpoints"].push_back(to_json(t));
    } catch (const ParseError& e) {
      ++failed;
      record["error"] = {{"message", e.what()}, {"raw_reply", e.raw_reply()}};
    }
    if (!warnings.empty()) record["warnings"] = warnings;
    writer.write(record);
  }
  err << "identify: " << order.size() << " cases, " << failed << " failed\n";
  return kExitOk;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  fs::path cases;
  fs::path identified;
  fs::path out;
  bool baseline = false;
  bool resume = false;
  std::size_t jobs = 1;
};

int cmd_generate(const Common& common, const GenerateArgs& args) {
  auto& err = *common.err;
  RunConfig config = common.config();
  if (args.baseline) config.pipeline.max_rounds = 1;
  require_exists(args.cases, "cases file");
  require_exists(args.identified, "identified file");
  const auto cases = load_cases(args.cases, err);

  struct Work {
    const MedicalCase* medical_case;
    std::vector<TopicLabel> topics;
    std::vector<TestPoint> testpoints;
  };
  std::set<std::string> done;
  if (args.resume && fs::exists(args.out)) {
    for (const auto& j : read_jsonl(args.out, err).records) done.insert(j.value("case_id", ""));
  }
  std::vector<Work> work;
  std::vector<std::string> orphans;
  for (const auto& j : read_jsonl(args.identified, err).records) {
    const auto id = j.value("case_id", "");
    if (j.contains("error")) {
      err << "warning: case " << id << " has no identification, skipped\n";
      continue;
    }
    auto it = cases.find(id);
    if (it == cases.end()) {
      orphans.push_back(id);
      continue;
    }
    if (done.count(id)) continue;
    Work w{&it->second, {}, {}};
    for (const auto& t : j.value("topics", json::array())) w.topics.push_back(topic_from_json(t));
    for (const auto& t : j.value("testpoints", json::array())) w.testpoints.push_back(testpoint_from_json(t));
    work.push_back(std::move(w));
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw InputMismatchError("identified cases missing from the cases file: " + list);
  }

  const Loaded loaded = load_resources(config);
  const Pipeline pipeline(resources_for(loaded, common.backend(config), config.generator), config.pipeline);
  const bool append = args.resume && fs::exists(args.out);
  JsonlWriter writer(args.out, append);
  if (!append) writer.write(header_record(config, loaded.templates->pack_id(), "generate"));

  json session_config = config.pipeline.to_json();
  session_config["model"] = config.generator.model;
  session_config["baseline"] = args.baseline;

  // Workers fill slots; this thread writes them in input order.
  std::vector<std::optional<RefinementSession>> slots(work.size());
  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      auto session = pipeline.refine(*work[i].medical_case, work[i].topics, work[i].testpoints);
      std::lock_guard lock(mu);
      slots[i] = std::move(session);
      ready.notify_all();
    }
  };
  std::vector<std::thread> pool;
  const std::size_t jobs = std::max<std::size_t>(1, std::min(args.jobs, work.size()));
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);

  std::size_t failed = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    RefinementSession session;
    {
      std::unique_lock lock(mu);
      ready.wait(lock, [&] { return slots[i].has_value(); });
      session = std::move(*slots[i]);
      slots[i].reset();
    }
    if (session.error) {
      ++failed;
      err << "case " << session.case_id << ": " << session.error->stage << " failed: " << session.error->message
          << "\n";
    }
    writer.write(session_to_json(session, session_config));
    err << "generate: " << (i + 1) << "/" << work.size() << " done, " << failed << " failed\n";
  }
  for (auto& t : pool) t.join();
  if (!work.empty() && failed == work.size()) return kExitBackend;
  return kExitOk;
}

// ------------------------------------------------------------------- judge

struct JudgeArgs {
  std::string mode;
  fs::path a;
  fs::path b;
  fs::path cases;
  fs::path out;
  std::string aspects = "default";
};

std::vector<RefinementSession> load_sessions(const fs::path& path, const RubricRegistry& rubric,
                                             std::ostream& err, std::size_t* malformed = nullptr) {
  std::vector<RefinementSession> out;
  auto file = read_jsonl(path, err);
  std::size_t bad = file.malformed;
  for (const auto& j : file.records) {
    try {
      out.push_back(session_from_json(j, rubric));
    } catch (const Error& e) {
      ++bad;
      err << "warning: " << path.string() << ": session skipped: " << e.what() << "\n";
    }
  }
  if (malformed) *malformed = bad;
  return out;
}

std::vector<std::string> parse_aspect_list(const std::string& text, const RubricRegistry& rubric) {
  std::vector<std::string> ids;
  if (text == "default") {
    for (auto id : default_judge_aspects()) ids.emplace_back(id);
  } else if (text == "all") {
    for (const auto& a : rubric.aspects()) ids.push_back(a.id());
  } else {
    std::stringstream ss(text);
    std::string id;
    while (std::getline(ss, id, ',')) {
      if (!rubric.find(id)) throw ConfigError("unknown aspect id: " + id);
      ids.push_back(id);
    }
  }
  return ids;
}

int cmd_judge(const Common& common, const JudgeArgs& args) {
  auto& err = *common.err;
  const RunConfig config = common.config();
  for (const auto* p : {&args.a, &args.b, &args.cases}) require_exists(*p, "input file");
  const Loaded loaded = load_resources(config);
  const auto arm_a = load_sessions(args.a, *loaded.rubric, err);
  const auto arm_b = load_sessions(args.b, *loaded.rubric, err);
  const auto cases = load_cases(args.cases, err);

  std::map<std::string, const RefinementSession*> by_id_b;
  for (const auto& s : arm_b) by_id_b[s.case_id] = &s;
  std::set<std::string> ids_a;
  for (const auto& s : arm_a) ids_a.insert(s.case_id);
  std::vector<std::string> orphans;
  for (const auto& s : arm_a) {
    if (!by_id_b.count(s.case_id)) orphans.push_back("A:" + s.case_id);
  }
  for (const auto& s : arm_b) {
    if (!ids_a.count(s.case_id)) orphans.push_back("B:" + s.case_id);
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw InputMismatchError("case ids present in only one arm: " + list);
  }

  const Judge judge(resources_for(loaded, common.backend(config), config.judge), config.pipeline);
  const auto subset = parse_aspect_list(args.aspects, *loaded.rubric);
  JsonlWriter writer(args.out, false);
  writer.write(header_record(config, loaded.templates->pack_id(), "judge " + args.mode));
  std::size_t skipped = 0;
  for (const auto& sa : arm_a) {
    const RefinementSession& sb = *by_id_b.at(sa.case_id);
    auto c = cases.find(sa.case_id);
    if (c == cases.end()) throw InputMismatchError("case " + sa.case_id + " missing from the cases file");
    if (!sa.ok() || !sb.ok()) {
      ++skipped;
      err << "warning: case " << sa.case_id << " has a failed session, skipped\n";
      continue;
    }
    const ItemContext item{c->second, sa.topics, sa.testpoints};
    JudgmentRecord r;
    r.item_id = sa.case_id;
    r.judge_model = judge.model();
    r.mode = args.mode;
    if (args.mode == "compare") {
      const auto v = judge.debiased_compare(item, sa.best_round().mcq, sb.best_round().mcq);
      r.order_ab = v.order_ab;
      r.order_ba = v.order_ba;
      r.outcome = v.outcome;
    } else {
      r.scorecard_a = judge.rate(item, sa.best_round().mcq, subset, sa.best_round().attempt);
      r.scorecard_b = judge.rate(item, sb.best_round().mcq, subset, sb.best_round().attempt);
      switch (rating_preference(*r.scorecard_a, *r.scorecard_b)) {
        case Preference::prefer_first: r.outcome = Outcome::system_a; break;
        case Preference::prefer_second: r.outcome = Outcome::system_b; break;
        case Preference::tie: r.outcome = Outcome::tie; break;
      }
    }
    writer.write(to_json(r));
  }
  err << "judge: " << arm_a.size() << " items, " << skipped << " skipped\n";
  return kExitOk;
}

// ------------------------------------------------------------------- stats

struct StatsArgs {
  std::vector<fs::path> sessions;
  std::vector<fs::path> judgments;
  std::vector<fs::path> annotations;
  std::vector<fs::path> adjudications;
  std::vector<std::string> arms;
  std::string method = "greedy";
  std::string objective = "pa";
  std::size_t top_n = 11;
  bool include_biased = false;
  std::optional<fs::path> out;
};

std::vector<JudgmentRecord> load_judgments(std::span<const fs::path> paths, std::ostream& err,
                                           std::size_t& malformed) {
  std::vector<JudgmentRecord> out;
  for (const auto& p : paths) {
    require_exists(p, "judgment file");
    auto file = read_jsonl(p, err);
    malformed += file.malformed;
    for (const auto& j : file.records) {
      try {
        out.push_back(judgment_from_json(j));
      } catch (const Error& e) {
        ++malformed;
        err << "warning: " << p.string() << ": record skipped: " << e.what() << "\n";
      }
    }
  }
  return out;
}

ConsolidatedLabels load_expert_labels(const StatsArgs& args, std::ostream& err, std::size_t& malformed) {
  std::vector<Annotation> annotations;
  std::vector<Adjudication> adjudications;
  for (const auto& p : args.annotations) {
    require_exists(p, "annotation file");
    auto file = read_jsonl(p, err);
    malformed += file.malformed;
    for (const auto& j : file.records) {
      try {
        annotations.push_back(annotation_from_json(j));
      } catch (const Error& e) {
        ++malformed;
        err << "warning: " << p.string() << ": annotation skipped: " << e.what() << "\n";
      }
    }
  }
  for (const auto& p : args.adjudications) {
    require_exists(p, "adjudication file");
    auto file = read_jsonl(p, err);
    malformed += file.malformed;
    for (const auto& j : file.records) {
      try {
        adjudications.push_back(adjudication_from_json(j));
      } catch (const Error& e) {
        ++malformed;
        err << "warning: " << p.string() << ": adjudication skipped: " << e.what() << "\n";
      }
    }
  }
  return consolidate_expert_labels(annotations, adjudications);
}

json stats_rounds(const StatsArgs& args, const RubricRegistry& rubric, std::ostream& out, std::ostream& err,
                  std::size_t& malformed) {
  std::vector<RefinementSession> sessions;
  for (const auto& p : args.sessions) {
    require_exists(p, "sessions file");
    std::size_t bad = 0;
    auto s = load_sessions(p, rubric, err, &bad);
    malformed += bad;
    sessions.insert(sessions.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  const RoundStats stats = round_stats(sessions);
  json report = {{"sessions", stats.sessions}, {"skipped", stats.skipped}};
  out << "sessions: " << stats.sessions << " (" << stats.skipped << " without rounds)\n";
  out << "round  n  context  question  answer  distractors  reasoning  total  qa_acc  answer=keypoint  context_words\n";
  json rows = json::array();
  for (const auto& r : stats.rounds) {
    out << r.round << "  " << r.sessions;
    json row = {{"round", r.round}, {"sessions", r.sessions}};
    for (std::size_t c = 0; c < kComponents.size(); ++c) {
      out << "  " << fixed(r.components[c].mean) << "±" << fixed(r.components[c].std);
      row[std::string(component_id(kComponents[c]))] = {{"mean", r.components[c].mean}, {"std", r.components[c].std}};
    }
    out << "  " << fixed(r.total.mean) << "±" << fixed(r.total.std) << "  " << percent(r.qa_accuracy) << "  "
        << percent(r.answer_is_keypoint) << "  " << fixed(r.context_words.mean, 1) << "±"
        << fixed(r.context_words.std, 1) << "\n";
    row["total"] = {{"mean", r.total.mean}, {"std", r.total.std}};
    row["qa_accuracy"] = r.qa_accuracy;
    row["answer_is_keypoint"] = r.answer_is_keypoint;
    row["context_words"] = {{"mean", r.context_words.mean}, {"std", r.context_words.std}};
    rows.push_back(row);
  }
  out << "best round histogram:";
  json hist = json::object();
  for (const auto& [round, count] : stats.best_round_histogram) {
    out << " " << round << ":" << count;
    hist[std::to_string(round)] = count;
  }
  out << "\n";
  report["rounds"] = rows;
  report["best_round_histogram"] = hist;
  return report;
}

PrefLabel label_of(Outcome o) {
  switch (o) {
    case Outcome::system_a: return PrefLabel::a;
    case Outcome::system_b: return PrefLabel::b;
    default: return PrefLabel::tie;
  }
}

json stats_agreement(const StatsArgs& args, std::ostream& out, std::ostream& err, std::size_t& malformed) {
  const auto judgments = load_judgments(args.judgments, err, malformed);
  const auto experts = load_expert_labels(args, err, malformed);
  std::map<std::string, PrefLabel> expert;
  for (const auto& [id, l] : experts.labels) expert[id] = l;
  // Biased items never match an expert label; kept only with --include-biased.
  enum Code { kTie = 0, kA = 1, kB = 2, kBiased = 3 };
  std::vector<int> judge_codes;
  std::vector<int> expert_codes;
  std::size_t biased = 0;
  std::size_t unmatched = 0;
  auto code_of = [](PrefLabel l) { return l == PrefLabel::a ? kA : l == PrefLabel::b ? kB : kTie; };
  for (const auto& j : judgments) {
    auto it = expert.find(j.item_id);
    if (it == expert.end()) {
      ++unmatched;
      continue;
    }
    if (j.outcome == Outcome::position_biased) {
      ++biased;
      if (!args.include_biased) continue;
      judge_codes.push_back(kBiased);
    } else {
      judge_codes.push_back(code_of(label_of(j.outcome)));
    }
    expert_codes.push_back(code_of(it->second));
  }
  json report = {{"items", judge_codes.size()},
                 {"position_biased", biased},
                 {"without_expert_label", unmatched},
                 {"needs_adjudication", experts.needs_adjudication}};
  out << "items: " << judge_codes.size() << " (position-biased " << biased
      << (args.include_biased ? ", counted as disagreements" : ", excluded") << "; " << unmatched
      << " without expert label; " << experts.needs_adjudication.size() << " need adjudication)\n";
  if (judge_codes.empty()) {
    out << "no comparable items\n";
    return report;
  }
  const auto counts = agreement_counts<int>(judge_codes, expert_codes);
  const double pa = counts.percentage_agreement().value();
  const double kappa = counts.kappa().value();
  std::optional<double> tau;
  if (judge_codes.size() >= 2) {
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t i = 0; i < judge_codes.size(); ++i) {
      if (judge_codes[i] == kBiased) continue;
      x.push_back(judge_codes[i]);
      y.push_back(expert_codes[i]);
    }
    if (x.size() >= 2) tau = kendall_tau_b(x, y);
  }
  out << "percentage agreement: " << percent(pa) << "\ncohen kappa: " << fixed(kappa)
      << "\nkendall tau-b: " << fixed(tau) << "\n";
  report["percentage_agreement"] = pa;
  report["cohen_kappa"] = kappa;
  report["kendall_tau"] = tau ? json(*tau) : json(nullptr);
  return report;
}

json selection_json(const SubsetSelection& s) {
  return {{"method", selection_method_name(s.method)},
          {"aspects", s.aspects},
          {"percentage_agreement", s.percentage_agreement},
          {"cohen_kappa", s.cohen_kappa},
          {"objective_value", s.objective_value.value()},
          {"subsets_evaluated", s.subsets_evaluated}};
}

void print_selection(std::ostream& out, const SubsetSelection& s) {
  out << selection_method_name(s.method) << ": PA " << percent(s.percentage_agreement) << ", kappa "
      << fixed(s.cohen_kappa) << ", aspects [";
  for (std::size_t i = 0; i < s.aspects.size(); ++i) out << (i ? ", " : "") << s.aspects[i];
  out << "]\n";
}

json stats_aspects(const StatsArgs& args, std::ostream& out, std::ostream& err, std::size_t& malformed) {
  const Objective objective = parse_objective(args.objective);
  const auto judgments = load_judgments(args.judgments, err, malformed);
  const auto experts = load_expert_labels(args, err, malformed);
  std::map<std::string, PrefLabel> expert;
  for (const auto& [id, l] : experts.labels) expert[id] = l;

  std::vector<RatedItem> items;
  std::size_t skipped = 0;
  for (const auto& j : judgments) {
    auto it = expert.find(j.item_id);
    if (it == expert.end() || !j.scorecard_a || !j.scorecard_b) {
      ++skipped;
      continue;
    }
    RatedItem item;
    item.item_id = j.item_id;
    item.expert = it->second;
    for (const auto& s : j.scorecard_a->scores) item.score_a[s.aspect_id] = s.score;
    for (const auto& s : j.scorecard_b->scores) item.score_b[s.aspect_id] = s.score;
    items.push_back(std::move(item));
  }
  if (items.empty()) throw ConfigError("stats aspects: no rated items with expert labels");
  // Candidates: aspects rated for both arms of every item.
  std::vector<std::string> aspects;
  for (const auto& [id, score] : items.front().score_a) {
    const bool everywhere = std::all_of(items.begin(), items.end(), [&](const RatedItem& i) {
      return i.score_a.count(id) && i.score_b.count(id);
    });
    if (everywhere) aspects.push_back(id);
  }
  out << "items: " << items.size() << " (" << skipped << " skipped without scorecards or expert label)\n";
  json report = {{"items", items.size()}, {"skipped", skipped}};
  json per = json::array();
  out << "per-aspect agreement:\n";
  for (const auto& c : per_aspect_correlation(items, aspects)) {
    out << "  " << c.aspect_id << "  PA " << percent(c.percentage_agreement) << "  kappa " << fixed(c.cohen_kappa)
        << "\n";
    per.push_back({{"aspect", c.aspect_id}, {"percentage_agreement", c.percentage_agreement},
                   {"cohen_kappa", c.cohen_kappa}});
  }
  report["per_aspect"] = per;
  if (args.method == "greedy") {
    const auto s = greedy_select(items, aspects, objective);
    print_selection(out, s);
    report["selection"] = selection_json(s);
  } else if (args.method == "all-combo") {
    const std::size_t n = std::min(args.top_n, aspects.size());
    const auto r = all_combo_select(items, aspects, n, objective);
    out << "evaluated subsets: " << r.subsets_evaluated << "\n";
    print_selection(out, r.best_pa);
    print_selection(out, r.best_kappa);
    report["subsets_evaluated"] = r.subsets_evaluated;
    report["best_pa"] = selection_json(r.best_pa);
    report["best_kappa"] = selection_json(r.best_kappa);
  } else {
    throw ConfigError("--method must be greedy or all-combo");
  }
  return report;
}

json stats_diversity(const StatsArgs& args, const RubricRegistry& rubric, std::ostream& out, std::ostream& err,
                     std::size_t& malformed) {
  if (args.arms.empty()) throw ConfigError("stats diversity needs at least one --arm NAME=FILE");
  json report = json::object();
  for (const auto& arm : args.arms) {
    const auto eq = arm.find('=');
    if (eq == std::string::npos) throw ConfigError("--arm must be NAME=FILE, got " + arm);
    const std::string name = arm.substr(0, eq);
    const fs::path path = arm.substr(eq + 1);
    require_exists(path, "arm file");
    auto file = read_jsonl(path, err);
    malformed += file.malformed;
    std::vector<std::string> corpus;
    for (const auto& j : file.records) {
      if (j.contains("text") && j["text"].is_string()) {
        corpus.push_back(j["text"].get<std::string>());
        continue;
      }
      try {
        const auto s = session_from_json(j, rubric);
        if (s.ok()) corpus.push_back(format_mcq(s.best_round().mcq));
      } catch (const Error& e) {
        ++malformed;
        err << "warning: " << path.string() << ": record skipped: " << e.what() << "\n";
      }
    }
    const double score = self_bleu(corpus);
    out << name << ": self-BLEU " << fixed(score) << " over " << corpus.size() << " documents\n";
    report[name] = {{"self_bleu", score}, {"documents", corpus.size()}};
  }
  return report;
}

json stats_prefs(const StatsArgs& args, std::ostream& out, std::ostream& err, std::size_t& malformed) {
  std::vector<int> codes;
  for (const auto& j : load_judgments(args.judgments, err, malformed)) codes.push_back(outcome_code(j.outcome));
  const PreferenceTally t = tally_outcomes(codes);
  out << "A/B: " << percent(t.share_a()) << "/" << percent(t.share_b()) << "\n";
  out << "system A: " << t.system_a << " (" << percent(t.share_a()) << ")\n";
  out << "system B: " << t.system_b << " (" << percent(t.share_b()) << ")\n";
  out << "tie: " << t.ties << " (" << percent(t.share_tie()) << ")\n";
  out << "position-biased (excluded): " << t.position_biased << " of " << t.total() << "\n";
  return {{"system_a", t.system_a},     {"system_b", t.system_b},       {"ties", t.ties},
          {"position_biased", t.position_biased}, {"share_a", t.share_a()}, {"share_b", t.share_b()},
          {"share_tie", t.share_tie()}};
}

int cmd_stats(const Common& common, const std::string& which, const StatsArgs& args) {
  auto& out = *common.out;
  auto& err = *common.err;
  const RunConfig config = common.config();
  const auto rubric = config.rubric ? RubricRegistry::load(*config.rubric) : RubricRegistry::builtin();
  std::size_t malformed = 0;
  json report;
  if (which == "rounds") {
    report = stats_rounds(args, rubric, out, err, malformed);
  } else if (which == "agreement") {
    report = stats_agreement(args, out, err, malformed);
  } else if (which == "aspects") {
    report = stats_aspects(args, out, err, malformed);
  } else if (which == "diversity") {
    report = stats_diversity(args, rubric, out, err, malformed);
  } else {
    report = stats_prefs(args, out, err, malformed);
  }
  if (malformed) err << "warning: " << malformed << " malformed input records skipped\n";
  report["malformed_records"] = malformed;
  if (args.out) {
    JsonlWriter writer(*args.out, false);
    writer.write(header_record(config, TemplatePack::load(config.templates).pack_id(), "stats " + which));
    writer.write(report);
  }
  return kExitOk;
}

}  // namespace

// --------------------------------------------------------------------- run

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err,
            std::shared_ptr<ChatBackend> backend) {
  CLI::App app{"Clinical-case MCQ generation with self-refinement, plus LLM-as-judge evaluation", "mcqg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MCQG_VERSION);

  Common common;
  common.out = &out;
  common.err = &err;
  common.backend_override = std::move(backend);
  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option(
      "--seed", seed, "Run seed: option shuffles of answer calls, the judge's own answers, retry jitter");

  IdentifyArgs ia;
  auto* identify = app.add_subcommand("identify", "Topics and test points per case");
  identify->add_option("--cases", ia.cases, "Cases JSONL {id, text}")->required();
  identify->add_option("--out", ia.out, "Output JSONL")->required();
  identify->add_option("--human", ia.human, "Human annotations in the output schema; passed through");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Run the refinement loop per identified case");
  generate->add_option("--cases", ga.cases, "Cases JSONL")->required();
  generate->add_option("--identified", ga.identified, "Output of identify")->required();
  generate->add_option("--out", ga.out, "Sessions JSONL")->required();
  generate->add_flag("--baseline", ga.baseline, "Stop after round 1");
  generate->add_flag("--resume", ga.resume, "Skip case ids already in --out and append");
  generate->add_option("--jobs", ga.jobs, "Concurrent sessions")->check(CLI::Range(1, 256));

  JudgeArgs ja;
  auto* judge = app.add_subcommand("judge", "Compare or rate two arms of sessions");
  judge->add_option("mode", ja.mode, "rate or compare")->required()->check(CLI::IsMember({"rate", "compare"}));
  judge->add_option("--a", ja.a, "Sessions of system A")->required();
  judge->add_option("--b", ja.b, "Sessions of system B")->required();
  judge->add_option("--cases", ja.cases, "Cases JSONL")->required();
  judge->add_option("--out", ja.out, "Judgments JSONL")->required();
  judge->add_option("--aspects", ja.aspects, "default, all, or comma-separated aspect ids");

  StatsArgs sa;
  auto* stats = app.add_subcommand("stats", "Reports over sessions and judgments");
  stats->require_subcommand(1);
  auto* rounds = stats->add_subcommand("rounds", "Round-wise score statistics");
  rounds->add_option("--sessions", sa.sessions, "Sessions JSONL files")->required();
  auto* agreement = stats->add_subcommand("agreement", "PA, kappa and tau against Expert X");
  auto* aspects = stats->add_subcommand("aspects", "Aspect subset selection");
  for (auto* sub : {agreement, aspects}) {
    sub->add_option("--judgments", sa.judgments, "Judgment JSONL files")->required();
    sub->add_option("--annotations", sa.annotations, "Expert annotation JSONL files")->required();
    sub->add_option("--adjudications", sa.adjudications, "Adjudication JSONL files");
  }
  agreement->add_flag("--include-biased", sa.include_biased, "Count position-biased items as disagreements");
  aspects->add_option("--method", sa.method, "greedy or all-combo")->check(CLI::IsMember({"greedy", "all-combo"}));
  aspects->add_option("--objective", sa.objective, "pa or ck")->check(CLI::IsMember({"pa", "ck"}));
  aspects->add_option("--top-n", sa.top_n, "All-combo candidate count")->check(CLI::PositiveNumber);
  auto* diversity = stats->add_subcommand("diversity", "Self-BLEU per arm");
  diversity->add_option("--arm", sa.arms, "NAME=FILE (sessions or {\"text\"} JSONL)")->required();
  auto* prefs = stats->add_subcommand("prefs", "Win/tie/loss shares from judgments");
  prefs->add_option("--judgments", sa.judgments, "Judgment JSONL files")->required();
  for (auto* sub : {rounds, agreement, aspects, diversity, prefs}) {
    sub->add_option("--out", sa.out, "Write the report as JSONL");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (!config_path.empty()) common.config_path = fs::path(config_path);
  if (*seed_opt) common.seed = seed;

  try {
    if (*identify) return cmd_identify(common, ia);
    if (*generate) return cmd_generate(common, ga);
    if (*judge) return cmd_judge(common, ja);
    for (auto* sub : {rounds, agreement, aspects, diversity, prefs}) {
      if (*sub) return cmd_stats(common, sub->get_name(), sa);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const InputMismatchError& e) {
    err << "input mismatch: " << e.what() << "\n";
    return kExitInputMismatch;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace mcqg
