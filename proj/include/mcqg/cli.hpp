#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcqg/backend.hpp"
#include "mcqg/chat.hpp"
#include "mcqg/pipeline.hpp"

namespace mcqg {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitBackend = 3,
  kExitInputMismatch = 4,
};

/// Everything a run needs, from an INI file:
///
///   [backend]  endpoint, api_key, cassette, cassette_mode, timeout_seconds,
///              max_retries
///   [model]    name, temperature, top_p
///   [judge]    model, temperature, top_p
///   [paths]    templates, rubric, fewshot, question_bank, outline
///   [pipeline] stop_threshold, max_rounds, shots_per_stage,
///              critique_retry_limit, reply_retry_limit, distractor_count,
///              testpoint_candidates, seed
///
/// Relative paths resolve against the config file's directory (the shipped
/// data directory when no file is given). MCQG_* environment variables
/// override the backend section.
struct RunConfig {
  BackendConfig backend;
  ModelSettings generator;
  ModelSettings judge;
  std::filesystem::path templates;
  std::optional<std::filesystem::path> rubric;
  std::filesystem::path fewshot;
  std::optional<std::filesystem::path> question_bank;
  std::optional<std::filesystem::path> outline;
  PipelineConfig pipeline;

  /// Throws ConfigError for unreadable files, bad values or missing paths.
  static RunConfig load(const std::optional<std::filesystem::path>& ini);

  /// Echo for output headers. The API key never appears.
  nlohmann::json echo() const;
  std::string digest() const;
};

/// Directory holding the shipped templates, rubric, few-shot pack and corpora.
std::filesystem::path default_data_dir();

/// `mcqg <command> ...` without the process boundary. `backend` replaces the
/// configured backend when set (tests use scripted or recording backends).
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err,
            std::shared_ptr<ChatBackend> backend = nullptr);

}  // namespace mcqg
