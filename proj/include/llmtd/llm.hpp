#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "llmtd/errors.hpp"
#include "llmtd/log.hpp"
#include "llmtd/template.hpp"
#include "llmtd/util.hpp"

namespace llmtd {

/// Instruction text prepended to every batch. Callers may substitute their
/// own (e.g. via --prompt-file); the contract is only that the model answers
/// with one template per line using <*> for variable parts.
inline constexpr std::string_view kDefaultStaticPrompt =
    R"(You are given security event log messages, one per line. Identify the
message templates these lines follow. In a template, keep constant parts
verbatim and replace every variable part (user names, IP addresses, port
numbers, process IDs, file names, counts) with the wildcard <*>. Report each
distinct template exactly once, as a list with one template per line, and
output nothing else.

Example log:
backupd[412]: saved volume /data/vol1 in 32 seconds
backupd[9981]: saved volume /data/vol7 in 114 seconds
backupd[231]: purge of 12 snapshots finished
backupd[8]: purge of 3 snapshots finished

Templates:
- backupd[<*>]: saved volume <*> in <*> seconds
- backupd[<*>]: purge of <*> snapshots finished

Now identify the templates for the following log messages:
)";

struct Prompt {
  std::string static_part;
  std::vector<std::string> batch;
  std::string rendered;
};

inline Prompt build_prompt(std::vector<std::string> batch, std::string_view static_part) {
  if (batch.empty()) {
    throw Error(ErrorCode::EmptyBatch, "cannot build a prompt from an empty batch");
  }
  Prompt p;
  p.static_part = std::string(static_part);
  p.rendered = p.static_part;
  if (!p.rendered.empty() && p.rendered.back() != '\n') p.rendered += '\n';
  for (const std::string& line : batch) {
    p.rendered += line;
    p.rendered += '\n';
  }
  p.batch = std::move(batch);
  return p;
}

/// Pulls template candidates out of a free-form response. A line counts if
/// it carries a wildcard anywhere or sits under a list marker ("- ", "* " or
/// "N. "); markers, one layer of surrounding quotes or backticks, and outer
/// whitespace are stripped. Prose lines without a wildcard are ignored, as
/// is everything once a line is reduced to nothing. Duplicates keep their
/// first position. Never throws: a useless response is just no candidates.
inline std::vector<std::string> extract_candidates(std::string_view response) {
  std::vector<std::string> out;
  for (std::string_view raw_line : split_lines(response)) {
    const bool has_marker_text = raw_line.find(kWildcardMarker) != std::string_view::npos;
    std::string_view line = trim(raw_line);

    bool listed = false;
    if (line.starts_with("- ") || line.starts_with("* ")) {
      line = line.substr(2);
      listed = true;
    } else {
      std::size_t digits = 0;
      while (digits < line.size() && line[digits] >= '0' && line[digits] <= '9') ++digits;
      if (digits > 0 && digits + 1 < line.size() && line[digits] == '.' &&
          line[digits + 1] == ' ') {
        line = line.substr(digits + 2);
        listed = true;
      }
    }
    if (!listed && !has_marker_text) continue;

    line = trim(line);
    if (line.size() >= 2 && line.front() == line.back() &&
        (line.front() == '"' || line.front() == '\'' || line.front() == '`')) {
      line = trim(line.substr(1, line.size() - 2));
    }
    if (line.empty()) continue;

    std::string candidate(line);
    bool duplicate = false;
    for (const std::string& prev : out) duplicate = duplicate || prev == candidate;
    if (!duplicate) out.push_back(std::move(candidate));
  }
  return out;
}

enum class BackendKind { Http, Scripted, Oracle };

inline std::string_view backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::Http:
      return "http";
    case BackendKind::Scripted:
      return "scripted";
    case BackendKind::Oracle:
      return "oracle";
  }
  return "unknown";
}

struct BackendConfig {
  BackendKind kind = BackendKind::Oracle;
  std::string endpoint_url;                     // http
  std::string endpoint_path = "/api/generate";  // http
  std::string model;                            // http
  std::int64_t timeout_ms = 120000;             // http
  std::filesystem::path script_path;            // scripted
  std::vector<Template> oracle_truth;           // oracle
};

struct BackendExchange {
  Prompt prompt;
  std::string response;
  std::string backend_id;
  std::int64_t elapsed_ms = 0;
};

/// A handle serves one in-flight query at a time; use one handle per worker.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendKind kind() const = 0;
  virtual std::string id() const = 0;
  virtual BackendExchange query(const Prompt& prompt) = 0;
};

namespace detail {

class Stopwatch {
 public:
  std::int64_t elapsed_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

struct ScriptEntry {
  std::string prompt_hash;
  std::string response;
};

/// One JSON object per line: {"prompt_hash": ..., "response": ...}.
inline std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<ScriptEntry> entries;
  std::size_t lineno = 0;
  for (std::string_view line : split_lines(content)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("response") ||
        !obj["response"].is_string()) {
      throw Error(ErrorCode::MalformedResponse,
                  path.string() + ":" + std::to_string(lineno) + ": bad exchange record");
    }
    ScriptEntry e;
    e.response = obj["response"].get<std::string>();
    if (obj.contains("prompt_hash") && obj["prompt_hash"].is_string()) {
      e.prompt_hash = obj["prompt_hash"].get<std::string>();
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void write_script(const std::filesystem::path& path,
                         const std::vector<BackendExchange>& exchanges) {
  std::string out;
  for (const BackendExchange& ex : exchanges) {
    nlohmann::json obj;
    obj["prompt_hash"] = fnv1a64_hex(ex.prompt.rendered);
    obj["response"] = ex.response;
    out += obj.dump();
    out += '\n';
  }
  write_file(path, out);
}

/// Replays recorded responses in order, regardless of prompt content; the
/// stored prompt hashes exist for human inspection and snapshot diffing.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries, std::string id = "scripted")
      : entries_(std::move(entries)), id_(std::move(id)) {}

  static ScriptedBackend from_file(const std::filesystem::path& path) {
    return ScriptedBackend(load_script(path), "scripted:" + path.string());
  }

  BackendKind kind() const override { return BackendKind::Scripted; }
  std::string id() const override { return id_; }

  BackendExchange query(const Prompt& prompt) override {
    if (cursor_ >= entries_.size()) {
      throw Error(ErrorCode::ScriptExhausted,
                  "script has only " + std::to_string(entries_.size()) + " responses");
    }
    BackendExchange ex;
    ex.prompt = prompt;
    ex.response = entries_[cursor_++].response;
    ex.backend_id = id_;
    return ex;
  }

 private:
  std::vector<ScriptEntry> entries_;
  std::size_t cursor_ = 0;
  std::string id_;
};

/// Answers with the canonical line of every configured template that matches
/// at least one batch message, in configuration order. Stands in for an
/// ideal model in end-to-end tests.
class OracleBackend : public Backend {
 public:
  explicit OracleBackend(std::vector<Template> truth) : truth_(std::move(truth)) {}

  BackendKind kind() const override { return BackendKind::Oracle; }
  std::string id() const override { return "oracle"; }

  BackendExchange query(const Prompt& prompt) override {
    BackendExchange ex;
    ex.prompt = prompt;
    ex.backend_id = id();
    for (const Template& t : truth_) {
      bool hit = false;
      for (const std::string& line : prompt.batch) {
        if (matches(t, line)) {
          hit = true;
          break;
        }
      }
      if (hit) {
        ex.response += "- ";
        ex.response += t.source;
        ex.response += '\n';
      }
    }
    return ex;
  }

 private:
  std::vector<Template> truth_;
};

}  // namespace llmtd
