#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "llmtd/errors.hpp"
#include "llmtd/message.hpp"
#include "llmtd/template.hpp"
#include "llmtd/util.hpp"

namespace llmtd {

struct Partition {
  std::string app;
  std::vector<LogMessage> messages;
};

struct IngestOptions {
  bool no_header = false;     // lines carry no priority/timestamp/hostname header
  std::string strip_prefix;   // regex removed from the start of each line first
};

namespace detail {

/// "<N>" with N in 0..191, per BSD syslog.
inline std::string_view strip_priority(std::string_view s) {
  if (!s.starts_with('<')) return s;
  std::size_t i = 1;
  int value = 0;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9' && i <= 3) {
    value = value * 10 + (s[i] - '0');
    ++i;
  }
  if (i == 1 || i >= s.size() || s[i] != '>' || value > 191) return s;
  return s.substr(i + 1);
}

inline const std::regex& timestamp_regex() {
  static const std::regex re(
      R"(^(Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec) {1,2}\d{1,2} \d{2}:\d{2}:\d{2}(?: +|$))");
  return re;
}

inline const std::regex& tag_regex() {
  static const std::regex re(R"(^([A-Za-z0-9_./-]+)(\[[0-9]+\])?:(?: |$))");
  return re;
}

}  // namespace detail

/// Reduces a raw line to its tag-plus-message part. Header fields are
/// stripped in order: priority, timestamp, one hostname token. The hostname
/// is only taken when a timestamp was present, which keeps the function
/// idempotent on its own text output, and never when nothing would remain.
inline LogMessage parse_syslog_line(std::string_view line, std::size_t index = 0,
                                    bool no_header = false) {
  if (trim(line).empty()) {
    throw Error(ErrorCode::EmptyLine, "log line is empty");
  }

  std::string_view rest = line;
  if (!no_header) {
    rest = detail::strip_priority(rest);
    std::cmatch m;
    if (std::regex_search(rest.data(), rest.data() + rest.size(), m, detail::timestamp_regex())) {
      rest.remove_prefix(static_cast<std::size_t>(m[0].length()));
      const std::size_t space = rest.find(' ');
      if (space != std::string_view::npos) {
        std::string_view after_host = rest.substr(space + 1);
        if (!trim(after_host).empty()) rest = after_host;
      }
    }
  }

  if (trim(rest).empty()) {
    throw Error(ErrorCode::EmptyLine, "line has a header but no message");
  }
  if (rest.find(kWildcardMarker) != std::string_view::npos) {
    throw Error(ErrorCode::ContainsWildcardMarker,
                "message part contains the wildcard marker: " + std::string(rest));
  }

  LogMessage msg;
  msg.index = index;
  msg.raw = std::string(line);
  msg.text = std::string(rest);
  std::cmatch tag;
  if (std::regex_search(rest.data(), rest.data() + rest.size(), tag, detail::tag_regex())) {
    msg.app = tag[1].str();
  } else {
    msg.app = "unknown";
  }
  return msg;
}

/// Loads a log file, skipping blank lines. index on each message is the
/// zero-based line number in the file.
inline std::vector<LogMessage> read_log_file(const std::filesystem::path& path,
                                             const IngestOptions& options = {}) {
  const std::string content = read_file(path);
  std::optional<std::regex> prefix;
  if (!options.strip_prefix.empty()) {
    try {
      prefix.emplace(options.strip_prefix);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::InvalidConfig,
                  "bad strip-prefix regex: " + std::string(e.what()));
    }
  }

  std::vector<LogMessage> out;
  const std::vector<std::string_view> lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (trim(line).empty()) continue;
    if (prefix) {
      std::cmatch m;
      if (std::regex_search(line.data(), line.data() + line.size(), m, *prefix,
                            std::regex_constants::match_continuous)) {
        line.remove_prefix(static_cast<std::size_t>(m[0].length()));
      }
      if (trim(line).empty()) continue;
    }
    try {
      out.push_back(parse_syslog_line(line, i, options.no_header));
    } catch (const Error& e) {
      throw Error(e.code(),
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.message());
    }
  }
  return out;
}

/// Splits messages by app, keeping first-appearance partition order and
/// source order within each partition.
inline std::vector<Partition> partition_by_app(const std::vector<LogMessage>& log) {
  std::vector<Partition> parts;
  for (const LogMessage& msg : log) {
    Partition* part = nullptr;
    for (Partition& p : parts) {
      if (p.app == msg.app) {
        part = &p;
        break;
      }
    }
    if (!part) {
      parts.push_back(Partition{msg.app, {}});
      part = &parts.back();
    }
    part->messages.push_back(msg);
  }
  return parts;
}

struct GroundTruth {
  std::vector<Template> templates;
};

namespace detail {

inline std::vector<Template> load_template_lines(const std::filesystem::path& path,
                                                 bool reject_duplicates) {
  const std::string content = read_file(path);
  std::vector<Template> out;
  std::set<std::string> seen;
  const std::vector<std::string_view> lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    if (line.empty()) continue;
    if (line.starts_with('#')) continue;
    try {
      Template t = parse_template(line);
      if (reject_duplicates && !seen.insert(t.source).second) {
        throw Error(ErrorCode::DuplicateTemplate, "duplicate template: " + t.source);
      }
      out.push_back(std::move(t));
    } catch (const Error& e) {
      throw Error(e.code(),
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.message());
    }
  }
  return out;
}

}  // namespace detail

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
  GroundTruth gt{detail::load_template_lines(path, /*reject_duplicates=*/true)};
  if (gt.templates.empty()) {
    throw Error(ErrorCode::EmptyGroundTruth, "no templates in " + path.string());
  }
  return gt;
}

/// Same format as ground truth, but a detector's output may legitimately
/// repeat a pattern or be empty, so neither is rejected here.
inline std::vector<Template> load_detected_templates(const std::filesystem::path& path) {
  return detail::load_template_lines(path, /*reject_duplicates=*/false);
}

}  // namespace llmtd
