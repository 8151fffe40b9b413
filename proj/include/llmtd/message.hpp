#pragma once

#include <cstddef>
#include <string>

namespace llmtd {

/// One event-log line. `text` starts at the syslog tag (tag plus free-form
/// message) and is always a suffix of `raw`.
struct LogMessage {
  std::size_t index = 0;  // ordinal position in the source file
  std::string app;        // application name extracted from the tag
  std::string text;
  std::string raw;

  friend bool operator==(const LogMessage&, const LogMessage&) = default;
};

}  // namespace llmtd
