#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llmtd/errors.hpp"
#include "llmtd/llm.hpp"
#include "llmtd/log.hpp"
#include "llmtd/template.hpp"
#include "llmtd/util.hpp"

namespace llmtd {

struct MiningConfig {
  std::size_t batch_size = 10;
  std::string static_prompt;  // empty selects kDefaultStaticPrompt
  BackendConfig backend;
};

struct OverGeneralWarning {
  std::uint64_t matched = 0;
  std::uint64_t seen = 0;
  std::string template_text;
};

struct MiningStats {
  std::uint64_t queries = 0;
  std::uint64_t candidates_seen = 0;
  std::uint64_t candidates_discarded = 0;
  std::uint64_t messages_skipped = 0;
  std::uint64_t backend_errors = 0;
  std::vector<OverGeneralWarning> warnings;
};

struct MiningResult {
  std::vector<Template> templates;      // every entry carries a representative
  std::vector<std::size_t> uncovered;   // positions into the partition, ascending
  std::vector<std::string> duplicates;  // canonical forms, subset of templates
  std::vector<BackendExchange> exchanges;
  MiningStats stats;
};

/// Parses each candidate string and keeps those matching at least one batch
/// message, attaching the first such message as representative. Per-candidate
/// failures only bump counters.
inline std::vector<Template> validate_candidates(const std::vector<LogMessage>& batch,
                                                 const std::vector<std::string>& candidates,
                                                 MiningStats* stats = nullptr) {
  if (batch.empty()) {
    throw Error(ErrorCode::InvalidConfig, "candidate validation needs a non-empty batch");
  }
  std::vector<Template> out;
  for (const std::string& cand : candidates) {
    if (stats) ++stats->candidates_seen;
    Template t;
    try {
      t = parse_template(cand);
    } catch (const Error&) {
      if (stats) ++stats->candidates_discarded;
      continue;
    }
    const LogMessage* rep = nullptr;
    for (const LogMessage& m : batch) {
      if (matches(t, m.text)) {
        rep = &m;
        break;
      }
    }
    if (!rep) {
      if (stats) ++stats->candidates_discarded;
      continue;
    }
    t.representative = *rep;
    out.push_back(std::move(t));
  }
  return out;
}

/// Folds validated candidates into the template set. Candidates whose
/// canonical form is already present are dropped; then one simultaneous
/// marking round removes every template whose representative is matched by
/// some other template that the first one's representative does not match
/// back. Representative matching is a deliberate cheap stand-in for language
/// inclusion here; survivors keep their relative order.
inline std::vector<Template> merge(std::vector<Template> t_set, std::vector<Template> candidates) {
  for (Template& x : candidates) {
    if (!x.representative.has_value()) {
      throw Error(ErrorCode::InvalidConfig, "merge input lacks a representative: " + x.source);
    }
    bool present = false;
    for (const Template& t : t_set) present = present || t.source == x.source;
    if (!present) t_set.push_back(std::move(x));
  }
  for (const Template& t : t_set) {
    if (!t.representative.has_value()) {
      throw Error(ErrorCode::InvalidConfig, "merge input lacks a representative: " + t.source);
    }
  }

  const std::size_t n = t_set.size();
  std::vector<bool> dropped(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (matches(t_set[j], t_set[i].representative->text) &&
          !matches(t_set[i], t_set[j].representative->text)) {
        dropped[i] = true;
        break;
      }
    }
  }

  std::vector<Template> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!dropped[i]) out.push_back(std::move(t_set[i]));
  }
  return out;
}

struct SecondPassResult {
  std::vector<std::size_t> uncovered;   // message positions with no matching template
  std::vector<std::size_t> duplicates;  // indices into the template list
};

/// A template is a duplicate when no message is matched by it alone.
inline SecondPassResult second_pass(const std::vector<Template>& templates,
                                    const std::vector<LogMessage>& messages) {
  SecondPassResult out;
  std::vector<bool> alone(templates.size(), false);
  for (std::size_t i = 0; i < messages.size(); ++i) {
    std::size_t hits = 0;
    std::size_t last = 0;
    for (std::size_t t = 0; t < templates.size(); ++t) {
      if (matches(templates[t], messages[i].text)) {
        ++hits;
        last = t;
      }
    }
    if (hits == 0) {
      out.uncovered.push_back(i);
    } else if (hits == 1) {
      alone[last] = true;
    }
  }
  for (std::size_t t = 0; t < templates.size(); ++t) {
    if (!alone[t]) out.duplicates.push_back(t);
  }
  return out;
}

/// Two-pass run over one partition. First pass: messages matched by an
/// already-known template are skipped, the rest fill fixed-size batches;
/// each full batch (and one trailing partial batch) is sent to the backend
/// and the answers are validated and merged. Backend failures void their
/// batch without retry; only a transport-level failure of the very first
/// http query aborts, since that means there is no server to talk to.
/// Second pass computes the uncovered messages and duplicate templates.
inline MiningResult mine(const Partition& partition, const MiningConfig& cfg, Backend& backend) {
  if (cfg.batch_size == 0) {
    throw Error(ErrorCode::InvalidConfig, "batch size must be at least 1");
  }
  if (partition.messages.empty()) {
    throw Error(ErrorCode::InvalidConfig, "partition \"" + partition.app + "\" has no messages");
  }

  MiningResult result;
  const std::string_view static_part =
      cfg.static_prompt.empty() ? kDefaultStaticPrompt : std::string_view(cfg.static_prompt);

  std::vector<LogMessage> batch;
  std::size_t seen = 0;
  bool first_query = true;

  auto process_batch = [&] {
    if (batch.empty()) return;
    std::vector<std::string> lines;
    lines.reserve(batch.size());
    for (const LogMessage& m : batch) lines.push_back(m.text);
    const Prompt prompt = build_prompt(std::move(lines), static_part);

    ++result.stats.queries;
    BackendExchange exchange;
    try {
      exchange = backend.query(prompt);
    } catch (const Error& e) {
      ++result.stats.backend_errors;
      if (first_query && e.code() == ErrorCode::Timeout && backend.kind() == BackendKind::Http) {
        throw Error(ErrorCode::BackendUnreachable,
                    "first query failed, giving up on this run: " + e.message());
      }
      first_query = false;
      batch.clear();
      return;
    }
    first_query = false;

    const std::vector<std::string> candidates = extract_candidates(exchange.response);
    result.exchanges.push_back(std::move(exchange));
    std::vector<Template> validated = validate_candidates(batch, candidates, &result.stats);

    std::set<std::string> before;
    for (const Template& t : result.templates) before.insert(t.source);
    result.templates = merge(std::move(result.templates), std::move(validated));

    for (const Template& t : result.templates) {
      if (before.contains(t.source)) continue;
      std::uint64_t matched = 0;
      for (std::size_t i = 0; i < seen; ++i) {
        if (matches(t, partition.messages[i].text)) ++matched;
      }
      if (matched * 10 > static_cast<std::uint64_t>(seen) * 9) {
        result.stats.warnings.push_back(OverGeneralWarning{matched, seen, t.source});
      }
    }
    batch.clear();
  };

  for (const LogMessage& msg : partition.messages) {
    ++seen;
    bool covered = false;
    for (const Template& t : result.templates) {
      if (matches(t, msg.text)) {
        covered = true;
        break;
      }
    }
    if (covered) {
      ++result.stats.messages_skipped;
      continue;
    }
    batch.push_back(msg);
    if (batch.size() == cfg.batch_size) process_batch();
  }
  process_batch();

  const SecondPassResult sp = second_pass(result.templates, partition.messages);
  result.uncovered = sp.uncovered;
  for (std::size_t idx : sp.duplicates) result.duplicates.push_back(result.templates[idx].source);
  return result;
}

/// Stable JSON form. Exchanges carry only the prompt hash and response text;
/// timing never enters this document, so scripted and oracle runs serialize
/// byte-identically across repetitions.
inline nlohmann::json mining_result_to_json(const MiningResult& r, bool include_exchanges) {
  nlohmann::json j;
  j["templates"] = nlohmann::json::array();
  j["representatives"] = nlohmann::json::array();
  for (const Template& t : r.templates) {
    j["templates"].push_back(t.source);
    j["representatives"].push_back(t.representative ? nlohmann::json(t.representative->text)
                                                    : nlohmann::json());
  }
  j["uncovered"] = r.uncovered;
  j["duplicates"] = r.duplicates;
  j["stats"] = {
      {"queries", r.stats.queries},
      {"candidates_seen", r.stats.candidates_seen},
      {"candidates_discarded", r.stats.candidates_discarded},
      {"messages_skipped", r.stats.messages_skipped},
      {"backend_errors", r.stats.backend_errors},
  };
  j["stats"]["over_general_warnings"] = nlohmann::json::array();
  for (const OverGeneralWarning& w : r.stats.warnings) {
    j["stats"]["over_general_warnings"].push_back(
        {{"matched", w.matched}, {"seen", w.seen}, {"template", w.template_text}});
  }
  if (include_exchanges) {
    j["exchanges"] = nlohmann::json::array();
    for (const BackendExchange& ex : r.exchanges) {
      j["exchanges"].push_back(
          {{"prompt_hash", fnv1a64_hex(ex.prompt.rendered)}, {"response", ex.response}});
    }
  }
  return j;
}

}  // namespace llmtd
