// llmtd: mines message templates from event logs through a completion
// backend and scores detected template sets against a ground truth.
//
// Exit codes: 0 success, 1 usage or input error, 2 backend unreachable
// (partial output is still written), 3 replay snapshot mismatch.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "llmtd/errors.hpp"
#include "llmtd/evaluation.hpp"
#include "llmtd/http.hpp"
#include "llmtd/log.hpp"
#include "llmtd/mining.hpp"
#include "llmtd/util.hpp"

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string command;
  fs::path log_path;
  fs::path truth_path;
  fs::path detected_path;
  fs::path prompt_file;
  fs::path record_path;
  fs::path replay_path;
  fs::path snapshot_dir;
  fs::path out_dir;
  std::string backend = "oracle";
  std::string endpoint;
  std::string endpoint_path = "/api/generate";
  std::string model;
  std::string strip_prefix;
  std::string dataset;
  std::size_t batch_size = 10;
  std::size_t jobs = 1;
  std::int64_t timeout_ms = 120000;
  bool p1 = false;
  bool p2 = false;
  bool no_header = false;
};

/// Output file names must survive any app tag the syslog parser can produce.
std::string sanitize_app(const std::string& app) {
  std::string out;
  for (char c : app) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  if (out.empty() || out[0] == '.') out = "_" + out;
  return out;
}

/// One stable file name per partition, disambiguating sanitizer collisions
/// in first-appearance order.
std::map<std::string, std::string> partition_file_names(
    const std::vector<llmtd::Partition>& partitions) {
  std::map<std::string, std::string> names;
  std::set<std::string> taken;
  for (const llmtd::Partition& p : partitions) {
    std::string base = sanitize_app(p.app);
    std::string name = base;
    for (int suffix = 2; taken.contains(name); ++suffix) {
      name = base + "-" + std::to_string(suffix);
    }
    taken.insert(name);
    names[p.app] = name;
  }
  return names;
}

llmtd::IngestOptions ingest_options(const RunConfig& cfg) {
  llmtd::IngestOptions opt;
  opt.no_header = cfg.no_header;
  opt.strip_prefix = cfg.strip_prefix;
  return opt;
}

llmtd::BackendKind backend_kind(const std::string& name) {
  if (name == "http") return llmtd::BackendKind::Http;
  if (name == "scripted") return llmtd::BackendKind::Scripted;
  return llmtd::BackendKind::Oracle;
}

/// Config echo plus content hashes of every input file: enough to re-run the
/// exact same command and detect drifted inputs.
void write_manifest(const RunConfig& cfg) {
  nlohmann::json j;
  j["command"] = cfg.command;
  nlohmann::json& o = j["options"];
  o["log"] = cfg.log_path.string();
  o["truth"] = cfg.truth_path.string();
  o["detected"] = cfg.detected_path.string();
  o["prompt_file"] = cfg.prompt_file.string();
  o["record"] = cfg.record_path.string();
  o["replay"] = cfg.replay_path.string();
  o["snapshot"] = cfg.snapshot_dir.string();
  o["out"] = cfg.out_dir.string();
  o["backend"] = cfg.backend;
  o["endpoint"] = cfg.endpoint;
  o["endpoint_path"] = cfg.endpoint_path;
  o["model"] = cfg.model;
  o["strip_prefix"] = cfg.strip_prefix;
  o["dataset"] = cfg.dataset;
  o["batch_size"] = cfg.batch_size;
  o["jobs"] = cfg.jobs;
  o["timeout_ms"] = cfg.timeout_ms;
  o["p1"] = cfg.p1;
  o["p2"] = cfg.p2;
  o["no_header"] = cfg.no_header;

  j["inputs"] = nlohmann::json::object();
  for (const fs::path& p :
       {cfg.log_path, cfg.truth_path, cfg.detected_path, cfg.prompt_file, cfg.replay_path}) {
    if (p.empty()) continue;
    j["inputs"][p.string()] = "fnv1a64:" + llmtd::fnv1a64_hex(llmtd::read_file(p));
  }
  llmtd::write_file(cfg.out_dir / "manifest.json", j.dump(2) + "\n");
}

std::vector<llmtd::Partition> load_partitions(const RunConfig& cfg) {
  const std::vector<llmtd::LogMessage> messages =
      llmtd::read_log_file(cfg.log_path, ingest_options(cfg));
  if (messages.empty()) {
    throw llmtd::Error(llmtd::ErrorCode::InvalidConfig,
                       "no messages in " + cfg.log_path.string());
  }
  return llmtd::partition_by_app(messages);
}

llmtd::MiningConfig mining_config(const RunConfig& cfg) {
  llmtd::MiningConfig mc;
  mc.batch_size = cfg.batch_size;
  if (!cfg.prompt_file.empty()) mc.static_prompt = llmtd::read_file(cfg.prompt_file);
  mc.backend.kind = backend_kind(cfg.backend);
  mc.backend.endpoint_url = cfg.endpoint;
  mc.backend.endpoint_path = cfg.endpoint_path;
  mc.backend.model = cfg.model;
  mc.backend.timeout_ms = cfg.timeout_ms;
  mc.backend.script_path = cfg.replay_path;
  if (mc.backend.kind == llmtd::BackendKind::Oracle) {
    if (cfg.truth_path.empty()) {
      throw llmtd::Error(llmtd::ErrorCode::InvalidConfig,
                         "the oracle backend needs --truth");
    }
    mc.backend.oracle_truth = llmtd::load_ground_truth(cfg.truth_path).templates;
  }
  if (mc.backend.kind == llmtd::BackendKind::Scripted && cfg.replay_path.empty()) {
    throw llmtd::Error(llmtd::ErrorCode::InvalidConfig,
                       "the scripted backend needs --replay with the exchange file");
  }
  return mc;
}

struct PartitionOutcome {
  std::optional<llmtd::MiningResult> result;
  std::int64_t elapsed_ms = 0;
  std::optional<llmtd::Error> error;
};

std::string result_json_text(const llmtd::MiningResult& r) {
  return llmtd::mining_result_to_json(r, true).dump(2) + "\n";
}

/// Mines every partition. Sequential runs share one backend handle so a
/// scripted exchange file is consumed in partition order; parallel workers
/// each own a fresh handle. A partition hitting an unreachable backend stops
/// the sequential run; parallel siblings are left to finish.
std::vector<PartitionOutcome> mine_partitions(const std::vector<llmtd::Partition>& partitions,
                                              const llmtd::MiningConfig& mc, std::size_t jobs) {
  std::vector<PartitionOutcome> outcomes(partitions.size());
  auto run_one = [&](llmtd::Backend& backend, std::size_t i) {
    PartitionOutcome& out = outcomes[i];
    const auto start = std::chrono::steady_clock::now();
    try {
      out.result = llmtd::mine(partitions[i], mc, backend);
    } catch (const llmtd::Error& e) {
      out.error = e;
    }
    out.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  };

  if (jobs <= 1) {
    const std::unique_ptr<llmtd::Backend> backend = llmtd::make_backend(mc.backend);
    for (std::size_t i = 0; i < partitions.size(); ++i) {
      run_one(*backend, i);
      if (outcomes[i].error &&
          outcomes[i].error->code() == llmtd::ErrorCode::BackendUnreachable) {
        break;
      }
    }
    return outcomes;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const std::size_t n = std::min(jobs, partitions.size());
  for (std::size_t w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      const std::unique_ptr<llmtd::Backend> backend = llmtd::make_backend(mc.backend);
      for (std::size_t i = next.fetch_add(1); i < partitions.size(); i = next.fetch_add(1)) {
        run_one(*backend, i);
      }
    });
  }
  for (std::thread& t : workers) t.join();
  return outcomes;
}

int cmd_mine(const RunConfig& cfg) {
  const std::vector<llmtd::Partition> partitions = load_partitions(cfg);
  const llmtd::MiningConfig mc = mining_config(cfg);
  if (mc.backend.kind == llmtd::BackendKind::Scripted && cfg.jobs > 1) {
    throw llmtd::Error(llmtd::ErrorCode::InvalidConfig,
                       "a scripted backend replays one exchange sequence; use --jobs 1");
  }

  fs::create_directories(cfg.out_dir);
  write_manifest(cfg);

  const std::vector<PartitionOutcome> outcomes = mine_partitions(partitions, mc, cfg.jobs);
  const std::map<std::string, std::string> names = partition_file_names(partitions);

  std::string templates_txt, uncovered_txt, duplicates_txt;
  std::set<std::string> emitted;
  std::vector<llmtd::BackendExchange> all_exchanges;
  nlohmann::json stats = nlohmann::json::object();
  stats["partitions"] = nlohmann::json::array();
  std::uint64_t total_queries = 0, total_templates = 0;
  std::int64_t total_elapsed = 0;
  bool unreachable = false;

  for (std::size_t i = 0; i < partitions.size(); ++i) {
    const llmtd::Partition& part = partitions[i];
    const PartitionOutcome& out = outcomes[i];
    if (out.error) {
      std::cerr << "llmtd: partition \"" << part.app << "\": " << out.error->what() << "\n";
      if (out.error->code() == llmtd::ErrorCode::BackendUnreachable) unreachable = true;
      continue;
    }
    if (!out.result) continue;  // sequential run stopped before this partition
    const llmtd::MiningResult& r = *out.result;

    llmtd::write_file(cfg.out_dir / ("result_" + names.at(part.app) + ".json"),
                      result_json_text(r));

    templates_txt += "# " + part.app + "\n";
    for (const llmtd::Template& t : r.templates) {
      if (emitted.insert(t.source).second) templates_txt += t.source + "\n";
    }
    uncovered_txt += "# " + part.app + "\n";
    for (std::size_t idx : r.uncovered) uncovered_txt += part.messages[idx].raw + "\n";
    duplicates_txt += "# " + part.app + "\n";
    for (const std::string& d : r.duplicates) duplicates_txt += d + "\n";
    for (const llmtd::BackendExchange& ex : r.exchanges) all_exchanges.push_back(ex);

    nlohmann::json ps;
    ps["app"] = part.app;
    ps["messages"] = part.messages.size();
    ps["templates"] = r.templates.size();
    ps["uncovered"] = r.uncovered.size();
    ps["duplicates"] = r.duplicates.size();
    ps["queries"] = r.stats.queries;
    ps["candidates_seen"] = r.stats.candidates_seen;
    ps["candidates_discarded"] = r.stats.candidates_discarded;
    ps["messages_skipped"] = r.stats.messages_skipped;
    ps["backend_errors"] = r.stats.backend_errors;
    ps["elapsed_ms"] = out.elapsed_ms;
    stats["partitions"].push_back(std::move(ps));

    total_queries += r.stats.queries;
    total_templates += r.templates.size();
    total_elapsed += out.elapsed_ms;

    for (const llmtd::OverGeneralWarning& w : r.stats.warnings) {
      std::cerr << "llmtd: warning: template \"" << w.template_text << "\" matched "
                << w.matched << " of " << w.seen << " messages seen in \"" << part.app
                << "\"; it may be over-general\n";
    }
  }

  stats["total"] = {{"queries", total_queries},
                    {"templates", total_templates},
                    {"elapsed_ms", total_elapsed}};

  llmtd::write_file(cfg.out_dir / "templates.txt", templates_txt);
  llmtd::write_file(cfg.out_dir / "uncovered.txt", uncovered_txt);
  llmtd::write_file(cfg.out_dir / "duplicates.txt", duplicates_txt);
  llmtd::write_file(cfg.out_dir / "stats.json", stats.dump(2) + "\n");
  if (!cfg.record_path.empty()) llmtd::write_script(cfg.record_path, all_exchanges);

  std::cout << "mined " << total_templates << " templates from " << partitions.size()
            << " partitions with " << total_queries << " queries; output in "
            << cfg.out_dir.string() << "\n";
  return unreachable ? 2 : 0;
}

int cmd_eval(const RunConfig& cfg) {
  const std::vector<llmtd::Template> detected =
      llmtd::load_detected_templates(cfg.detected_path);
  const llmtd::GroundTruth gt = llmtd::load_ground_truth(cfg.truth_path);
  const std::vector<llmtd::LogMessage> log =
      llmtd::read_log_file(cfg.log_path, ingest_options(cfg));

  const llmtd::EvalMode mode{cfg.p1, cfg.p2};
  const llmtd::EvalReport report = llmtd::evaluate(detected, gt, log, mode);

  fs::create_directories(cfg.out_dir);
  write_manifest(cfg);
  llmtd::write_file(cfg.out_dir / "report.json",
                    llmtd::eval_report_to_json(report).dump(2) + "\n");
  const std::string dataset =
      cfg.dataset.empty() ? cfg.log_path.stem().string() : cfg.dataset;
  llmtd::write_file(cfg.out_dir / "report.csv",
                    llmtd::eval_csv_header() + "\n" +
                        llmtd::eval_report_csv_row(dataset, mode, report) + "\n");

  std::size_t exact = 0, via_p1 = 0, via_p2 = 0;
  for (const llmtd::TemplateVerdict& v : report.verdicts) {
    if (v.status == llmtd::VerdictStatus::Correct) ++exact;
    if (v.status == llmtd::VerdictStatus::CorrectViaP1) ++via_p1;
    if (v.status == llmtd::VerdictStatus::CorrectViaP2) ++via_p2;
  }
  char line[160];
  std::cout << "dataset            : " << dataset << "\n"
            << "mode               : " << mode.name() << "\n"
            << "detected templates : " << report.detected_count << "\n"
            << "ground truth       : " << report.gt_count << "\n"
            << "correct            : " << report.correct_count << " (" << exact << " exact, "
            << via_p1 << " via P1, " << via_p2 << " via P2)\n"
            << "incorrect          : " << report.detected_count - report.correct_count
            << " (OG " << report.og_count << ", UG " << report.ug_count << ", MX "
            << report.mx_count << ")\n";
  std::snprintf(line, sizeof(line),
                "precision          : %.4f\nrecall             : %.4f\n"
                "f1                 : %.4f\ngrouping accuracy  : %.4f\n",
                report.precision, report.recall, report.f1, report.grouping);
  std::cout << line;
  return 0;
}

int cmd_classify(const RunConfig& cfg) {
  const std::vector<llmtd::Template> detected =
      llmtd::load_detected_templates(cfg.detected_path);
  const llmtd::GroundTruth gt = llmtd::load_ground_truth(cfg.truth_path);

  std::string lines;
  for (const llmtd::Template& t : detected) {
    bool exact = false;
    for (const llmtd::Template& v : gt.templates) exact = exact || v.source == t.source;
    if (exact) {
      lines += "EXACT\t" + t.source + "\n";
      continue;
    }
    const auto [cls, witness] = llmtd::classify_incorrect(t, gt);
    lines += std::string(llmtd::error_class_name(cls)) + "\t" + t.source;
    if (witness) lines += "\t" + *witness;
    lines += "\n";
  }
  std::cout << lines;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_manifest(cfg);
    llmtd::write_file(cfg.out_dir / "classification.txt", lines);
  }
  return 0;
}

/// Points at the first difference between a regenerated mining result and its
/// snapshot so a failing replay is diagnosable from the log alone.
void print_result_diff(const std::string& app, const nlohmann::json& fresh,
                       const nlohmann::json& snap) {
  for (const auto& [key, snap_val] : snap.items()) {
    if (!fresh.contains(key)) {
      std::cerr << "  " << app << ": key \"" << key << "\" missing from regenerated result\n";
      continue;
    }
    const nlohmann::json& fresh_val = fresh[key];
    if (fresh_val == snap_val) continue;
    if (fresh_val.is_array() && snap_val.is_array()) {
      const std::size_t n = std::min(fresh_val.size(), snap_val.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (fresh_val[i] != snap_val[i]) {
          std::cerr << "  " << app << ": " << key << "[" << i << "]: snapshot "
                    << snap_val[i].dump() << " vs regenerated " << fresh_val[i].dump() << "\n";
          break;
        }
      }
      if (fresh_val.size() != snap_val.size()) {
        std::cerr << "  " << app << ": " << key << ": snapshot has " << snap_val.size()
                  << " entries, regenerated has " << fresh_val.size() << "\n";
      }
    } else {
      std::cerr << "  " << app << ": " << key << ": snapshot " << snap_val.dump()
                << " vs regenerated " << fresh_val.dump() << "\n";
    }
  }
  for (const auto& [key, val] : fresh.items()) {
    if (!snap.contains(key)) {
      std::cerr << "  " << app << ": unexpected key \"" << key << "\" in regenerated result\n";
    }
  }
}

int cmd_replay(const RunConfig& cfg) {
  const std::vector<llmtd::Partition> partitions = load_partitions(cfg);
  llmtd::MiningConfig mc;
  mc.batch_size = cfg.batch_size;
  if (!cfg.prompt_file.empty()) mc.static_prompt = llmtd::read_file(cfg.prompt_file);
  mc.backend.kind = llmtd::BackendKind::Scripted;
  mc.backend.script_path = cfg.replay_path;

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_manifest(cfg);
  }

  llmtd::ScriptedBackend backend = llmtd::ScriptedBackend::from_file(cfg.replay_path);
  const std::map<std::string, std::string> names = partition_file_names(partitions);
  bool mismatch = false;

  for (const llmtd::Partition& part : partitions) {
    const llmtd::MiningResult r = llmtd::mine(part, mc, backend);
    const std::string fresh = result_json_text(r);
    const fs::path snap_path =
        cfg.snapshot_dir / ("result_" + names.at(part.app) + ".json");
    const std::string snap = llmtd::read_file(snap_path);
    if (!cfg.out_dir.empty()) {
      llmtd::write_file(cfg.out_dir / ("result_" + names.at(part.app) + ".json"), fresh);
    }
    if (fresh == snap) {
      std::cout << "partition \"" << part.app << "\": identical\n";
      continue;
    }
    mismatch = true;
    std::cerr << "llmtd: replay mismatch in partition \"" << part.app << "\" against "
              << snap_path.string() << "\n";
    try {
      print_result_diff(part.app, llmtd::mining_result_to_json(r, true),
                        nlohmann::json::parse(snap));
    } catch (const nlohmann::json::exception&) {
      std::cerr << "  " << part.app << ": snapshot is not valid JSON\n";
    }
  }
  return mismatch ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"template mining and evaluation for security event logs"};
  app.require_subcommand(1);

  auto add_ingest_flags = [&](CLI::App* cmd) {
    cmd->add_flag("--no-header", cfg.no_header,
                  "treat each log line as bare message text without a syslog header");
    cmd->add_option("--strip-prefix", cfg.strip_prefix,
                    "regular expression removed from the front of every line before parsing");
  };

  CLI::App* mine = app.add_subcommand("mine", "mine templates from a log");
  mine->add_option("--log", cfg.log_path, "event log file")->required();
  mine->add_option("--backend", cfg.backend, "completion backend")
      ->check(CLI::IsMember({"http", "scripted", "oracle"}))
      ->required();
  mine->add_option("--truth", cfg.truth_path, "template file driving the oracle backend");
  mine->add_option("--endpoint", cfg.endpoint, "http backend base URL")
      ->envname("LLMTD_ENDPOINT");
  mine->add_option("--endpoint-path", cfg.endpoint_path, "http completion path");
  mine->add_option("--model", cfg.model, "model name sent to the http backend");
  mine->add_option("--prompt-file", cfg.prompt_file,
                   "file with the static prompt part, replacing the built-in one");
  mine->add_option("-k,--batch-size", cfg.batch_size, "messages per query")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  mine->add_option("--timeout-ms", cfg.timeout_ms, "http timeout per query");
  mine->add_option("--jobs", cfg.jobs, "partitions mined concurrently")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
  mine->add_option("--record", cfg.record_path, "write all exchanges to this file");
  mine->add_option("--replay", cfg.replay_path, "exchange file read by the scripted backend");
  mine->add_option("--out", cfg.out_dir, "output directory")->required();
  add_ingest_flags(mine);

  CLI::App* eval = app.add_subcommand("eval", "score detected templates against ground truth");
  eval->add_option("--log", cfg.log_path, "event log file")->required();
  eval->add_option("--detected", cfg.detected_path, "detected template file")->required();
  eval->add_option("--truth", cfg.truth_path, "ground-truth template file")->required();
  eval->add_flag("--p1", cfg.p1, "accept constants substituted for ground-truth wildcards");
  eval->add_flag("--p2", cfg.p2, "accept wildcards covering wildcard-bearing words");
  eval->add_option("--dataset", cfg.dataset, "dataset label for the CSV row");
  eval->add_option("--out", cfg.out_dir, "output directory")->required();
  add_ingest_flags(eval);

  CLI::App* classify =
      app.add_subcommand("classify", "label each detected template EXACT, OG, UG, or MX");
  classify->add_option("--detected", cfg.detected_path, "detected template file")->required();
  classify->add_option("--truth", cfg.truth_path, "ground-truth template file")->required();
  classify->add_option("--out", cfg.out_dir, "optional output directory");

  CLI::App* replay =
      app.add_subcommand("replay", "re-mine from a recorded exchange file and compare");
  replay->add_option("--log", cfg.log_path, "event log file")->required();
  replay->add_option("--replay", cfg.replay_path, "recorded exchange file")->required();
  replay->add_option("--snapshot", cfg.snapshot_dir,
                     "directory with the result_*.json files to compare against")
      ->required();
  replay->add_option("--prompt-file", cfg.prompt_file,
                     "file with the static prompt part, replacing the built-in one");
  replay->add_option("-k,--batch-size", cfg.batch_size, "messages per query")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  replay->add_option("--out", cfg.out_dir, "optional directory for regenerated results");
  add_ingest_flags(replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (mine->parsed()) {
      cfg.command = "mine";
      return cmd_mine(cfg);
    }
    if (eval->parsed()) {
      cfg.command = "eval";
      return cmd_eval(cfg);
    }
    if (classify->parsed()) {
      cfg.command = "classify";
      return cmd_classify(cfg);
    }
    cfg.command = "replay";
    return cmd_replay(cfg);
  } catch (const llmtd::Error& e) {
    std::cerr << "llmtd: " << e.what() << "\n";
    return e.code() == llmtd::ErrorCode::BackendUnreachable ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "llmtd: " << e.what() << "\n";
    return 1;
  }
}
