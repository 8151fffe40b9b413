#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llmtd/errors.hpp"
#include "llmtd/log.hpp"
#include "llmtd/template.hpp"

namespace llmtd {

struct EvalMode {
  bool apply_p1 = false;
  bool apply_p2 = false;

  bool strict_only() const { return !apply_p1 && !apply_p2; }

  static EvalMode strict() { return {}; }
  static EvalMode p1() { return {true, false}; }
  static EvalMode p1p2() { return {true, true}; }

  std::string name() const {
    if (apply_p1 && apply_p2) return "p1p2";
    if (apply_p1) return "p1";
    if (apply_p2) return "p2";
    return "strict";
  }
};

enum class VerdictStatus { Correct, CorrectViaP1, CorrectViaP2, Incorrect };

inline std::string_view verdict_status_name(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Correct:
      return "Correct";
    case VerdictStatus::CorrectViaP1:
      return "CorrectViaP1";
    case VerdictStatus::CorrectViaP2:
      return "CorrectViaP2";
    case VerdictStatus::Incorrect:
      return "Incorrect";
  }
  return "Incorrect";
}

enum class ErrorClass { OG, UG, MX };

inline std::string_view error_class_name(ErrorClass c) {
  switch (c) {
    case ErrorClass::OG:
      return "OG";
    case ErrorClass::UG:
      return "UG";
    case ErrorClass::MX:
      return "MX";
  }
  return "MX";
}

struct TemplateVerdict {
  Template tmpl;
  VerdictStatus status = VerdictStatus::Incorrect;
  std::optional<Template> matched_gt;       // set iff status != Incorrect
  std::optional<ErrorClass> error_class;    // set iff status == Incorrect
  std::optional<std::string> witness;       // ground-truth form proving OG/UG
};

/// The detected template equals the ground-truth one up to replacing some
/// wildcards with constants, and the data cannot tell them apart: both match
/// exactly the same messages.
inline bool p1_correct(const Template& t, const Template& v, const std::vector<LogMessage>& log) {
  return is_constant_specialization(t, v) && match_set(t, log) == match_set(v, log);
}

/// The detected template wildcards whole words of the ground-truth one that
/// already carried a wildcard, and matches no extra messages.
inline bool p2_correct(const Template& t, const Template& v, const std::vector<LogMessage>& log) {
  return is_word_atomic_generalization(t, v) && match_set(t, log) == match_set(v, log);
}

/// OG when strictly more general than some ground-truth template, UG when
/// strictly more specific than some, MX otherwise. OG wins when overlapping
/// ground truth would allow both readings; the deciding ground-truth form is
/// reported alongside.
inline std::pair<ErrorClass, std::optional<std::string>> classify_incorrect(
    const Template& t, const GroundTruth& gt) {
  for (const Template& v : gt.templates) {
    if (strict_subset(v, t)) return {ErrorClass::OG, v.source};
  }
  for (const Template& v : gt.templates) {
    if (strict_subset(t, v)) return {ErrorClass::UG, v.source};
  }
  return {ErrorClass::MX, std::nullopt};
}

/// A detected template is judged against the single ground-truth template
/// whose empirical group contains everything it matches. Canonical equality
/// is decisive on its own: a template that IS a ground-truth template stays
/// correct even when ground-truth groups overlap or the log lacks instances.
inline TemplateVerdict assess_template(const Template& t, const GroundTruth& gt,
                                       const std::vector<LogMessage>& log, EvalMode mode) {
  TemplateVerdict verdict;
  verdict.tmpl = t;

  for (const Template& v : gt.templates) {
    if (v.source == t.source) {
      verdict.status = VerdictStatus::Correct;
      verdict.matched_gt = v;
      return verdict;
    }
  }

  const MatchSet mt = match_set(t, log);
  const Template* covering = nullptr;
  std::size_t covering_count = 0;
  if (!mt.indices.empty()) {
    for (const Template& v : gt.templates) {
      const MatchSet mv = match_set(v, log);
      if (std::includes(mv.indices.begin(), mv.indices.end(), mt.indices.begin(),
                        mt.indices.end())) {
        ++covering_count;
        covering = &v;
      }
    }
  }

  if (covering_count == 1) {
    if (mode.apply_p1 && p1_correct(t, *covering, log)) {
      verdict.status = VerdictStatus::CorrectViaP1;
      verdict.matched_gt = *covering;
      return verdict;
    }
    if (mode.apply_p2 && p2_correct(t, *covering, log)) {
      verdict.status = VerdictStatus::CorrectViaP2;
      verdict.matched_gt = *covering;
      return verdict;
    }
  }

  verdict.status = VerdictStatus::Incorrect;
  const auto [cls, witness] = classify_incorrect(t, gt);
  verdict.error_class = cls;
  verdict.witness = witness;
  return verdict;
}

struct Scores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline Scores compute_scores(std::size_t correct, std::size_t detected, std::size_t gt_covered,
                             std::size_t gt_total) {
  if (correct > detected || gt_covered > gt_total || gt_total == 0) {
    throw Error(ErrorCode::InvalidCounts,
                "correct=" + std::to_string(correct) + " detected=" + std::to_string(detected) +
                    " gt_covered=" + std::to_string(gt_covered) +
                    " gt_total=" + std::to_string(gt_total));
  }
  Scores s;
  s.precision = detected == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(detected);
  s.recall = static_cast<double>(gt_covered) / static_cast<double>(gt_total);
  s.f1 = s.precision + s.recall == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

namespace detail {

/// Group id per message: the index of the most specific matching template
/// (minimal under strict language inclusion, then longest literal text, then
/// lowest index); unmatched messages get ids past the template range so each
/// forms its own group.
inline std::vector<std::size_t> assign_groups(const std::vector<Template>& templates,
                                              const std::vector<LogMessage>& log) {
  const std::size_t n = templates.size();
  std::vector<std::vector<bool>> strict(n, std::vector<bool>(n, false));
  {
    std::vector<std::vector<bool>> inc(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        inc[i][j] = i == j || language_subset(templates[i], templates[j]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        strict[i][j] = inc[i][j] && !inc[j][i];
      }
    }
  }

  std::vector<std::size_t> assign(log.size());
  for (std::size_t m = 0; m < log.size(); ++m) {
    std::vector<std::size_t> cands;
    for (std::size_t i = 0; i < n; ++i) {
      if (matches(templates[i], log[m].text)) cands.push_back(i);
    }
    if (cands.empty()) {
      assign[m] = n + m;
      continue;
    }
    std::size_t best = cands.size();
    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
      bool minimal = true;
      for (std::size_t cj = 0; cj < cands.size() && minimal; ++cj) {
        minimal = cj == ci || !strict[cands[cj]][cands[ci]];
      }
      if (!minimal) continue;
      if (best == cands.size() ||
          templates[cands[ci]].literal_length() > templates[cands[best]].literal_length()) {
        best = ci;
      }
    }
    assign[m] = cands[best];
  }
  return assign;
}

inline double grouping_accuracy_of(const std::vector<std::size_t>& detected_assign,
                                   const std::vector<std::size_t>& gt_assign) {
  const std::size_t n = detected_assign.size();
  if (n == 0) return 1.0;
  std::map<std::size_t, std::vector<std::size_t>> dg, gg;
  for (std::size_t m = 0; m < n; ++m) {
    dg[detected_assign[m]].push_back(m);
    gg[gt_assign[m]].push_back(m);
  }
  std::size_t correct = 0;
  for (std::size_t m = 0; m < n; ++m) {
    if (dg[detected_assign[m]] == gg[gt_assign[m]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace detail

/// Fraction of messages whose assigned detected-template group collects
/// exactly the same messages as their assigned ground-truth group.
inline double grouping_accuracy(const std::vector<Template>& detected, const GroundTruth& gt,
                                const std::vector<LogMessage>& log) {
  return detail::grouping_accuracy_of(detail::assign_groups(detected, log),
                                      detail::assign_groups(gt.templates, log));
}

struct EvalReport {
  std::vector<TemplateVerdict> verdicts;
  std::size_t correct_count = 0;
  std::size_t detected_count = 0;
  std::size_t gt_count = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double grouping = 0;
  std::size_t og_count = 0;
  std::size_t ug_count = 0;
  std::size_t mx_count = 0;
};

inline EvalReport evaluate(const std::vector<Template>& detected, const GroundTruth& gt,
                           const std::vector<LogMessage>& log, EvalMode mode) {
  EvalReport report;
  report.detected_count = detected.size();
  report.gt_count = gt.templates.size();

  std::set<std::string> covered;
  for (const Template& t : detected) {
    TemplateVerdict v = assess_template(t, gt, log, mode);
    if (v.status == VerdictStatus::Incorrect) {
      switch (*v.error_class) {
        case ErrorClass::OG:
          ++report.og_count;
          break;
        case ErrorClass::UG:
          ++report.ug_count;
          break;
        case ErrorClass::MX:
          ++report.mx_count;
          break;
      }
    } else {
      ++report.correct_count;
      covered.insert(v.matched_gt->source);
    }
    report.verdicts.push_back(std::move(v));
  }

  const Scores s =
      compute_scores(report.correct_count, report.detected_count, covered.size(), report.gt_count);
  report.precision = s.precision;
  report.recall = s.recall;
  report.f1 = s.f1;
  report.grouping = grouping_accuracy(detected, gt, log);
  return report;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["correct_count"] = r.correct_count;
  j["detected_count"] = r.detected_count;
  j["gt_count"] = r.gt_count;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["grouping_accuracy"] = r.grouping;
  j["og_count"] = r.og_count;
  j["ug_count"] = r.ug_count;
  j["mx_count"] = r.mx_count;
  j["verdicts"] = nlohmann::json::array();
  for (const TemplateVerdict& v : r.verdicts) {
    nlohmann::json vj;
    vj["template"] = v.tmpl.source;
    vj["status"] = verdict_status_name(v.status);
    if (v.matched_gt) vj["matched_gt"] = v.matched_gt->source;
    if (v.error_class) vj["error_class"] = error_class_name(*v.error_class);
    if (v.witness) vj["witness"] = *v.witness;
    j["verdicts"].push_back(std::move(vj));
  }
  return j;
}

inline std::string eval_report_csv_row(const std::string& dataset, EvalMode mode,
                                       const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f", r.precision, r.recall, r.f1, r.grouping);
  return dataset + "," + mode.name() + "," + std::to_string(r.correct_count) + "," +
         std::to_string(r.detected_count) + "," + std::to_string(r.gt_count) + "," + buf + "," +
         std::to_string(r.og_count) + "," + std::to_string(r.ug_count) + "," +
         std::to_string(r.mx_count);
}

inline std::string eval_csv_header() {
  return "dataset,mode,correct,detected,gt,precision,recall,f1,grouping_accuracy,og,ug,mx";
}

}  // namespace llmtd
