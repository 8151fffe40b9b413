#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "llmtd/errors.hpp"
#include "llmtd/evaluation.hpp"

using llmtd::assess_template;
using llmtd::ErrorClass;
using llmtd::EvalMode;
using llmtd::GroundTruth;
using llmtd::LogMessage;
using llmtd::parse_template;
using llmtd::Template;
using llmtd::VerdictStatus;

namespace {

LogMessage msg(std::string text, std::size_t index = 0) {
  LogMessage m;
  m.index = index;
  m.text = std::move(text);
  m.raw = m.text;
  m.app = "test";
  return m;
}

std::vector<LogMessage> log_of(std::vector<std::string> texts) {
  std::vector<LogMessage> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(msg(texts[i], i));
  return out;
}

GroundTruth truth_of(std::vector<std::string> sources) {
  GroundTruth gt;
  for (const std::string& s : sources) gt.templates.push_back(parse_template(s));
  return gt;
}

}  // namespace

TEST_CASE("relaxations rescue near-miss sshd templates") {
  const auto log = log_of({
      "sshd[12992]: Accepted password for john from 10.1.1.1 port 53323 ssh2",
      "sshd[17837]: Accepted password for mary from 10.2.2.2 port 41234 ssh2",
  });
  const GroundTruth gt =
      truth_of({"sshd[<*>]: Accepted <*> for <*> from <*> port <*> ssh2"});

  const Template exact =
      parse_template("sshd[<*>]: Accepted <*> for <*> from <*> port <*> ssh2");
  const Template narrowed =
      parse_template("sshd[<*>]: Accepted password for <*> from <*> port <*> ssh2");
  const Template widened =
      parse_template("<*> Accepted <*> for <*> from <*> port <*> ssh2");
  const Template reshaped =
      parse_template("sshd[<*>]: <*> <*> for <*> from <*> port <*> <*>");

  SECTION("an exact copy is correct in every mode") {
    for (EvalMode mode : {EvalMode::strict(), EvalMode::p1(), EvalMode::p1p2()}) {
      const auto v = assess_template(exact, gt, log, mode);
      CHECK(v.status == VerdictStatus::Correct);
      REQUIRE(v.matched_gt.has_value());
      CHECK(v.matched_gt->source == gt.templates[0].source);
    }
  }

  SECTION("a wildcard narrowed to its only observed value needs the first relaxation") {
    CHECK(assess_template(narrowed, gt, log, EvalMode::strict()).status ==
          VerdictStatus::Incorrect);
    const auto v = assess_template(narrowed, gt, log, EvalMode::p1());
    CHECK(v.status == VerdictStatus::CorrectViaP1);
    CHECK(v.matched_gt->source == gt.templates[0].source);
    CHECK(assess_template(narrowed, gt, log, EvalMode::p1p2()).status ==
          VerdictStatus::CorrectViaP1);
  }

  SECTION("a word widened over a wildcard-bearing word needs the second relaxation") {
    CHECK(assess_template(widened, gt, log, EvalMode::strict()).status ==
          VerdictStatus::Incorrect);
    CHECK(assess_template(widened, gt, log, EvalMode::p1()).status ==
          VerdictStatus::Incorrect);
    const auto v = assess_template(widened, gt, log, EvalMode::p1p2());
    CHECK(v.status == VerdictStatus::CorrectViaP2);
    CHECK(v.matched_gt->source == gt.templates[0].source);
  }

  SECTION("wildcarding constant words is wrong in every mode") {
    for (EvalMode mode : {EvalMode::strict(), EvalMode::p1(), EvalMode::p1p2()}) {
      const auto v = assess_template(reshaped, gt, log, mode);
      CHECK(v.status == VerdictStatus::Incorrect);
      REQUIRE(v.error_class.has_value());
      CHECK(*v.error_class == ErrorClass::OG);
      CHECK(v.witness == gt.templates[0].source);
    }
  }

  SECTION("strict verdicts still carry an error class") {
    const auto v = assess_template(narrowed, gt, log, EvalMode::strict());
    REQUIRE(v.error_class.has_value());
    CHECK(*v.error_class == ErrorClass::UG);
    CHECK(v.witness == gt.templates[0].source);
  }
}

TEST_CASE("relaxation predicates demand identical match sets") {
  const Template v = parse_template("sshd[<*>]: Accepted <*> for <*> from <*> port <*> ssh2");
  const Template t =
      parse_template("sshd[<*>]: Accepted publickey for <*> from <*> port <*> ssh2");

  const auto only_publickey = log_of({
      "sshd[1]: Accepted publickey for u1 from 10.1.1.1 port 100 ssh2",
      "sshd[2]: Accepted publickey for u2 from 10.1.1.2 port 200 ssh2",
  });
  CHECK(llmtd::p1_correct(t, v, only_publickey));

  auto mixed = only_publickey;
  mixed.push_back(msg("sshd[3]: Accepted password for u3 from 10.1.1.3 port 300 ssh2", 2));
  CHECK(!llmtd::p1_correct(t, v, mixed));

  const Template wide = parse_template("<*> Accepted <*> for <*> from <*> port <*> ssh2");
  CHECK(llmtd::p2_correct(wide, v, mixed));
  std::vector<LogMessage> with_alien = mixed;
  with_alien.push_back(msg("su: Accepted x for y from z port 1 ssh2", 3));
  CHECK(!llmtd::p2_correct(wide, v, with_alien));

  // Structural failure alone also rules the predicates out.
  CHECK(!llmtd::p1_correct(wide, v, only_publickey));
  CHECK(!llmtd::p2_correct(t, v, only_publickey));
}

TEST_CASE("a catch-all template is classified as too general") {
  const GroundTruth gt = truth_of({
      "snmpd[<*>]: Connection from UDP: [<*>]:<*>->[<*>]:<*>",
      "snmpd[<*>]: Received SNMP packet(s) from UDP: [<*>]:<*>->[<*>]:<*>",
  });
  const Template t = parse_template("snmpd[<*>]: <*>");
  const auto [cls, witness] = llmtd::classify_incorrect(t, gt);
  CHECK(cls == ErrorClass::OG);
  // The first subsumed ground-truth form is reported.
  CHECK(witness == gt.templates[0].source);
}

TEST_CASE("a template pinning variable parts is classified as too specific") {
  const GroundTruth gt = truth_of({
      "suricata[<*>]: [<*>] <*> [Classification: <*>] {TCP} <*> -> <*>",
  });
  const Template t = parse_template(
      "suricata[<*>]: [<*>] GPL ATTACK_RESPONSE id check returned root "
      "[Classification: <*>] {TCP} <*> -> <*>");
  const auto [cls, witness] = llmtd::classify_incorrect(t, gt);
  CHECK(cls == ErrorClass::UG);
  CHECK(witness == gt.templates[0].source);

  // An empty log gives the template an empty match set, so no ground-truth
  // group covers it and the verdict is decided by structure alone.
  const auto v = assess_template(t, gt, {}, EvalMode::p1p2());
  CHECK(v.status == VerdictStatus::Incorrect);
  CHECK(*v.error_class == ErrorClass::UG);
}

TEST_CASE("incomparable templates are classified as mixed") {
  const GroundTruth gt = truth_of({"sshd[<*>]: Server listening on <*> port <*>."});
  const Template t = parse_template("<*> Server listening on 0.0.0.0 port <*>");
  const auto [cls, witness] = llmtd::classify_incorrect(t, gt);
  CHECK(cls == ErrorClass::MX);
  CHECK(!witness.has_value());
}

TEST_CASE("general-before-specific ordering still reports too-general first") {
  // t sits strictly between v_small and v_big, so both directions exist
  // in the ground truth; the too-general reading wins.
  const GroundTruth gt = truth_of({"app: run a b", "app: run <*>"});
  const Template t = parse_template("app: run a <*>");
  const auto [cls, witness] = llmtd::classify_incorrect(t, gt);
  CHECK(cls == ErrorClass::OG);
  CHECK(witness == "app: run a b");
}

TEST_CASE("an exact copy stays correct with overlapping ground truth") {
  const GroundTruth gt = truth_of({"a <*> b", "a <*>"});
  const auto log = log_of({"a x b", "a y b"});
  // Both ground-truth groups contain everything "a <*> b" matches; identity
  // still decides.
  const auto v = assess_template(parse_template("a <*> b"), gt, log, EvalMode::strict());
  CHECK(v.status == VerdictStatus::Correct);
  CHECK(v.matched_gt->source == "a <*> b");

  // Identity also decides when nothing in the log matches.
  const auto empty_v = assess_template(parse_template("a <*> b"), gt, {}, EvalMode::strict());
  CHECK(empty_v.status == VerdictStatus::Correct);
}

TEST_CASE("two covering ground-truth groups block the relaxations") {
  const Template t = parse_template("a x b");
  const auto log = log_of({"a x b"});

  const GroundTruth covered_once = truth_of({"a <*> b"});
  CHECK(assess_template(t, covered_once, log, EvalMode::p1()).status ==
        VerdictStatus::CorrectViaP1);

  const GroundTruth covered_twice = truth_of({"a <*> b", "a <*>"});
  const auto v = assess_template(t, covered_twice, log, EvalMode::p1());
  CHECK(v.status == VerdictStatus::Incorrect);
  CHECK(*v.error_class == ErrorClass::UG);
}

TEST_CASE("score arithmetic on published-shaped counts") {
  auto f1_of = [](std::size_t c, std::size_t d, std::size_t gc, std::size_t gtot) {
    return llmtd::compute_scores(c, d, gc, gtot).f1;
  };
  CHECK_THAT(f1_of(25, 31, 25, 36), Catch::Matchers::WithinAbs(0.746, 0.001));
  CHECK_THAT(f1_of(10, 10, 10, 13), Catch::Matchers::WithinAbs(0.870, 0.001));
  CHECK_THAT(f1_of(29, 44, 29, 36), Catch::Matchers::WithinAbs(0.725, 0.001));
  CHECK_THAT(f1_of(6, 8, 6, 7), Catch::Matchers::WithinAbs(0.800, 0.001));

  const llmtd::Scores s = llmtd::compute_scores(25, 31, 25, 36);
  CHECK_THAT(s.precision, Catch::Matchers::WithinAbs(25.0 / 31.0, 1e-12));
  CHECK_THAT(s.recall, Catch::Matchers::WithinAbs(25.0 / 36.0, 1e-12));

  const llmtd::Scores zero = llmtd::compute_scores(0, 5, 0, 7);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  const llmtd::Scores empty = llmtd::compute_scores(0, 0, 0, 7);
  CHECK(empty.precision == 0.0);
  CHECK(empty.f1 == 0.0);

  for (auto [c, d, gc, gtot] : {std::array<std::size_t, 4>{5, 3, 0, 7},
                                std::array<std::size_t, 4>{0, 0, 8, 7},
                                std::array<std::size_t, 4>{0, 0, 0, 0}}) {
    try {
      llmtd::compute_scores(c, d, gc, gtot);
      FAIL("expected an exception");
    } catch (const llmtd::Error& e) {
      CHECK(e.code() == llmtd::ErrorCode::InvalidCounts);
    }
  }
}

TEST_CASE("grouping accuracy compares member lists per message") {
  const auto log = log_of({"a 1", "a 2", "b 1", "b 2"});
  const GroundTruth gt = truth_of({"a <*>", "b <*>"});

  CHECK(llmtd::grouping_accuracy(gt.templates, gt, log) == 1.0);

  // "<*> 1" poaches "b 1" into a split group: the two "a" messages keep
  // their exact group, the two "b" messages lose theirs.
  const std::vector<Template> skewed = {parse_template("a <*>"), parse_template("<*> 1")};
  CHECK(llmtd::grouping_accuracy(skewed, gt, log) == 0.5);

  // Totally unmatched messages each form a singleton group.
  const std::vector<Template> none;
  const auto singleton_log = log_of({"a 1"});
  CHECK(llmtd::grouping_accuracy(none, truth_of({"a <*>"}), singleton_log) == 1.0);

  CHECK(llmtd::grouping_accuracy(gt.templates, gt, {}) == 1.0);
}

TEST_CASE("messages are assigned to their most specific matching template") {
  const std::vector<Template> templates = {parse_template("app: <*>"),
                                           parse_template("app: start <*>")};
  const auto log = log_of({"app: start 1", "app: start 2", "app: stop 3"});
  const std::vector<std::size_t> assign = llmtd::detail::assign_groups(templates, log);
  CHECK(assign == std::vector<std::size_t>{1, 1, 0});

  // Incomparable candidates fall back to the longest literal text.
  const std::vector<Template> incomparable = {parse_template("start <*>"),
                                              parse_template("<*> end")};
  const auto log2 = log_of({"start end", "start mid end"});
  CHECK(llmtd::detail::assign_groups(incomparable, log2) ==
        std::vector<std::size_t>{0, 0});

  // Unmatched messages get ids past the template range.
  const auto log3 = log_of({"other thing"});
  CHECK(llmtd::detail::assign_groups(incomparable, log3) ==
        std::vector<std::size_t>{2 + 0});
}

TEST_CASE("relaxed modes never flip a correct verdict to incorrect") {
  std::mt19937 rng(77);
  const std::vector<std::string> words = {"auth",   "session", "opened", "closed",
                                          "user",   "root",    "admin",  "failure",
                                          "for",    "from",    "port",   "22"};
  std::uniform_int_distribution<std::size_t> word_at(0, words.size() - 1);
  std::uniform_int_distribution<int> len(3, 6);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> mutate_kind(0, 2);

  for (int iter = 0; iter < 200; ++iter) {
    // Ground truth: two templates of words, some positions wildcarded.
    GroundTruth gt;
    for (int g = 0; g < 2; ++g) {
      std::string src = "app" + std::to_string(g) + ":";
      const int n = len(rng);
      for (int i = 0; i < n; ++i) {
        src += coin(rng) ? " <*>" : " " + words[word_at(rng)];
      }
      if (src.find("<*>") == std::string::npos) src += " <*>";
      gt.templates.push_back(parse_template(src));
    }

    // Log: instances of the ground truth.
    std::vector<LogMessage> log;
    for (int i = 0; i < 8; ++i) {
      const Template& v = gt.templates[static_cast<std::size_t>(coin(rng))];
      std::string text;
      for (const llmtd::Token& tok : v.tokens) {
        text += tok.kind == llmtd::TokenKind::Wildcard ? words[word_at(rng)] : tok.text;
      }
      log.push_back(msg(text, log.size()));
    }

    // Detected: ground truth plus a mutated copy.
    std::vector<Template> detected = gt.templates;
    {
      std::string src = gt.templates[0].source;
      const int kind = mutate_kind(rng);
      const std::size_t wc = src.find("<*>");
      if (kind == 0 && wc != std::string::npos) {
        src.replace(wc, 3, words[word_at(rng)]);  // narrow a wildcard
      } else if (kind == 1) {
        const std::size_t sp = src.rfind(' ');
        src.replace(sp + 1, std::string::npos, "<*>");  // widen the last word
      } else {
        src += " <*>";  // reshape
      }
      detected.push_back(parse_template(src));
    }

    for (const Template& t : detected) {
      const auto strict = assess_template(t, gt, log, EvalMode::strict()).status;
      const auto p1 = assess_template(t, gt, log, EvalMode::p1()).status;
      const auto p12 = assess_template(t, gt, log, EvalMode::p1p2()).status;
      if (strict != VerdictStatus::Incorrect) {
        CHECK(p1 != VerdictStatus::Incorrect);
        CHECK(p12 != VerdictStatus::Incorrect);
        CHECK(strict == VerdictStatus::Correct);
      }
      if (p1 != VerdictStatus::Incorrect) CHECK(p12 != VerdictStatus::Incorrect);
      // A strict-mode assessment can only ever report exact correctness.
      CHECK((strict == VerdictStatus::Correct || strict == VerdictStatus::Incorrect));
    }
  }
}

TEST_CASE("full reports balance their counters") {
  const auto log = log_of({
      "sshd[12992]: Accepted password for john from 10.1.1.1 port 53323 ssh2",
      "sshd[17837]: Accepted password for mary from 10.2.2.2 port 41234 ssh2",
      "sshd[100]: Server listening on 0.0.0.0 port 22.",
  });
  const GroundTruth gt = truth_of({
      "sshd[<*>]: Accepted <*> for <*> from <*> port <*> ssh2",
      "sshd[<*>]: Server listening on <*> port <*>.",
      "sshd[<*>]: Connection closed by <*>",
  });
  const std::vector<Template> detected = {
      parse_template("sshd[<*>]: Accepted <*> for <*> from <*> port <*> ssh2"),
      parse_template("sshd[<*>]: Accepted password for <*> from <*> port <*> ssh2"),
      parse_template("sshd[<*>]: <*>"),
      parse_template("sshd[<*>]: Server listening on <*> port 22."),
  };

  const llmtd::EvalReport r = llmtd::evaluate(detected, gt, log, EvalMode::p1());
  CHECK(r.detected_count == 4);
  CHECK(r.gt_count == 3);
  CHECK(r.correct_count == 3);
  CHECK(r.og_count + r.ug_count + r.mx_count == r.detected_count - r.correct_count);
  CHECK(r.og_count == 1);
  CHECK(r.verdicts.size() == 4);

  // Both accepted-* verdicts resolved to the same ground-truth template, so
  // distinct coverage is 2 of 3.
  CHECK_THAT(r.recall, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  CHECK_THAT(r.precision, Catch::Matchers::WithinAbs(3.0 / 4.0, 1e-12));
  const llmtd::Scores s = llmtd::compute_scores(3, 4, 2, 3);
  CHECK_THAT(r.f1, Catch::Matchers::WithinAbs(s.f1, 1e-12));

  const nlohmann::json j = llmtd::eval_report_to_json(r);
  CHECK(j["correct_count"] == 3);
  CHECK(j["verdicts"].size() == 4);
  CHECK(j["verdicts"][0]["status"] == "Correct");
  CHECK(j["verdicts"][1]["status"] == "CorrectViaP1");
  CHECK(j["verdicts"][2]["status"] == "Incorrect");
  CHECK(j["verdicts"][2]["error_class"] == "OG");
  CHECK(j["verdicts"][3]["matched_gt"] ==
        "sshd[<*>]: Server listening on <*> port <*>.");

  const std::string row = llmtd::eval_report_csv_row("demo", EvalMode::p1(), r);
  CHECK(row.starts_with("demo,p1,3,4,3,"));
  CHECK(row.find("0.7500") != std::string::npos);
  const std::string header = llmtd::eval_csv_header();
  CHECK(std::count(header.begin(), header.end(), ',') ==
        std::count(row.begin(), row.end(), ','));
}
