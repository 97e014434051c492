#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "tdx/corpus.hpp"
#include "tdx/curation.hpp"
#include "tdx/prompts.hpp"

using namespace tdx;

namespace {

FaultAnalysis bare(const std::string& id, const std::string& ident) { return FaultAnalysis{id, ident, "", ""}; }

}  // namespace

TEST_CASE("compute_idf examples") {
  SUBCASE("single report has zero weights") {
    // Section labels ("identification", "root", "cause", "resolution") are
    // part of every rendered report, so they always score 0.
    const std::vector<FaultAnalysis> r = {bare("F", "a b")};
    const auto idf = compute_idf(r);
    CHECK(idf.weight("a") == 0.0);
    CHECK(idf.weight("b") == 0.0);
    CHECK(idf.document_count() == 1);
  }
  SUBCASE("two reports") {
    const std::vector<FaultAnalysis> r = {bare("F1", "a b"), bare("F2", "a c")};
    const auto idf = compute_idf(r);
    CHECK(idf.weight("a") == 0.0);
    CHECK(idf.weight("b") == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    CHECK(idf.weight("c") == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(idf.max_rarity() == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("unknown token") {
    const std::vector<FaultAnalysis> r = {bare("F1", "a")};
    const auto idf = compute_idf(r);
    CHECK_FALSE(idf.contains("zzz"));
    CHECK_THROWS_WITH_AS(idf.weight("zzz"), "unknown token", std::out_of_range);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_WITH_AS(compute_idf({}), "empty corpus", std::invalid_argument);
  }
  SUBCASE("order invariance") {
    std::vector<FaultAnalysis> r = {bare("F1", "x y z"), bare("F2", "y z"), bare("F3", "z q")};
    const auto a = compute_idf(r);
    std::reverse(r.begin(), r.end());
    const auto b = compute_idf(r);
    for (const auto* tok : {"x", "y", "z", "q", "identification"}) CHECK(a.weight(tok) == b.weight(tok));
  }
}

TEST_CASE("informativeness_score examples") {
  // Weights {0, ln2, ln2}: "a" everywhere, "b" and "c" in half the reports.
  const std::vector<FaultAnalysis> r = {bare("F1", "a b c"), bare("F2", "a")};
  const auto idf = compute_idf(r);
  const FaultAnalysis probe{"P", "a b c", "", ""};
  CHECK(informativeness_score(probe, idf, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(informativeness_score(bare("F2", "a"), idf, 15) == 0.0);

  SUBCASE("repetition does not inflate the score") {
    CHECK(informativeness_score(bare("X", "b b b b b"), idf, 1) == informativeness_score(bare("X", "b"), idf, 1));
  }
  SUBCASE("unknown tokens score ln N") {
    CHECK(informativeness_score(bare("X", "neverseen"), idf, 1) == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("report with zero tokens scores 0") {
    // A rendered report always carries its section labels; an IdfTable built
    // from a corpus where they appear everywhere weights them 0.
    CHECK(informativeness_score(FaultAnalysis{}, idf, 15) == 0.0);
  }
}

TEST_CASE("filter_reports keeps exactly the reports with rare tokens") {
  Corpus c;
  for (int i = 0; i < 10; ++i) {
    const auto fid = "F" + std::to_string(i);
    const auto tid = "T" + std::to_string(i);
    std::string ident = "link down after restart of the unit";
    if (i == 2) ident += " quasar";
    if (i == 5) ident += " nebula pulsar";
    if (i == 7) ident += " zenith";
    c.fault_analyses[fid] = FaultAnalysis{fid, ident, "hardware fault", "replace unit"};
    c.tickets[tid] = test::make_ticket(tid, "t");
    test::link(c, tid, fid);
  }
  // Oracle: tokens that occur in one report only have idf ln 10; with k = 1
  // exactly the three planted reports reach it, the rest score ln(10/10) = 0.
  const double threshold = 1.0;
  FilterReport report;
  const auto kept = filter_reports(c, threshold, 1, &report);
  CHECK(report.kept == 3);
  CHECK(report.dropped == 7);
  CHECK(report.tickets_kept == 3);
  CHECK(kept.fault_analyses.contains("F2"));
  CHECK(kept.fault_analyses.contains("F5"));
  CHECK(kept.fault_analyses.contains("F7"));
  CHECK(kept.tickets.size() == 3);
  CHECK_NOTHROW(kept.validate());

  CHECK(filter_reports(c, std::numeric_limits<double>::infinity()).fault_analyses.empty());
  CHECK(filter_reports(c, -1.0, 1).fault_analyses.size() == 10);
}

TEST_CASE("build_pair_set counts") {
  Corpus c;
  c.tickets["A"] = test::make_ticket("A", "a");
  c.fault_analyses["F1"] = test::make_fa("F1", "x");
  test::link(c, "A", "F1");
  auto s = build_pair_set(c);
  CHECK(s.implicit_pairs.size() == 1);
  CHECK(s.explicit_pairs.empty());

  for (const auto* id : {"B", "C"}) {
    c.tickets[id] = test::make_ticket(id, id);
  }
  c.fault_analyses["F2"] = test::make_fa("F2", "y");
  c.tickets["D"] = test::make_ticket("D", "d");
  test::link(c, "C", "F2");
  test::link(c, "B", "F2");
  test::link(c, "D", "F2");
  s = build_pair_set(c);
  CHECK(s.implicit_pairs.size() == 4);
  CHECK(s.explicit_pairs.size() == 3);
  for (const auto& [l, r] : s.explicit_pairs) CHECK(l < r);
  CHECK(s.size() == 7);
}

TEST_CASE("pair-set size for the reference archive") {
  // |S| = |D_f| + |ES|: 130,781 links and 71,570 explicit pairs.
  const std::size_t df = 130781;
  const std::size_t es = 71570;
  CHECK(df + es == 202351);
}

TEST_CASE("export_pair_set writes one record per pair") {
  test::TempDir dir;
  Corpus c;
  c.tickets["A"] = test::make_ticket("A", "a");
  c.tickets["B"] = test::make_ticket("B", "b");
  c.fault_analyses["F"] = test::make_fa("F", "x");
  test::link(c, "B", "F");
  test::link(c, "A", "F");
  export_pair_set(build_pair_set(c), dir / "pairs.jsonl");
  const auto records = read_jsonl(dir / "pairs.jsonl");
  REQUIRE(records.size() == 3);
  std::size_t tt = 0;
  for (const auto& r : records) {
    CHECK((r["kind"] == "ticket_fault" || r["kind"] == "ticket_ticket"));
    if (r["kind"] == "ticket_ticket") {
      ++tt;
      CHECK(r["left_id"] == "A");
      CHECK(r["right_id"] == "B");
    }
  }
  CHECK(tt == 1);
}

TEST_CASE("export_instruction_dataset") {
  test::TempDir dir;
  Corpus empty;
  CHECK(export_instruction_dataset(empty, InstructionTask::routing, dir / "empty.jsonl") == 0);
  CHECK(std::filesystem::file_size(dir / "empty.jsonl") == 0);

  Corpus c;
  c.tickets["T1"] = test::make_ticket("T1", "first");
  c.tickets["T2"] = test::make_ticket("T2", "second");
  c.team_labels["T1"] = {"3"};
  c.team_labels["T2"] = {"Other"};
  c.fault_analyses["F"] = test::make_fa("F", "ident");
  test::link(c, "T1", "F");
  CHECK(export_instruction_dataset(c, InstructionTask::routing, dir / "r.jsonl") == 2);
  const auto records = read_jsonl(dir / "r.jsonl");
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK(r["user"].get<std::string>().find("Predict the team that is responsible for solving the given ticket.") !=
          std::string::npos);
    CHECK(r["system"] == std::string(prompts::kSystem));
  }
  CHECK(records[0]["assistant"] == "3");
  CHECK(records[1]["assistant"] == "Other");

  CHECK(export_instruction_dataset(c, InstructionTask::fault_analysis, dir / "f.jsonl") == 1);
  const auto fa = read_jsonl(dir / "f.jsonl");
  CHECK(fa[0]["assistant"] == fault_analysis_text(c.fault_analyses["F"]));

  c.team_labels.erase("T2");
  CHECK_THROWS_WITH_AS(export_instruction_dataset(c, InstructionTask::routing, dir / "x.jsonl"),
                       doctest::Contains("T2"), std::invalid_argument);
}

TEST_CASE("contrastive_loss examples") {
  CHECK(contrastive_loss({{0.7}}) == 0.0);
  for (double s : {-1.0, 0.0, 0.3, 5.0}) {
    CHECK(contrastive_loss({{s, s}, {s, s}}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  const double expected = oracle::contrastive_loss({{10, 0}, {0, 10}}, 1.0);
  CHECK(expected == doctest::Approx(4.5398899e-5).epsilon(1e-6));
  CHECK(std::abs(contrastive_loss({{10, 0}, {0, 10}}, 1.0) - expected) < 1e-12);

  CHECK_THROWS_AS(contrastive_loss({}), std::invalid_argument);
  CHECK_THROWS_AS(contrastive_loss({{1, 2}, {3}}), std::invalid_argument);
  CHECK_THROWS_AS(contrastive_loss({{1}}, 0.0), std::invalid_argument);
}

TEST_CASE("contrastive_loss properties") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng() % 8;
    std::vector<std::vector<double>> m(b, std::vector<double>(b));
    for (auto& row : m)
      for (auto& v : row) v = u(rng);
    const double loss = contrastive_loss(m);
    CHECK(loss >= 0.0);
    CHECK(std::abs(loss - oracle::contrastive_loss(m, 0.1)) < 1e-9);
    auto raised = m;
    raised[0][0] += 0.5;
    if (b > 1) CHECK(contrastive_loss(raised) < loss);
  }
}
