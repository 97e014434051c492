#include <doctest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "helpers.hpp"
#include "tdx/analysis.hpp"
#include "tdx/prompts.hpp"
#include "tdx/synthetic.hpp"

using namespace tdx;

namespace {

std::string render(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += "### ";
    out += role_name(m.role);
    out += "\n";
    out += m.content;
    out += "\n";
  }
  return out;
}

/// Compares against tests/golden/<name>; TDX_UPDATE_GOLDEN=1 rewrites it.
void check_golden(const std::string& name, const std::string& actual) {
  const std::filesystem::path path = std::filesystem::path(TDX_GOLDEN_DIR) / name;
  if (std::getenv("TDX_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << actual;
  }
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == actual);
}

Ticket fixture_ticket() {
  Ticket t;
  t.id = "TK-GOLDEN";
  t.product_name = "Flexi Multiradio";
  t.hardware_unit = "FXEB";
  t.software_build = "SBTS20R1_5547";
  t.title = "Cell unavailable after \"soft\" reset";
  t.problem_description = "After the reset the cell stays down; alarm 7653 is raised.\nOperator impact: high.";
  t.log_snippets = {"ERR FXEB sync lost code=0x219", "WRN RRH temp 81\xC2\xB0" "C"};
  return t;
}

std::vector<Demonstration> fixture_demos() {
  Ticket a = test::make_ticket("TK-1", "Cell down after reset", "Cell stays down.");
  a.log_snippets = {"ERR sync lost"};
  Ticket b = test::make_ticket("TK-2", "Temperature alarm", "RRH overheats.");
  return {Demonstration::from(a, FaultAnalysis{"FA-1", "Sync source missing after reset.", "configuration error",
                                                "Restore the sync reference."}),
          Demonstration::from(b, FaultAnalysis{"FA-2", "Fan failure.", "hardware fault", "Replace the fan unit."})};
}

std::shared_ptr<Corpus> small_corpus() {
  return std::make_shared<Corpus>(generate_synthetic_corpus({.tickets = 40, .faults = 10, .seed = 3}));
}

RankerEnsemble small_ensemble(std::shared_ptr<Corpus> corpus) {
  return RankerEnsemble::build(corpus, {std::make_shared<MockEmbedder>(256, 1), std::make_shared<MockEmbedder>(256, 2)});
}

}  // namespace

TEST_CASE("routing prompt golden") {
  const auto m = prompts::build_routing_prompt(fixture_ticket());
  REQUIRE(m.size() == 2);
  CHECK(m[0].role == Role::system);
  CHECK(m[0].content == "You are an expert Ticket Resolution and Troubleshooting Assistant.");
  CHECK(m[1].content.starts_with("Predict the team that is responsible for solving the given ticket."));
  CHECK(m[1].content.ends_with("Ticket = " + ticket_text(fixture_ticket())));
  CHECK(render(m) == render(prompts::build_routing_prompt(fixture_ticket())));
  check_golden("routing_prompt.txt", render(m));
}

TEST_CASE("fault-analysis prompt golden") {
  const auto m = prompts::build_fa_prompt(fixture_ticket());
  REQUIRE(m.size() == 2);
  CHECK(m[1].content.starts_with("Analyze the given ticket by identifying and explaining the problems and symptoms, "
                                 "then generate possible root causes and resolutions."));
  CHECK(m[1].content.find(ticket_text(fixture_ticket())) != std::string::npos);
  check_golden("fault_analysis_prompt.txt", render(m));
}

TEST_CASE("RAG first round golden") {
  const auto demos = fixture_demos();
  const auto m = prompts::build_rag_first_round(fixture_ticket(), demos);
  REQUIRE(m.size() == 3);
  CHECK(m[2].role == Role::assistant);
  CHECK(m[2].content.ends_with("**Similarities**: "));
  CHECK(m[1].content.find("Demonstration 1:") < m[1].content.find("Demonstration 2:"));
  CHECK(m[1].content.find("Please think step by step about the fault analysis of the new given trouble ticket!") !=
        std::string::npos);
  check_golden("rag_first_round.txt", render(m));

  const auto none = prompts::build_rag_first_round(fixture_ticket(), {});
  CHECK(none[1].content.find("Demonstration 1") == std::string::npos);
  CHECK(none[1].content.find(std::string(prompts::kRagRequest)) != std::string::npos);
  check_golden("rag_first_round_empty.txt", render(none));
}

TEST_CASE("assistant prefix folding") {
  const auto m = prompts::build_rag_first_round(fixture_ticket(), fixture_demos());
  const auto folded = prompts::fold_assistant_prefix(m);
  REQUIRE(folded.size() == 2);
  CHECK(folded[1].content.ends_with(std::string(prompts::kRagAssistantPrefix)));
}

TEST_CASE("canonical follow-ups") {
  CHECK(prompts::followup_text(prompts::Followup::top3_similar) ==
        "List the top 3 most similar demonstrations to the new ticket");
  CHECK(prompts::followup_text(prompts::Followup::explain_resolutions) ==
        "Explain how these identified similar demonstrations were resolved based on their fault analysis reports");
  const auto final_text = prompts::followup_text(prompts::Followup::final_json_report);
  CHECK(final_text.starts_with(std::string(prompts::kFollowupFinal)));
  for (const auto* key : {"\"identification\"", "\"root_cause\"", "\"resolution\""}) {
    CHECK(final_text.find(key) != std::string::npos);
  }
  CHECK(prompts::parse_followup("top3_similar") == prompts::Followup::top3_similar);
  CHECK(prompts::followup_name(prompts::Followup::final_json_report) == "final_json_report");
  CHECK_THROWS_AS(prompts::parse_followup("top4"), std::invalid_argument);
}

TEST_CASE("candidate grid") {
  const auto grid = default_candidate_grid();
  int total = 0;
  for (const auto& s : grid) {
    CHECK(s.count == 5);
    total += s.count;
  }
  CHECK(total == 25);
  CHECK(grid.size() == 5);
  CHECK(grid.front().temperature == 0.1);
  CHECK(grid.back().temperature == 0.9);
}

TEST_CASE("generate_candidates") {
  const MockGenerator gen({.seed = 1});
  const auto t = fixture_ticket();
  const auto batch = generate_candidates(gen, t, default_candidate_grid(), 42);
  REQUIRE(batch.candidates.size() == 25);
  CHECK(batch.failures.empty());
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(batch.candidates[i].sample_index == static_cast<int>(i));
    CHECK(batch.candidates[i].temperature == default_candidate_grid()[i / 5].temperature);
    CHECK_FALSE(batch.candidates[i].score.has_value());
  }
  CHECK(generate_candidates(gen, t, default_candidate_grid(), 42).candidates == batch.candidates);

  const auto one = generate_candidates(gen, t, {{0.0, 1}}, 7);
  REQUIRE(one.candidates.size() == 1);
  CHECK(one.candidates == generate_candidates(gen, t, {{0.0, 1}}, 7).candidates);

  SUBCASE("seed + running index and the fine-tuned adapter") {
    std::mutex mu;
    std::vector<std::pair<std::uint64_t, std::optional<std::string>>> seen;
    test::ScriptedGenerator spy([&](const GenerateRequest& r) {
      std::lock_guard lock(mu);
      seen.emplace_back(*r.params.seed, r.adapter);
      return std::string("x");
    });
    generate_candidates(spy, t, {{0.1, 2}, {0.5, 1}}, 100);
    std::sort(seen.begin(), seen.end());
    REQUIRE(seen.size() == 3);
    CHECK(seen[0].first == 100);
    CHECK(seen[2].first == 102);
    CHECK(seen[0].second == "fault_analysis");
  }
  SUBCASE("partial and total failure") {
    test::ScriptedGenerator flaky([](const GenerateRequest& r) -> std::string {
      if (*r.params.seed % 2 == 0) throw TransportError("down");
      return "ok";
    });
    const auto partial = generate_candidates(flaky, t, {{0.1, 4}}, 0);
    CHECK(partial.candidates.size() == 2);
    CHECK(partial.failures.size() == 2);
    test::ScriptedGenerator dead([](const GenerateRequest&) -> std::string { throw TransportError("down"); });
    CHECK_THROWS_AS(generate_candidates(dead, t, {{0.1, 3}}, 0), std::runtime_error);
  }
  CHECK_THROWS_AS(generate_candidates(gen, t, {{0.1, 0}}, 0), std::invalid_argument);
}

TEST_CASE("rank_candidates") {
  auto corpus = small_corpus();
  const auto ensemble = small_ensemble(corpus);
  const auto& t = corpus->tickets.begin()->second;
  const auto fa = corpus->fault_of(t.id);
  REQUIRE(fa.has_value());

  std::vector<CandidateReport> cands = {{"zzqx vvbn qwpo", 0.1, 0, {}},
                                        {ticket_text(t), 0.5, 1, {}},
                                        {fault_analysis_text(corpus->fault_analyses.at(*fa)), 0.9, 2, {}}};
  const auto ranked = rank_candidates(ensemble, t, cands);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].sample_index == 1);
  for (const auto& c : ranked) {
    REQUIRE(c.score.has_value());
    CHECK(*c.score == doctest::Approx(aggregate_report_score(ensemble, t, c.text)).epsilon(1e-12));
    CHECK(*ranked[0].score >= *c.score);
  }
  CHECK(ranked.back().sample_index == 0);

  const std::vector<CandidateReport> ties = {{"same", 0.9, 0, {}}, {"same", 0.1, 1, {}}, {"same", 0.1, 0, {}}};
  const auto tied = rank_candidates(ensemble, t, ties);
  CHECK(tied[0].temperature == 0.1);
  CHECK(tied[0].sample_index == 0);
  CHECK(tied[1].sample_index == 1);
  CHECK(tied[2].temperature == 0.9);

  CHECK(rank_candidates(ensemble, t, {{"only", 0.3, 0, {}}}).size() == 1);
  CHECK_THROWS_AS(rank_candidates(ensemble, t, {}), std::invalid_argument);
}

TEST_CASE("troubleshooting session") {
  auto corpus = small_corpus();
  const auto ensemble = small_ensemble(corpus);
  const MockGenerator gen({.seed = 2});
  const auto t = fixture_ticket();

  auto s = open_session(ensemble, gen, t, {}, "sess-x");
  REQUIRE(s.messages.size() == 3);
  CHECK(s.messages[0].role == Role::system);
  CHECK(s.messages[2].role == Role::assistant);
  CHECK(s.messages[2].content.starts_with(std::string(prompts::kRagAssistantPrefix)));
  CHECK(s.messages[2].content.size() > prompts::kRagAssistantPrefix.size());
  const auto expected = select_demonstrations(ensemble, t, 5000);
  REQUIRE(s.demonstrations.size() == expected.demonstrations.size());
  for (std::size_t i = 0; i < s.demonstrations.size(); ++i) {
    CHECK(s.demonstrations[i].ticket == expected.demonstrations[i].ticket);
    CHECK(s.demonstrations[i].score == expected.demonstrations[i].score);
  }
  CHECK_FALSE(s.no_demonstrations);

  const auto r1 = post_followup(s, gen, prompts::Followup::top3_similar);
  CHECK(s.messages[3].content == "List the top 3 most similar demonstrations to the new ticket");
  post_followup(s, gen, prompts::Followup::explain_resolutions);
  const auto r3 = post_followup(s, gen, prompts::Followup::final_json_report);
  CHECK(s.messages.size() == 9);
  for (std::size_t i = 3; i < s.messages.size(); ++i) {
    CHECK(s.messages[i].role == (i % 2 == 1 ? Role::user : Role::assistant));
  }
  REQUIRE(r3.report.has_value());
  CHECK_FALSE(r3.parse_failed);
  CHECK_FALSE(r3.report->identification.empty());
  CHECK_FALSE(r1.report.has_value());

  const auto transcript = session_transcript(s);
  CHECK(transcript.size() == 10);
  CHECK(transcript[0]["type"] == "header");
  CHECK(transcript[0]["ticket_id"] == "TK-GOLDEN");
  CHECK(transcript[0]["demonstrations"].size() == s.demonstrations.size());

  SUBCASE("backend failure leaves history untouched") {
    test::ScriptedGenerator dead([](const GenerateRequest&) -> std::string { throw TransportError("down"); });
    const auto before = s.messages;
    CHECK_THROWS_AS(post_followup(s, dead, std::string("anything")), TransportError);
    CHECK(s.messages == before);
    CHECK_THROWS_AS(open_session(ensemble, dead, t), TransportError);
  }
  SUBCASE("final report parse failure is flagged") {
    test::ScriptedGenerator prose([](const GenerateRequest&) { return std::string("no json here"); });
    const auto r = post_followup(s, prose, prompts::Followup::final_json_report);
    CHECK(r.parse_failed);
    CHECK(r.text == "no json here");
  }
}

TEST_CASE("session wire details") {
  auto corpus = small_corpus();
  const auto ensemble = small_ensemble(corpus);
  std::vector<GenerateRequest> seen;
  test::ScriptedGenerator spy([&](const GenerateRequest& r) {
    seen.push_back(r);
    return std::string("continued");
  }, false);
  const auto s = open_session(ensemble, spy, fixture_ticket(), {.token_budget = 5000, .temperature = 0.3, .seed = 4});
  REQUIRE(seen.size() == 1);
  CHECK_FALSE(seen[0].adapter.has_value());
  CHECK(seen[0].params.temperature == 0.3);
  // Folded: the prefix travels at the end of the user message.
  CHECK(seen[0].messages.back().role == Role::user);
  CHECK(seen[0].messages.back().content.ends_with(std::string(prompts::kRagAssistantPrefix)));
  CHECK(s.messages.back().content == std::string(prompts::kRagAssistantPrefix) + "continued");
}

TEST_CASE("session with no demonstrations") {
  auto corpus = std::make_shared<Corpus>();
  corpus->tickets["T"] = test::make_ticket("T", "lonely");
  const auto ensemble = RankerEnsemble::build(corpus, {std::make_shared<MockEmbedder>(32, 1)});
  const auto s = open_session(ensemble, MockGenerator{}, fixture_ticket());
  CHECK(s.demonstrations.empty());
  CHECK(s.no_demonstrations);
  CHECK(s.messages.size() == 3);
}

TEST_CASE("parse_report_json") {
  const auto f = parse_report_json("```json\n{\"identification\": \"i\", \"root_cause\": \"r\", \"resolution\": \"s\"}\n```");
  REQUIRE(f.has_value());
  CHECK(f->root_cause == "r");
  CHECK_FALSE(parse_report_json("{\"identification\": \"i\"}").has_value());
  CHECK_FALSE(parse_report_json("{not json}").has_value());
}

TEST_CASE("session store isolates concurrent sessions") {
  auto corpus = small_corpus();
  const auto ensemble = small_ensemble(corpus);
  const MockGenerator gen;
  SessionStore store;
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) {
    auto s = open_session(ensemble, gen, corpus->tickets.at("TK-0000" + std::to_string(i)), {}, store.next_id());
    ids.push_back(s.session_id);
    store.insert(std::move(s));
  }
  CHECK(store.size() == 4);
  std::vector<std::thread> threads;
  for (int w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      for (int k = 0; k < 5; ++k) {
        const auto& id = ids[static_cast<std::size_t>(w % 4)];
        store.with_session(id, [&](TroubleshootSession& s) {
          return post_followup(s, gen, "note " + id + " " + std::to_string(w) + " " + std::to_string(k));
        });
      }
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& id : ids) {
    const auto s = store.snapshot(id);
    CHECK(s.messages.size() == 3 + 2 * 10);
    for (std::size_t i = 3; i < s.messages.size(); i += 2) {
      CHECK(s.messages[i].role == Role::user);
      CHECK(s.messages[i].content.find("note " + id + " ") == 0);
      CHECK(s.messages[i + 1].role == Role::assistant);
    }
  }
  CHECK_THROWS_AS(store.snapshot("sess-999999"), SessionNotFound);
}
