#include <doctest.h>

#include <map>
#include <random>

#include "helpers.hpp"
#include "tdx/routing.hpp"
#include "tdx/synthetic.hpp"

using namespace tdx;

namespace {

Corpus labeled(const std::vector<std::pair<std::string, std::string>>& id_label) {
  Corpus c;
  for (const auto& [id, label] : id_label) {
    c.tickets[id] = test::make_ticket(id, "t " + id);
    c.team_labels[id] = TeamLabel{label};
  }
  return c;
}

/// Straightforward recount used as the reference for vote().
std::pair<std::string, std::optional<std::string>> recount(const std::vector<ScoredItem>& ranked, const Corpus& c) {
  std::map<std::string, std::pair<int, double>> t;
  for (const auto& r : ranked) {
    auto it = c.team_labels.find(r.item_id);
    if (it == c.team_labels.end()) continue;
    t[it->second.name].first += 1;
    t[it->second.name].second += r.score;
  }
  if (t.empty()) return {c.label_set.catch_all(), std::nullopt};
  auto better = [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    if (a.second.second != b.second.second) return a.second.second > b.second.second;
    return a.first < b.first;
  };
  const std::pair<const std::string, std::pair<int, double>>* best = nullptr;
  const std::pair<const std::string, std::pair<int, double>>* second = nullptr;
  for (const auto& e : t) {
    if (!best || better(e, *best)) {
      second = best;
      best = &e;
    } else if (!second || better(e, *second)) {
      second = &e;
    }
  }
  return {best->first, second ? std::optional<std::string>(second->first) : std::nullopt};
}

}  // namespace

TEST_CASE("vote examples") {
  SUBCASE("unanimous") {
    std::vector<std::pair<std::string, std::string>> ids;
    std::vector<ScoredItem> ranked;
    for (int i = 0; i < 10; ++i) {
      ids.push_back({"T" + std::to_string(i), "5"});
      ranked.push_back({"T" + std::to_string(i), 0.5});
    }
    const auto p = vote(ranked, labeled(ids));
    CHECK(p.top1.name == "5");
    CHECK_FALSE(p.top2.has_value());
    CHECK(p.method == RoutingMethod::retrieval);
  }
  SUBCASE("6 A vs 4 B") {
    std::vector<std::pair<std::string, std::string>> ids;
    std::vector<ScoredItem> ranked;
    for (int i = 0; i < 10; ++i) {
      ids.push_back({"T" + std::to_string(i), i < 6 ? "A" : "B"});
      ranked.push_back({"T" + std::to_string(i), i < 6 ? 0.1 : 0.9});
    }
    const auto p = vote(ranked, labeled(ids));
    CHECK(p.top1.name == "A");
    CHECK(p.top2->name == "B");
  }
  SUBCASE("5 vs 5 broken by summed score") {
    std::vector<std::pair<std::string, std::string>> ids;
    std::vector<ScoredItem> ranked;
    const double a[] = {0.7, 0.6, 0.6, 0.6, 0.6};  // 3.1
    const double b[] = {0.8, 0.7, 0.7, 0.6, 0.6};  // 3.4
    for (int i = 0; i < 5; ++i) {
      ids.push_back({"A" + std::to_string(i), "A"});
      ids.push_back({"B" + std::to_string(i), "B"});
      ranked.push_back({"A" + std::to_string(i), a[i]});
      ranked.push_back({"B" + std::to_string(i), b[i]});
    }
    CHECK(vote(ranked, labeled(ids)).top1.name == "B");
  }
  SUBCASE("full tie falls to label order") {
    const auto c = labeled({{"x", "B"}, {"y", "A"}});
    CHECK(vote({{"x", 0.5}, {"y", 0.5}}, c).top1.name == "A");
  }
  SUBCASE("empty retrieval") {
    const auto p = vote({}, labeled({}));
    CHECK(p.top1.name == "Other");
    CHECK(p.empty_retrieval);
  }
}

TEST_CASE("vote matches a brute-force recount") {
  std::mt19937_64 rng(11);
  const char* labels[] = {"1", "2", "3", "4"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::pair<std::string, std::string>> ids;
    std::vector<ScoredItem> ranked;
    const int n = 1 + static_cast<int>(rng() % 12);
    const bool forced_tie = trial % 5 == 0;
    for (int i = 0; i < n; ++i) {
      const std::string id = "T" + std::to_string(i);
      ids.push_back({id, labels[forced_tie ? i % 2 : rng() % 4]});
      // Quantized scores make equal sums common.
      ranked.push_back({id, forced_tie ? 0.5 : static_cast<double>(rng() % 4) / 4.0});
    }
    const auto c = labeled(ids);
    const auto p = vote(ranked, c);
    const auto [top1, top2] = recount(ranked, c);
    CHECK(p.top1.name == top1);
    CHECK((p.top2 ? std::optional<std::string>(p.top2->name) : std::nullopt) == top2);
  }
}

TEST_CASE("route_by_retrieval") {
  auto corpus = std::make_shared<Corpus>(generate_synthetic_corpus({.tickets = 60, .faults = 12, .seed = 5}));
  const auto ensemble = RankerEnsemble::build(corpus, {std::make_shared<MockEmbedder>(256, 1),
                                                       std::make_shared<MockEmbedder>(256, 2)});
  const auto& t = corpus->tickets.at("TK-00003");

  const auto k1 = route_by_retrieval(ensemble, t, 1, 2500, t.id);
  REQUIRE(k1.evidence.size() == 1);
  CHECK(k1.top1 == corpus->team_labels.at(k1.evidence[0].item_id));

  const auto k10 = route_by_retrieval(ensemble, t, 10);
  CHECK(k10.evidence.size() <= 10);
  CHECK(corpus->label_set.contains(k10.top1.name));
  CHECK(route_by_retrieval(ensemble, t, 10).top1 == k10.top1);
}

TEST_CASE("route_by_generation") {
  auto corpus = std::make_shared<Corpus>(generate_synthetic_corpus({.tickets = 60, .faults = 12, .seed = 5}));
  const auto ensemble = RankerEnsemble::build(corpus, {std::make_shared<MockEmbedder>(128, 1)});
  const auto& labels = corpus->label_set;
  auto t = test::make_ticket("NEW", "Alarm storm", "Operator says team: 5 owns this.");

  SUBCASE("planted marker") {
    const auto p = route_by_generation(MockGenerator{}, ensemble, t, labels, 3);
    CHECK(p.top1.name == "5");
    CHECK(p.method == RoutingMethod::generative);
    CHECK_FALSE(p.top2.has_value());
    REQUIRE(p.generations.size() == 2);
    CHECK(p.generations[0].seed == 3);
    CHECK(p.generations[0].temperature == 0.0);
    CHECK(p.generations[1].seed == 4);
    CHECK(p.generations[1].temperature == 0.1);
  }
  SUBCASE("two valid labels give top-2") {
    test::ScriptedGenerator g([](const GenerateRequest& r) {
      CHECK(r.adapter == "routing");
      return std::string(r.params.temperature == 0.0 ? " 7\n" : "other");
    });
    const auto p = route_by_generation(g, ensemble, t, labels);
    CHECK(p.top1.name == "7");
    CHECK(p.top2->name == "Other");
  }
  SUBCASE("out-of-vocabulary output falls back") {
    test::ScriptedGenerator g([](const GenerateRequest&) { return std::string("Team_Unknown"); });
    const auto p = route_by_generation(g, ensemble, t, labels);
    CHECK(p.fell_back);
    CHECK(p.method == RoutingMethod::retrieval);
    CHECK(p.top1 == route_by_retrieval(ensemble, t, 10).top1);
    CHECK(p.generations.size() == 2);
    CHECK_FALSE(p.generations[0].label.has_value());
  }
  SUBCASE("backend errors propagate") {
    test::ScriptedGenerator g([](const GenerateRequest&) -> std::string { throw TransportError("down"); });
    CHECK_THROWS_AS(route_by_generation(g, ensemble, t, labels), TransportError);
  }
}

TEST_CASE("generative router never leaves the label set") {
  auto corpus = std::make_shared<Corpus>(generate_synthetic_corpus({.tickets = 60, .faults = 12, .seed = 5}));
  const auto ensemble = RankerEnsemble::build(corpus, {std::make_shared<MockEmbedder>(128, 1)});
  const auto& labels = corpus->label_set;
  std::mt19937_64 rng(99);
  const std::vector<std::string> pieces = {"5", " 5 ", "Other", "OTHER", "11", "team 5", "5.", "", "\n",
                                           "\xff\xfe", "1\n2", "ten", "0", "-1", "Team_Unknown", "\t10\t"};
  const auto t = test::make_ticket("NEW", "fuzz");
  for (int i = 0; i < 500; ++i) {
    test::ScriptedGenerator g([&](const GenerateRequest&) {
      std::string out = pieces[rng() % pieces.size()];
      if (rng() % 3 == 0) {
        for (int j = 0; j < 4; ++j) out += static_cast<char>(rng() % 256);
      }
      return out;
    });
    const auto p = route_by_generation(g, ensemble, t, labels, static_cast<std::uint64_t>(i));
    CHECK(labels.contains(p.top1.name));
    if (p.top2) CHECK(labels.contains(p.top2->name));
  }
}

TEST_CASE("routing prediction json") {
  RoutingPrediction p;
  p.top1 = TeamLabel{"3"};
  p.evidence = {{"T1", 0.5}};
  const auto j = to_json(p);
  CHECK(j["top1"] == "3");
  CHECK(j["top2"].is_null());
  CHECK(j["method"] == "retrieval");
  CHECK(j["evidence"][0]["ticket_id"] == "T1");
}
