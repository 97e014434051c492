#include "tdx/routing.hpp"

#include <algorithm>
#include <map>

#include "tdx/prompts.hpp"

namespace tdx {

nlohmann::json to_json(const RoutingPrediction& p) {
  nlohmann::json j = {{"top1", p.top1.name},
                      {"top2", p.top2 ? nlohmann::json(p.top2->name) : nlohmann::json(nullptr)},
                      {"method", p.method == RoutingMethod::retrieval ? "retrieval" : "generative"},
                      {"empty_retrieval", p.empty_retrieval},
                      {"fell_back", p.fell_back}};
  j["evidence"] = nlohmann::json::array();
  for (const auto& e : p.evidence) j["evidence"].push_back({{"ticket_id", e.item_id}, {"score", e.score}});
  j["generations"] = nlohmann::json::array();
  for (const auto& g : p.generations) {
    j["generations"].push_back({{"seed", g.seed},
                                {"temperature", g.temperature},
                                {"raw_output", g.raw_output},
                                {"label", g.label ? nlohmann::json(*g.label) : nlohmann::json(nullptr)}});
  }
  return j;
}

RoutingPrediction vote(const std::vector<ScoredItem>& ranked, const Corpus& corpus) {
  RoutingPrediction p;
  p.top1 = corpus.label_set.catch_all_label();
  p.method = RoutingMethod::retrieval;
  p.evidence = ranked;
  struct Tally {
    std::size_t count = 0;
    double score = 0.0;
  };
  std::map<std::string, Tally> tally;
  for (const auto& item : ranked) {
    const auto it = corpus.team_labels.find(item.item_id);
    if (it == corpus.team_labels.end()) continue;
    auto& t = tally[it->second.name];
    ++t.count;
    t.score += item.score;
  }
  if (tally.empty()) {
    p.empty_retrieval = true;
    return p;
  }
  std::vector<std::pair<std::string, Tally>> order(tally.begin(), tally.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    return a.first < b.first;
  });
  p.top1 = TeamLabel{order[0].first};
  if (order.size() > 1) p.top2 = TeamLabel{order[1].first};
  return p;
}

RoutingPrediction route_by_retrieval(const RankerEnsemble& ensemble, const Ticket& ticket, std::size_t k,
                                     std::size_t candidate_order, const std::optional<std::string>& exclude_id) {
  ConsensusOptions options;
  options.final_k = k;
  options.candidate_order = std::max(candidate_order, k);
  options.exclude_id = exclude_id;
  const auto result = consensus_retrieve(ensemble, ticket, options);
  return vote(result.items, ensemble.corpus());
}

RoutingPrediction route_by_generation(const Generator& generator, const RankerEnsemble& ensemble, const Ticket& ticket,
                                      const LabelSet& labels, std::uint64_t seed, std::size_t k) {
  const auto messages = prompts::build_routing_prompt(ticket);
  std::vector<GenerationEvidence> attempts;
  std::vector<TeamLabel> valid;
  const std::pair<std::uint64_t, double> calls[] = {{seed, 0.0}, {seed + 1, 0.1}};
  for (const auto& [call_seed, temperature] : calls) {
    GenerateRequest request{messages, {}, std::string("routing")};
    request.params.temperature = temperature;
    request.params.seed = call_seed;
    request.params.max_tokens = 16;
    GenerationEvidence e{call_seed, temperature, generate(generator, request), std::nullopt};
    if (auto label = labels.normalize(e.raw_output)) {
      e.label = label->name;
      if (std::find(valid.begin(), valid.end(), *label) == valid.end()) valid.push_back(*label);
    }
    attempts.push_back(std::move(e));
  }
  if (valid.empty()) {
    auto p = route_by_retrieval(ensemble, ticket, k);
    p.generations = std::move(attempts);
    p.fell_back = true;
    return p;
  }
  RoutingPrediction p;
  p.top1 = valid[0];
  if (valid.size() > 1) p.top2 = valid[1];
  p.method = RoutingMethod::generative;
  p.generations = std::move(attempts);
  return p;
}

}  // namespace tdx
