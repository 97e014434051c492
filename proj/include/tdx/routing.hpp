#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tdx/backends.hpp"
#include "tdx/retrieval.hpp"

namespace tdx {

enum class RoutingMethod { retrieval, generative };

struct GenerationEvidence {
  std::uint64_t seed;
  double temperature;
  std::string raw_output;
  std::optional<std::string> label;  // set when the output validated
};

struct RoutingPrediction {
  TeamLabel top1;
  std::optional<TeamLabel> top2;
  RoutingMethod method = RoutingMethod::retrieval;
  std::vector<ScoredItem> evidence;              // retrieval
  std::vector<GenerationEvidence> generations;   // generative attempts, in call order
  bool empty_retrieval = false;
  bool fell_back = false;  // generative outputs were all invalid
};

nlohmann::json to_json(const RoutingPrediction& p);

/// Label histogram over `ranked` (must carry team labels); majority wins,
/// ties by higher summed score, then lexicographic label.
RoutingPrediction vote(const std::vector<ScoredItem>& ranked, const Corpus& corpus);

/// Majority team label among the consensus top-k tickets.
RoutingPrediction route_by_retrieval(const RankerEnsemble& ensemble, const Ticket& ticket, std::size_t k = 10,
                                     std::size_t candidate_order = 2500,
                                     const std::optional<std::string>& exclude_id = {});

/// Two generate calls (seed at temperature 0, seed + 1 at temperature 0.1)
/// emulate top-2 decoding through the routing adapter; invalid outputs are
/// discarded, and when none validate the retrieval router answers.
RoutingPrediction route_by_generation(const Generator& generator, const RankerEnsemble& ensemble, const Ticket& ticket,
                                      const LabelSet& labels, std::uint64_t seed = 0, std::size_t k = 10);

}  // namespace tdx
