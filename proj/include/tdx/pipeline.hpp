#pragma once

// Corpus-level evaluation drivers shared by the CLI and the acceptance suite.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdx/analysis.hpp"
#include "tdx/evaluation.hpp"
#include "tdx/retrieval.hpp"

namespace tdx {

/// Held-out query: the first ticket of every fault analysis with at least two
/// tickets. Relevant ids are the other tickets of that fault analysis.
struct RetrievalQuery {
  std::string ticket_id;
  std::set<std::string> relevant;
};

std::vector<RetrievalQuery> retrieval_queries(const Corpus& corpus);

struct RetrievalEvaluation {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> consensus;
  /// Per ranker: ranking by the dual-level score of that ranker alone.
  std::vector<std::map<std::size_t, double>> single_dual;
  /// Per ranker: ranking by ticket-ticket cosine alone.
  std::vector<std::map<std::size_t, double>> single_ticket;
  std::vector<nlohmann::json> per_query;

  nlohmann::json to_json() const;
};

RetrievalEvaluation evaluate_retrieval(const RankerEnsemble& ensemble, const std::vector<std::size_t>& ks,
                                       std::size_t candidate_order);

struct RoutingEvaluation {
  ClassificationScores scores;
  ConfusionMatrix confusion;
  double top2_accuracy = 0.0;
  std::vector<nlohmann::json> per_query;

  nlohmann::json to_json() const;
};

/// Leave-one-out retrieval routing over every labeled ticket (up to `limit`).
RoutingEvaluation evaluate_routing(const RankerEnsemble& ensemble, std::size_t k, std::size_t candidate_order,
                                   std::optional<std::size_t> limit = {});

struct GenerationEvalOptions {
  std::vector<TemperatureSlot> grid = {{0.0, 1}};
  std::uint64_t seed = 0;
  std::optional<std::size_t> limit;
  bool use_judge = false;
  double pathology_threshold = 0.07;
};

struct GenerationEvaluation {
  std::map<std::string, double> metrics;
  std::vector<nlohmann::json> per_query;

  nlohmann::json to_json() const;
};

/// For each linked ticket (sorted by id, up to `limit`), samples the grid,
/// keeps the top-ranked candidate and compares it with the groundtruth report.
GenerationEvaluation evaluate_generation(const RankerEnsemble& ensemble, const Generator& generator,
                                         const GenerationEvalOptions& options);

}  // namespace tdx
