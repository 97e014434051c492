#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdx/backends.hpp"
#include "tdx/corpus.hpp"
#include "tdx/vector_index.hpp"

namespace tdx {

struct Ranker {
  std::shared_ptr<const Embedder> embedder;
  VectorIndex index;
};

/// rn independent embedders, each with an exact index over every ticket and
/// fault analysis of one corpus. Immutable after construction.
class RankerEnsemble {
 public:
  /// Embeds every ticket and fault analysis of `corpus` with each embedder.
  static RankerEnsemble build(std::shared_ptr<const Corpus> corpus,
                              std::vector<std::shared_ptr<const Embedder>> embedders);

  /// Rebinds saved indexes to a corpus and embedders. Throws
  /// std::runtime_error when embedder ids, dimensions or id sets disagree.
  static RankerEnsemble load(const std::filesystem::path& dir, std::shared_ptr<const Corpus> corpus,
                             std::vector<std::shared_ptr<const Embedder>> embedders);
  /// Writes manifest.json plus one ranker_<i>.tdxi per ranker.
  void save(const std::filesystem::path& dir) const;

  std::size_t size() const { return rankers_.size(); }
  const Ranker& ranker(std::size_t i) const { return rankers_.at(i); }
  const Corpus& corpus() const { return *corpus_; }
  std::shared_ptr<const Corpus> corpus_ptr() const { return corpus_; }

  /// Ticket ids in index order (ascending).
  const std::vector<std::string>& ticket_ids() const;
  /// For each indexed ticket, the fault-analysis partition row of its linked report or -1.
  const std::vector<std::ptrdiff_t>& ticket_links() const { return ticket_links_; }

  /// One query embedding per ranker.
  std::vector<Embedding> embed_query(const Ticket& ticket) const;

  /// sim_i(Tu, Tj) + sim_i(Tu, fj) for every indexed ticket j, ranker i.
  std::vector<double> dual_scores(std::size_t ranker, std::span<const float> query) const;

 private:
  RankerEnsemble(std::shared_ptr<const Corpus> corpus, std::vector<Ranker> rankers);
  void bind_links();

  std::shared_ptr<const Corpus> corpus_;
  std::vector<Ranker> rankers_;
  std::vector<std::ptrdiff_t> ticket_links_;
};

struct ConsensusOptions {
  std::size_t candidate_order = 2500;
  std::size_t final_k = 10;
  /// Removed before per-ranker selection (e.g. the query's own id).
  std::optional<std::string> exclude_id;
};

struct ConsensusResult {
  std::vector<ScoredItem> items;
  std::size_t pool_size = 0;        // |intersection of S_i|
  bool empty_intersection = false;
};

/// Intersects per-ranker top-`candidate_order` ticket sets (ranked by the
/// dual-level score) and scores survivors by the mean dual-level score over
/// rankers, halved: sum_i (sim_i(Tu,Tj) + sim_i(Tu,fj)) / (2 rn).
ConsensusResult consensus_retrieve(const RankerEnsemble& ensemble, const Ticket& query, const ConsensusOptions& options);
ConsensusResult consensus_retrieve(const RankerEnsemble& ensemble, std::span<const Embedding> query_embeddings,
                                   const ConsensusOptions& options);

/// Per-ranker candidate pool S_i (ids, ranked) for inspection and tests.
std::vector<std::vector<std::string>> per_ranker_candidates(const RankerEnsemble& ensemble,
                                                            std::span<const Embedding> query_embeddings,
                                                            std::size_t candidate_order,
                                                            const std::optional<std::string>& exclude_id = {});

/// Mean over rankers of cosine(ticket_text, report_text).
double aggregate_report_score(const RankerEnsemble& ensemble, const Ticket& ticket, const std::string& report_text);
/// Batched form; one embedding call per ranker.
std::vector<double> aggregate_report_scores(const RankerEnsemble& ensemble, const Ticket& ticket,
                                            std::span<const std::string> report_texts);

using TokenCounter = std::function<std::size_t(std::string_view)>;

/// ceil(bytes / 4).
std::size_t token_count(std::string_view text);

struct DemonstrationSelection {
  std::vector<Demonstration> demonstrations;
  std::size_t tokens_used = 0;
  /// The top-ranked demonstration alone exceeded the budget and was cut.
  bool oversized_top1 = false;
};

/// Ranks linked (ticket, fault analysis) pairs by the consensus score and adds
/// them in rank order until the next one would exceed `token_budget`.
DemonstrationSelection select_demonstrations(const RankerEnsemble& ensemble, const Ticket& ticket,
                                             std::size_t token_budget = 5000,
                                             const TokenCounter& counter = token_count,
                                             const std::optional<std::string>& exclude_id = {});

}  // namespace tdx
