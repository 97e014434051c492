#include "tdx/pipeline.hpp"

#include "tdx/kernels.hpp"
#include "tdx/rlrf.hpp"
#include "tdx/routing.hpp"

namespace tdx {

std::vector<RetrievalQuery> retrieval_queries(const Corpus& corpus) {
  std::vector<RetrievalQuery> out;
  for (const auto& [fa, tickets] : corpus.link_groups()) {
    if (tickets.size() < 2) continue;
    out.push_back({tickets.front(), {tickets.begin() + 1, tickets.end()}});
  }
  return out;
}

nlohmann::json RetrievalEvaluation::to_json() const {
  nlohmann::json metrics;
  for (auto k : ks) metrics["Recall@" + std::to_string(k)] = consensus.at(k);
  for (std::size_t i = 0; i < single_dual.size(); ++i) {
    for (auto k : ks) {
      metrics["ranker_" + std::to_string(i) + ".Recall@" + std::to_string(k)] = single_dual[i].at(k);
      metrics["ranker_" + std::to_string(i) + "_ticket_only.Recall@" + std::to_string(k)] = single_ticket[i].at(k);
    }
  }
  return {{"task", "retrieval"}, {"queries", per_query.size()}, {"metrics", metrics}, {"per_query", per_query}};
}

RetrievalEvaluation evaluate_retrieval(const RankerEnsemble& ensemble, const std::vector<std::size_t>& ks,
                                       std::size_t candidate_order) {
  RetrievalEvaluation eval;
  eval.ks = ks;
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  const auto queries = retrieval_queries(ensemble.corpus());
  const auto& ids = ensemble.ticket_ids();
  const auto& ticket_pos = ensemble.ranker(0).index.partition(Modality::ticket).position;
  std::vector<std::vector<std::string>> consensus_rankings;
  std::vector<std::vector<std::vector<std::string>>> dual_rankings(ensemble.size()), ticket_rankings(ensemble.size());
  std::vector<std::set<std::string>> relevant;
  for (const auto& q : queries) {
    const auto& ticket = ensemble.corpus().tickets.at(q.ticket_id);
    const auto embeddings = ensemble.embed_query(ticket);
    ConsensusOptions options;
    options.final_k = max_k;
    options.candidate_order = std::max(candidate_order, max_k);
    options.exclude_id = q.ticket_id;
    const auto result = consensus_retrieve(ensemble, embeddings, options);
    std::vector<std::string> ranking;
    for (const auto& item : result.items) ranking.push_back(item.item_id);
    const auto self = ticket_pos.at(q.ticket_id);
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
      auto dual = ensemble.dual_scores(i, embeddings[i]);
      dual[self] = -std::numeric_limits<double>::infinity();
      std::vector<std::string> r;
      for (auto j : select_top(dual, ids, max_k + 1)) {
        if (j != self) r.push_back(ids[j]);
      }
      r.resize(std::min(r.size(), max_k));
      dual_rankings[i].push_back(std::move(r));

      const auto& part = ensemble.ranker(i).index.partition(Modality::ticket);
      std::vector<double> tt(part.size());
      cosine_scores(part, ensemble.ranker(i).index.dimension(), embeddings[i], tt);
      tt[self] = -std::numeric_limits<double>::infinity();
      std::vector<std::string> rt;
      for (auto j : select_top(tt, ids, max_k + 1)) {
        if (j != self) rt.push_back(ids[j]);
      }
      rt.resize(std::min(rt.size(), max_k));
      ticket_rankings[i].push_back(std::move(rt));
    }
    std::ptrdiff_t first_hit = -1;
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      if (q.relevant.contains(ranking[r])) {
        first_hit = static_cast<std::ptrdiff_t>(r) + 1;
        break;
      }
    }
    eval.per_query.push_back({{"ticket_id", q.ticket_id},
                              {"first_relevant_rank", first_hit > 0 ? nlohmann::json(first_hit) : nlohmann::json(nullptr)},
                              {"pool_size", result.pool_size}});
    consensus_rankings.push_back(std::move(ranking));
    relevant.push_back(q.relevant);
  }
  eval.consensus = recall_at_k(consensus_rankings, relevant, ks);
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    eval.single_dual.push_back(recall_at_k(dual_rankings[i], relevant, ks));
    eval.single_ticket.push_back(recall_at_k(ticket_rankings[i], relevant, ks));
  }
  return eval;
}

nlohmann::json RoutingEvaluation::to_json() const {
  return {{"task", "routing"},
          {"metrics",
           {{"accuracy", scores.accuracy},
            {"macro_precision", scores.macro_precision},
            {"macro_recall", scores.macro_recall},
            {"macro_f1", scores.macro_f1},
            {"top2_accuracy", top2_accuracy}}},
          {"labels", confusion.labels()},
          {"confusion", confusion.counts()},
          {"per_query", per_query}};
}

RoutingEvaluation evaluate_routing(const RankerEnsemble& ensemble, std::size_t k, std::size_t candidate_order,
                                   std::optional<std::size_t> limit) {
  const auto& corpus = ensemble.corpus();
  RoutingEvaluation eval{{}, ConfusionMatrix(corpus.label_set.labels()), 0.0, {}};
  std::size_t top2_hits = 0;
  for (const auto& [id, label] : corpus.team_labels) {
    if (limit && eval.per_query.size() >= *limit) break;
    const auto p = route_by_retrieval(ensemble, corpus.tickets.at(id), k, candidate_order, id);
    eval.confusion.add(label.name, p.top1.name);
    const bool top2 = p.top1 == label || (p.top2 && *p.top2 == label);
    top2_hits += top2;
    eval.per_query.push_back({{"ticket_id", id}, {"actual", label.name}, {"predicted", p.top1.name}});
  }
  eval.scores = macro_prf(eval.confusion);
  eval.top2_accuracy = eval.per_query.empty() ? 0.0 : static_cast<double>(top2_hits) / static_cast<double>(eval.per_query.size());
  return eval;
}

nlohmann::json GenerationEvaluation::to_json() const {
  return {{"task", "generation"}, {"queries", per_query.size()}, {"metrics", metrics}, {"per_query", per_query}};
}

GenerationEvaluation evaluate_generation(const RankerEnsemble& ensemble, const Generator& generator,
                                         const GenerationEvalOptions& options) {
  const auto& corpus = ensemble.corpus();
  GenerationEvaluation eval;
  std::map<std::string, double> sums;
  std::vector<std::pair<Ticket, std::string>> scored_pairs;
  std::vector<std::pair<std::string, std::string>> pathology_pairs;
  std::size_t judged = 0;
  for (const auto& [id, ticket] : corpus.tickets) {
    if (options.limit && eval.per_query.size() >= *options.limit) break;
    const auto fa = corpus.fault_of(id);
    if (!fa) continue;
    const auto reference = fault_analysis_text(corpus.fault_analyses.at(*fa));
    auto batch = generate_candidates(generator, ticket, options.grid, options.seed);
    const auto ranked = rank_candidates(ensemble, ticket, std::move(batch.candidates));
    const auto& best = ranked.front().text;
    nlohmann::json q = {{"ticket_id", id},
                        {"rouge1_f1", rouge_n(best, reference, 1).f1},
                        {"rouge2_f1", rouge_n(best, reference, 2).f1},
                        {"rougeL_f1", rouge_l(best, reference).f1},
                        {"bleu", bleu(best, reference)},
                        {"meteor", meteor(best, reference)},
                        {"pathology", pathology_score(best, reference)}};
    for (const char* key : {"rouge1_f1", "rouge2_f1", "rougeL_f1", "bleu", "meteor"}) sums[key] += q[key].get<double>();
    if (options.use_judge) {
      try {
        const auto verdict = judge(generator, ticket, reference, best, options.seed);
        q["judge"] = tdx::to_json(verdict);
        sums["judge_accuracy"] += verdict.accuracy.score;
        sums["judge_completeness"] += verdict.completeness.score;
        sums["judge_relevance"] += verdict.relevance.score;
        sums["judge_clarity"] += verdict.clarity.score;
        ++judged;
      } catch (const JudgeParseError& e) {
        q["judge_error"] = e.what();
      }
    }
    scored_pairs.emplace_back(ticket, best);
    pathology_pairs.emplace_back(best, reference);
    eval.per_query.push_back(std::move(q));
  }
  if (eval.per_query.empty()) throw std::invalid_argument("no linked tickets to evaluate");
  const auto n = static_cast<double>(eval.per_query.size());
  for (const auto& [key, sum] : sums) {
    eval.metrics[key] = key.starts_with("judge_") ? sum / static_cast<double>(std::max<std::size_t>(judged, 1)) : sum / n;
  }
  eval.metrics["rankers_score"] = rankers_score(ensemble, scored_pairs);
  eval.metrics["pathology_ratio"] = pathology_ratio(pathology_pairs, options.pathology_threshold);
  return eval;
}

}  // namespace tdx
