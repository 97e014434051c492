#include "tdx/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "tdx/kernels.hpp"
#include "tdx/text.hpp"

namespace tdx {

RankerEnsemble::RankerEnsemble(std::shared_ptr<const Corpus> corpus, std::vector<Ranker> rankers)
    : corpus_(std::move(corpus)), rankers_(std::move(rankers)) {
  if (rankers_.empty()) throw std::invalid_argument("ranker ensemble needs at least one ranker");
  bind_links();
}

RankerEnsemble RankerEnsemble::build(std::shared_ptr<const Corpus> corpus,
                                     std::vector<std::shared_ptr<const Embedder>> embedders) {
  if (!corpus) throw std::invalid_argument("null corpus");
  std::vector<std::string> ticket_texts, fa_texts, ticket_ids, fa_ids;
  for (const auto& [id, t] : corpus->tickets) {
    ticket_ids.push_back(id);
    ticket_texts.push_back(ticket_text(t));
  }
  for (const auto& [id, f] : corpus->fault_analyses) {
    fa_ids.push_back(id);
    fa_texts.push_back(fault_analysis_text(f));
  }
  std::vector<Ranker> rankers;
  for (auto& embedder : embedders) {
    if (!embedder) throw std::invalid_argument("null embedder");
    VectorIndex index(embedder->dimension());
    const auto tv = embedder->embed(ticket_texts);
    for (std::size_t i = 0; i < tv.size(); ++i) index.add(ticket_ids[i], Modality::ticket, tv[i]);
    const auto fv = embedder->embed(fa_texts);
    for (std::size_t i = 0; i < fv.size(); ++i) index.add(fa_ids[i], Modality::fault_analysis, fv[i]);
    rankers.push_back({std::move(embedder), std::move(index)});
  }
  return RankerEnsemble(std::move(corpus), std::move(rankers));
}

void RankerEnsemble::bind_links() {
  const auto& base = rankers_.front().index;
  for (const auto& r : rankers_) {
    for (auto m : {Modality::ticket, Modality::fault_analysis}) {
      if (r.index.partition(m).ids != base.partition(m).ids) {
        throw std::runtime_error("rankers are indexed over different id sets");
      }
    }
  }
  const auto& tickets = base.partition(Modality::ticket);
  const auto& faults = base.partition(Modality::fault_analysis);
  if (tickets.size() != corpus_->tickets.size() || faults.size() != corpus_->fault_analyses.size()) {
    throw std::runtime_error("index does not cover the corpus");
  }
  std::unordered_map<std::string, std::string> fault_of;
  for (const auto& link : corpus_->links) fault_of[link.ticket_id] = link.fault_analysis_id;
  ticket_links_.assign(tickets.size(), -1);
  for (std::size_t j = 0; j < tickets.size(); ++j) {
    if (!corpus_->tickets.contains(tickets.ids[j])) throw std::runtime_error("index ticket not in corpus: " + tickets.ids[j]);
    if (auto it = fault_of.find(tickets.ids[j]); it != fault_of.end()) {
      const auto pos = faults.position.find(it->second);
      if (pos == faults.position.end()) throw std::runtime_error("index lacks fault analysis " + it->second);
      ticket_links_[j] = static_cast<std::ptrdiff_t>(pos->second);
    }
  }
}

const std::vector<std::string>& RankerEnsemble::ticket_ids() const {
  return rankers_.front().index.partition(Modality::ticket).ids;
}

std::vector<Embedding> RankerEnsemble::embed_query(const Ticket& ticket) const {
  const auto text = ticket_text(ticket);
  std::vector<Embedding> out;
  out.reserve(rankers_.size());
  for (const auto& r : rankers_) out.push_back(r.embedder->embed_one(text));
  return out;
}

std::vector<double> RankerEnsemble::dual_scores(std::size_t ranker, std::span<const float> query) const {
  const auto& r = rankers_.at(ranker);
  const auto& tickets = r.index.partition(Modality::ticket);
  const auto& faults = r.index.partition(Modality::fault_analysis);
  std::vector<double> ts(tickets.size()), fs(faults.size()), out(tickets.size());
  cosine_scores(tickets, r.index.dimension(), query, ts);
  cosine_scores(faults, r.index.dimension(), query, fs);
  dual_level_scores(ts, fs, ticket_links_, out);
  return out;
}

void RankerEnsemble::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"version", VectorIndex::kFormatVersion}, {"rankers", nlohmann::json::array()}};
  for (std::size_t i = 0; i < rankers_.size(); ++i) {
    const auto file = "ranker_" + std::to_string(i) + ".tdxi";
    rankers_[i].index.save(dir / file);
    manifest["rankers"].push_back(
        {{"embedder", rankers_[i].embedder->id()}, {"dimension", rankers_[i].index.dimension()}, {"file", file}});
  }
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

RankerEnsemble RankerEnsemble::load(const std::filesystem::path& dir, std::shared_ptr<const Corpus> corpus,
                                    std::vector<std::shared_ptr<const Embedder>> embedders) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("missing index manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in);
  const auto& entries = manifest.at("rankers");
  if (entries.size() != embedders.size()) {
    throw std::runtime_error("index has " + std::to_string(entries.size()) + " rankers, configuration has " +
                             std::to_string(embedders.size()));
  }
  std::vector<Ranker> rankers;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto id = entries[i].at("embedder").get<std::string>();
    if (id != embedders[i]->id()) throw std::runtime_error("ranker " + std::to_string(i) + " was built with " + id);
    auto index = VectorIndex::load(dir / entries[i].at("file").get<std::string>());
    if (index.dimension() != embedders[i]->dimension()) throw std::runtime_error("index dimension mismatch");
    rankers.push_back({embedders[i], std::move(index)});
  }
  return RankerEnsemble(std::move(corpus), std::move(rankers));
}

namespace {

constexpr double kExcluded = -std::numeric_limits<double>::infinity();

std::ptrdiff_t find_excluded(const RankerEnsemble& ensemble, const std::optional<std::string>& exclude_id) {
  if (!exclude_id) return -1;
  const auto& pos = ensemble.ranker(0).index.partition(Modality::ticket).position;
  const auto it = pos.find(*exclude_id);
  return it == pos.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

std::vector<std::size_t> top_without(std::vector<double>& scores, const std::vector<std::string>& ids, std::size_t k,
                                     std::ptrdiff_t excluded) {
  if (excluded < 0) return select_top(scores, ids, k);
  const double saved = scores[excluded];
  scores[excluded] = kExcluded;
  auto top = select_top(scores, ids, k + 1);
  scores[excluded] = saved;
  std::erase(top, static_cast<std::size_t>(excluded));
  if (top.size() > k) top.resize(k);
  return top;
}

void check_queries(const RankerEnsemble& ensemble, std::span<const Embedding> queries) {
  if (queries.size() != ensemble.size()) throw std::invalid_argument("need one query embedding per ranker");
}

}  // namespace

std::vector<std::vector<std::string>> per_ranker_candidates(const RankerEnsemble& ensemble,
                                                            std::span<const Embedding> query_embeddings,
                                                            std::size_t candidate_order,
                                                            const std::optional<std::string>& exclude_id) {
  check_queries(ensemble, query_embeddings);
  const auto& ids = ensemble.ticket_ids();
  const auto excluded = find_excluded(ensemble, exclude_id);
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    auto scores = ensemble.dual_scores(i, query_embeddings[i]);
    std::vector<std::string> set;
    for (auto j : top_without(scores, ids, candidate_order, excluded)) set.push_back(ids[j]);
    out.push_back(std::move(set));
  }
  return out;
}

ConsensusResult consensus_retrieve(const RankerEnsemble& ensemble, std::span<const Embedding> query_embeddings,
                                   const ConsensusOptions& options) {
  if (options.final_k < 1 || options.candidate_order < options.final_k) {
    throw std::invalid_argument("consensus_retrieve requires candidate_order >= final_k >= 1");
  }
  check_queries(ensemble, query_embeddings);
  const auto& ids = ensemble.ticket_ids();
  const auto excluded = find_excluded(ensemble, options.exclude_id);
  const std::size_t rn = ensemble.size();
  std::vector<double> total(ids.size(), 0.0);
  std::vector<std::size_t> hits(ids.size(), 0);
  for (std::size_t i = 0; i < rn; ++i) {
    auto scores = ensemble.dual_scores(i, query_embeddings[i]);
    for (auto j : top_without(scores, ids, options.candidate_order, excluded)) ++hits[j];
    for (std::size_t j = 0; j < ids.size(); ++j) total[j] += scores[j];
  }
  ConsensusResult result;
  std::vector<ScoredItem> pool;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (hits[j] == rn) pool.push_back({ids[j], total[j] / (2.0 * static_cast<double>(rn))});
  }
  result.pool_size = pool.size();
  result.empty_intersection = pool.empty();
  const auto k = std::min(options.final_k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), ranks_before);
  pool.resize(k);
  result.items = std::move(pool);
  return result;
}

ConsensusResult consensus_retrieve(const RankerEnsemble& ensemble, const Ticket& query, const ConsensusOptions& options) {
  const auto embeddings = ensemble.embed_query(query);
  return consensus_retrieve(ensemble, embeddings, options);
}

std::vector<double> aggregate_report_scores(const RankerEnsemble& ensemble, const Ticket& ticket,
                                            std::span<const std::string> report_texts) {
  std::vector<double> out(report_texts.size(), 0.0);
  const auto text = ticket_text(ticket);
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto& embedder = *ensemble.ranker(i).embedder;
    const auto q = embedder.embed_one(text);
    const auto reports = embedder.embed(report_texts);
    for (std::size_t j = 0; j < reports.size(); ++j) out[j] += cosine(q, reports[j]);
  }
  for (auto& v : out) v /= static_cast<double>(ensemble.size());
  return out;
}

double aggregate_report_score(const RankerEnsemble& ensemble, const Ticket& ticket, const std::string& report_text) {
  return aggregate_report_scores(ensemble, ticket, std::span<const std::string>(&report_text, 1)).front();
}

std::size_t token_count(std::string_view text) { return (text.size() + 3) / 4; }

namespace {

// Cuts the demonstration so that counter(ticket_text + fault_analysis_text) <= budget.
void truncate_to_budget(Demonstration& demo, std::size_t budget, const TokenCounter& counter) {
  const std::string combined = demo.ticket_text + demo.fault_analysis_text;
  std::size_t lo = 0, hi = combined.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (counter(std::string_view(combined).substr(0, mid)) <= budget) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  const auto keep = utf8_prefix(combined, lo).size();
  const auto ticket_len = std::min(keep, demo.ticket_text.size());
  demo.fault_analysis_text = combined.substr(ticket_len, keep - ticket_len);
  demo.ticket_text = combined.substr(0, ticket_len);
  demo.truncated = true;
}

}  // namespace

DemonstrationSelection select_demonstrations(const RankerEnsemble& ensemble, const Ticket& ticket,
                                             std::size_t token_budget, const TokenCounter& counter,
                                             const std::optional<std::string>& exclude_id) {
  if (token_budget < 1) throw std::invalid_argument("token budget must be >= 1");
  const auto queries = ensemble.embed_query(ticket);
  const auto& ids = ensemble.ticket_ids();
  const auto& links = ensemble.ticket_links();
  const std::size_t rn = ensemble.size();
  std::vector<double> total(ids.size(), 0.0);
  for (std::size_t i = 0; i < rn; ++i) {
    const auto scores = ensemble.dual_scores(i, queries[i]);
    for (std::size_t j = 0; j < ids.size(); ++j) total[j] += scores[j];
  }
  std::vector<ScoredItem> ranked;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (links[j] < 0 || (exclude_id && ids[j] == *exclude_id)) continue;
    ranked.push_back({ids[j], total[j] / (2.0 * static_cast<double>(rn))});
  }
  std::sort(ranked.begin(), ranked.end(), ranks_before);

  const auto& corpus = ensemble.corpus();
  const auto& fa_ids = ensemble.ranker(0).index.partition(Modality::fault_analysis).ids;
  const auto& ticket_pos = ensemble.ranker(0).index.partition(Modality::ticket).position;
  DemonstrationSelection selection;
  for (const auto& item : ranked) {
    const auto j = ticket_pos.at(item.item_id);
    auto demo = Demonstration::from(corpus.tickets.at(item.item_id),
                                    corpus.fault_analyses.at(fa_ids[static_cast<std::size_t>(links[j])]), item.score);
    const auto cost = counter(demo.ticket_text + demo.fault_analysis_text);
    if (selection.tokens_used + cost > token_budget) {
      if (selection.demonstrations.empty()) {
        truncate_to_budget(demo, token_budget, counter);
        selection.tokens_used = counter(demo.ticket_text + demo.fault_analysis_text);
        selection.oversized_top1 = true;
        selection.demonstrations.push_back(std::move(demo));
      }
      break;
    }
    selection.tokens_used += cost;
    selection.demonstrations.push_back(std::move(demo));
  }
  return selection;
}

}  // namespace tdx
