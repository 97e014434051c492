#include "tdx/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "tdx/prompts.hpp"
#include "tdx/text.hpp"

namespace tdx {

IdfTable::IdfTable(std::unordered_map<std::string, double> weights, std::size_t document_count)
    : weights_(std::move(weights)), document_count_(document_count) {}

double IdfTable::weight(const std::string& token) const {
  const auto it = weights_.find(token);
  if (it == weights_.end()) throw std::out_of_range("unknown token");
  return it->second;
}

double IdfTable::max_rarity() const { return std::log(static_cast<double>(document_count_)); }

namespace {

std::set<std::string> unique_tokens(const FaultAnalysis& f) {
  auto tokens = tokenize(fault_analysis_text(f));
  return {std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end())};
}

}  // namespace

IdfTable compute_idf(std::span<const FaultAnalysis> reports) {
  if (reports.empty()) throw std::invalid_argument("empty corpus");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& r : reports) {
    for (const auto& token : unique_tokens(r)) ++df[token];
  }
  const double n = static_cast<double>(reports.size());
  std::unordered_map<std::string, double> weights;
  weights.reserve(df.size());
  for (const auto& [token, count] : df) weights.emplace(token, std::log(n / static_cast<double>(count)));
  return IdfTable(std::move(weights), reports.size());
}

double informativeness_score(const FaultAnalysis& report, const IdfTable& idf, int k) {
  if (k < 1) throw std::invalid_argument("informativeness top-k must be >= 1");
  std::vector<double> weights;
  for (const auto& token : unique_tokens(report)) {
    weights.push_back(idf.contains(token) ? idf.weight(token) : idf.max_rarity());
  }
  if (weights.empty()) return 0.0;
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), weights.size());
  std::partial_sort(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(take), weights.end(),
                    std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += weights[i];
  return sum / static_cast<double>(take);
}

Corpus filter_reports(const Corpus& corpus, double threshold, int k, FilterReport* report) {
  Corpus out;
  out.label_set = corpus.label_set;
  out.root_cause_labels = corpus.root_cause_labels;
  FilterReport stats;
  if (!corpus.fault_analyses.empty()) {
    std::vector<FaultAnalysis> reports;
    for (const auto& [_, f] : corpus.fault_analyses) reports.push_back(f);
    const auto idf = compute_idf(reports);
    std::vector<double> scores(reports.size());
    const auto n = static_cast<std::int64_t>(reports.size());
#pragma omp parallel for schedule(dynamic, 32) if (n > 256)
    for (std::int64_t i = 0; i < n; ++i) scores[i] = informativeness_score(reports[i], idf, k);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      if (scores[i] > threshold) {
        out.fault_analyses.emplace(reports[i].id, reports[i]);
        ++stats.kept;
      } else {
        ++stats.dropped;
      }
    }
  }
  for (const auto& link : corpus.links) {
    if (!out.fault_analyses.contains(link.fault_analysis_id)) continue;
    out.links.push_back(link);
    out.tickets.emplace(link.ticket_id, corpus.tickets.at(link.ticket_id));
    if (auto it = corpus.team_labels.find(link.ticket_id); it != corpus.team_labels.end()) {
      out.team_labels.emplace(it->first, it->second);
    }
  }
  stats.tickets_kept = out.tickets.size();
  if (report) *report = stats;
  return out;
}

PairSet build_pair_set(const Corpus& corpus) {
  PairSet pairs;
  for (const auto& [fa, tickets] : corpus.link_groups()) {
    for (const auto& t : tickets) pairs.implicit_pairs.emplace_back(t, fa);
    for (std::size_t a = 0; a < tickets.size(); ++a) {
      for (std::size_t b = a + 1; b < tickets.size(); ++b) pairs.explicit_pairs.emplace_back(tickets[a], tickets[b]);
    }
  }
  std::sort(pairs.implicit_pairs.begin(), pairs.implicit_pairs.end());
  std::sort(pairs.explicit_pairs.begin(), pairs.explicit_pairs.end());
  pairs.explicit_pairs.erase(std::unique(pairs.explicit_pairs.begin(), pairs.explicit_pairs.end()),
                             pairs.explicit_pairs.end());
  return pairs;
}

void export_pair_set(const PairSet& pairs, const std::filesystem::path& out) {
  std::vector<nlohmann::json> records;
  records.reserve(pairs.size());
  for (const auto& [l, r] : pairs.implicit_pairs) records.push_back({{"kind", "ticket_fault"}, {"left_id", l}, {"right_id", r}});
  for (const auto& [l, r] : pairs.explicit_pairs) records.push_back({{"kind", "ticket_ticket"}, {"left_id", l}, {"right_id", r}});
  write_jsonl(out, records);
}

std::size_t export_instruction_dataset(const Corpus& corpus, InstructionTask task, const std::filesystem::path& out) {
  std::vector<nlohmann::json> records;
  std::vector<std::string> missing;
  if (task == InstructionTask::routing) {
    for (const auto& [id, t] : corpus.tickets) {
      const auto it = corpus.team_labels.find(id);
      if (it == corpus.team_labels.end()) {
        missing.push_back(id);
        continue;
      }
      const auto messages = prompts::build_routing_prompt(t);
      records.push_back({{"system", messages[0].content}, {"user", messages[1].content}, {"assistant", it->second.name}});
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
      throw std::invalid_argument("tickets without team labels: " + list);
    }
  } else {
    std::map<std::string, std::string> fault_of;
    for (const auto& link : corpus.links) fault_of[link.ticket_id] = link.fault_analysis_id;
    for (const auto& [tid, fid] : fault_of) {
      const auto messages = prompts::build_fa_prompt(corpus.tickets.at(tid));
      records.push_back({{"system", messages[0].content},
                         {"user", messages[1].content},
                         {"assistant", fault_analysis_text(corpus.fault_analyses.at(fid))}});
    }
  }
  write_jsonl(out, records);
  return records.size();
}

namespace {

// Mean over rows of -log softmax(row / t)[row index].
double row_cross_entropy(const std::vector<std::vector<double>>& m, double t, bool transpose) {
  const std::size_t b = m.size();
  // Extended accumulator: b equal row losses average back to the same double.
  long double total = 0.0L;
  for (std::size_t r = 0; r < b; ++r) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < b; ++c) max_logit = std::max(max_logit, (transpose ? m[c][r] : m[r][c]) / t);
    double sum = 0.0;
    for (std::size_t c = 0; c < b; ++c) sum += std::exp((transpose ? m[c][r] : m[r][c]) / t - max_logit);
    total += std::log(sum) + (max_logit - m[r][r] / t);
  }
  return static_cast<double>(total / static_cast<long double>(b));
}

}  // namespace

double contrastive_loss(const std::vector<std::vector<double>>& sim_matrix, double temperature) {
  if (sim_matrix.empty()) throw std::invalid_argument("contrastive_loss: empty batch");
  for (const auto& row : sim_matrix) {
    if (row.size() != sim_matrix.size()) throw std::invalid_argument("contrastive_loss: matrix is not square");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("contrastive_loss: temperature must be > 0");
  const double loss = 0.5 * (row_cross_entropy(sim_matrix, temperature, false) +
                             row_cross_entropy(sim_matrix, temperature, true));
  return std::max(loss, 0.0);
}

}  // namespace tdx
