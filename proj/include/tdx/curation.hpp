#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tdx/corpus.hpp"

namespace tdx {

/// Token -> ln(N / df) over a report collection.
class IdfTable {
 public:
  IdfTable(std::unordered_map<std::string, double> weights, std::size_t document_count);

  /// Throws std::out_of_range("unknown token") when absent.
  double weight(const std::string& token) const;
  bool contains(const std::string& token) const { return weights_.contains(token); }
  std::size_t document_count() const { return document_count_; }
  std::size_t size() const { return weights_.size(); }
  /// ln N: the weight assigned to tokens never seen in the table.
  double max_rarity() const;

 private:
  std::unordered_map<std::string, double> weights_;
  std::size_t document_count_;
};

/// Throws std::invalid_argument("empty corpus") when `reports` is empty.
IdfTable compute_idf(std::span<const FaultAnalysis> reports);

/// Mean of the k largest idf weights over the report's unique tokens.
double informativeness_score(const FaultAnalysis& report, const IdfTable& idf, int k = 15);

struct FilterReport {
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t tickets_kept = 0;
};

/// Keeps fault analyses scoring strictly above `threshold` and the tickets
/// linked to them. Idf is computed over the corpus's own reports.
Corpus filter_reports(const Corpus& corpus, double threshold = 5.0, int k = 15,
                      FilterReport* report = nullptr);

struct PairSet {
  std::vector<std::pair<std::string, std::string>> implicit_pairs;  // (ticket, fault analysis)
  std::vector<std::pair<std::string, std::string>> explicit_pairs;  // (ticket, ticket), first < second

  std::size_t size() const { return implicit_pairs.size() + explicit_pairs.size(); }
};

PairSet build_pair_set(const Corpus& corpus);

/// JSONL with `kind` ("ticket_fault" | "ticket_ticket"), `left_id`, `right_id`.
void export_pair_set(const PairSet& pairs, const std::filesystem::path& out);

enum class InstructionTask { routing, fault_analysis };

/// Writes {system, user, assistant} JSONL records, sorted by ticket id.
/// Throws std::invalid_argument listing tickets that lack a team label
/// (routing) when any ticket is unlabeled.
std::size_t export_instruction_dataset(const Corpus& corpus, InstructionTask task,
                                       const std::filesystem::path& out);

/// Symmetric in-batch-negative softmax cross-entropy over a B x B similarity
/// matrix with positives on the diagonal. Throws std::invalid_argument when
/// the matrix is empty or not square, or temperature <= 0.
double contrastive_loss(const std::vector<std::vector<double>>& sim_matrix, double temperature = 0.1);

}  // namespace tdx
