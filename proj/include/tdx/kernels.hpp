#pragma once

// Data-parallel scoring kernels. Every kernel has a serial twin in
// tdx::serial that tests and benchmarks compare against.

#include <span>
#include <vector>

#include "tdx/vector_index.hpp"

namespace tdx {

double l2_norm(std::span<const float> v);

/// out[i] = cosine(query, row i) for every row of the partition.
void cosine_scores(const IndexPartition& part, std::size_t dim, std::span<const float> query, std::span<double> out);

/// out[j] = ticket_scores[j] + fa_scores[link[j]] (0 term when link[j] < 0).
void dual_level_scores(std::span<const double> ticket_scores, std::span<const double> fa_scores,
                       std::span<const std::ptrdiff_t> link, std::span<double> out);

/// Indices of the k best scores (desc), ties by ascending id.
std::vector<std::size_t> select_top(std::span<const double> scores, const std::vector<std::string>& ids, std::size_t k);

namespace serial {

void cosine_scores(const IndexPartition& part, std::size_t dim, std::span<const float> query, std::span<double> out);
void dual_level_scores(std::span<const double> ticket_scores, std::span<const double> fa_scores,
                       std::span<const std::ptrdiff_t> link, std::span<double> out);
/// Full sort instead of partial selection.
std::vector<std::size_t> select_top(std::span<const double> scores, const std::vector<std::string>& ids, std::size_t k);
std::vector<ScoredItem> top_k(const VectorIndex& index, std::span<const float> query, std::size_t k, Modality modality);

}  // namespace serial
}  // namespace tdx
