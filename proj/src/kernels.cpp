#include "tdx/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace tdx {
namespace {

inline double dot(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double cosine_with_norms(double d, double nu, double nv) {
  return (nu == 0.0 || nv == 0.0) ? 0.0 : d / (nu * nv);
}

void check_sizes(const IndexPartition& part, std::size_t dim, std::span<const float> query, std::span<double> out) {
  if (query.size() != dim) throw std::invalid_argument("query dimension mismatch");
  if (out.size() != part.size()) throw std::invalid_argument("score buffer size mismatch");
}

}  // namespace

double l2_norm(std::span<const float> v) { return std::sqrt(dot(v.data(), v.data(), v.size())); }

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: length mismatch");
  return cosine_with_norms(dot(u.data(), v.data(), u.size()), l2_norm(u), l2_norm(v));
}

void cosine_scores(const IndexPartition& part, std::size_t dim, std::span<const float> query, std::span<double> out) {
  check_sizes(part, dim, query, out);
  const double qn = l2_norm(query);
  const auto n = static_cast<std::int64_t>(part.size());
  const float* q = query.data();
  const float* base = part.data.data();
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = cosine_with_norms(dot(q, base + i * dim, dim), qn, part.norms[i]);
  }
}

void dual_level_scores(std::span<const double> ticket_scores, std::span<const double> fa_scores,
                       std::span<const std::ptrdiff_t> link, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(ticket_scores.size());
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::int64_t j = 0; j < n; ++j) {
    out[j] = ticket_scores[j] + (link[j] >= 0 ? fa_scores[link[j]] : 0.0);
  }
}

std::vector<std::size_t> select_top(std::span<const double> scores, const std::vector<std::string>& ids, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  const auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

namespace serial {

void cosine_scores(const IndexPartition& part, std::size_t dim, std::span<const float> query, std::span<double> out) {
  check_sizes(part, dim, query, out);
  const double qn = l2_norm(query);
  for (std::size_t i = 0; i < part.size(); ++i) {
    out[i] = cosine_with_norms(dot(query.data(), part.data.data() + i * dim, dim), qn, part.norms[i]);
  }
}

void dual_level_scores(std::span<const double> ticket_scores, std::span<const double> fa_scores,
                       std::span<const std::ptrdiff_t> link, std::span<double> out) {
  for (std::size_t j = 0; j < ticket_scores.size(); ++j) {
    out[j] = ticket_scores[j] + (link[j] >= 0 ? fa_scores[static_cast<std::size_t>(link[j])] : 0.0);
  }
}

std::vector<std::size_t> select_top(std::span<const double> scores, const std::vector<std::string>& ids, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : ids[a] < ids[b];
  });
  order.resize(std::min(k, order.size()));
  return order;
}

std::vector<ScoredItem> top_k(const VectorIndex& index, std::span<const float> query, std::size_t k, Modality modality) {
  const auto& part = index.partition(modality);
  std::vector<double> scores(part.size());
  serial::cosine_scores(part, index.dimension(), query, scores);
  std::vector<ScoredItem> out;
  for (auto i : serial::select_top(scores, part.ids, k)) out.push_back({part.ids[i], scores[i]});
  return out;
}

}  // namespace serial
}  // namespace tdx
