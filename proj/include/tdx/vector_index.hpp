#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdx/backends.hpp"

namespace tdx {

enum class Modality : std::uint8_t { ticket = 0, fault_analysis = 1 };

struct ScoredItem {
  std::string item_id;
  double score = 0.0;

  bool operator==(const ScoredItem&) const = default;
};

/// Descending score, then ascending id.
inline bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  return a.score != b.score ? a.score > b.score : a.item_id < b.item_id;
}

/// dot(u, v) / (|u| |v|) accumulated in double; 0 when either norm is 0.
/// Throws std::invalid_argument on length mismatch.
double cosine(std::span<const float> u, std::span<const float> v);

/// Row-major vectors of one modality with precomputed norms.
struct IndexPartition {
  std::vector<std::string> ids;
  std::vector<float> data;
  std::vector<double> norms;
  std::unordered_map<std::string, std::size_t> position;

  std::size_t size() const { return ids.size(); }
  std::span<const float> row(std::size_t i, std::size_t dim) const { return {data.data() + i * dim, dim}; }
};

/// Exact (exhaustive) cosine index over ticket and fault-analysis vectors.
/// Immutable once built; rebuild to change contents.
class VectorIndex {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  explicit VectorIndex(std::size_t dimension);

  /// Throws std::invalid_argument on duplicate id within the modality, wrong
  /// length, or non-finite values.
  void add(const std::string& id, Modality modality, std::span<const float> vector);

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return parts_[0].size() + parts_[1].size(); }
  const IndexPartition& partition(Modality m) const { return parts_[static_cast<int>(m)]; }
  std::optional<std::span<const float>> find(Modality m, const std::string& id) const;

  /// Binary layout: "TDXI", u16 version, u32 dimension, u64 count, then per
  /// entry: u8 modality, u32 id length, id bytes, dimension x f32 (little-endian).
  void save(const std::filesystem::path& path) const;
  /// Throws std::runtime_error on bad magic, unknown version, or truncation.
  static VectorIndex load(const std::filesystem::path& path);

 private:
  std::size_t dimension_;
  IndexPartition parts_[2];
};

/// k highest-cosine items of `modality`, ties by ascending id.
std::vector<ScoredItem> top_k(const VectorIndex& index, std::span<const float> query, std::size_t k, Modality modality);

}  // namespace tdx
