#include "tdx/vector_index.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tdx/kernels.hpp"

namespace tdx {

VectorIndex::VectorIndex(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw std::invalid_argument("index dimension must be positive");
}

void VectorIndex::add(const std::string& id, Modality modality, std::span<const float> vector) {
  if (vector.size() != dimension_) {
    throw std::invalid_argument("vector for " + id + " has length " + std::to_string(vector.size()) + ", index is " +
                                std::to_string(dimension_));
  }
  for (float v : vector) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite value in vector for " + id);
  }
  auto& part = parts_[static_cast<int>(modality)];
  if (!part.position.emplace(id, part.ids.size()).second) throw std::invalid_argument("duplicate index id: " + id);
  part.ids.push_back(id);
  part.data.insert(part.data.end(), vector.begin(), vector.end());
  part.norms.push_back(l2_norm(vector));
}

std::optional<std::span<const float>> VectorIndex::find(Modality m, const std::string& id) const {
  const auto& part = partition(m);
  const auto it = part.position.find(id);
  if (it == part.position.end()) return std::nullopt;
  return part.row(it->second, dimension_);
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error(std::string("truncated index file while reading ") + what);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

void VectorIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write index " + path.string());
  out.write("TDXI", 4);
  put_le<std::uint16_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dimension_));
  put_le<std::uint64_t>(out, size());
  for (int m = 0; m < 2; ++m) {
    const auto& part = parts_[m];
    for (std::size_t i = 0; i < part.size(); ++i) {
      out.put(static_cast<char>(m));
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(part.ids[i].size()));
      out.write(part.ids[i].data(), static_cast<std::streamsize>(part.ids[i].size()));
      for (float f : part.row(i, dimension_)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  if (!out) throw std::runtime_error("failed writing index " + path.string());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "TDXI", 4) != 0) throw std::runtime_error("not a TDXI index: " + path.string());
  const auto version = get_le<std::uint16_t>(in, "version");
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported index format version " + std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(in, "dimension");
  const auto count = get_le<std::uint64_t>(in, "entry count");
  VectorIndex index(dim);
  std::vector<float> row(dim);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto m = get_le<std::uint8_t>(in, "modality");
    if (m > 1) throw std::runtime_error("bad modality byte in entry " + std::to_string(e));
    const auto len = get_le<std::uint32_t>(in, "id length");
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (static_cast<std::uint32_t>(in.gcount()) != len) throw std::runtime_error("truncated index file while reading id");
    for (auto& f : row) f = std::bit_cast<float>(get_le<std::uint32_t>(in, "vector"));
    index.add(id, static_cast<Modality>(m), row);
  }
  if (in.peek() != EOF) throw std::runtime_error("trailing bytes after index entries");
  return index;
}

std::vector<ScoredItem> top_k(const VectorIndex& index, std::span<const float> query, std::size_t k, Modality modality) {
  if (k == 0) throw std::invalid_argument("top_k: k must be >= 1");
  const auto& part = index.partition(modality);
  std::vector<double> scores(part.size());
  cosine_scores(part, index.dimension(), query, scores);
  std::vector<ScoredItem> out;
  for (auto i : select_top(scores, part.ids, k)) out.push_back({part.ids[i], scores[i]});
  return out;
}

}  // namespace tdx
