#pragma once

#include <cstdint>

#include "tdx/corpus.hpp"

namespace tdx {

/// Desk-scale stand-in for a real ticket archive. Every fault analysis owns a
/// set of signature tokens; its tickets mention a random subset of them among
/// background noise, so retrieval has a known groundtruth.
struct SyntheticOptions {
  std::size_t tickets = 500;
  std::size_t faults = 120;
  std::uint64_t seed = 7;
  std::size_t signature_tokens = 6;
  std::size_t signature_per_ticket = 3;
  std::size_t noise_tokens = 10;
  /// Fraction of fault analyses that are template-only (low informativeness).
  double uninformative_ratio = 0.2;
  /// Fraction of tickets whose description carries a `team: X` marker.
  double team_marker_ratio = 0.5;
};

Corpus generate_synthetic_corpus(const SyntheticOptions& options);

}  // namespace tdx
