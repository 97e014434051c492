#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tdx/analysis.hpp"
#include "tdx/backends.hpp"
#include "tdx/retrieval.hpp"

namespace tdx {

/// Unicode codepoint -> relative frequency.
using CharHistogram = std::map<char32_t, double>;

CharHistogram char_histogram(std::string_view text);

enum class HistogramDistance {
  max_abs,          // max_c |p(c) - q(c)|
  total_variation,  // 0.5 * sum_c |p(c) - q(c)|
};

/// Distance between the character histograms of the two texts, in [0, 1].
double pathology_score(std::string_view generated, std::string_view reference,
                       HistogramDistance distance = HistogramDistance::max_abs);

inline bool is_pathological(std::string_view generated, std::string_view reference, double threshold = 0.07) {
  return pathology_score(generated, reference) > threshold;
}

enum class Provenance { score_gap, pathology };
enum class ChosenSource { groundtruth, generated };

struct PreferenceTriple {
  std::string ticket_id;
  std::string prompt;  // fault-analysis user text for the ticket
  std::string chosen;
  std::string rejected;
  Provenance provenance = Provenance::score_gap;
  ChosenSource chosen_source = ChosenSource::groundtruth;
  /// Scores of the candidate pair that produced a score_gap triple.
  double pair_high_score = 0.0;
  double pair_low_score = 0.0;

  bool operator==(const PreferenceTriple&) const = default;
};

struct PreferenceOptions {
  std::vector<TemperatureSlot> z_grid = {{0.1, 1}, {0.5, 2}, {0.9, 3}};
  double tau = 0.3;
  double p_groundtruth = 0.5;
  double pathology_threshold = 0.07;
  bool include_pathology = false;
  std::uint64_t seed = 0;
};

struct PreferenceDiagnostics {
  std::vector<std::string> skipped_tickets;  // no groundtruth report
  std::size_t generation_failures = 0;
};

/// Builds ranker-feedback preference triples for every ticket of `corpus`
/// that has a linked groundtruth fault analysis. Output is sorted by
/// (ticket id, provenance, rejected digest, chosen digest) and deduplicated.
std::vector<PreferenceTriple> build_preference_dataset(const Corpus& corpus, const Generator& generator,
                                                       const RankerEnsemble& ensemble,
                                                       const PreferenceOptions& options,
                                                       PreferenceDiagnostics* diagnostics = nullptr);

/// Triples from already-scored candidates of one ticket; the building block of
/// build_preference_dataset, exposed for tests.
std::vector<PreferenceTriple> preference_triples_for_ticket(const std::string& ticket_id, const std::string& prompt,
                                                            const std::string& groundtruth,
                                                            const std::vector<CandidateReport>& scored,
                                                            const PreferenceOptions& options);

/// JSONL with `ticket_id`, `prompt`, `chosen`, `rejected`, `provenance`.
void export_preferences(const std::vector<PreferenceTriple>& triples, const std::filesystem::path& out);

std::string_view provenance_name(Provenance p);

}  // namespace tdx
