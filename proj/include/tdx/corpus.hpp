#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tdx/domain.hpp"

namespace tdx {

/// Tickets, fault analyses and the links between them. A ticket links to at
/// most one fault analysis; a fault analysis may resolve many tickets.
struct Corpus {
  std::map<std::string, Ticket> tickets;
  std::map<std::string, FaultAnalysis> fault_analyses;
  std::vector<TicketFaultLink> links;
  std::map<std::string, TeamLabel> team_labels;
  LabelSet label_set = LabelSet::default_teams();
  std::vector<std::string> root_cause_labels;  // empty: free text

  /// Throws std::invalid_argument on dangling ids, duplicate links, labels
  /// outside the label set, or root causes outside the configured set.
  void validate() const;

  std::optional<std::string> fault_of(const std::string& ticket_id) const;
  std::vector<std::string> tickets_of(const std::string& fault_analysis_id) const;
  /// fault analysis id -> linked ticket ids (sorted).
  std::map<std::string, std::vector<std::string>> link_groups() const;
};

/// Reads `tickets.jsonl`, `fault_analyses.jsonl` and the optional `labels.json`
/// ({"teams": [...], "catch_all": "...", "root_causes": [...]}) from `dir`.
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Parses one JSONL stream line by line; errors name the offending line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

}  // namespace tdx
