#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tdx {

struct Ticket {
  std::string id;
  std::string product_name;
  std::string hardware_unit;
  std::string software_build;
  std::string title;
  std::string problem_description;
  std::vector<std::string> log_snippets;

  bool operator==(const Ticket&) const = default;
};

struct FaultAnalysis {
  std::string id;
  std::string identification;
  std::string root_cause;
  std::string resolution;

  bool operator==(const FaultAnalysis&) const = default;
};

struct TeamLabel {
  std::string name;

  bool operator==(const TeamLabel&) const = default;
  auto operator<=>(const TeamLabel&) const = default;
};

struct TicketFaultLink {
  std::string ticket_id;
  std::string fault_analysis_id;

  bool operator==(const TicketFaultLink&) const = default;
  auto operator<=>(const TicketFaultLink&) const = default;
};

/// Closed set of team labels with one designated catch-all member.
class LabelSet {
 public:
  LabelSet(std::vector<std::string> labels, std::string catch_all);

  /// Ten numbered teams "1".."10" plus "Other".
  static LabelSet default_teams();

  bool contains(std::string_view name) const;
  /// Throws std::invalid_argument when `name` is not a member.
  TeamLabel parse(std::string_view name) const;
  /// Trim + ASCII case-fold + exact match; returns the canonical member.
  std::optional<TeamLabel> normalize(std::string_view raw) const;

  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& catch_all() const { return catch_all_; }
  TeamLabel catch_all_label() const { return TeamLabel{catch_all_}; }

 private:
  std::vector<std::string> labels_;
  std::string catch_all_;
};

/// A ⊕ L: labeled attribute block, then log snippets under a header.
std::string ticket_text(const Ticket& t);

/// I ⊕ RC ⊕ R with labeled sections.
std::string fault_analysis_text(const FaultAnalysis& f);

/// A historical (ticket, fault analysis) pair placed in a RAG prompt. The
/// rendered texts are what the prompt carries; they are cut short only for an
/// oversized top-ranked demonstration.
struct Demonstration {
  Ticket ticket;
  FaultAnalysis fault_analysis;
  std::string ticket_text;
  std::string fault_analysis_text;
  double score = 0.0;
  bool truncated = false;

  static Demonstration from(const Ticket& t, const FaultAnalysis& f, double score = 0.0);
};

// JSONL corpus records. The ticket record optionally carries a team label and
// the fault-analysis record lists the ids of the tickets it resolves.
struct TicketRecord {
  Ticket ticket;
  std::optional<std::string> team_label;

  bool operator==(const TicketRecord&) const = default;
};

struct FaultAnalysisRecord {
  FaultAnalysis fault_analysis;
  std::vector<std::string> ticket_ids;

  bool operator==(const FaultAnalysisRecord&) const = default;
};

nlohmann::json to_json(const Ticket& t);
nlohmann::json to_json(const TicketRecord& r);
nlohmann::json to_json(const FaultAnalysisRecord& r);
nlohmann::json to_json(const FaultAnalysis& f);

/// Throws std::invalid_argument naming the missing or mistyped key.
Ticket ticket_from_json(const nlohmann::json& j);
TicketRecord ticket_record_from_json(const nlohmann::json& j);
FaultAnalysis fault_analysis_from_json(const nlohmann::json& j);
FaultAnalysisRecord fault_analysis_record_from_json(const nlohmann::json& j);

}  // namespace tdx
