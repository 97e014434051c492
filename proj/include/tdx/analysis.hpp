#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tdx/backends.hpp"
#include "tdx/prompts.hpp"
#include "tdx/retrieval.hpp"

namespace tdx {

struct CandidateReport {
  std::string text;
  double temperature = 0.0;
  int sample_index = 0;
  std::optional<double> score;

  bool operator==(const CandidateReport&) const = default;
};

nlohmann::json to_json(const CandidateReport& c);

struct TemperatureSlot {
  double temperature;
  int count;
};

/// 5 samples at each of 0.1, 0.3, 0.5, 0.7, 0.9.
std::vector<TemperatureSlot> default_candidate_grid();

struct CandidateFailure {
  int sample_index;
  std::string error;
};

struct CandidateBatch {
  std::vector<CandidateReport> candidates;  // grid order
  std::vector<CandidateFailure> failures;
};

/// Samples the fault-analysis adapter over the grid; sample i uses seed + i.
/// Throws std::runtime_error only when every sample fails.
CandidateBatch generate_candidates(const Generator& generator, const Ticket& ticket,
                                   const std::vector<TemperatureSlot>& grid = default_candidate_grid(),
                                   std::uint64_t seed = 0, const std::string& adapter = "fault_analysis");

/// Scores every candidate against the ticket with the ensemble and sorts
/// descending; ties keep (temperature, sample_index) order.
std::vector<CandidateReport> rank_candidates(const RankerEnsemble& ensemble, const Ticket& ticket,
                                             std::vector<CandidateReport> candidates);

struct TroubleshootSession {
  std::string session_id;
  Ticket ticket;
  std::vector<Demonstration> demonstrations;
  std::vector<ChatMessage> messages;
  std::chrono::system_clock::time_point created_at;
  double temperature = 0.3;
  std::uint64_t seed = 0;
  bool no_demonstrations = false;
  bool oversized_top1 = false;
};

struct SessionOptions {
  std::size_t token_budget = 5000;
  double temperature = 0.3;
  std::uint64_t seed = 0;
  TokenCounter counter = token_count;
};

/// Selects demonstrations, sends the first RAG round to the base model and
/// records the exchange. The stored first assistant turn is the pre-seeded
/// prefix followed by the backend's continuation.
TroubleshootSession open_session(const RankerEnsemble& ensemble, const Generator& generator, const Ticket& ticket,
                                 const SessionOptions& options = {}, std::string session_id = {});

struct FollowupReply {
  std::string text;
  std::optional<FaultAnalysis> report;  // final_json_report only
  bool parse_failed = false;
};

using FollowupInput = std::variant<std::string, prompts::Followup>;

/// Appends the user turn, sends the whole history and appends the reply. On
/// backend failure the history is left untouched and the error propagates.
FollowupReply post_followup(TroubleshootSession& session, const Generator& generator, const FollowupInput& input);

/// Parses {identification, root_cause, resolution} from the first JSON object
/// found in `text`.
std::optional<FaultAnalysis> parse_report_json(std::string_view text, const std::string& id = {});

/// Header record {type: "header", session_id, ticket_id, demonstrations: [...]}
/// followed by one {role, content} record per message.
std::vector<nlohmann::json> session_transcript(const TroubleshootSession& session);

class SessionNotFound : public std::runtime_error {
 public:
  explicit SessionNotFound(const std::string& id) : std::runtime_error("unknown session: " + id) {}
};

/// Sessions are independently lockable: calls on one session serialize,
/// distinct sessions proceed concurrently.
class SessionStore {
 public:
  std::string next_id();
  void insert(TroubleshootSession session);
  /// Runs `fn` with exclusive access to the session.
  template <typename Fn>
  auto with_session(const std::string& id, Fn&& fn) {
    auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    return fn(slot->session);
  }
  TroubleshootSession snapshot(const std::string& id);
  std::size_t size() const;

 private:
  struct Slot {
    std::mutex mutex;
    TroubleshootSession session;
  };
  std::shared_ptr<Slot> find(const std::string& id);

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace tdx
