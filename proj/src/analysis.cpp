#include "tdx/analysis.hpp"

#include <algorithm>
#include <cstdio>

namespace tdx {

nlohmann::json to_json(const CandidateReport& c) {
  return {{"text", c.text},
          {"temperature", c.temperature},
          {"sample_index", c.sample_index},
          {"score", c.score ? nlohmann::json(*c.score) : nlohmann::json(nullptr)}};
}

std::vector<TemperatureSlot> default_candidate_grid() {
  return {{0.1, 5}, {0.3, 5}, {0.5, 5}, {0.7, 5}, {0.9, 5}};
}

CandidateBatch generate_candidates(const Generator& generator, const Ticket& ticket,
                                   const std::vector<TemperatureSlot>& grid, std::uint64_t seed,
                                   const std::string& adapter) {
  std::vector<double> temperatures;
  for (const auto& slot : grid) {
    if (slot.count < 1) throw std::invalid_argument("temperature grid counts must be >= 1");
    for (int i = 0; i < slot.count; ++i) temperatures.push_back(slot.temperature);
  }
  const auto messages = prompts::build_fa_prompt(ticket);
  const auto n = static_cast<std::int64_t>(temperatures.size());
  std::vector<std::optional<std::string>> texts(temperatures.size());
  std::vector<std::string> errors(temperatures.size());
#pragma omp parallel for schedule(dynamic, 1) if (n > 1)
  for (std::int64_t i = 0; i < n; ++i) {
    GenerateRequest request{messages, {}, adapter};
    request.params.temperature = temperatures[i];
    request.params.seed = seed + static_cast<std::uint64_t>(i);
    try {
      texts[i] = generate(generator, request);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  CandidateBatch batch;
  for (std::int64_t i = 0; i < n; ++i) {
    if (texts[i]) {
      batch.candidates.push_back({std::move(*texts[i]), temperatures[i], static_cast<int>(i), std::nullopt});
    } else {
      batch.failures.push_back({static_cast<int>(i), errors[i]});
    }
  }
  if (batch.candidates.empty() && n > 0) {
    throw std::runtime_error("all candidate generations failed: " + batch.failures.front().error);
  }
  return batch;
}

std::vector<CandidateReport> rank_candidates(const RankerEnsemble& ensemble, const Ticket& ticket,
                                             std::vector<CandidateReport> candidates) {
  if (candidates.empty()) throw std::invalid_argument("rank_candidates: no candidates");
  std::vector<std::string> texts;
  texts.reserve(candidates.size());
  for (const auto& c : candidates) texts.push_back(c.text);
  const auto scores = aggregate_report_scores(ensemble, ticket, texts);
  for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].score = scores[i];
  std::stable_sort(candidates.begin(), candidates.end(), [](const CandidateReport& a, const CandidateReport& b) {
    if (*a.score != *b.score) return *a.score > *b.score;
    if (a.temperature != b.temperature) return a.temperature < b.temperature;
    return a.sample_index < b.sample_index;
  });
  return candidates;
}

namespace {

std::string session_generate(const Generator& generator, const TroubleshootSession& session,
                             std::vector<ChatMessage> messages) {
  GenerateRequest request{std::move(messages), {}, std::nullopt};
  request.params.temperature = session.temperature;
  request.params.seed = session.seed + session.messages.size();
  request.params.max_tokens = 2048;
  return generate(generator, request);
}

}  // namespace

TroubleshootSession open_session(const RankerEnsemble& ensemble, const Generator& generator, const Ticket& ticket,
                                 const SessionOptions& options, std::string session_id) {
  TroubleshootSession session;
  session.session_id = std::move(session_id);
  session.ticket = ticket;
  session.temperature = options.temperature;
  session.seed = options.seed;
  auto selection = select_demonstrations(ensemble, ticket, options.token_budget, options.counter);
  session.demonstrations = std::move(selection.demonstrations);
  session.oversized_top1 = selection.oversized_top1;
  session.no_demonstrations = session.demonstrations.empty();

  auto first_round = prompts::build_rag_first_round(ticket, session.demonstrations);
  auto outgoing = generator.continues_assistant_prefix() ? first_round : prompts::fold_assistant_prefix(first_round);
  const auto continuation = session_generate(generator, session, std::move(outgoing));
  first_round.back().content += continuation;
  session.messages = std::move(first_round);
  session.created_at = std::chrono::system_clock::now();
  return session;
}

std::optional<FaultAnalysis> parse_report_json(std::string_view text, const std::string& id) {
  const auto open = text.find('{');
  const auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  FaultAnalysis f;
  f.id = id;
  for (auto [key, field] : {std::pair{"identification", &f.identification}, std::pair{"root_cause", &f.root_cause},
                            std::pair{"resolution", &f.resolution}}) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string()) return std::nullopt;
    *field = j[key].get<std::string>();
  }
  return f;
}

FollowupReply post_followup(TroubleshootSession& session, const Generator& generator, const FollowupInput& input) {
  const bool wants_report = std::holds_alternative<prompts::Followup>(input) &&
                            std::get<prompts::Followup>(input) == prompts::Followup::final_json_report;
  const std::string text = std::holds_alternative<std::string>(input)
                               ? std::get<std::string>(input)
                               : prompts::followup_text(std::get<prompts::Followup>(input));
  if (text.empty()) throw std::invalid_argument("empty follow-up message");
  auto outgoing = session.messages;
  outgoing.push_back({Role::user, text});
  FollowupReply reply;
  reply.text = session_generate(generator, session, std::move(outgoing));
  session.messages.push_back({Role::user, text});
  session.messages.push_back({Role::assistant, reply.text});
  if (wants_report) {
    reply.report = parse_report_json(reply.text, session.ticket.id + "/final");
    reply.parse_failed = !reply.report.has_value();
  }
  return reply;
}

std::vector<nlohmann::json> session_transcript(const TroubleshootSession& session) {
  nlohmann::json demos = nlohmann::json::array();
  for (const auto& d : session.demonstrations) {
    demos.push_back({{"ticket_id", d.ticket.id}, {"fault_analysis_id", d.fault_analysis.id}, {"score", d.score},
                     {"truncated", d.truncated}});
  }
  std::vector<nlohmann::json> out;
  out.push_back({{"type", "header"},
                 {"session_id", session.session_id},
                 {"ticket_id", session.ticket.id},
                 {"demonstrations", demos}});
  for (const auto& m : session.messages) out.push_back(to_json(m));
  return out;
}

std::string SessionStore::next_id() {
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "sess-%06llu", static_cast<unsigned long long>(++counter_));
  return buf;
}

void SessionStore::insert(TroubleshootSession session) {
  auto slot = std::make_shared<Slot>();
  const auto id = session.session_id;
  slot->session = std::move(session);
  std::lock_guard lock(mutex_);
  if (!sessions_.emplace(id, std::move(slot)).second) throw std::invalid_argument("duplicate session id: " + id);
}

std::shared_ptr<SessionStore::Slot> SessionStore::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound(id);
  return it->second;
}

TroubleshootSession SessionStore::snapshot(const std::string& id) {
  return with_session(id, [](const TroubleshootSession& s) { return s; });
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

}  // namespace tdx
