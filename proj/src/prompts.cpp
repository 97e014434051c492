#include "tdx/prompts.hpp"

#include <stdexcept>

namespace tdx::prompts {

Followup parse_followup(std::string_view name) {
  if (name == "top3_similar") return Followup::top3_similar;
  if (name == "explain_resolutions") return Followup::explain_resolutions;
  if (name == "final_json_report") return Followup::final_json_report;
  throw std::invalid_argument("unknown canonical follow-up: " + std::string(name));
}

std::string_view followup_name(Followup f) {
  switch (f) {
    case Followup::top3_similar: return "top3_similar";
    case Followup::explain_resolutions: return "explain_resolutions";
    case Followup::final_json_report: return "final_json_report";
  }
  return {};
}

std::string followup_text(Followup f) {
  switch (f) {
    case Followup::top3_similar: return std::string(kFollowupTop3);
    case Followup::explain_resolutions: return std::string(kFollowupExplain);
    case Followup::final_json_report:
      return std::string(kFollowupFinal) + ":\n" + std::string(kFaultAnalysisJsonTemplate);
  }
  return {};
}

namespace {

std::vector<ChatMessage> instruction_prompt(std::string_view instruction, const Ticket& ticket) {
  return {{Role::system, std::string(kSystem)},
          {Role::user, std::string(instruction) + "\n\n" + std::string(kTicketMarker) + ticket_text(ticket)}};
}

}  // namespace

std::vector<ChatMessage> build_routing_prompt(const Ticket& ticket) {
  return instruction_prompt(kRoutingInstruction, ticket);
}

std::vector<ChatMessage> build_fa_prompt(const Ticket& ticket) {
  return instruction_prompt(kFaultAnalysisInstruction, ticket);
}

std::vector<ChatMessage> build_rag_first_round(const Ticket& ticket, std::span<const Demonstration> demonstrations) {
  std::string user(kRagIntro);
  user += "\n";
  for (std::size_t i = 0; i < demonstrations.size(); ++i) {
    user += "\nDemonstration " + std::to_string(i + 1) + ":\n";
    user += std::string(kTicketMarker) + demonstrations[i].ticket_text + "\n";
    user += std::string(kFaultAnalysisMarker) + demonstrations[i].fault_analysis_text + "\n";
  }
  user += "\n";
  user += kRagRequest;
  user += "\n\n";
  user += kTicketMarker;
  user += ticket_text(ticket);
  user += "\n\n";
  user += kRagThink;
  return {{Role::system, std::string(kSystem)},
          {Role::user, std::move(user)},
          {Role::assistant, std::string(kRagAssistantPrefix)}};
}

std::vector<ChatMessage> fold_assistant_prefix(std::vector<ChatMessage> messages) {
  if (messages.size() < 2 || messages.back().role != Role::assistant) return messages;
  const auto prefix = std::move(messages.back().content);
  messages.pop_back();
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::user) {
      it->content += "\n\n" + prefix;
      break;
    }
  }
  return messages;
}

std::optional<std::string> extract_ticket_text(std::string_view user_message) {
  const auto pos = user_message.rfind(kTicketMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = user_message.substr(pos + kTicketMarker.size());
  if (const auto end = rest.find("\n\n" + std::string(kRagThink)); end != std::string_view::npos) {
    rest = rest.substr(0, end);
  }
  return std::string(rest);
}

}  // namespace tdx::prompts
