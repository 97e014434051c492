#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdx/backends.hpp"
#include "tdx/domain.hpp"

namespace tdx::prompts {

inline constexpr std::string_view kSystem = "You are an expert Ticket Resolution and Troubleshooting Assistant.";

inline constexpr std::string_view kRoutingInstruction =
    "Predict the team that is responsible for solving the given ticket.";

inline constexpr std::string_view kFaultAnalysisInstruction =
    "Analyze the given ticket by identifying and explaining the problems and symptoms, then generate possible "
    "root causes and resolutions.";

inline constexpr std::string_view kRagIntro =
    "You are given these demonstrations, where each demonstration is composed of a trouble ticket and its "
    "accurate fault analysis of the ticket:";

inline constexpr std::string_view kRagRequest =
    "Please generate a very detailed fault analysis of this new given trouble ticket by relating it to the "
    "provided demonstrations:";

inline constexpr std::string_view kRagThink =
    "Please think step by step about the fault analysis of the new given trouble ticket!";

/// Hard-coded opening of the first assistant turn; the backend continues it.
inline constexpr std::string_view kRagAssistantPrefix =
    "As an expert ticket resolution assistant, here is my step-by-step detailed fault analysis of the new given "
    "ticket by relating it to the provided demonstrations:\n"
    "\n"
    "[FAULT ANALYSIS]\n"
    "\n"
    "My detailed chain-of-thoughts starts with examining the similarities in terms of symptoms and resolutions "
    "with the provided demonstrations, then I should leverage the fault analysis part of the similar "
    "demonstrations to generate the most reasonable fault analysis of the new ticket.\n"
    "\n"
    "**Similarities**: ";

inline constexpr std::string_view kFollowupTop3 = "List the top 3 most similar demonstrations to the new ticket";

inline constexpr std::string_view kFollowupExplain =
    "Explain how these identified similar demonstrations were resolved based on their fault analysis reports";

inline constexpr std::string_view kFollowupFinal =
    "Based on all your analysis, provide the final fault analysis report of the new ticket exactly in the "
    "following json template of fault analysis by inserting your answers in the indicated sections";

inline constexpr std::string_view kFaultAnalysisJsonTemplate =
    R"({"identification": "<identification>", "root_cause": "<root cause>", "resolution": "<resolution>"})";

inline constexpr std::string_view kJudgeInstruction =
    "Rate the predicted fault analysis against the groundtruth fault analysis of the given ticket.";

inline constexpr std::string_view kTicketMarker = "Ticket = ";
inline constexpr std::string_view kFaultAnalysisMarker = "Fault Analysis = ";

enum class Followup { top3_similar, explain_resolutions, final_json_report };

/// Throws std::invalid_argument for unknown names.
Followup parse_followup(std::string_view name);
std::string_view followup_name(Followup f);
/// The exact user text sent for a canonical follow-up.
std::string followup_text(Followup f);

std::vector<ChatMessage> build_routing_prompt(const Ticket& ticket);
std::vector<ChatMessage> build_fa_prompt(const Ticket& ticket);

/// System message, user message with numbered demonstrations and the new
/// ticket, and the pre-seeded assistant prefix as the last message.
std::vector<ChatMessage> build_rag_first_round(const Ticket& ticket, std::span<const Demonstration> demonstrations);

/// For backends that cannot continue an assistant turn: the prefix is folded
/// into the last user message and the trailing assistant message removed.
std::vector<ChatMessage> fold_assistant_prefix(std::vector<ChatMessage> messages);

/// Text following "Ticket = " in a routing / fault-analysis user message.
std::optional<std::string> extract_ticket_text(std::string_view user_message);

}  // namespace tdx::prompts
