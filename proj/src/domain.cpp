#include "tdx/domain.hpp"

#include <algorithm>
#include <stdexcept>

#include "tdx/text.hpp"

namespace tdx {

LabelSet::LabelSet(std::vector<std::string> labels, std::string catch_all)
    : labels_(std::move(labels)), catch_all_(std::move(catch_all)) {
  if (std::find(labels_.begin(), labels_.end(), catch_all_) == labels_.end()) {
    labels_.push_back(catch_all_);
  }
  auto sorted = labels_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("duplicate team label");
  }
}

LabelSet LabelSet::default_teams() {
  std::vector<std::string> labels;
  for (int i = 1; i <= 10; ++i) labels.push_back(std::to_string(i));
  return LabelSet(std::move(labels), "Other");
}

bool LabelSet::contains(std::string_view name) const {
  return std::find(labels_.begin(), labels_.end(), name) != labels_.end();
}

TeamLabel LabelSet::parse(std::string_view name) const {
  if (!contains(name)) throw std::invalid_argument("unknown team label: " + std::string(name));
  return TeamLabel{std::string(name)};
}

std::optional<TeamLabel> LabelSet::normalize(std::string_view raw) const {
  const auto folded = ascii_lower(trim(raw));
  for (const auto& label : labels_) {
    if (ascii_lower(label) == folded) return TeamLabel{label};
  }
  return std::nullopt;
}

std::string ticket_text(const Ticket& t) {
  std::string out;
  out += "product_name: " + t.product_name + "\n";
  out += "hardware_unit: " + t.hardware_unit + "\n";
  out += "software_build: " + t.software_build + "\n";
  out += "title: " + t.title + "\n";
  out += "problem_description: " + t.problem_description;
  if (!t.log_snippets.empty()) {
    out += "\nLog Snippets:";
    for (const auto& snippet : t.log_snippets) out += "\n" + snippet;
  }
  return out;
}

std::string fault_analysis_text(const FaultAnalysis& f) {
  return "Identification: " + f.identification + "\nRoot Cause: " + f.root_cause +
         "\nResolution: " + f.resolution;
}

Demonstration Demonstration::from(const Ticket& t, const FaultAnalysis& f, double score) {
  return Demonstration{t, f, tdx::ticket_text(t), tdx::fault_analysis_text(f), score, false};
}

nlohmann::json to_json(const Ticket& t) {
  return {{"id", t.id},
          {"product_name", t.product_name},
          {"hardware_unit", t.hardware_unit},
          {"software_build", t.software_build},
          {"title", t.title},
          {"problem_description", t.problem_description},
          {"log_snippets", t.log_snippets}};
}

nlohmann::json to_json(const TicketRecord& r) {
  auto j = to_json(r.ticket);
  if (r.team_label) j["team_label"] = *r.team_label;
  return j;
}

nlohmann::json to_json(const FaultAnalysis& f) {
  return {{"id", f.id},
          {"identification", f.identification},
          {"root_cause", f.root_cause},
          {"resolution", f.resolution}};
}

nlohmann::json to_json(const FaultAnalysisRecord& r) {
  auto j = to_json(r.fault_analysis);
  j["ticket_ids"] = r.ticket_ids;
  return j;
}

namespace {

std::string require_string(const nlohmann::json& j, const char* key) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing key: ") + key);
  if (!it->is_string()) throw std::invalid_argument(std::string("key is not a string: ") + key);
  auto value = it->get<std::string>();
  if (!is_valid_utf8(value)) throw std::invalid_argument(std::string("invalid UTF-8 in ") + key);
  return value;
}

std::string optional_string(const nlohmann::json& j, const char* key) {
  return j.contains(key) ? require_string(j, key) : std::string{};
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  std::vector<std::string> out;
  const auto it = j.find(key);
  if (it == j.end()) return out;
  if (!it->is_array()) throw std::invalid_argument(std::string("key is not an array: ") + key);
  for (const auto& v : *it) {
    if (!v.is_string()) throw std::invalid_argument(std::string("non-string entry in ") + key);
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

Ticket ticket_from_json(const nlohmann::json& j) {
  Ticket t;
  t.id = require_string(j, "id");
  if (t.id.empty()) throw std::invalid_argument("empty ticket id");
  t.product_name = optional_string(j, "product_name");
  t.hardware_unit = optional_string(j, "hardware_unit");
  t.software_build = optional_string(j, "software_build");
  t.title = optional_string(j, "title");
  t.problem_description = optional_string(j, "problem_description");
  t.log_snippets = string_list(j, "log_snippets");
  return t;
}

TicketRecord ticket_record_from_json(const nlohmann::json& j) {
  TicketRecord r{ticket_from_json(j), std::nullopt};
  if (j.contains("team_label") && !j["team_label"].is_null()) r.team_label = require_string(j, "team_label");
  return r;
}

FaultAnalysis fault_analysis_from_json(const nlohmann::json& j) {
  FaultAnalysis f;
  f.id = require_string(j, "id");
  if (f.id.empty()) throw std::invalid_argument("empty fault analysis id");
  f.identification = optional_string(j, "identification");
  f.root_cause = optional_string(j, "root_cause");
  f.resolution = optional_string(j, "resolution");
  return f;
}

FaultAnalysisRecord fault_analysis_record_from_json(const nlohmann::json& j) {
  return {fault_analysis_from_json(j), string_list(j, "ticket_ids")};
}

}  // namespace tdx
