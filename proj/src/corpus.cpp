#include "tdx/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace tdx {

void Corpus::validate() const {
  for (const auto& [id, t] : tickets) {
    if (id.empty() || id != t.id) throw std::invalid_argument("ticket key/id mismatch: " + id);
  }
  for (const auto& [id, f] : fault_analyses) {
    if (id.empty() || id != f.id) throw std::invalid_argument("fault analysis key/id mismatch: " + id);
    if (!root_cause_labels.empty() &&
        std::find(root_cause_labels.begin(), root_cause_labels.end(), f.root_cause) == root_cause_labels.end()) {
      throw std::invalid_argument("fault analysis " + id + " has unknown root cause: " + f.root_cause);
    }
  }
  std::set<std::string> linked;
  for (const auto& link : links) {
    if (!tickets.contains(link.ticket_id)) throw std::invalid_argument("link to unknown ticket: " + link.ticket_id);
    if (!fault_analyses.contains(link.fault_analysis_id)) {
      throw std::invalid_argument("link to unknown fault analysis: " + link.fault_analysis_id);
    }
    if (!linked.insert(link.ticket_id).second) {
      throw std::invalid_argument("ticket linked to more than one fault analysis: " + link.ticket_id);
    }
  }
  for (const auto& [id, label] : team_labels) {
    if (!tickets.contains(id)) throw std::invalid_argument("team label for unknown ticket: " + id);
    if (!label_set.contains(label.name)) throw std::invalid_argument("unknown team label: " + label.name);
  }
}

std::optional<std::string> Corpus::fault_of(const std::string& ticket_id) const {
  for (const auto& link : links) {
    if (link.ticket_id == ticket_id) return link.fault_analysis_id;
  }
  return std::nullopt;
}

std::vector<std::string> Corpus::tickets_of(const std::string& fault_analysis_id) const {
  std::vector<std::string> out;
  for (const auto& link : links) {
    if (link.fault_analysis_id == fault_analysis_id) out.push_back(link.ticket_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, std::vector<std::string>> Corpus::link_groups() const {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& link : links) groups[link.fault_analysis_id].push_back(link.ticket_id);
  for (auto& [_, ids] : groups) std::sort(ids.begin(), ids.end());
  return groups;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  const auto labels_path = dir / "labels.json";
  if (std::filesystem::exists(labels_path)) {
    std::ifstream in(labels_path);
    const auto j = nlohmann::json::parse(in);
    if (j.contains("teams")) {
      corpus.label_set = LabelSet(j.at("teams").get<std::vector<std::string>>(), j.value("catch_all", "Other"));
    }
    if (j.contains("root_causes")) corpus.root_cause_labels = j.at("root_causes").get<std::vector<std::string>>();
  }
  std::size_t line = 0;
  for (const auto& j : read_jsonl(dir / "tickets.jsonl")) {
    ++line;
    TicketRecord r;
    try {
      r = ticket_record_from_json(j);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("tickets.jsonl record " + std::to_string(line) + ": " + e.what());
    }
    if (!corpus.tickets.emplace(r.ticket.id, r.ticket).second) {
      throw std::invalid_argument("duplicate ticket id: " + r.ticket.id);
    }
    if (r.team_label) corpus.team_labels[r.ticket.id] = corpus.label_set.parse(*r.team_label);
  }
  line = 0;
  for (const auto& j : read_jsonl(dir / "fault_analyses.jsonl")) {
    ++line;
    FaultAnalysisRecord r;
    try {
      r = fault_analysis_record_from_json(j);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("fault_analyses.jsonl record " + std::to_string(line) + ": " + e.what());
    }
    if (!corpus.fault_analyses.emplace(r.fault_analysis.id, r.fault_analysis).second) {
      throw std::invalid_argument("duplicate fault analysis id: " + r.fault_analysis.id);
    }
    for (auto& tid : r.ticket_ids) corpus.links.push_back({tid, r.fault_analysis.id});
  }
  std::sort(corpus.links.begin(), corpus.links.end());
  corpus.validate();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<nlohmann::json> tickets;
  for (const auto& [id, t] : corpus.tickets) {
    TicketRecord r{t, std::nullopt};
    if (auto it = corpus.team_labels.find(id); it != corpus.team_labels.end()) r.team_label = it->second.name;
    tickets.push_back(to_json(r));
  }
  write_jsonl(dir / "tickets.jsonl", tickets);
  const auto groups = corpus.link_groups();
  std::vector<nlohmann::json> faults;
  for (const auto& [id, f] : corpus.fault_analyses) {
    FaultAnalysisRecord r{f, {}};
    if (auto it = groups.find(id); it != groups.end()) r.ticket_ids = it->second;
    faults.push_back(to_json(r));
  }
  write_jsonl(dir / "fault_analyses.jsonl", faults);
  nlohmann::json labels = {{"teams", corpus.label_set.labels()}, {"catch_all", corpus.label_set.catch_all()}};
  if (!corpus.root_cause_labels.empty()) labels["root_causes"] = corpus.root_cause_labels;
  std::ofstream(dir / "labels.json", std::ios::binary | std::ios::trunc) << labels.dump(2) << '\n';
}

}  // namespace tdx
