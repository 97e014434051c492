#include "tdx/service.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>

#include <httplib.h>

#include "tdx/evaluation.hpp"
#include "tdx/routing.hpp"

namespace tdx {

namespace {

class HttpStatusError : public std::runtime_error {
 public:
  HttpStatusError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct EndpointStats {
  std::uint64_t count = 0;
  std::uint64_t errors = 0;
  double total_ms = 0.0;
  double max_ms = 0.0;
};

nlohmann::json parse_body(const std::string& body) {
  if (body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(body);
    if (!j.is_object()) throw std::invalid_argument("request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed JSON body: ") + e.what());
  }
}

template <typename T>
T field_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument(std::string("field '") + key + "' has the wrong type");
  }
}

std::size_t positive_size(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  if (!j[key].is_number_integer() || j[key].get<long long>() < 1) {
    throw std::invalid_argument(std::string("'") + key + "' must be a positive integer");
  }
  return j[key].get<std::size_t>();
}

nlohmann::json demonstration_json(const Demonstration& d) {
  return {{"ticket_id", d.ticket.id},
          {"fault_analysis_id", d.fault_analysis.id},
          {"score", d.score},
          {"truncated", d.truncated}};
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  std::vector<std::shared_ptr<const Embedder>> embedders;
  std::shared_ptr<const Generator> generator;

  mutable std::mutex ensemble_mutex;
  std::shared_ptr<const RankerEnsemble> ensemble;

  std::mutex staged_mutex;  // also serializes reindex
  Corpus staged;

  SessionStore sessions;

  std::mutex metrics_mutex;
  std::map<std::string, EndpointStats> metrics;

  httplib::Server server;

  std::shared_ptr<const RankerEnsemble> current() const {
    std::lock_guard lock(ensemble_mutex);
    return ensemble;
  }

  void swap(std::shared_ptr<const RankerEnsemble> next) {
    std::lock_guard lock(ensemble_mutex);
    ensemble = std::move(next);
  }

  Ticket ticket_from_request(const nlohmann::json& j, const RankerEnsemble& ens) const {
    if (j.contains("ticket")) return ticket_from_json(j["ticket"]);
    if (j.contains("ticket_id")) {
      const auto id = field_or<std::string>(j, "ticket_id", "");
      const auto it = ens.corpus().tickets.find(id);
      if (it == ens.corpus().tickets.end()) throw HttpStatusError(404, "unknown ticket: " + id);
      return it->second;
    }
    throw std::invalid_argument("request needs 'ticket' or 'ticket_id'");
  }

  HttpReply post_ticket(const nlohmann::json& j) {
    const auto record = ticket_record_from_json(j);
    std::lock_guard lock(staged_mutex);
    if (staged.tickets.contains(record.ticket.id)) {
      throw HttpStatusError(409, "ticket already exists: " + record.ticket.id);
    }
    if (record.team_label) staged.label_set.parse(*record.team_label);
    if (!config.corpus.empty()) {
      std::ofstream out(config.corpus / "tickets.jsonl", std::ios::app | std::ios::binary);
      if (!out) throw std::runtime_error("cannot append to " + (config.corpus / "tickets.jsonl").string());
      out << to_json(record).dump() << '\n';
    }
    staged.tickets.emplace(record.ticket.id, record.ticket);
    if (record.team_label) staged.team_labels[record.ticket.id] = TeamLabel{*record.team_label};
    return {201, {{"id", record.ticket.id}}};
  }

  HttpReply retrieve(const nlohmann::json& j) {
    const auto ens = current();
    ConsensusOptions options;
    options.final_k = positive_size(j, "k", config.route_k);
    options.candidate_order = positive_size(j, "candidate_order", config.candidate_order);
    const auto ticket = ticket_from_request(j, *ens);
    if (j.contains("ticket_id") && !j.contains("ticket")) options.exclude_id = ticket.id;
    const auto result = consensus_retrieve(*ens, ticket, options);
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : result.items) {
      const auto fa = ens->corpus().fault_of(item.item_id);
      items.push_back({{"ticket_id", item.item_id},
                       {"score", item.score},
                       {"fault_analysis_id", fa ? nlohmann::json(*fa) : nlohmann::json(nullptr)}});
    }
    return {200, {{"items", items}, {"pool_size", result.pool_size}, {"empty_intersection", result.empty_intersection}}};
  }

  HttpReply route(const nlohmann::json& j) {
    const auto ens = current();
    const auto ticket = ticket_from_request(j, *ens);
    const auto method = field_or<std::string>(j, "method", "retrieval");
    const auto k = positive_size(j, "k", config.route_k);
    if (method == "retrieval") {
      return {200, to_json(route_by_retrieval(*ens, ticket, k, config.candidate_order))};
    }
    if (method == "generative") {
      const auto seed = field_or<std::uint64_t>(j, "seed", 0);
      return {200, to_json(route_by_generation(*generator, *ens, ticket, ens->corpus().label_set, seed, k))};
    }
    throw std::invalid_argument("method must be \"retrieval\" or \"generative\"");
  }

  HttpReply analyze(const nlohmann::json& j) {
    const auto ens = current();
    const auto ticket = ticket_from_request(j, *ens);
    const auto grid = j.contains("grid") ? grid_from_json(j["grid"], "grid") : config.temperature_grid;
    for (const auto& s : grid) {
      if (s.count < 1 || s.temperature < 0) throw std::invalid_argument("grid entries need t >= 0, count >= 1");
    }
    const auto seed = field_or<std::uint64_t>(j, "seed", 0);
    auto batch = generate_candidates(*generator, ticket, grid, seed);
    const auto ranked = rank_candidates(*ens, ticket, std::move(batch.candidates));
    nlohmann::json candidates = nlohmann::json::array();
    for (const auto& c : ranked) candidates.push_back(to_json(c));
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : batch.failures) failures.push_back({{"sample_index", f.sample_index}, {"error", f.error}});
    return {200, {{"candidates", candidates}, {"failures", failures}}};
  }

  HttpReply open(const nlohmann::json& j) {
    const auto ens = current();
    const auto ticket = ticket_from_request(j, *ens);
    SessionOptions options;
    options.token_budget = positive_size(j, "token_budget", config.token_budget);
    options.temperature = config.rag_temperature;
    options.seed = field_or<std::uint64_t>(j, "seed", 0);
    auto session = open_session(*ens, *generator, ticket, options, sessions.next_id());
    nlohmann::json demos = nlohmann::json::array();
    for (const auto& d : session.demonstrations) demos.push_back(demonstration_json(d));
    nlohmann::json reply = {{"session_id", session.session_id},
                            {"first_assistant_turn", session.messages.back().content},
                            {"demonstrations", demos},
                            {"no_demonstrations", session.no_demonstrations},
                            {"oversized_top1", session.oversized_top1}};
    sessions.insert(std::move(session));
    return {201, reply};
  }

  HttpReply message(const std::string& id, const nlohmann::json& j) {
    FollowupInput input;
    if (j.contains("canonical")) {
      input = prompts::parse_followup(field_or<std::string>(j, "canonical", ""));
    } else if (j.contains("text")) {
      const auto text = field_or<std::string>(j, "text", "");
      if (text.empty()) throw std::invalid_argument("'text' must be non-empty");
      input = text;
    } else {
      throw std::invalid_argument("message needs 'text' or 'canonical'");
    }
    const auto reply = sessions.with_session(id, [&](TroubleshootSession& s) { return post_followup(s, *generator, input); });
    nlohmann::json body = {{"assistant_turn", reply.text}, {"parse_failed", reply.parse_failed}};
    body["parsed_report"] = reply.report ? to_json(*reply.report) : nlohmann::json(nullptr);
    return {200, body};
  }

  HttpReply transcript(const std::string& id) {
    return {200, {{"transcript", session_transcript(sessions.snapshot(id))}}};
  }

  HttpReply reindex() {
    std::lock_guard lock(staged_mutex);
    auto corpus = std::make_shared<Corpus>(staged);
    corpus->validate();
    auto next = std::make_shared<const RankerEnsemble>(RankerEnsemble::build(corpus, embedders));
    if (!config.index.empty()) next->save(config.index);
    swap(next);
    return {200, {{"tickets", corpus->tickets.size()}, {"fault_analyses", corpus->fault_analyses.size()}}};
  }

  HttpReply health() const {
    nlohmann::json backends = nlohmann::json::array();
    bool ok = true;
    auto add = [&](const std::string& role, const std::string& id, const std::optional<std::string>& error) {
      nlohmann::json b = {{"role", role}, {"id", id}, {"ok", !error}};
      if (error) {
        b["error"] = *error;
        ok = false;
      }
      backends.push_back(b);
    };
    for (const auto& e : embedders) add("embedder", e->id(), e->probe());
    add("generator", generator->id(), generator->probe());
    return {ok ? 200 : 503, {{"status", ok ? "ok" : "degraded"}, {"backends", backends}}};
  }

  HttpReply metrics_reply() {
    nlohmann::json endpoints = nlohmann::json::object();
    {
      std::lock_guard lock(metrics_mutex);
      for (const auto& [name, s] : metrics) {
        endpoints[name] = {{"count", s.count},
                           {"errors", s.errors},
                           {"mean_ms", s.count ? s.total_ms / static_cast<double>(s.count) : 0.0},
                           {"max_ms", s.max_ms}};
      }
    }
    const auto ens = current();
    std::size_t staged_tickets = 0;
    {
      std::lock_guard lock(staged_mutex);
      staged_tickets = staged.tickets.size();
    }
    return {200,
            {{"endpoints", endpoints},
             {"indexed_tickets", ens->ticket_ids().size()},
             {"fault_analyses", ens->corpus().fault_analyses.size()},
             {"staged_tickets", staged_tickets},
             {"sessions", sessions.size()},
             {"rankers", ens->size()}}};
  }

  HttpReply dispatch(const std::string& method, const std::string& path, const std::string& body, std::string& route) {
    static const std::regex session_message(R"(^/sessions/([^/]+)/message$)");
    static const std::regex session_get(R"(^/sessions/([^/]+)$)");
    std::smatch m;
    if (method == "GET") {
      if (path == "/healthz") return route = "GET /healthz", health();
      if (path == "/metrics") return route = "GET /metrics", metrics_reply();
      if (std::regex_match(path, m, session_get)) return route = "GET /sessions/{id}", transcript(m[1].str());
    } else if (method == "POST") {
      if (path == "/tickets") return route = "POST /tickets", post_ticket(parse_body(body));
      if (path == "/retrieve") return route = "POST /retrieve", retrieve(parse_body(body));
      if (path == "/route") return route = "POST /route", route_ticket(body);
      if (path == "/analyze") return route = "POST /analyze", analyze(parse_body(body));
      if (path == "/sessions") return route = "POST /sessions", open(parse_body(body));
      if (path == "/admin/reindex") return route = "POST /admin/reindex", reindex();
      if (std::regex_match(path, m, session_message)) {
        return route = "POST /sessions/{id}/message", message(m[1].str(), parse_body(body));
      }
    }
    route = "unmatched";
    throw HttpStatusError(404, "no route for " + method + " " + path);
  }

  HttpReply route_ticket(const std::string& body) { return route(parse_body(body)); }
};

Service::Service(ServiceConfig config) : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  config_.validate();
  if (config_.corpus.empty()) throw std::invalid_argument("config.corpus is required");
  auto corpus = std::make_shared<Corpus>(load_corpus(config_.corpus));
  corpus->validate();
  impl_->config = config_;
  impl_->embedders = make_embedders(config_);
  impl_->generator = make_generator(config_, corpus->label_set.catch_all());
  impl_->staged = *corpus;
  if (!config_.index.empty() && std::filesystem::exists(config_.index)) {
    impl_->ensemble = std::make_shared<const RankerEnsemble>(RankerEnsemble::load(config_.index, corpus, impl_->embedders));
  } else {
    auto built = std::make_shared<const RankerEnsemble>(RankerEnsemble::build(corpus, impl_->embedders));
    if (!config_.index.empty()) built->save(config_.index);
    impl_->ensemble = std::move(built);
  }
}

Service::Service(ServiceConfig config, Corpus corpus, std::vector<std::shared_ptr<const Embedder>> embedders,
                 std::shared_ptr<const Generator> generator)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  config_.validate();
  corpus.validate();
  auto shared = std::make_shared<Corpus>(std::move(corpus));
  impl_->config = config_;
  impl_->embedders = std::move(embedders);
  impl_->generator = std::move(generator);
  impl_->staged = *shared;
  impl_->ensemble = std::make_shared<const RankerEnsemble>(RankerEnsemble::build(shared, impl_->embedders));
}

Service::~Service() { stop(); }

std::shared_ptr<const RankerEnsemble> Service::ensemble() const { return impl_->current(); }

HttpReply Service::handle(const std::string& method, const std::string& path, const std::string& body,
                          const std::string& authorization) {
  const auto start = std::chrono::steady_clock::now();
  std::string route = "unmatched";
  HttpReply reply;
  try {
    if (config_.auth_token && authorization != "Bearer " + *config_.auth_token && path != "/healthz") {
      throw HttpStatusError(401, "missing or invalid bearer token");
    }
    reply = impl_->dispatch(method, path, body, route);
  } catch (const HttpStatusError& e) {
    reply = {e.status(), {{"error", e.what()}}};
  } catch (const SessionNotFound& e) {
    reply = {404, {{"error", e.what()}}};
  } catch (const std::invalid_argument& e) {
    reply = {400, {{"error", e.what()}}};
  } catch (const nlohmann::json::exception& e) {
    reply = {400, {{"error", e.what()}}};
  } catch (const TransportError& e) {
    reply = {502, {{"error", e.what()}}};
  } catch (const RemoteRefusal& e) {
    reply = {502, {{"error", e.what()}}};
  } catch (const ContractError& e) {
    reply = {502, {{"error", e.what()}}};
  } catch (const std::exception& e) {
    reply = {500, {{"error", e.what()}}};
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  {
    std::lock_guard lock(impl_->metrics_mutex);
    auto& s = impl_->metrics[route];
    ++s.count;
    if (reply.status >= 400) ++s.errors;
    s.total_ms += ms;
    s.max_ms = std::max(s.max_ms, ms);
  }
  return reply;
}

int Service::bind(const std::string& host, int port) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const auto reply = handle(req.method, req.path, req.body, req.get_header_value("Authorization"));
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace tdx
