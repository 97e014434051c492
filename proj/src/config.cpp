#include "tdx/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace tdx {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw std::invalid_argument("unknown configuration key: " + where + "." + key);
  }
}

BackendSpec backend_from_json(const nlohmann::json& j, const std::string& where) {
  reject_unknown(j, {"kind", "seed", "dimension", "degeneration_rate", "url", "model", "continues_prefix"}, where);
  BackendSpec b;
  b.kind = j.value("kind", b.kind);
  b.seed = j.value("seed", b.seed);
  b.dimension = j.value("dimension", b.dimension);
  b.degeneration_rate = j.value("degeneration_rate", b.degeneration_rate);
  b.url = j.value("url", b.url);
  b.model = j.value("model", b.model);
  b.continues_prefix = j.value("continues_prefix", b.continues_prefix);
  if (b.kind != "mock" && b.kind != "http") throw std::invalid_argument(where + ".kind must be mock or http");
  if (b.kind == "http" && b.url.empty()) throw std::invalid_argument(where + ".url is required for http backends");
  return b;
}

nlohmann::json backend_to_json(const BackendSpec& b) {
  nlohmann::json j = {{"kind", b.kind}};
  if (b.kind == "mock") {
    j["seed"] = b.seed;
    j["dimension"] = b.dimension;
    j["degeneration_rate"] = b.degeneration_rate;
  } else {
    j["url"] = b.url;
    j["model"] = b.model;
    j["continues_prefix"] = b.continues_prefix;
  }
  return j;
}

}  // namespace

std::vector<TemperatureSlot> grid_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(where + " must be a non-empty array of [temperature, count]");
  std::vector<TemperatureSlot> grid;
  for (const auto& slot : j) {
    if (!slot.is_array() || slot.size() != 2) throw std::invalid_argument(where + " entries must be [temperature, count]");
    grid.push_back({slot[0].get<double>(), slot[1].get<int>()});
  }
  return grid;
}

nlohmann::json grid_to_json(const std::vector<TemperatureSlot>& grid) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : grid) j.push_back({s.temperature, s.count});
  return j;
}

ServiceConfig ServiceConfig::defaults() {
  ServiceConfig c;
  for (std::uint64_t s = 1; s <= 6; ++s) {
    BackendSpec b;
    b.seed = s;
    c.embedders.push_back(b);
  }
  c.generator = BackendSpec{};
  return c;
}

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"corpus", "index", "cache", "embedders", "generator", "candidate_order", "route_k", "token_budget",
                  "temperature_grid", "rag_temperature", "z_grid", "tau", "p_groundtruth", "pathology_threshold",
                  "informativeness_threshold", "idf_top_k", "listen", "auth_token", "max_in_flight"},
                 "config");
  auto c = defaults();
  try {
    if (j.contains("corpus")) c.corpus = j["corpus"].get<std::string>();
    if (j.contains("index")) c.index = j["index"].get<std::string>();
    if (j.contains("cache")) c.cache = j["cache"].get<std::string>();
    if (j.contains("embedders")) {
      c.embedders.clear();
      for (std::size_t i = 0; i < j["embedders"].size(); ++i) {
        c.embedders.push_back(backend_from_json(j["embedders"][i], "embedders[" + std::to_string(i) + "]"));
      }
    }
    if (j.contains("generator")) c.generator = backend_from_json(j["generator"], "generator");
    c.candidate_order = j.value("candidate_order", c.candidate_order);
    c.route_k = j.value("route_k", c.route_k);
    c.token_budget = j.value("token_budget", c.token_budget);
    if (j.contains("temperature_grid")) c.temperature_grid = grid_from_json(j["temperature_grid"], "temperature_grid");
    c.rag_temperature = j.value("rag_temperature", c.rag_temperature);
    if (j.contains("z_grid")) c.z_grid = grid_from_json(j["z_grid"], "z_grid");
    c.tau = j.value("tau", c.tau);
    c.p_groundtruth = j.value("p_groundtruth", c.p_groundtruth);
    c.pathology_threshold = j.value("pathology_threshold", c.pathology_threshold);
    c.informativeness_threshold = j.value("informativeness_threshold", c.informativeness_threshold);
    c.idf_top_k = j.value("idf_top_k", c.idf_top_k);
    c.listen = j.value("listen", c.listen);
    if (j.contains("auth_token") && !j["auth_token"].is_null()) c.auth_token = j["auth_token"].get<std::string>();
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid configuration value: ") + e.what());
  }
  c.validate();
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void ServiceConfig::validate() const {
  if (embedders.empty()) throw std::invalid_argument("at least one embedder (ranker) is required");
  for (const auto& e : embedders) {
    if (e.kind == "mock" && e.dimension < 2) throw std::invalid_argument("mock embedder dimension must be >= 2");
  }
  if (route_k < 1) throw std::invalid_argument("route_k must be >= 1");
  if (candidate_order < route_k) throw std::invalid_argument("candidate_order must be >= route_k");
  if (token_budget < 1) throw std::invalid_argument("token_budget must be >= 1");
  for (const auto* grid : {&temperature_grid, &z_grid}) {
    for (const auto& s : *grid) {
      if (s.count < 1 || s.temperature < 0) throw std::invalid_argument("temperature grid entries need t >= 0, count >= 1");
    }
  }
  if (rag_temperature < 0) throw std::invalid_argument("rag_temperature must be >= 0");
  if (tau < 0) throw std::invalid_argument("tau must be >= 0");
  if (p_groundtruth < 0 || p_groundtruth > 1) throw std::invalid_argument("p_groundtruth must be in [0, 1]");
  if (pathology_threshold < 0 || pathology_threshold > 1) throw std::invalid_argument("pathology_threshold must be in [0, 1]");
  if (idf_top_k < 1) throw std::invalid_argument("idf_top_k must be >= 1");
  if (generator.degeneration_rate < 0 || generator.degeneration_rate > 1) {
    throw std::invalid_argument("degeneration_rate must be in [0, 1]");
  }
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (listen.find(':') == std::string::npos) throw std::invalid_argument("listen must be host:port");
}

nlohmann::json ServiceConfig::to_json() const {
  nlohmann::json j;
  j["corpus"] = corpus.string();
  j["index"] = index.string();
  j["cache"] = cache.string();
  j["embedders"] = nlohmann::json::array();
  for (const auto& e : embedders) j["embedders"].push_back(backend_to_json(e));
  j["generator"] = backend_to_json(generator);
  j["candidate_order"] = candidate_order;
  j["route_k"] = route_k;
  j["token_budget"] = token_budget;
  j["temperature_grid"] = grid_to_json(temperature_grid);
  j["rag_temperature"] = rag_temperature;
  j["z_grid"] = grid_to_json(z_grid);
  j["tau"] = tau;
  j["p_groundtruth"] = p_groundtruth;
  j["pathology_threshold"] = pathology_threshold;
  j["informativeness_threshold"] = informativeness_threshold;
  j["idf_top_k"] = idf_top_k;
  j["listen"] = listen;
  j["auth_token"] = auth_token ? nlohmann::json(*auth_token) : nlohmann::json(nullptr);
  j["max_in_flight"] = max_in_flight;
  return j;
}

std::vector<std::shared_ptr<const Embedder>> make_embedders(const ServiceConfig& config) {
  std::shared_ptr<EmbeddingCache> cache;
  if (!config.cache.empty()) cache = std::make_shared<EmbeddingCache>(config.cache);
  std::vector<std::shared_ptr<const Embedder>> out;
  for (const auto& spec : config.embedders) {
    std::shared_ptr<const Embedder> e;
    if (spec.kind == "mock") {
      e = std::make_shared<MockEmbedder>(spec.dimension, spec.seed);
    } else {
      e = std::make_shared<HttpEmbedder>(HttpOptions{spec.url, spec.model, 2, config.max_in_flight, 120});
    }
    if (cache) e = std::make_shared<CachedEmbedder>(e, cache);
    out.push_back(std::move(e));
  }
  return out;
}

std::shared_ptr<const Generator> make_generator(const ServiceConfig& config, const std::string& catch_all_label) {
  const auto& spec = config.generator;
  if (spec.kind == "mock") {
    MockGeneratorOptions options;
    options.seed = spec.seed;
    options.degeneration_rate = spec.degeneration_rate;
    options.continues_prefix = spec.continues_prefix;
    options.catch_all_label = catch_all_label;
    return std::make_shared<MockGenerator>(options);
  }
  return std::make_shared<HttpGenerator>(HttpOptions{spec.url, spec.model, 2, config.max_in_flight, 300},
                                         spec.continues_prefix);
}

}  // namespace tdx
