#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdx/analysis.hpp"
#include "tdx/backends.hpp"

namespace tdx {

struct BackendSpec {
  std::string kind = "mock";  // "mock" | "http"
  std::uint64_t seed = 0;
  std::size_t dimension = 768;
  double degeneration_rate = 0.0;
  std::string url;
  std::string model;
  bool continues_prefix = true;

  bool operator==(const BackendSpec&) const = default;
};

/// Everything the service and CLI need. Parsing rejects unknown keys.
struct ServiceConfig {
  std::filesystem::path corpus;
  std::filesystem::path index;
  std::filesystem::path cache;
  std::vector<BackendSpec> embedders;
  BackendSpec generator;
  std::size_t candidate_order = 2500;
  std::size_t route_k = 10;
  std::size_t token_budget = 5000;
  std::vector<TemperatureSlot> temperature_grid = default_candidate_grid();
  double rag_temperature = 0.3;
  std::vector<TemperatureSlot> z_grid = {{0.1, 1}, {0.5, 2}, {0.9, 3}};
  double tau = 0.3;
  double p_groundtruth = 0.5;
  double pathology_threshold = 0.07;
  double informativeness_threshold = 5.0;
  int idf_top_k = 15;
  std::string listen = "127.0.0.1:8080";
  std::optional<std::string> auth_token;
  int max_in_flight = 8;

  /// Six mock rankers (seeds 1..6, d = 768) and a mock generator.
  static ServiceConfig defaults();
  /// Throws std::invalid_argument on unknown keys or out-of-range values.
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// [[temperature, count], ...]
std::vector<TemperatureSlot> grid_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json grid_to_json(const std::vector<TemperatureSlot>& grid);

std::vector<std::shared_ptr<const Embedder>> make_embedders(const ServiceConfig& config);
std::shared_ptr<const Generator> make_generator(const ServiceConfig& config, const std::string& catch_all_label = "Other");

}  // namespace tdx
