#pragma once

// HTTP front end over the library. Handlers translate JSON to library calls
// and back; they add no scoring of their own.

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdx/analysis.hpp"
#include "tdx/backends.hpp"
#include "tdx/config.hpp"
#include "tdx/corpus.hpp"
#include "tdx/retrieval.hpp"

namespace tdx {

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  /// Loads the corpus from config.corpus, then the index from config.index
  /// (building and saving it when the directory does not exist yet).
  explicit Service(ServiceConfig config);
  /// Builds the index in memory from an already loaded corpus.
  Service(ServiceConfig config, Corpus corpus, std::vector<std::shared_ptr<const Embedder>> embedders,
          std::shared_ptr<const Generator> generator);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Dispatches one request without a socket. `authorization` is the raw
  /// Authorization header value.
  HttpReply handle(const std::string& method, const std::string& path, const std::string& body,
                   const std::string& authorization = {});

  /// Binds to host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();

  std::shared_ptr<const RankerEnsemble> ensemble() const;
  const ServiceConfig& config() const { return config_; }

 private:
  struct Impl;

  ServiceConfig config_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tdx
