#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace tdx {

using Embedding = std::vector<float>;

enum class Role { system, user, assistant };

std::string_view role_name(Role role);
/// Throws std::invalid_argument for anything but system/user/assistant.
Role parse_role(std::string_view name);

struct ChatMessage {
  Role role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

nlohmann::json to_json(const ChatMessage& m);
ChatMessage chat_message_from_json(const nlohmann::json& j);

struct GenerationParams {
  double temperature = 0.0;
  double top_p = 0.95;
  int top_k = 50;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct GenerateRequest {
  std::vector<ChatMessage> messages;
  GenerationParams params;
  std::optional<std::string> adapter;  // multi-LoRA task head; nullopt = base model
};

/// Connection-level failure; callers may retry.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The remote service answered but refused the request.
class RemoteRefusal : public std::runtime_error {
 public:
  RemoteRefusal(int status, std::string remote_message)
      : std::runtime_error("remote refused request (" + std::to_string(status) + "): " + remote_message),
        status_(status),
        remote_message_(std::move(remote_message)) {}
  int status() const { return status_; }
  const std::string& remote_message() const { return remote_message_; }

 private:
  int status_;
  std::string remote_message_;
};

/// The remote violated the declared contract (e.g. wrong dimension).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Stable identifier; used as the cache namespace and in index manifests.
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  /// One vector per input, same order.
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) const = 0;
  /// Readiness check; an error message when the backend is unreachable.
  virtual std::optional<std::string> probe() const { return std::nullopt; }

  Embedding embed_one(const std::string& text) const;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string id() const = 0;
  /// True when a trailing assistant message is continued rather than answered.
  virtual bool continues_assistant_prefix() const { return true; }
  virtual std::string generate(const GenerateRequest& request) const = 0;
  virtual std::optional<std::string> probe() const { return std::nullopt; }
};

/// Validates the request (non-empty, system first, params in range) and
/// forwards to the backend.
std::string generate(const Generator& backend, const GenerateRequest& request);

/// Feature-hashing embedder: each token hashes (under `seed`) to a bucket
/// with a hash-derived sign; term frequencies are accumulated and the vector
/// is L2-normalized. Different seeds act as independent rankers.
class MockEmbedder final : public Embedder {
 public:
  MockEmbedder(std::size_t dimension, std::uint64_t seed);

  std::string id() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;

  std::size_t bucket(const std::string& token) const;
  float sign(const std::string& token) const;

 private:
  Embedding embed_text(const std::string& text) const;

  std::size_t dimension_;
  std::uint64_t seed_;
};

struct MockGeneratorOptions {
  std::uint64_t seed = 0;
  /// Probability of emitting a degenerate repeated-character output.
  double degeneration_rate = 0.0;
  std::string catch_all_label = "Other";
  bool continues_prefix = true;
};

/// Rule-based stand-in for the adapter-equipped LLM service:
///  - routing prompt: the planted `team: X` marker in the ticket, else the catch-all label;
///  - fault-analysis / RAG prompts: the fault analysis of the demonstration
///    sharing the most tokens with the new ticket, else a canned report;
///  - canonical follow-ups and judge prompts: template answers;
///  - temperature > 0: seeded word dropout at rate temperature / 10.
class MockGenerator final : public Generator {
 public:
  explicit MockGenerator(MockGeneratorOptions options = {});

  std::string id() const override { return "mock-generator"; }
  bool continues_assistant_prefix() const override { return options_.continues_prefix; }
  std::string generate(const GenerateRequest& request) const override;

  static std::string degenerate_text();

 private:
  std::string respond(const GenerateRequest& request) const;

  MockGeneratorOptions options_;
};

struct HttpOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  std::string model;
  int max_retries = 2;
  int max_in_flight = 8;
  int timeout_seconds = 120;
};

/// Client for POST /embed and GET /info.
class HttpEmbedder final : public Embedder {
 public:
  /// Queries GET /info for the dimension. Throws TransportError when unreachable.
  explicit HttpEmbedder(HttpOptions options);

  std::string id() const override { return "http:" + options_.base_url + "/" + options_.model; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;
  std::optional<std::string> probe() const override;

 private:
  HttpOptions options_;
  std::size_t dimension_ = 0;
  mutable std::counting_semaphore<1024> in_flight_;
};

/// Client for POST /generate.
class HttpGenerator final : public Generator {
 public:
  explicit HttpGenerator(HttpOptions options, bool continues_prefix = true);

  std::string id() const override { return "http:" + options_.base_url + "/" + options_.model; }
  bool continues_assistant_prefix() const override { return continues_prefix_; }
  std::string generate(const GenerateRequest& request) const override;
  std::optional<std::string> probe() const override;

  /// Wire body for a request; exposed for tests.
  nlohmann::json request_body(const GenerateRequest& request) const;

 private:
  HttpOptions options_;
  bool continues_prefix_;
  mutable std::counting_semaphore<1024> in_flight_;
};

using TextDigest = std::array<std::uint8_t, 32>;

/// SHA-256 of the text bytes.
TextDigest text_digest(std::string_view text);

/// Thrown when the cache log cannot be parsed; carries the record offset.
class CacheCorruption : public std::runtime_error {
 public:
  CacheCorruption(std::uint64_t offset, const std::string& what)
      : std::runtime_error("corrupt embedding cache at offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Append-only on-disk embedding log keyed by (backend id, text digest).
/// Record: u32 id length, id bytes, 32-byte digest, u32 dimension,
/// dimension x f32, all little-endian.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path);

  std::optional<Embedding> lookup(const std::string& backend_id, std::string_view text) const;
  void store(const std::string& backend_id, std::string_view text, const Embedding& vector);
  std::size_t size() const;

 private:
  using Key = std::pair<std::string, TextDigest>;

  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<Key, Embedding> entries_;
};

/// Serves embeddings from the cache and stores misses.
class CachedEmbedder final : public Embedder {
 public:
  CachedEmbedder(std::shared_ptr<const Embedder> inner, std::shared_ptr<EmbeddingCache> cache);

  std::string id() const override { return inner_->id(); }
  std::size_t dimension() const override { return inner_->dimension(); }
  std::vector<Embedding> embed(std::span<const std::string> texts) const override;
  std::optional<std::string> probe() const override { return inner_->probe(); }

 private:
  std::shared_ptr<const Embedder> inner_;
  std::shared_ptr<EmbeddingCache> cache_;
};

}  // namespace tdx
