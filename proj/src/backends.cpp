#include "tdx/backends.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>
#include <chrono>
#include <regex>
#include <set>

#include <httplib.h>

#include "tdx/prompts.hpp"
#include "tdx/text.hpp"

namespace tdx {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return {};
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw std::invalid_argument("unknown chat role: " + std::string(name));
}

nlohmann::json to_json(const ChatMessage& m) {
  return {{"role", role_name(m.role)}, {"content", m.content}};
}

ChatMessage chat_message_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("role") || !j.contains("content")) {
    throw std::invalid_argument("chat message needs role and content");
  }
  return {parse_role(j.at("role").get<std::string>()), j.at("content").get<std::string>()};
}

void GenerationParams::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
}

Embedding Embedder::embed_one(const std::string& text) const {
  auto out = embed(std::span<const std::string>(&text, 1));
  return std::move(out.at(0));
}

std::string generate(const Generator& backend, const GenerateRequest& request) {
  if (request.messages.empty()) throw std::invalid_argument("generate: empty message list");
  if (request.messages.front().role != Role::system) {
    throw std::invalid_argument("generate: first message must be the system message");
  }
  request.params.validate();
  return backend.generate(request);
}

// ---------------------------------------------------------------------------
// MockEmbedder

MockEmbedder::MockEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension < 2) throw std::invalid_argument("mock embedder dimension must be >= 2");
}

std::string MockEmbedder::id() const {
  return "mock:d" + std::to_string(dimension_) + ":s" + std::to_string(seed_);
}

std::size_t MockEmbedder::bucket(const std::string& token) const {
  return static_cast<std::size_t>(hash64(token, seed_) % dimension_);
}

float MockEmbedder::sign(const std::string& token) const {
  return (hash64(token, ~seed_) & 1U) ? 1.0F : -1.0F;
}

Embedding MockEmbedder::embed_text(const std::string& text) const {
  std::vector<double> acc(dimension_, 0.0);
  for (const auto& token : tokenize(text)) acc[bucket(token)] += sign(token);
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  Embedding out(dimension_, 0.0F);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < dimension_; ++i) out[i] = static_cast<float>(acc[i] / norm);
  }
  return out;
}

std::vector<Embedding> MockEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out(texts.size());
  const auto n = static_cast<std::int64_t>(texts.size());
#pragma omp parallel for schedule(dynamic, 16) if (n > 64)
  for (std::int64_t i = 0; i < n; ++i) out[i] = embed_text(texts[i]);
  return out;
}

// ---------------------------------------------------------------------------
// MockGenerator

namespace {

struct ParsedDemo {
  std::string ticket_text;
  std::string fault_analysis_text;
};

struct RagContext {
  std::vector<ParsedDemo> demos;
  std::string new_ticket;
};

RagContext parse_rag_prompt(std::string_view user) {
  RagContext ctx;
  std::size_t pos = 0;
  for (int k = 1;; ++k) {
    const std::string head = "\nDemonstration " + std::to_string(k) + ":\n" + std::string(prompts::kTicketMarker);
    const auto start = user.find(head, pos);
    if (start == std::string_view::npos) break;
    const auto body = start + head.size();
    const auto fa = user.find("\n" + std::string(prompts::kFaultAnalysisMarker), body);
    if (fa == std::string_view::npos) break;
    const std::string next_head = "\nDemonstration " + std::to_string(k + 1) + ":\n";
    auto end = user.find(next_head, fa);
    if (end == std::string_view::npos) end = user.find("\n\n" + std::string(prompts::kRagRequest), fa);
    if (end == std::string_view::npos) break;
    const auto fa_body = fa + 1 + prompts::kFaultAnalysisMarker.size();
    std::string fa_text(user.substr(fa_body, end - fa_body));
    if (!fa_text.empty() && fa_text.back() == '\n') fa_text.pop_back();
    ctx.demos.push_back({std::string(user.substr(body, fa - body)), std::move(fa_text)});
    pos = end;
  }
  ctx.new_ticket = prompts::extract_ticket_text(user).value_or("");
  return ctx;
}

std::set<std::string> token_set(std::string_view text) {
  auto tokens = tokenize(text);
  return {tokens.begin(), tokens.end()};
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& t : a) n += b.count(t);
  return n;
}

// Demonstration indices ordered by token overlap with the new ticket (desc), index asc.
std::vector<std::size_t> rank_demos(const RagContext& ctx) {
  const auto target = token_set(ctx.new_ticket);
  std::vector<std::pair<std::size_t, std::size_t>> scored;
  for (std::size_t i = 0; i < ctx.demos.size(); ++i) {
    scored.emplace_back(overlap(token_set(ctx.demos[i].ticket_text), target), i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> order;
  for (const auto& [_, i] : scored) order.push_back(i);
  return order;
}

std::string line_value(std::string_view text, std::string_view key) {
  const std::string needle = std::string(key) + ": ";
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string_view::npos) {
    if (pos == 0 || text[pos - 1] == '\n') {
      const auto start = pos + needle.size();
      const auto end = text.find('\n', start);
      return std::string(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    }
    pos += needle.size();
  }
  return {};
}

FaultAnalysis canned_report(std::string_view ticket) {
  FaultAnalysis f;
  f.identification = "The ticket reports " + line_value(ticket, "title") + ". Observed symptoms: " +
                     line_value(ticket, "problem_description");
  f.root_cause = "undetermined";
  f.resolution = "Collect additional logs from the affected unit and escalate to the responsible team.";
  return f;
}

FaultAnalysis split_fault_analysis(std::string_view text) {
  FaultAnalysis f;
  const auto rc = text.find("\nRoot Cause: ");
  const auto res = text.find("\nResolution: ");
  constexpr std::string_view id_head = "Identification: ";
  if (rc == std::string_view::npos || res == std::string_view::npos || rc > res) {
    f.identification = std::string(text);
    return f;
  }
  auto id_start = text.starts_with(id_head) ? id_head.size() : 0;
  f.identification = std::string(text.substr(id_start, rc - id_start));
  f.root_cause = std::string(text.substr(rc + 13, res - rc - 13));
  f.resolution = std::string(text.substr(res + 13));
  return f;
}

class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

std::string word_dropout(const std::string& text, double rate, SplitMix& rng) {
  if (rate <= 0.0) return text;
  std::string out;
  std::size_t kept = 0;
  std::size_t pos = 0;
  std::string first_word;
  while (pos <= text.size()) {
    auto end = text.find(' ', pos);
    if (end == std::string::npos) end = text.size();
    const auto word = text.substr(pos, end - pos);
    if (first_word.empty()) first_word = word;
    if (rng.uniform() >= rate) {
      if (kept++ > 0) out += ' ';
      out += word;
    }
    pos = end + 1;
  }
  return kept == 0 ? first_word : out;
}

const ChatMessage* first_of(const std::vector<ChatMessage>& messages, Role role) {
  for (const auto& m : messages) {
    if (m.role == role) return &m;
  }
  return nullptr;
}

const ChatMessage* last_of(const std::vector<ChatMessage>& messages, Role role) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == role) return &*it;
  }
  return nullptr;
}

std::string judge_verdict() {
  nlohmann::json v;
  for (const char* c : {"accuracy", "completeness", "relevance", "clarity"}) {
    v[c] = {{"score", 4}, {"justification", std::string("mock assessment of ") + c}};
  }
  return v.dump();
}

}  // namespace

MockGenerator::MockGenerator(MockGeneratorOptions options) : options_(std::move(options)) {}

std::string MockGenerator::degenerate_text() { return std::string(512, '0'); }

std::string MockGenerator::generate(const GenerateRequest& request) const {
  if (request.messages.empty()) throw std::invalid_argument("generate: empty message list");
  return respond(request);
}

std::string MockGenerator::respond(const GenerateRequest& request) const {
  const auto& messages = request.messages;
  const ChatMessage* first_user = first_of(messages, Role::user);
  const ChatMessage* last_user = last_of(messages, Role::user);
  const std::string_view first = first_user ? std::string_view(first_user->content) : std::string_view{};
  const std::string_view last = last_user ? std::string_view(last_user->content) : std::string_view{};

  std::uint64_t mix = options_.seed * 0x9E3779B97F4A7C15ULL ^ request.params.seed.value_or(0);
  for (const auto& m : messages) mix = hash64(m.content, mix);
  SplitMix rng(mix);
  const double dropout = request.params.temperature / 10.0;

  for (const auto& m : messages) {
    if (m.content.find(prompts::kJudgeInstruction) != std::string::npos) return judge_verdict();
  }

  if (last.find(prompts::kRoutingInstruction) != std::string_view::npos) {
    static const std::regex marker(R"(team:\s*([A-Za-z0-9_\-]+))", std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    const auto ticket = prompts::extract_ticket_text(last).value_or("");
    std::smatch sm;
    if (std::regex_search(ticket, sm, marker)) return sm[1].str();
    return options_.catch_all_label;
  }

  const bool degenerate = options_.degeneration_rate > 0.0 && rng.uniform() < options_.degeneration_rate;

  if (first.find(prompts::kRagIntro) != std::string_view::npos) {
    const auto ctx = parse_rag_prompt(first);
    const auto order = rank_demos(ctx);
    const bool followup = last_user != first_user;
    if (followup && last.starts_with(prompts::kFollowupFinal)) {
      const auto f = order.empty() ? canned_report(ctx.new_ticket)
                                   : split_fault_analysis(ctx.demos[order.front()].fault_analysis_text);
      nlohmann::json j = {{"identification", f.identification}, {"root_cause", f.root_cause},
                          {"resolution", f.resolution}};
      return "```json\n" + j.dump(2) + "\n```";
    }
    if (followup && last.starts_with(prompts::kFollowupTop3)) {
      if (order.empty()) return "No demonstrations were provided.";
      std::string out;
      for (std::size_t r = 0; r < std::min<std::size_t>(3, order.size()); ++r) {
        out += std::to_string(r + 1) + ". Demonstration " + std::to_string(order[r] + 1) + "\n";
      }
      return word_dropout(out, dropout, rng);
    }
    if (followup && last.starts_with(prompts::kFollowupExplain)) {
      if (order.empty()) return "No demonstrations were provided.";
      std::string out;
      for (std::size_t r = 0; r < std::min<std::size_t>(3, order.size()); ++r) {
        const auto f = split_fault_analysis(ctx.demos[order[r]].fault_analysis_text);
        out += "Demonstration " + std::to_string(order[r] + 1) + " was resolved as follows: " + f.resolution + "\n";
      }
      return word_dropout(out, dropout, rng);
    }
    if (degenerate) return degenerate_text();
    const auto text = order.empty() ? fault_analysis_text(canned_report(ctx.new_ticket))
                                    : ctx.demos[order.front()].fault_analysis_text;
    return word_dropout(text, dropout, rng);
  }

  if (last.find(prompts::kFaultAnalysisInstruction) != std::string_view::npos) {
    if (degenerate) return degenerate_text();
    const auto ticket = prompts::extract_ticket_text(last).value_or("");
    return word_dropout(fault_analysis_text(canned_report(ticket)), dropout, rng);
  }

  return word_dropout("Please provide more details about the ticket.", dropout, rng);
}

// ---------------------------------------------------------------------------
// HTTP clients

namespace {

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

httplib::Result with_retries(const HttpOptions& options, const std::function<httplib::Result(httplib::Client&)>& call) {
  httplib::Client client(options.base_url);
  client.set_connection_timeout(5);
  client.set_read_timeout(options.timeout_seconds);
  for (int attempt = 0;; ++attempt) {
    auto result = call(client);
    if (result) return result;
    if (attempt >= options.max_retries) {
      throw TransportError(options.base_url + ": " + httplib::to_string(result.error()));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
  }
}

nlohmann::json parse_ok(const httplib::Result& result) {
  if (result->status != 200) {
    std::string message = result->body;
    try {
      const auto j = nlohmann::json::parse(result->body);
      if (j.contains("error")) message = j["error"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    throw RemoteRefusal(result->status, message);
  }
  try {
    return nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed JSON from remote: ") + e.what());
  }
}

int clamp_in_flight(int n) { return std::clamp(n, 1, 1024); }

std::optional<std::string> probe_info(const HttpOptions& options) {
  httplib::Client client(options.base_url);
  client.set_connection_timeout(2);
  client.set_read_timeout(5);
  auto result = client.Get("/info");
  if (!result) return options.base_url + ": " + httplib::to_string(result.error());
  if (result->status != 200) return options.base_url + ": GET /info returned " + std::to_string(result->status);
  return std::nullopt;
}

}  // namespace

HttpEmbedder::HttpEmbedder(HttpOptions options)
    : options_(std::move(options)), in_flight_(clamp_in_flight(options_.max_in_flight)) {
  const auto info = parse_ok(with_retries(options_, [](httplib::Client& c) { return c.Get("/info"); }));
  if (!info.contains("dimension") || !info["dimension"].is_number_unsigned()) {
    throw ContractError("GET /info did not declare a dimension");
  }
  dimension_ = info["dimension"].get<std::size_t>();
}

std::vector<Embedding> HttpEmbedder::embed(std::span<const std::string> texts) const {
  if (texts.empty()) return {};
  SemaphoreGuard guard(in_flight_);
  const nlohmann::json body = {{"model", options_.model}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto payload = body.dump();
  const auto reply = parse_ok(with_retries(options_, [&](httplib::Client& c) {
    return c.Post("/embed", payload, "application/json");
  }));
  if (!reply.contains("embeddings") || !reply["embeddings"].is_array() || reply["embeddings"].size() != texts.size()) {
    throw ContractError("POST /embed returned the wrong number of embeddings");
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& row : reply["embeddings"]) {
    if (!row.is_array() || row.size() != dimension_) {
      throw ContractError("POST /embed returned a vector of dimension " + std::to_string(row.size()) +
                          ", expected " + std::to_string(dimension_));
    }
    Embedding v;
    v.reserve(dimension_);
    for (const auto& x : row) {
      const auto value = x.get<double>();
      if (!std::isfinite(value)) throw ContractError("POST /embed returned a non-finite value");
      v.push_back(static_cast<float>(value));
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::optional<std::string> HttpEmbedder::probe() const { return probe_info(options_); }

HttpGenerator::HttpGenerator(HttpOptions options, bool continues_prefix)
    : options_(std::move(options)), continues_prefix_(continues_prefix),
      in_flight_(clamp_in_flight(options_.max_in_flight)) {}

nlohmann::json HttpGenerator::request_body(const GenerateRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back(to_json(m));
  nlohmann::json body = {{"model", options_.model},
                         {"adapter", request.adapter ? nlohmann::json(*request.adapter) : nlohmann::json(nullptr)},
                         {"messages", messages},
                         {"temperature", request.params.temperature},
                         {"top_p", request.params.top_p},
                         {"top_k", request.params.top_k},
                         {"max_tokens", request.params.max_tokens},
                         {"seed", request.params.seed ? nlohmann::json(*request.params.seed) : nlohmann::json(nullptr)}};
  return body;
}

std::string HttpGenerator::generate(const GenerateRequest& request) const {
  SemaphoreGuard guard(in_flight_);
  const auto payload = request_body(request).dump();
  const auto reply = parse_ok(with_retries(options_, [&](httplib::Client& c) {
    return c.Post("/generate", payload, "application/json");
  }));
  if (!reply.contains("text") || !reply["text"].is_string()) throw ContractError("POST /generate returned no text");
  return reply["text"].get<std::string>();
}

std::optional<std::string> HttpGenerator::probe() const { return probe_info(options_); }

// ---------------------------------------------------------------------------
// Embedding cache

TextDigest text_digest(std::string_view text) {
  TextDigest digest{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32) {
    throw std::runtime_error("SHA-256 failed");
  }
  return digest;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  while (pos < buf.size()) {
    const std::size_t record = pos;
    if (buf.size() - pos < 4) throw CacheCorruption(record, "truncated id length");
    const auto id_len = get_u32(buf, pos);
    pos += 4;
    if (buf.size() - pos < static_cast<std::size_t>(id_len) + 32 + 4) throw CacheCorruption(record, "truncated header");
    std::string id = buf.substr(pos, id_len);
    pos += id_len;
    TextDigest digest{};
    std::memcpy(digest.data(), buf.data() + pos, 32);
    pos += 32;
    const auto dim = get_u32(buf, pos);
    pos += 4;
    if (dim == 0 || buf.size() - pos < static_cast<std::size_t>(dim) * 4) throw CacheCorruption(record, "truncated vector");
    Embedding v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      v[i] = std::bit_cast<float>(get_u32(buf, pos));
      pos += 4;
    }
    entries_[{std::move(id), digest}] = std::move(v);
  }
}

std::optional<Embedding> EmbeddingCache::lookup(const std::string& backend_id, std::string_view text) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find({backend_id, text_digest(text)});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::store(const std::string& backend_id, std::string_view text, const Embedding& vector) {
  const auto digest = text_digest(text);
  std::string record;
  put_u32(record, static_cast<std::uint32_t>(backend_id.size()));
  record += backend_id;
  record.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  put_u32(record, static_cast<std::uint32_t>(vector.size()));
  for (float f : vector) put_u32(record, std::bit_cast<std::uint32_t>(f));

  std::unique_lock lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to embedding cache " + path_.string());
  out.write(record.data(), static_cast<std::streamsize>(record.size()));
  entries_[{backend_id, digest}] = vector;
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

CachedEmbedder::CachedEmbedder(std::shared_ptr<const Embedder> inner, std::shared_ptr<EmbeddingCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::vector<Embedding> CachedEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> slots;
  const auto backend = inner_->id();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_->lookup(backend, texts[i])) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(texts[i]);
      slots.push_back(i);
    }
  }
  if (!missing.empty()) {
    auto fresh = inner_->embed(missing);
    for (std::size_t j = 0; j < fresh.size(); ++j) {
      cache_->store(backend, missing[j], fresh[j]);
      out[slots[j]] = std::move(fresh[j]);
    }
  }
  return out;
}

}  // namespace tdx
