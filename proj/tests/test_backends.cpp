#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>

#include "helpers.hpp"
#include "tdx/backends.hpp"
#include "tdx/prompts.hpp"
#include "tdx/text.hpp"
#include "tdx/vector_index.hpp"

using namespace tdx;

namespace {

double norm(const Embedding& v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

/// Fake embedding/generation server on a free port.
class FakeRemote {
 public:
  std::size_t declared_dim = 4;
  std::size_t served_dim = 4;
  int generate_status = 200;
  nlohmann::json last_generate_body;

  FakeRemote() {
    server_.Get("/info", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"dimension", declared_dim}}.dump(), "application/json");
    });
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < body["texts"].size(); ++i) rows.push_back(std::vector<double>(served_dim, 0.5));
      res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
    });
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        last_generate_body = nlohmann::json::parse(req.body);
      }
      res.status = generate_status;
      if (generate_status != 200) {
        res.set_content(R"({"error": "adapter not loaded"})", "application/json");
        return;
      }
      res.set_content(R"({"text": "remote says hi"})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeRemote() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  std::mutex mutex_;
  int port_ = 0;
};

GenerateRequest request_for(std::vector<ChatMessage> messages, double temperature = 0.0, std::uint64_t seed = 0) {
  GenerateRequest r;
  r.messages = std::move(messages);
  r.params.temperature = temperature;
  r.params.seed = seed;
  return r;
}

}  // namespace

TEST_CASE("mock embedder basics") {
  const MockEmbedder e(768, 1);
  CHECK(e.dimension() == 768);
  const std::vector<std::string> twice = {"x", "x"};
  const auto v = e.embed(twice);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == v[1]);
  CHECK(e.embed(std::vector<std::string>{}).empty());
  const auto zero = e.embed_one("");
  CHECK(zero.size() == 768);
  CHECK(norm(zero) == 0.0);
  CHECK(norm(e.embed_one("...")) == 0.0);
  CHECK(std::abs(norm(e.embed_one("alpha beta gamma")) - 1.0) < 1e-6);
}

TEST_CASE("mock embedder similarity structure") {
  const MockEmbedder e(768, 3);
  // Same bag of tokens in different order and case.
  CHECK(cosine(e.embed_one("link down on ASIB"), e.embed_one("asib ON down, link")) == doctest::Approx(1.0).epsilon(1e-6));

  // Disjoint tokens: verify by direct hashing that no buckets collide, then
  // the cosine must be exactly 0.
  const std::vector<std::string> a = {"alpha", "bravo"};
  const std::vector<std::string> b = {"charlie", "delta"};
  std::set<std::size_t> buckets;
  for (const auto& t : a) buckets.insert(e.bucket(t));
  bool collide = false;
  for (const auto& t : b) collide |= buckets.contains(e.bucket(t));
  REQUIRE_FALSE(collide);
  CHECK(cosine(e.embed_one("alpha bravo"), e.embed_one("charlie delta")) == 0.0);

  const MockEmbedder other(768, 4);
  CHECK(e.embed_one("alpha bravo charlie") != other.embed_one("alpha bravo charlie"));
  CHECK(e.id() != other.id());
}

TEST_CASE("mock embedder norm property") {
  const MockEmbedder e(64, 9);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    std::string text;
    const int n = static_cast<int>(rng() % 12);
    for (int w = 0; w < n; ++w) text += "w" + std::to_string(rng() % 50) + " ";
    const double len = norm(e.embed_one(text));
    CHECK((len == 0.0 || std::abs(len - 1.0) < 1e-6));
  }
}

TEST_CASE("generation params and request validation") {
  GenerationParams p;
  CHECK(p.top_p == 0.95);
  CHECK(p.top_k == 50);
  CHECK_NOTHROW(p.validate());
  p.top_p = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.temperature = -0.1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.top_k = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.max_tokens = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  const MockGenerator gen;
  CHECK_THROWS_AS(generate(gen, request_for({})), std::invalid_argument);
  CHECK_THROWS_AS(generate(gen, request_for({{Role::user, "hi"}})), std::invalid_argument);
  CHECK_NOTHROW(generate(gen, request_for({{Role::system, "s"}, {Role::user, "hi"}})));
}

TEST_CASE("chat message JSON") {
  const ChatMessage m{Role::assistant, "ok"};
  CHECK(chat_message_from_json(to_json(m)) == m);
  CHECK_THROWS_AS(chat_message_from_json(nlohmann::json{{"role", "tool"}, {"content", "x"}}), std::invalid_argument);
  CHECK(parse_role("system") == Role::system);
}

TEST_CASE("mock generator routing rule") {
  const MockGenerator gen;
  auto t = test::make_ticket("T", "Radio restarts", "Observed loop. team: 5");
  CHECK(generate(gen, request_for(prompts::build_routing_prompt(t))) == "5");
  t.problem_description = "no marker";
  CHECK(generate(gen, request_for(prompts::build_routing_prompt(t))) == "Other");

  MockGeneratorOptions o;
  o.catch_all_label = "Misc";
  CHECK(generate(MockGenerator(o), request_for(prompts::build_routing_prompt(t))) == "Misc");
}

TEST_CASE("mock generator RAG rule picks the highest-overlap demonstration") {
  const MockGenerator gen;
  const auto fresh = test::make_ticket("N", "fan alarm on cooling unit", "fan speed alarm");
  const auto d1 = Demonstration::from(test::make_ticket("A", "backhaul latency"), test::make_fa("FA", "latency issue"));
  const auto d2 = Demonstration::from(test::make_ticket("B", "fan alarm cooling", "fan speed"), test::make_fa("FB", "fan broken"));
  const std::vector<Demonstration> demos = {d1, d2};
  const auto messages = prompts::build_rag_first_round(fresh, demos);
  // Oracle: count shared unique tokens with the new ticket text.
  auto overlap = [&](const Demonstration& d) {
    const auto a = tokenize(ticket_text(fresh));
    const auto b = tokenize(d.ticket_text);
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::size_t n = 0;
    for (const auto& x : sa) n += sb.contains(x);
    return n;
  };
  REQUIRE(overlap(d2) > overlap(d1));
  CHECK(generate(gen, request_for(messages, 0.0, 1)) == d2.fault_analysis_text);
}

TEST_CASE("mock generator determinism and perturbation") {
  const MockGenerator gen({.seed = 5});
  const auto t = test::make_ticket("T", "Radio restarts repeatedly during peak hours", "The unit restarts and alarms appear");
  const auto messages = prompts::build_fa_prompt(t);
  CHECK(generate(gen, request_for(messages, 0.0, 1)) == generate(gen, request_for(messages, 0.0, 1)));
  CHECK(generate(gen, request_for(messages, 0.9, 1)) == generate(gen, request_for(messages, 0.9, 1)));
  std::set<std::string> distinct;
  for (std::uint64_t s = 0; s < 10; ++s) distinct.insert(generate(gen, request_for(messages, 0.9, s)));
  CHECK(distinct.size() > 1);

  MockGeneratorOptions always;
  always.degeneration_rate = 1.0;
  CHECK(generate(MockGenerator(always), request_for(messages, 0.5, 3)) == MockGenerator::degenerate_text());
}

TEST_CASE("http embedder speaks the wire protocol") {
  FakeRemote remote;
  HttpEmbedder e({.base_url = remote.url(), .model = "m"});
  CHECK(e.dimension() == 4);
  const std::vector<std::string> texts = {"a", "b"};
  const auto v = e.embed(texts);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == Embedding(4, 0.5f));
  CHECK_FALSE(e.probe().has_value());

  remote.served_dim = 3;
  CHECK_THROWS_AS(e.embed(texts), ContractError);
}

TEST_CASE("http clients report unreachable servers as transport errors") {
  // Nothing listens on port 1 in the test environment; connects are refused.
  const std::string url = "http://127.0.0.1:1";
  CHECK_THROWS_AS(HttpEmbedder({.base_url = url, .model = "m", .max_retries = 0}), TransportError);
  HttpGenerator g({.base_url = url, .model = "m", .max_retries = 1});
  CHECK_THROWS_AS(g.generate(request_for({{Role::system, "s"}, {Role::user, "u"}})), TransportError);
  CHECK(g.probe().has_value());
}

TEST_CASE("http generator body and refusals") {
  FakeRemote remote;
  HttpGenerator g({.base_url = remote.url(), .model = "llm"});
  auto r = request_for({{Role::system, "s"}, {Role::user, "u"}}, 0.3, 9);
  r.adapter = "routing";
  CHECK(g.generate(r) == "remote says hi");
  const auto body = g.request_body(r);
  CHECK(body["model"] == "llm");
  CHECK(body["adapter"] == "routing");
  CHECK(body["temperature"] == 0.3);
  CHECK(body["top_p"] == 0.95);
  CHECK(body["top_k"] == 50);
  CHECK(body["seed"] == 9);
  CHECK(body["messages"][1]["role"] == "user");
  r.adapter.reset();
  CHECK(g.request_body(r)["adapter"].is_null());

  remote.generate_status = 422;
  try {
    g.generate(r);
    FAIL("expected RemoteRefusal");
  } catch (const RemoteRefusal& e) {
    CHECK(e.status() == 422);
    CHECK(e.remote_message() == "adapter not loaded");
  }
}

TEST_CASE("embedding cache") {
  test::TempDir dir;
  const auto path = dir / "cache.bin";
  const Embedding v = {0.1f, -0.0f, 3.5f, std::numeric_limits<float>::denorm_min()};
  {
    EmbeddingCache cache(path);
    CHECK_FALSE(cache.lookup("b1", "text").has_value());
    cache.store("b1", "text", v);
    cache.store("b2", "text", {1, 2, 3, 4});
    CHECK(cache.size() == 2);
  }
  EmbeddingCache reopened(path);
  const auto hit = reopened.lookup("b1", "text");
  REQUIRE(hit.has_value());
  CHECK(std::memcmp(hit->data(), v.data(), v.size() * sizeof(float)) == 0);
  CHECK(*reopened.lookup("b2", "text") == Embedding{1, 2, 3, 4});
  CHECK_FALSE(reopened.lookup("b1", "other").has_value());

  SUBCASE("truncated record reports its offset") {
    const auto good = std::filesystem::file_size(path);
    {
      std::ofstream out(path, std::ios::binary | std::ios::app);
      out.write("\x05\x00\x00\x00ab", 6);
    }
    try {
      EmbeddingCache broken(path);
      FAIL("expected CacheCorruption");
    } catch (const CacheCorruption& e) {
      CHECK(e.offset() == good);
    }
  }
}

TEST_CASE("cached embedder serves hits without calling the backend") {
  test::TempDir dir;
  struct Counting final : Embedder {
    mutable int calls = 0;
    std::string id() const override { return "counting"; }
    std::size_t dimension() const override { return 2; }
    std::vector<Embedding> embed(std::span<const std::string> texts) const override {
      calls += static_cast<int>(texts.size());
      return std::vector<Embedding>(texts.size(), Embedding{1, 0});
    }
  };
  auto inner = std::make_shared<Counting>();
  CachedEmbedder cached(inner, std::make_shared<EmbeddingCache>(dir / "c.bin"));
  const std::vector<std::string> texts = {"a", "b", "a"};
  cached.embed(texts);
  const int first = inner->calls;
  cached.embed(texts);
  CHECK(inner->calls == first);
  CHECK(text_digest("abc") != text_digest("abd"));
  // FIPS 180-2 test vector.
  const auto d = text_digest("abc");
  CHECK(d[0] == 0xba);
  CHECK(d[1] == 0x78);
  CHECK(d[2] == 0x16);
  CHECK(d[31] == 0xad);
}
