#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

#include <unistd.h>

#include "tdx/backends.hpp"
#include "tdx/corpus.hpp"

namespace tdx::test {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tdx-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Returns a preset vector per exact text; unknown texts map to zero.
class TableEmbedder final : public Embedder {
 public:
  TableEmbedder(std::string id, std::size_t dim, std::map<std::string, Embedding> table)
      : id_(std::move(id)), dim_(dim), table_(std::move(table)) {}
  std::string id() const override { return id_; }
  std::size_t dimension() const override { return dim_; }
  std::vector<Embedding> embed(std::span<const std::string> texts) const override {
    std::vector<Embedding> out;
    for (const auto& t : texts) {
      auto it = table_.find(t);
      out.push_back(it == table_.end() ? Embedding(dim_, 0.0f) : it->second);
    }
    return out;
  }

 private:
  std::string id_;
  std::size_t dim_;
  std::map<std::string, Embedding> table_;
};

/// Generator driven by a callback.
class ScriptedGenerator final : public Generator {
 public:
  using Fn = std::function<std::string(const GenerateRequest&)>;
  explicit ScriptedGenerator(Fn fn, bool continues = true) : fn_(std::move(fn)), continues_(continues) {}
  std::string id() const override { return "scripted"; }
  bool continues_assistant_prefix() const override { return continues_; }
  std::string generate(const GenerateRequest& r) const override { return fn_(r); }

 private:
  Fn fn_;
  bool continues_;
};

inline Ticket make_ticket(const std::string& id, const std::string& title, const std::string& description = {}) {
  Ticket t;
  t.id = id;
  t.product_name = "Flexi";
  t.hardware_unit = "ASIB";
  t.software_build = "SB1";
  t.title = title;
  t.problem_description = description;
  return t;
}

inline FaultAnalysis make_fa(const std::string& id, const std::string& ident, const std::string& rc = "implementation error",
                             const std::string& res = "apply fix") {
  return FaultAnalysis{id, ident, rc, res};
}

inline void link(Corpus& c, const std::string& ticket, const std::string& fa) {
  c.links.push_back({ticket, fa});
}

}  // namespace tdx::test
