#include "tdx/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>

namespace tdx {
namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ver", "tas", "rin", "qu", "zo", "pel", "dra",
                                      "nu", "sek", "fa", "gor", "bi", "xen", "ul", "tro", "wi", "ham"};
constexpr const char* kNoise[] = {
    "alarm",    "cell",     "link",      "restart", "traffic", "throughput", "latency", "carrier", "board",
    "module",   "counter",  "interface", "radio",   "backhaul", "sync",      "clock",   "power",   "fan",
    "sector",   "antenna",  "handover",  "drop",    "kpi",     "degradation", "outage", "site",    "commissioning",
    "upgrade",  "rollback", "license",   "port",    "fiber",   "optical",   "timeout",  "crash",   "reboot",
    "memory",   "cpu",      "load",      "queue",   "packet",  "loss",      "jitter",   "vswr",    "temperature",
    "firmware", "patch",    "parameter", "neighbor", "paging", "bearer",    "session", "attach",  "detach"};
constexpr const char* kProducts[] = {"AirScale BTS", "Flexi Multiradio", "Cloud RAN Controller", "Core Packet Gateway",
                                     "Microwave Transport"};
constexpr const char* kUnits[] = {"ABIA", "ASIB", "FSMF", "AHEGA", "FXEB", "ABIO", "AMIA"};
constexpr const char* kRootCauses[] = {"implementation error", "configuration error", "hardware fault",
                                       "third party issue",    "documentation gap",   "specification change",
                                       "environment issue",    "duplicate report",    "not reproducible",
                                       "design limitation"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  template <typename T, std::size_t N>
  const T& pick(const T (&arr)[N]) {
    return arr[below(N)];
  }

 private:
  std::mt19937_64 engine_;
};

std::string pseudo_word(Rng& rng) {
  std::string w;
  const auto parts = 2 + rng.below(2);
  for (std::size_t i = 0; i < parts; ++i) w += rng.pick(kSyllables);
  return w;
}

std::string join(const std::vector<std::string>& words, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

std::vector<std::string> sample(Rng& rng, const std::vector<std::string>& from, std::size_t n) {
  std::vector<std::string> pool = from;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n && !pool.empty(); ++i) {
    const auto j = rng.below(pool.size());
    out.push_back(pool[j]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return out;
}

std::vector<std::string> noise(Rng& rng, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(rng.pick(kNoise));
  return out;
}

std::string padded(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%05zu", prefix, i);
  return buf;
}

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticOptions& options) {
  if (options.faults == 0 || options.tickets < options.faults) {
    throw std::invalid_argument("synthetic corpus needs faults >= 1 and tickets >= faults");
  }
  Rng rng(options.seed);
  Corpus corpus;
  corpus.root_cause_labels.assign(std::begin(kRootCauses), std::end(kRootCauses));
  const auto& teams = corpus.label_set.labels();

  struct Profile {
    std::vector<std::string> signature;
    std::string product, unit, team;
  };
  std::vector<Profile> profiles;
  std::set<std::string> used_words;
  for (std::size_t f = 0; f < options.faults; ++f) {
    Profile p;
    while (p.signature.size() < options.signature_tokens) {
      auto w = pseudo_word(rng);
      if (used_words.insert(w).second) p.signature.push_back(std::move(w));
    }
    p.product = rng.pick(kProducts);
    p.unit = rng.pick(kUnits);
    p.team = rng.uniform() < 0.05 ? corpus.label_set.catch_all() : teams[rng.below(teams.size() - 1)];

    FaultAnalysis fa;
    fa.id = padded("FA", f);
    fa.root_cause = rng.pick(kRootCauses);
    if (rng.uniform() < options.uninformative_ratio) {
      fa.identification = "The issue was analyzed by the team and the problem was confirmed.";
      fa.resolution = "No further action is required from the team.";
    } else {
      fa.identification = "During the investigation of the " + p.unit + " unit we observed " +
                          join(p.signature) + " together with " + join(noise(rng, 4)) + " in the collected logs.";
      fa.resolution = "Apply the correction for " + p.signature[0] + " and " + p.signature[1] +
                      " in the next maintenance build, then verify " + join(noise(rng, 2)) + ".";
    }
    corpus.fault_analyses.emplace(fa.id, fa);
    profiles.push_back(std::move(p));
  }

  for (std::size_t t = 0; t < options.tickets; ++t) {
    const std::size_t f = t < options.faults ? t : rng.below(options.faults);
    const auto& p = profiles[f];
    Ticket ticket;
    ticket.id = padded("TK", t);
    ticket.product_name = p.product;
    ticket.hardware_unit = p.unit;
    ticket.software_build = "SBTS" + std::to_string(20 + rng.below(5)) + "R" + std::to_string(1 + rng.below(3)) +
                            "_" + std::to_string(1000 + rng.below(9000));
    const auto sig = sample(rng, p.signature, options.signature_per_ticket);
    ticket.title = p.product + " " + sig[0] + " " + rng.pick(kNoise) + " failure";
    ticket.problem_description = "After the latest change the site reports " + join(sig) + " with " +
                                 join(noise(rng, options.noise_tokens)) + ".";
    if (rng.uniform() < options.team_marker_ratio) ticket.problem_description += " team: " + p.team;
    const auto snippets = 1 + rng.below(3);
    for (std::size_t s = 0; s < snippets; ++s) {
      ticket.log_snippets.push_back("ERR " + p.unit + " " + sig[s % sig.size()] + " " + rng.pick(kNoise) + " code=0x" +
                                    std::to_string(100 + rng.below(900)));
    }
    corpus.tickets.emplace(ticket.id, ticket);
    corpus.links.push_back({ticket.id, padded("FA", f)});
    corpus.team_labels.emplace(ticket.id, TeamLabel{p.team});
  }
  std::sort(corpus.links.begin(), corpus.links.end());
  corpus.validate();
  return corpus;
}

}  // namespace tdx
