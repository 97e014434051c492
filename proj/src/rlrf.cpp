#include "tdx/rlrf.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tdx/corpus.hpp"
#include "tdx/prompts.hpp"
#include "tdx/text.hpp"

namespace tdx {

CharHistogram char_histogram(std::string_view text) {
  CharHistogram h;
  const auto cps = decode_utf8(text);
  if (cps.empty()) return h;
  for (char32_t c : cps) h[c] += 1.0;
  const double n = static_cast<double>(cps.size());
  for (auto& [_, v] : h) v /= n;
  return h;
}

double pathology_score(std::string_view generated, std::string_view reference, HistogramDistance distance) {
  const auto p = char_histogram(generated);
  const auto q = char_histogram(reference);
  std::set<char32_t> keys;
  for (const auto& [c, _] : p) keys.insert(c);
  for (const auto& [c, _] : q) keys.insert(c);
  double max_diff = 0.0, sum_diff = 0.0;
  for (char32_t c : keys) {
    const auto pi = p.find(c);
    const auto qi = q.find(c);
    const double d = std::abs((pi == p.end() ? 0.0 : pi->second) - (qi == q.end() ? 0.0 : qi->second));
    max_diff = std::max(max_diff, d);
    sum_diff += d;
  }
  return distance == HistogramDistance::max_abs ? max_diff : std::min(1.0, 0.5 * sum_diff);
}

std::string_view provenance_name(Provenance p) { return p == Provenance::score_gap ? "score_gap" : "pathology"; }

namespace {

class SeededDraw {
 public:
  explicit SeededDraw(std::uint64_t seed) : state_(seed) {}
  double uniform() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace

std::vector<PreferenceTriple> preference_triples_for_ticket(const std::string& ticket_id, const std::string& prompt,
                                                            const std::string& groundtruth,
                                                            const std::vector<CandidateReport>& scored,
                                                            const PreferenceOptions& options) {
  if (options.tau < 0.0) throw std::invalid_argument("tau must be >= 0");
  if (!(options.p_groundtruth >= 0.0 && options.p_groundtruth <= 1.0)) {
    throw std::invalid_argument("p_groundtruth must be in [0, 1]");
  }
  SeededDraw draw(hash64(ticket_id, options.seed));
  std::vector<PreferenceTriple> out;
  for (std::size_t a = 0; a < scored.size(); ++a) {
    for (std::size_t b = a + 1; b < scored.size(); ++b) {
      const auto& x = scored[a];
      const auto& y = scored[b];
      const double sx = x.score.value();
      const double sy = y.score.value();
      if (std::abs(sx - sy) <= options.tau) continue;
      const auto& high = sx > sy ? x : y;
      const auto& low = sx > sy ? y : x;
      PreferenceTriple t;
      t.ticket_id = ticket_id;
      t.prompt = prompt;
      t.rejected = low.text;
      t.provenance = Provenance::score_gap;
      t.pair_high_score = *high.score;
      t.pair_low_score = *low.score;
      if (draw.uniform() < options.p_groundtruth) {
        t.chosen = groundtruth;
        t.chosen_source = ChosenSource::groundtruth;
      } else {
        t.chosen = high.text;
        t.chosen_source = ChosenSource::generated;
      }
      if (t.chosen != t.rejected) out.push_back(std::move(t));
    }
  }
  if (options.include_pathology) {
    for (const auto& c : scored) {
      if (pathology_score(c.text, groundtruth) > options.pathology_threshold && c.text != groundtruth) {
        PreferenceTriple t;
        t.ticket_id = ticket_id;
        t.prompt = prompt;
        t.chosen = groundtruth;
        t.rejected = c.text;
        t.provenance = Provenance::pathology;
        t.chosen_source = ChosenSource::groundtruth;
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

std::vector<PreferenceTriple> build_preference_dataset(const Corpus& corpus, const Generator& generator,
                                                       const RankerEnsemble& ensemble,
                                                       const PreferenceOptions& options,
                                                       PreferenceDiagnostics* diagnostics) {
  std::map<std::string, std::string> fault_of;
  for (const auto& link : corpus.links) fault_of[link.ticket_id] = link.fault_analysis_id;
  std::vector<const Ticket*> tickets;
  PreferenceDiagnostics diag;
  for (const auto& [id, t] : corpus.tickets) {
    if (fault_of.contains(id)) {
      tickets.push_back(&t);
    } else {
      diag.skipped_tickets.push_back(id);
    }
  }
  std::vector<std::vector<PreferenceTriple>> per_ticket(tickets.size());
  std::vector<std::size_t> failures(tickets.size(), 0);
  std::vector<std::string> errors(tickets.size());
  const auto n = static_cast<std::int64_t>(tickets.size());
#pragma omp parallel for schedule(dynamic, 4) if (n > 8)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const Ticket& t = *tickets[i];
      const auto groundtruth = fault_analysis_text(corpus.fault_analyses.at(fault_of.at(t.id)));
      auto batch = generate_candidates(generator, t, options.z_grid, hash64(t.id, options.seed));
      failures[i] = batch.failures.size();
      std::vector<std::string> texts;
      for (const auto& c : batch.candidates) texts.push_back(c.text);
      const auto scores = aggregate_report_scores(ensemble, t, texts);
      for (std::size_t j = 0; j < scores.size(); ++j) batch.candidates[j].score = scores[j];
      const auto prompt = prompts::build_fa_prompt(t)[1].content;
      per_ticket[i] = preference_triples_for_ticket(t.id, prompt, groundtruth, batch.candidates, options);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  std::vector<PreferenceTriple> out;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw std::runtime_error("preference building failed for " + tickets[i]->id + ": " + errors[i]);
    diag.generation_failures += failures[i];
    for (auto& t : per_ticket[i]) out.push_back(std::move(t));
  }
  std::stable_sort(out.begin(), out.end(), [](const PreferenceTriple& a, const PreferenceTriple& b) {
    if (a.ticket_id != b.ticket_id) return a.ticket_id < b.ticket_id;
    if (a.provenance != b.provenance) return a.provenance < b.provenance;
    const auto ra = text_digest(a.rejected), rb = text_digest(b.rejected);
    if (ra != rb) return ra < rb;
    return text_digest(a.chosen) < text_digest(b.chosen);
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const PreferenceTriple& a, const PreferenceTriple& b) {
                          return a.ticket_id == b.ticket_id && a.provenance == b.provenance &&
                                 a.chosen == b.chosen && a.rejected == b.rejected;
                        }),
            out.end());
  if (diagnostics) *diagnostics = std::move(diag);
  return out;
}

void export_preferences(const std::vector<PreferenceTriple>& triples, const std::filesystem::path& out) {
  std::vector<nlohmann::json> records;
  records.reserve(triples.size());
  for (const auto& t : triples) {
    records.push_back({{"ticket_id", t.ticket_id},
                       {"prompt", t.prompt},
                       {"chosen", t.chosen},
                       {"rejected", t.rejected},
                       {"provenance", provenance_name(t.provenance)}});
  }
  write_jsonl(out, records);
}

}  // namespace tdx
