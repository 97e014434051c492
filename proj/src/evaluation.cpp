#include "tdx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tdx/prompts.hpp"
#include "tdx/rlrf.hpp"
#include "tdx/text.hpp"

namespace tdx {

namespace {

template <typename Hit>
std::map<std::size_t, double> recall_impl(const std::vector<std::vector<std::string>>& rankings, std::size_t queries,
                                          const std::vector<std::size_t>& ks, Hit&& is_hit) {
  if (rankings.size() != queries) throw std::invalid_argument("recall_at_k: one groundtruth per ranking required");
  std::map<std::size_t, double> out;
  for (auto k : ks) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
      const auto limit = std::min(k, rankings[q].size());
      for (std::size_t r = 0; r < limit; ++r) {
        if (is_hit(q, rankings[q][r])) {
          ++hits;
          break;
        }
      }
    }
    out[k] = rankings.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(rankings.size());
  }
  return out;
}

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<Ngram, std::size_t> counts;
  if (n < 1 || tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t clipped_overlap(const std::map<Ngram, std::size_t>& cand, const std::map<Ngram, std::size_t>& ref) {
  std::size_t overlap = 0;
  for (const auto& [g, c] : cand) {
    if (const auto it = ref.find(g); it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

std::size_t total(const std::map<Ngram, std::size_t>& counts) {
  std::size_t n = 0;
  for (const auto& [_, c] : counts) n += c;
  return n;
}

PrfScore prf(double overlap, double cand_total, double ref_total) {
  PrfScore s;
  s.precision = cand_total > 0 ? overlap / cand_total : 0.0;
  s.recall = ref_total > 0 ? overlap / ref_total : 0.0;
  s.f1 = (s.precision + s.recall) > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::map<std::size_t, double> recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                                          const std::vector<std::string>& groundtruth,
                                          const std::vector<std::size_t>& ks) {
  return recall_impl(rankings, groundtruth.size(), ks,
                     [&](std::size_t q, const std::string& id) { return id == groundtruth[q]; });
}

std::map<std::size_t, double> recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                                          const std::vector<std::set<std::string>>& relevant,
                                          const std::vector<std::size_t>& ks) {
  return recall_impl(rankings, relevant.size(), ks,
                     [&](std::size_t q, const std::string& id) { return relevant[q].contains(id); });
}

PrfScore rouge_n(std::string_view candidate, std::string_view reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be >= 1");
  const auto cand = ngram_counts(tokenize(candidate), n);
  const auto ref = ngram_counts(tokenize(reference), n);
  return prf(static_cast<double>(clipped_overlap(cand, ref)), static_cast<double>(total(cand)),
             static_cast<double>(total(ref)));
}

PrfScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  return prf(static_cast<double>(lcs_length(cand, ref)), static_cast<double>(cand.size()),
             static_cast<double>(ref.size()));
}

double bleu(std::string_view candidate, std::string_view reference, int max_n) {
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty()) return 0.0;
  constexpr double kEpsilon = 1e-9;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cc = ngram_counts(cand, n);
    const auto denom = total(cc);
    if (denom == 0) continue;
    const auto overlap = clipped_overlap(cc, ngram_counts(ref, n));
    const double numer = overlap > 0 ? static_cast<double>(overlap) : kEpsilon;
    log_sum += std::log(numer / static_cast<double>(denom));
    ++orders;
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / orders);
}

double meteor(std::string_view candidate, std::string_view reference, const TokenMatcher& matcher) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  const auto same = [&](const std::string& a, const std::string& b) { return matcher ? matcher(a, b) : a == b; };
  std::vector<bool> used(ref.size(), false);
  std::vector<std::ptrdiff_t> alignment(cand.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && same(cand[i], ref[j])) {
        used[j] = true;
        alignment[i] = static_cast<std::ptrdiff_t>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  // Chunks: maximal runs of matched candidate tokens mapping to adjacent reference positions.
  std::size_t chunks = 0;
  std::ptrdiff_t prev = -2;
  bool in_run = false;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (alignment[i] < 0) {
      in_run = false;
      continue;
    }
    if (!in_run || alignment[i] != prev + 1) ++chunks;
    in_run = true;
    prev = alignment[i];
  }
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
  return f_mean * (1.0 - penalty);
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels)
    : labels_(std::move(labels)), counts_(labels_.size(), std::vector<std::size_t>(labels_.size(), 0)) {}

ConfusionMatrix ConfusionMatrix::from_counts(std::vector<std::string> labels, std::vector<std::vector<std::size_t>> counts) {
  if (counts.size() != labels.size()) throw std::invalid_argument("confusion matrix must be square");
  for (const auto& row : counts) {
    if (row.size() != labels.size()) throw std::invalid_argument("confusion matrix must be square");
  }
  ConfusionMatrix cm(std::move(labels));
  cm.counts_ = std::move(counts);
  return cm;
}

std::size_t ConfusionMatrix::index_of(const std::string& label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw std::invalid_argument("label not in confusion matrix: " + label);
  return static_cast<std::size_t>(it - labels_.begin());
}

void ConfusionMatrix::add(const std::string& actual, const std::string& predicted, std::size_t count) {
  counts_[index_of(actual)][index_of(predicted)] += count;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts_) {
    for (auto c : row) n += c;
  }
  return n;
}

ClassificationScores macro_prf(const ConfusionMatrix& cm) {
  const auto k = cm.labels().size();
  if (k == 0) throw std::invalid_argument("macro_prf: empty confusion matrix");
  ClassificationScores s;
  std::size_t trace = 0;
  for (std::size_t l = 0; l < k; ++l) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += cm.at(o, l);
      actual += cm.at(l, o);
    }
    const double tp = static_cast<double>(cm.at(l, l));
    trace += cm.at(l, l);
    const double p = predicted ? tp / static_cast<double>(predicted) : 0.0;
    const double r = actual ? tp / static_cast<double>(actual) : 0.0;
    s.macro_precision += p;
    s.macro_recall += r;
    s.macro_f1 += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  s.macro_precision /= static_cast<double>(k);
  s.macro_recall /= static_cast<double>(k);
  s.macro_f1 /= static_cast<double>(k);
  const auto n = cm.total();
  s.accuracy = n ? static_cast<double>(trace) / static_cast<double>(n) : 0.0;
  return s;
}

double rankers_score(const RankerEnsemble& ensemble, const std::vector<std::pair<Ticket, std::string>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("rankers_score: no pairs");
  double sum = 0.0;
  for (const auto& [ticket, report] : pairs) sum += aggregate_report_score(ensemble, ticket, report);
  return sum / static_cast<double>(pairs.size());
}

double pathology_ratio(const std::vector<std::pair<std::string, std::string>>& pairs, double threshold) {
  if (pairs.empty()) return 0.0;
  std::size_t flagged = 0;
  for (const auto& [generated, groundtruth] : pairs) flagged += pathology_score(generated, groundtruth) > threshold;
  return static_cast<double>(flagged) / static_cast<double>(pairs.size());
}

namespace {

constexpr const char* kCriteria[] = {"accuracy", "completeness", "relevance", "clarity"};

}  // namespace

std::vector<ChatMessage> build_judge_prompt(const Ticket& ticket, const std::string& groundtruth,
                                            const std::string& predicted) {
  std::string user(prompts::kJudgeInstruction);
  user +=
      "\n\nCriteria (rate each from 0 (poor) to 5 (excellent) and justify the score):\n"
      "- accuracy: To what extent is the predicted fault analysis semantically aligned with the groundtruth fault "
      "analysis?\n"
      "- completeness: Does the predicted fault analysis capture all key aspects of the groundtruth fault analysis "
      "(main cause, contributing factors, resolution hints)?\n"
      "- relevance: Does the predicted fault analysis stay on the topic of the provided ticket and avoid irrelevant "
      "details?\n"
      "- clarity: Is the reasoning of the predicted fault analysis clear and well-structured?\n\n";
  user += "Ticket = " + ticket_text(ticket) + "\n\n";
  user += "Groundtruth Fault Analysis = " + groundtruth + "\n\n";
  user += "Predicted Fault Analysis = " + predicted + "\n\n";
  user +=
      "Answer with a single JSON object of the form "
      R"({"accuracy": {"score": <0-5>, "justification": "..."}, "completeness": {...}, "relevance": {...}, )"
      R"("clarity": {...}})";
  return {{Role::system, "You are an impartial expert reviewer of telecom trouble-ticket fault analyses."},
          {Role::user, std::move(user)}};
}

JudgeVerdict parse_judge_verdict(const std::string& raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw JudgeParseError("judge output contains no JSON object", raw);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception& e) {
    throw JudgeParseError(std::string("judge output is not valid JSON: ") + e.what(), raw);
  }
  JudgeVerdict v;
  CriterionVerdict* fields[] = {&v.accuracy, &v.completeness, &v.relevance, &v.clarity};
  for (int i = 0; i < 4; ++i) {
    const std::string key = kCriteria[i];
    if (!j.is_object() || !j.contains(key)) throw JudgeParseError("judge output missing criterion: " + key, raw);
    const auto& c = j[key];
    if (!c.is_object() || !c.contains("score") || !c["score"].is_number_integer()) {
      throw JudgeParseError("judge criterion " + key + " lacks an integer score", raw);
    }
    const auto score = c["score"].get<long long>();
    if (score < 0 || score > 5) {
      throw JudgeParseError("judge score for " + key + " out of range [0, 5]: " + std::to_string(score), raw);
    }
    fields[i]->score = static_cast<int>(score);
    if (c.contains("justification")) {
      if (!c["justification"].is_string()) throw JudgeParseError("justification for " + key + " is not a string", raw);
      fields[i]->justification = c["justification"].get<std::string>();
    }
  }
  return v;
}

JudgeVerdict judge(const Generator& generator, const Ticket& ticket, const std::string& groundtruth,
                   const std::string& predicted, std::uint64_t seed) {
  GenerateRequest request{build_judge_prompt(ticket, groundtruth, predicted), {}, std::nullopt};
  request.params.seed = seed;
  request.params.max_tokens = 1024;
  return parse_judge_verdict(generate(generator, request));
}

nlohmann::json to_json(const JudgeVerdict& v) {
  nlohmann::json j;
  const CriterionVerdict* fields[] = {&v.accuracy, &v.completeness, &v.relevance, &v.clarity};
  for (int i = 0; i < 4; ++i) j[kCriteria[i]] = {{"score", fields[i]->score}, {"justification", fields[i]->justification}};
  return j;
}

}  // namespace tdx
