#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tdx/backends.hpp"
#include "tdx/retrieval.hpp"

namespace tdx {

/// k -> fraction of queries whose groundtruth id is among the first k.
std::map<std::size_t, double> recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                                          const std::vector<std::string>& groundtruth,
                                          const std::vector<std::size_t>& ks);
/// Any-of variant: a query hits when any of its relevant ids is in the top k.
std::map<std::size_t, double> recall_at_k(const std::vector<std::vector<std::string>>& rankings,
                                          const std::vector<std::set<std::string>>& relevant,
                                          const std::vector<std::size_t>& ks);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clipped n-gram overlap over corpus tokens.
PrfScore rouge_n(std::string_view candidate, std::string_view reference, int n);
/// Longest-common-subsequence overlap.
PrfScore rouge_l(std::string_view candidate, std::string_view reference);

/// Sentence-level BLEU with 1e-9 numerator smoothing and brevity penalty.
/// Orders with no candidate n-grams are left out of the geometric mean.
double bleu(std::string_view candidate, std::string_view reference, int max_n = 4);

/// Token matcher used by METEOR's alignment; exact match by default.
using TokenMatcher = std::function<bool(const std::string&, const std::string&)>;

/// Exact-match unigram METEOR: F_mean = 10PR / (R + 9P), fragmentation
/// penalty 0.5 (chunks / matches)^3.
double meteor(std::string_view candidate, std::string_view reference, const TokenMatcher& matcher = {});

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> labels);

  void add(const std::string& actual, const std::string& predicted, std::size_t count = 1);
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t at(std::size_t actual, std::size_t predicted) const { return counts_[actual][predicted]; }
  std::size_t total() const;
  const std::vector<std::vector<std::size_t>>& counts() const { return counts_; }

  static ConfusionMatrix from_counts(std::vector<std::string> labels, std::vector<std::vector<std::size_t>> counts);

 private:
  std::size_t index_of(const std::string& label) const;

  std::vector<std::string> labels_;
  std::vector<std::vector<std::size_t>> counts_;
};

struct ClassificationScores {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

ClassificationScores macro_prf(const ConfusionMatrix& cm);

/// Mean aggregate report score over (ticket, report text) pairs.
double rankers_score(const RankerEnsemble& ensemble, const std::vector<std::pair<Ticket, std::string>>& pairs);

/// Fraction of (generated, groundtruth) pairs whose pathology score exceeds th.
double pathology_ratio(const std::vector<std::pair<std::string, std::string>>& pairs, double threshold = 0.07);

struct CriterionVerdict {
  int score = 0;
  std::string justification;
};

struct JudgeVerdict {
  CriterionVerdict accuracy;
  CriterionVerdict completeness;
  CriterionVerdict relevance;
  CriterionVerdict clarity;
};

class JudgeParseError : public std::runtime_error {
 public:
  JudgeParseError(const std::string& what, std::string raw) : std::runtime_error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

std::vector<ChatMessage> build_judge_prompt(const Ticket& ticket, const std::string& groundtruth,
                                            const std::string& predicted);
/// Strict parse: every criterion present with an integer score in [0, 5].
JudgeVerdict parse_judge_verdict(const std::string& raw);
JudgeVerdict judge(const Generator& generator, const Ticket& ticket, const std::string& groundtruth,
                   const std::string& predicted, std::uint64_t seed = 0);

nlohmann::json to_json(const JudgeVerdict& v);

}  // namespace tdx
