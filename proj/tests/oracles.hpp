#pragma once

// Independent reference computations used by unit and acceptance tests.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

namespace tdx::oracle {

using Big = boost::multiprecision::cpp_dec_float_50;

/// Symmetric in-batch cross-entropy in 50-digit arithmetic, no max shift.
inline double contrastive_loss(const std::vector<std::vector<double>>& m, double t) {
  const std::size_t b = m.size();
  Big total = 0;
  for (int pass = 0; pass < 2; ++pass) {
    Big sum_rows = 0;
    for (std::size_t r = 0; r < b; ++r) {
      Big denom = 0;
      for (std::size_t c = 0; c < b; ++c) {
        const double v = pass == 0 ? m[r][c] : m[c][r];
        denom += boost::multiprecision::exp(Big(v) / Big(t));
      }
      sum_rows += boost::multiprecision::log(denom) - Big(m[r][r]) / Big(t);
    }
    total += sum_rows / Big(b);
  }
  return static_cast<double>(total / 2);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  Big dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += Big(u[i]) * Big(v[i]);
    nu += Big(u[i]) * Big(u[i]);
    nv += Big(v[i]) * Big(v[i]);
  }
  if (nu == 0 || nv == 0) return 0.0;
  return static_cast<double>(dot / (boost::multiprecision::sqrt(nu) * boost::multiprecision::sqrt(nv)));
}

/// ASCII-only tokenizer: lowercase runs of alphanumerics.
inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : s) {
    if (std::isalnum(ch)) {
      cur += static_cast<char>(std::tolower(ch));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Clipped n-gram overlap count by explicit enumeration.
inline std::size_t clipped_overlap(const std::vector<std::string>& cand, const std::vector<std::string>& ref, int n) {
  std::map<std::vector<std::string>, int> c, r;
  for (std::size_t i = 0; i + n <= cand.size(); ++i) c[{cand.begin() + i, cand.begin() + i + n}]++;
  for (std::size_t i = 0; i + n <= ref.size(); ++i) r[{ref.begin() + i, ref.begin() + i + n}]++;
  std::size_t overlap = 0;
  for (const auto& [g, k] : c) {
    auto it = r.find(g);
    if (it != r.end()) overlap += static_cast<std::size_t>(std::min(k, it->second));
  }
  return overlap;
}

/// LCS length by full dynamic-programming table.
inline std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[a.size()][b.size()];
}

}  // namespace tdx::oracle
