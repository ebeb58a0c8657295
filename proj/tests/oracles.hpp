#pragma once

// Reference implementations written independently of the library, used to
// check its metrics. They favour obviousness over speed.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ontoforge::oracle {

using Tokens = std::vector<std::string>;

/// Full (m+1) x (n+1) LCS table.
inline std::size_t lcs(const Tokens& a, const Tokens& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1
                                     : (t[i - 1][j] > t[i][j - 1] ? t[i - 1][j] : t[i][j - 1]);
    }
  }
  return t[a.size()][b.size()];
}

inline double rouge_l(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  double l = static_cast<double>(lcs(cand, ref));
  if (l == 0.0) return 0.0;
  double p = l / static_cast<double>(cand.size());
  double r = l / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

inline std::vector<Tokens> all_ngrams(const Tokens& s, std::size_t n) {
  std::vector<Tokens> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) out.emplace_back(s.begin() + i, s.begin() + i + n);
  return out;
}

inline std::size_t occurrences(const std::vector<Tokens>& grams, const Tokens& g) {
  std::size_t c = 0;
  for (const auto& x : grams) c += (x == g);
  return c;
}

/// Modified n-gram precision by exhaustive counting: each distinct candidate
/// n-gram contributes min(count in candidate, count in reference).
inline double precision(const Tokens& cand, const Tokens& ref, std::size_t n) {
  auto cg = all_ngrams(cand, n);
  auto rg = all_ngrams(ref, n);
  if (cg.empty()) return 0.0;
  std::vector<Tokens> seen;
  std::size_t clipped = 0;
  for (const auto& g : cg) {
    if (occurrences(seen, g)) continue;
    seen.push_back(g);
    std::size_t c = occurrences(cg, g), r = occurrences(rg, g);
    clipped += c < r ? c : r;
  }
  return static_cast<double>(clipped) / static_cast<double>(cg.size());
}

inline double bleu_4(const Tokens& cand, const Tokens& ref, double eps = 1e-9) {
  if (cand.empty()) return 0.0;
  double prod = 1.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double p = precision(cand, ref, n);
    prod *= p == 0.0 ? eps : p;
  }
  double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::pow(prod, 0.25);
}

/// 64-bit FNV-1a, as used by the mock embedding.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

/// The mock embedding rule over an already-tokenized text.
inline std::vector<double> mock_embedding(const Tokens& tokens, std::size_t dim = 16) {
  std::vector<double> v(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (const auto& t : tokens) {
      auto h = fnv1a(t + '\x1f' + std::to_string(i));
      v[i] += static_cast<double>(h >> 11) / 9007199254740992.0 * 2.0 - 1.0;
    }
    v[i] /= static_cast<double>(tokens.size());
  }
  return v;
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    a += u[i] * u[i];
    b += v[i] * v[i];
  }
  return dot / (std::sqrt(a) * std::sqrt(b));
}

}  // namespace ontoforge::oracle
