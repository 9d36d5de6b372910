#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

namespace ffm::metrics {

struct AlignmentScoring {
  double match = 1.0;
  double mismatch = 0.0;
  double gap = 0.0;
  bool normalize = true;  // divide by max(len_a, len_b)
};

inline void to_json(nlohmann::json& j, const AlignmentScoring& s) {
  j = {{"match", s.match}, {"mismatch", s.mismatch}, {"gap", s.gap}, {"normalize", s.normalize}};
}

inline void from_json(const nlohmann::json& j, AlignmentScoring& s) {
  s.match = j.value("match", s.match);
  s.mismatch = j.value("mismatch", s.mismatch);
  s.gap = j.value("gap", s.gap);
  s.normalize = j.value("normalize", s.normalize);
}

/// Global (Needleman-Wunsch) alignment score. Two empty sequences score 1.
template <typename Token>
double nw_align(std::span<const Token> a, std::span<const Token> b, const AlignmentScoring& s = {}) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<double> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = s.gap * static_cast<double>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = s.gap * static_cast<double>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const double diag = prev[j - 1] + (a[i - 1] == b[j - 1] ? s.match : s.mismatch);
      cur[j] = std::max({diag, prev[j] + s.gap, cur[j - 1] + s.gap});
    }
    std::swap(prev, cur);
  }
  const double score = prev[m];
  return s.normalize ? score / static_cast<double>(std::max(n, m)) : score;
}

template <typename Token>
double nw_align(const std::vector<Token>& a, const std::vector<Token>& b, const AlignmentScoring& s = {}) {
  return nw_align<Token>(std::span<const Token>(a), std::span<const Token>(b), s);
}

}  // namespace ffm::metrics
