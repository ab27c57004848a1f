#pragma once

// Brute-force reference implementations for the metric suite. Written
// independently of src/eval.cpp on purpose: different algorithms and data
// structures wherever possible, favoring obviousness over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lexinmt/eval.hpp"

namespace lexinmt::oracles {

using eval::EvalRecord;

// position-by-position scan
inline bool contains_contiguous(const TokenSeq& hay, const TokenSeq& needle) {
  for (size_t start = 0; start + needle.size() <= hay.size(); ++start) {
    size_t k = 0;
    while (k < needle.size() && hay[start + k] == needle[k]) ++k;
    if (k == needle.size()) return true;
  }
  return false;
}

inline double oracle_exact_match(const std::vector<EvalRecord>& records) {
  long total = 0, hit = 0;
  for (const auto& r : records)
    for (const auto& c : r.constraints) {
      ++total;
      if (contains_contiguous(r.hyp, c)) ++hit;
    }
  return 100.0 * hit / total;
}

// Maximum bipartite matching between constraint-token instances and
// hypothesis-token instances of equal surface, via augmenting paths.
inline double oracle_csr(const std::vector<EvalRecord>& records) {
  long total = 0, matched = 0;
  for (const auto& r : records) {
    std::vector<std::string> left;
    for (const auto& c : r.constraints)
      for (const auto& t : c) left.push_back(t);
    total += static_cast<long>(left.size());

    std::vector<int> match_right(r.hyp.size(), -1);
    std::function<bool(size_t, std::vector<bool>&)> augment =
        [&](size_t li, std::vector<bool>& seen) {
          for (size_t ri = 0; ri < r.hyp.size(); ++ri) {
            if (seen[ri] || r.hyp[ri] != left[li]) continue;
            seen[ri] = true;
            if (match_right[ri] < 0 ||
                augment(static_cast<size_t>(match_right[ri]), seen)) {
              match_right[ri] = static_cast<int>(li);
              return true;
            }
          }
          return false;
        };
    for (size_t li = 0; li < left.size(); ++li) {
      std::vector<bool> seen(r.hyp.size(), false);
      if (augment(li, seen)) ++matched;
    }
  }
  return 100.0 * matched / total;
}

inline double oracle_window_overlap(const std::vector<EvalRecord>& records, int n) {
  long total = 0;
  double sum = 0.0;
  for (const auto& r : records) {
    for (size_t k = 0; k < r.constraints.size(); ++k) {
      ++total;
      const TokenSeq& c = r.constraints[k];
      int hpos = -1;
      for (size_t s = 0; s + c.size() <= r.hyp.size() && hpos < 0; ++s) {
        size_t q = 0;
        while (q < c.size() && r.hyp[s + q] == c[q]) ++q;
        if (q == c.size()) hpos = static_cast<int>(s);
      }
      if (hpos < 0) continue;
      int rpos = r.ref_positions[k];
      if (rpos < 0) {
        for (size_t s = 0; s + c.size() <= r.ref.size() && rpos < 0; ++s) {
          size_t q = 0;
          while (q < c.size() && r.ref[s + q] == c[q]) ++q;
          if (q == c.size()) rpos = static_cast<int>(s);
        }
        if (rpos < 0) continue;
      }
      auto collect = [&](const TokenSeq& toks, int begin, int end) {
        std::vector<std::string> out;
        for (int i = begin - n; i < begin; ++i)
          if (i >= 0) out.push_back(toks[i]);
        for (int i = end; i < end + n; ++i)
          if (i < static_cast<int>(toks.size())) out.push_back(toks[i]);
        return out;
      };
      auto hw = collect(r.hyp, hpos, hpos + static_cast<int>(c.size()));
      auto rw = collect(r.ref, rpos, rpos + static_cast<int>(c.size()));
      if (hw.empty() && rw.empty()) {
        sum += 1.0;
        continue;
      }
      // multiset intersection by repeated removal
      std::vector<std::string> rem = rw;
      long inter = 0;
      for (const auto& t : hw) {
        auto it = std::find(rem.begin(), rem.end(), t);
        if (it != rem.end()) {
          rem.erase(it);
          ++inter;
        }
      }
      sum += static_cast<double>(inter) /
             static_cast<double>(std::max(hw.size(), rw.size()));
    }
  }
  return 100.0 * sum / total;
}

// plain memoized recursion over (i, j)
inline double oracle_edit_distance(const TokenSeq& hyp, const TokenSeq& ref,
                                   const std::vector<bool>& is_term, double w) {
  std::map<std::pair<size_t, size_t>, double> memo;
  std::function<double(size_t, size_t)> go = [&](size_t i, size_t j) -> double {
    if (i == hyp.size() && j == ref.size()) return 0.0;
    auto key = std::make_pair(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    double best = 1e18;
    if (i < hyp.size()) best = std::min(best, go(i + 1, j) + 1.0);  // delete
    if (j < ref.size()) {
      double wj = is_term[j] ? w : 1.0;
      best = std::min(best, go(i, j + 1) + wj);  // insert
      if (i < hyp.size())
        best = std::min(best, go(i + 1, j + 1) + (hyp[i] == ref[j] ? 0.0 : wj));
    }
    memo[key] = best;
    return best;
  };
  return go(0, 0);
}

inline double oracle_ter_numerator(const TokenSeq& hyp, const TokenSeq& ref,
                                   const std::vector<bool>& is_term, double w,
                                   int max_shift_len = 10) {
  TokenSeq cur = hyp;
  double edits = oracle_edit_distance(cur, ref, is_term, w);
  double shifts = 0.0;
  while (true) {
    double best = edits;
    TokenSeq best_seq;
    const int L = static_cast<int>(cur.size());
    for (int s = 0; s < L; ++s)
      for (int len = 1; len <= std::min(max_shift_len, L - s); ++len) {
        TokenSeq block(cur.begin() + s, cur.begin() + s + len);
        if (!contains_contiguous(ref, block)) continue;
        TokenSeq rest = cur;
        rest.erase(rest.begin() + s, rest.begin() + s + len);
        for (int d = 0; d <= static_cast<int>(rest.size()); ++d) {
          if (d == s) continue;
          TokenSeq moved = rest;
          moved.insert(moved.begin() + d, block.begin(), block.end());
          double e = oracle_edit_distance(moved, ref, is_term, w);
          if (e < best) {
            best = e;
            best_seq = moved;
          }
        }
      }
    if (best >= edits) break;
    cur = best_seq;
    edits = best;
    shifts += 1.0;
  }
  return edits + shifts;
}

inline double oracle_term_ter(const std::vector<EvalRecord>& records, double w,
                              bool shifts = true) {
  double numerator = 0.0;
  long ref_len = 0;
  for (const auto& r : records) {
    std::vector<bool> is_term(r.ref.size(), false);
    for (size_t k = 0; k < r.constraints.size(); ++k) {
      int pos = r.ref_positions[k];
      if (pos < 0) {
        // locate the constraint in the reference, leftmost
        for (size_t s = 0; s + r.constraints[k].size() <= r.ref.size(); ++s) {
          size_t q = 0;
          while (q < r.constraints[k].size() &&
                 r.ref[s + q] == r.constraints[k][q])
            ++q;
          if (q == r.constraints[k].size()) {
            pos = static_cast<int>(s);
            break;
          }
        }
      }
      if (pos < 0) continue;
      for (size_t j = 0; j < r.constraints[k].size(); ++j) is_term[pos + j] = true;
    }
    numerator += shifts ? oracle_ter_numerator(r.hyp, r.ref, is_term, w)
                        : oracle_edit_distance(r.hyp, r.ref, is_term, w);
    ref_len += static_cast<long>(r.ref.size());
  }
  return std::max(0.0, (1.0 - numerator / ref_len) * 100.0);
}

inline double oracle_bleu(const std::vector<TokenSeq>& hyps,
                          const std::vector<TokenSeq>& refs) {
  long hyp_len = 0, ref_len = 0;
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    long clipped = 0, total = 0;
    for (size_t s = 0; s < hyps.size(); ++s) {
      std::map<std::vector<std::string>, long> hyp_grams, ref_grams;
      for (size_t i = 0; i + n <= hyps[s].size(); ++i)
        hyp_grams[{hyps[s].begin() + i, hyps[s].begin() + i + n}]++;
      for (size_t i = 0; i + n <= refs[s].size(); ++i)
        ref_grams[{refs[s].begin() + i, refs[s].begin() + i + n}]++;
      for (const auto& [g, c] : hyp_grams) {
        total += c;
        auto it = ref_grams.find(g);
        if (it != ref_grams.end()) clipped += std::min(c, it->second);
      }
    }
    double p;
    if (n == 1) {
      if (clipped == 0) return 0.0;
      p = static_cast<double>(clipped) / total;
    } else {
      p = (clipped + 1.0) / (total + 1.0);
    }
    log_sum += 0.25 * std::log(p);
  }
  for (size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += static_cast<long>(hyps[s].size());
    ref_len += static_cast<long>(refs[s].size());
  }
  double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / hyp_len);
  return 100.0 * bp * std::exp(log_sum);
}

}  // namespace lexinmt::oracles
