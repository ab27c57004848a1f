#include "lexinmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lexinmt::eval {

namespace {

bool match_at(const TokenSeq& hay, size_t pos, const TokenSeq& needle) {
  if (pos + needle.size() > hay.size()) return false;
  for (size_t i = 0; i < needle.size(); ++i)
    if (hay[pos + i] != needle[i]) return false;
  return true;
}

int find_subseq(const TokenSeq& hay, const TokenSeq& needle) {
  if (needle.empty() || needle.size() > hay.size()) return -1;
  for (size_t pos = 0; pos + needle.size() <= hay.size(); ++pos)
    if (match_at(hay, pos, needle)) return static_cast<int>(pos);
  return -1;
}

std::map<std::string, int64_t> token_counts(const TokenSeq& toks) {
  std::map<std::string, int64_t> out;
  for (const auto& t : toks) out[t]++;
  return out;
}

int64_t multiset_intersection(const std::map<std::string, int64_t>& a,
                              const std::map<std::string, int64_t>& b) {
  int64_t total = 0;
  for (const auto& [tok, cnt] : a) {
    auto it = b.find(tok);
    if (it != b.end()) total += std::min(cnt, it->second);
  }
  return total;
}

}  // namespace

void validate_record(const EvalRecord& r) {
  if (r.ref_positions.size() != r.constraints.size())
    fail("EvalRecord: one reference position per constraint required");
  for (size_t i = 0; i < r.constraints.size(); ++i) {
    if (r.constraints[i].empty()) fail("EvalRecord: empty constraint");
    int pos = r.ref_positions[i];
    if (pos < 0) continue;
    if (static_cast<size_t>(pos) + r.constraints[i].size() > r.ref.size() ||
        !match_at(r.ref, static_cast<size_t>(pos), r.constraints[i]))
      fail("EvalRecord: reference position does not match constraint");
  }
}

std::optional<double> exact_match(const std::vector<EvalRecord>& records) {
  int64_t total = 0, matched = 0;
  for (const auto& r : records) {
    validate_record(r);
    for (const auto& c : r.constraints) {
      ++total;
      if (find_subseq(r.hyp, c) >= 0) ++matched;
    }
  }
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(matched) / static_cast<double>(total);
}

std::optional<double> csr(const std::vector<EvalRecord>& records) {
  int64_t total = 0, matched = 0;
  for (const auto& r : records) {
    validate_record(r);
    if (r.constraints.empty()) continue;
    std::map<std::string, int64_t> needed;
    for (const auto& c : r.constraints)
      for (const auto& t : c) {
        needed[t]++;
        ++total;
      }
    matched += multiset_intersection(needed, token_counts(r.hyp));
  }
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(matched) / static_cast<double>(total);
}

std::optional<double> window_overlap(const std::vector<EvalRecord>& records, int n) {
  if (n < 1) fail("window_overlap: window must be >= 1");
  int64_t total = 0;
  double score = 0.0;
  for (const auto& r : records) {
    validate_record(r);
    for (size_t k = 0; k < r.constraints.size(); ++k) {
      ++total;
      const TokenSeq& c = r.constraints[k];
      int hpos = find_subseq(r.hyp, c);
      if (hpos < 0) continue;  // unmatched constraints score 0
      int rpos = r.ref_positions[k];
      if (rpos < 0) {
        int found = find_subseq(r.ref, c);
        if (found < 0) continue;
        rpos = found;
      }
      auto window = [&](const TokenSeq& toks, int begin, int end) {
        std::map<std::string, int64_t> win;
        for (int i = std::max(0, begin - n); i < begin; ++i) win[toks[i]]++;
        for (int i = end; i < std::min<int>(toks.size(), end + n); ++i)
          win[toks[i]]++;
        return win;
      };
      auto hw = window(r.hyp, hpos, hpos + static_cast<int>(c.size()));
      auto rw = window(r.ref, rpos, rpos + static_cast<int>(c.size()));
      int64_t hs = 0, rs = 0;
      for (const auto& [_, v] : hw) hs += v;
      for (const auto& [_, v] : rw) rs += v;
      if (hs == 0 && rs == 0) {
        score += 1.0;  // both windows empty: perfect agreement
        continue;
      }
      score += static_cast<double>(multiset_intersection(hw, rw)) /
               static_cast<double>(std::max(hs, rs));
    }
  }
  if (total == 0) return std::nullopt;
  return 100.0 * score / static_cast<double>(total);
}

double weighted_edit_distance(const TokenSeq& hyp, const TokenSeq& ref,
                              const std::vector<bool>& ref_is_term, double w) {
  const size_t hl = hyp.size(), rl = ref.size();
  if (ref_is_term.size() != rl) fail("weighted_edit_distance: mask size mismatch");
  std::vector<double> prev(rl + 1), cur(rl + 1);
  prev[0] = 0.0;
  for (size_t j = 1; j <= rl; ++j)
    prev[j] = prev[j - 1] + (ref_is_term[j - 1] ? w : 1.0);  // insert ref token
  for (size_t i = 1; i <= hl; ++i) {
    cur[0] = prev[0] + 1.0;  // delete hyp token
    for (size_t j = 1; j <= rl; ++j) {
      double wj = ref_is_term[j - 1] ? w : 1.0;
      double sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0.0 : wj);
      double del = prev[j] + 1.0;
      double ins = cur[j - 1] + wj;
      cur[j] = std::min(sub, std::min(del, ins));
    }
    std::swap(prev, cur);
  }
  return prev[rl];
}

double ter_numerator(const TokenSeq& hyp, const TokenSeq& ref,
                     const std::vector<bool>& ref_is_term, const TerOptions& opts) {
  TokenSeq work = hyp;
  double edits = weighted_edit_distance(work, ref, ref_is_term, opts.term_weight);
  double shifts = 0.0;
  if (!opts.shifts) return edits;

  // Greedy block shifts: repeatedly apply the move that most reduces the
  // remaining edit distance. A candidate block must occur somewhere in the
  // reference. Ties resolve to the first candidate in scan order.
  while (true) {
    double best = edits;
    int bs = -1, bl = 0, bd = 0;
    const int L = static_cast<int>(work.size());
    for (int start = 0; start < L; ++start) {
      int max_len = std::min(opts.max_shift_len, L - start);
      for (int len = 1; len <= max_len; ++len) {
        TokenSeq block(work.begin() + start, work.begin() + start + len);
        if (find_subseq(ref, block) < 0) continue;
        TokenSeq rest = work;
        rest.erase(rest.begin() + start, rest.begin() + start + len);
        for (int dest = 0; dest <= static_cast<int>(rest.size()); ++dest) {
          if (dest == start) continue;
          TokenSeq moved = rest;
          moved.insert(moved.begin() + dest, block.begin(), block.end());
          double d = weighted_edit_distance(moved, ref, ref_is_term,
                                            opts.term_weight);
          if (d < best) {
            best = d;
            bs = start;
            bl = len;
            bd = dest;
          }
        }
      }
    }
    if (bs < 0) break;
    TokenSeq block(work.begin() + bs, work.begin() + bs + bl);
    work.erase(work.begin() + bs, work.begin() + bs + bl);
    work.insert(work.begin() + bd, block.begin(), block.end());
    edits = best;
    shifts += 1.0;
  }
  return edits + shifts;
}

double term_ter(const std::vector<EvalRecord>& records, const TerOptions& opts) {
  double numerator = 0.0;
  int64_t ref_len = 0;
  for (const auto& r : records) {
    validate_record(r);
    if (r.ref.empty()) fail("term_ter: empty reference");
    std::vector<bool> is_term(r.ref.size(), false);
    for (size_t k = 0; k < r.constraints.size(); ++k) {
      int pos = r.ref_positions[k];
      if (pos < 0) pos = find_subseq(r.ref, r.constraints[k]);
      if (pos < 0) continue;
      for (size_t j = 0; j < r.constraints[k].size(); ++j)
        is_term[pos + j] = true;
    }
    numerator += ter_numerator(r.hyp, r.ref, is_term, opts);
    ref_len += static_cast<int64_t>(r.ref.size());
  }
  if (ref_len == 0) fail("term_ter: no reference tokens");
  double ter = numerator / static_cast<double>(ref_len);
  return std::max(0.0, (1.0 - ter) * 100.0);
}

double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  if (hyps.empty()) fail("bleu: empty hypothesis set");
  if (hyps.size() != refs.size()) fail("bleu: hyp/ref count mismatch");

  constexpr int kMaxN = 4;
  std::vector<int64_t> num(kMaxN, 0), den(kMaxN, 0);
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t s = 0; s < hyps.size(); ++s) {
    const TokenSeq& h = hyps[s];
    const TokenSeq& r = refs[s];
    hyp_len += static_cast<int64_t>(h.size());
    ref_len += static_cast<int64_t>(r.size());
    for (int n = 1; n <= kMaxN; ++n) {
      std::map<std::string, int64_t> hn, rn;
      auto grams = [n](const TokenSeq& toks, std::map<std::string, int64_t>& out) {
        for (size_t i = 0; i + n <= toks.size(); ++i) {
          std::string key = toks[i];
          for (int j = 1; j < n; ++j) {
            key += '\x1f';
            key += toks[i + j];
          }
          out[key]++;
        }
      };
      grams(h, hn);
      grams(r, rn);
      for (const auto& [g, c] : hn) {
        den[n - 1] += c;
        auto it = rn.find(g);
        if (it != rn.end()) num[n - 1] += std::min(c, it->second);
      }
    }
  }

  if (den[0] == 0) fail("bleu: empty hypotheses");
  double log_prec = 0.0;
  for (int n = 1; n <= kMaxN; ++n) {
    double p;
    if (n == 1) {
      if (num[0] == 0) return 0.0;
      p = static_cast<double>(num[0]) / static_cast<double>(den[0]);
    } else {
      p = (static_cast<double>(num[n - 1]) + 1.0) /
          (static_cast<double>(den[n - 1]) + 1.0);
    }
    log_prec += std::log(p) / kMaxN;
  }
  double bp = hyp_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) /
                                       static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_prec);
}

DisambigAccuracy disambig_accuracy(const std::vector<int>& predictions,
                                   const std::vector<int>& golds,
                                   const std::vector<int>& candidate_counts) {
  if (predictions.size() != golds.size() ||
      predictions.size() != candidate_counts.size())
    fail("disambig_accuracy: misaligned inputs");
  DisambigAccuracy out;
  if (predictions.empty()) return out;
  int64_t all_hit = 0, amb_total = 0, amb_hit = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    bool hit = predictions[i] == golds[i];
    if (hit) ++all_hit;
    if (candidate_counts[i] >= 2) {
      ++amb_total;
      if (hit) ++amb_hit;
    }
  }
  out.all = 100.0 * static_cast<double>(all_hit) /
            static_cast<double>(predictions.size());
  if (amb_total > 0)
    out.ambiguous =
        100.0 * static_cast<double>(amb_hit) / static_cast<double>(amb_total);
  return out;
}

namespace {

ojson opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

std::string bucket_of(size_t len) {
  if (len >= 4) return "4plus";
  return std::to_string(len);
}

}  // namespace

ojson MetricReport::to_json() const {
  ojson j;
  j["n_records"] = n_records;
  j["n_constraints"] = n_constraints;
  ojson m;
  m["bleu"] = opt_json(bleu_score);
  m["exact_match"] = opt_json(exact_match_pct);
  m["csr"] = opt_json(csr_pct);
  m["window2"] = opt_json(window2_pct);
  m["window3"] = opt_json(window3_pct);
  m["one_minus_term"] = opt_json(one_minus_term_pct);
  if (disambig_all_pct) m["disambig_all"] = *disambig_all_pct;
  if (disambig_ambiguous_pct) m["disambig_ambiguous"] = *disambig_ambiguous_pct;
  j["metrics"] = m;
  ojson bk;
  for (const auto& [name, row] : buckets) {
    ojson b;
    b["constraints"] = row.total;
    b["exact_match"] =
        row.total ? ojson(100.0 * row.exact / static_cast<double>(row.total))
                  : ojson(nullptr);
    b["csr"] = row.csr_total
                   ? ojson(100.0 * row.csr_matched /
                           static_cast<double>(row.csr_total))
                   : ojson(nullptr);
    bk[name] = b;
  }
  j["buckets"] = bk;
  return j;
}

std::string MetricReport::render_table() const {
  std::ostringstream os;
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("   -  ");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.2f", *v);
    return std::string(buf);
  };
  os << "records " << n_records << ", constraints " << n_constraints << "\n";
  os << "BLEU    ExactM  CSR     Win2    Win3    1-TERm\n";
  os << cell(bleu_score) << "  " << cell(exact_match_pct) << "  "
     << cell(csr_pct) << "  " << cell(window2_pct) << "  " << cell(window3_pct)
     << "  " << cell(one_minus_term_pct) << "\n";
  if (disambig_all_pct) {
    os << "disambig all " << cell(disambig_all_pct);
    if (disambig_ambiguous_pct)
      os << "  ambiguous " << cell(disambig_ambiguous_pct);
    os << "\n";
  }
  os << "bucket  count   ExactM  CSR\n";
  for (const auto& [name, row] : buckets) {
    std::optional<double> em, cs;
    if (row.total) em = 100.0 * row.exact / static_cast<double>(row.total);
    if (row.csr_total)
      cs = 100.0 * row.csr_matched / static_cast<double>(row.csr_total);
    os << name << (name.size() < 2 ? "      " : "   ") << row.total << "\t"
       << cell(em) << "  " << cell(cs) << "\n";
  }
  return os.str();
}

MetricReport build_report(const std::vector<EvalRecord>& records,
                          const DisambigAccuracy* disambig) {
  MetricReport rep;
  rep.n_records = static_cast<int64_t>(records.size());
  for (const auto& r : records)
    rep.n_constraints += static_cast<int64_t>(r.constraints.size());

  std::vector<TokenSeq> hyps, refs;
  for (const auto& r : records) {
    hyps.push_back(r.hyp);
    refs.push_back(r.ref);
  }
  rep.bleu_score = records.empty() ? std::nullopt : std::optional(bleu(hyps, refs));
  rep.exact_match_pct = exact_match(records);
  rep.csr_pct = csr(records);
  rep.window2_pct = window_overlap(records, 2);
  rep.window3_pct = window_overlap(records, 3);
  rep.one_minus_term_pct =
      records.empty() ? std::nullopt : std::optional(term_ter(records));
  if (disambig) {
    rep.disambig_all_pct = disambig->all;
    rep.disambig_ambiguous_pct = disambig->ambiguous;
  }

  for (const std::string name : {"1", "2", "3", "4plus"}) rep.buckets[name];
  for (const auto& r : records) {
    for (const auto& c : r.constraints) {
      BucketRow& row = rep.buckets[bucket_of(c.size())];
      row.total++;
      if (find_subseq(r.hyp, c) >= 0) row.exact++;
      std::map<std::string, int64_t> needed;
      for (const auto& t : c) needed[t]++;
      row.csr_total += static_cast<int64_t>(c.size());
      row.csr_matched += multiset_intersection(needed, token_counts(r.hyp));
    }
  }
  return rep;
}

}  // namespace lexinmt::eval
