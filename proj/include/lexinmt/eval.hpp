#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lexinmt/common.hpp"

#include "json.hpp"

namespace lexinmt::eval {

using ojson = nlohmann::ordered_json;

// One scored sentence: hypothesis vs reference plus the required target
// constraints, each with its position in the reference (for the window and
// edit-distance metrics).
struct EvalRecord {
  TokenSeq hyp;
  TokenSeq ref;
  std::vector<TokenSeq> constraints;
  std::vector<int> ref_positions;  // one per constraint, -1 if unknown
};

void validate_record(const EvalRecord& r);

// Share of required constraints whose full token sequence appears
// contiguously in the hypothesis. Empty record set -> nullopt.
std::optional<double> exact_match(const std::vector<EvalRecord>& records);

// Token-level recall with multiplicity (copy success rate): order-free, each
// hypothesis token satisfies at most one required token occurrence.
std::optional<double> csr(const std::vector<EvalRecord>& records);

// Context-position accuracy: for constraints exactly matched in the
// hypothesis, multiset overlap of the up-to-n-token windows around the
// occurrence in hypothesis and reference, over max window size.
std::optional<double> window_overlap(const std::vector<EvalRecord>& records, int n);

struct TerOptions {
  double term_weight = 2.0;  // cost of edits touching reference constraint tokens
  bool shifts = true;
  int max_shift_len = 10;
};

// (1 - TERm) * 100, floored at 0. TERm = (weighted edits + shifts) / total
// reference length, corpus level.
double term_ter(const std::vector<EvalRecord>& records, const TerOptions& opts = {});

// Weighted word edit distance of one record (exposed for tests).
double weighted_edit_distance(const TokenSeq& hyp, const TokenSeq& ref,
                              const std::vector<bool>& ref_is_term, double w);
// Greedy-shift TER numerator (weighted edits + shifts) for one record.
double ter_numerator(const TokenSeq& hyp, const TokenSeq& ref,
                     const std::vector<bool>& ref_is_term, const TerOptions& opts);

// Corpus BLEU-4, case-sensitive, whitespace tokens, add-one smoothing on the
// n>1 precisions, standard brevity penalty. Scores in [0,100].
double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs);

struct DisambigAccuracy {
  std::optional<double> all;
  std::optional<double> ambiguous;  // instances with >= 2 candidates only
};
DisambigAccuracy disambig_accuracy(const std::vector<int>& predictions,
                                   const std::vector<int>& golds,
                                   const std::vector<int>& candidate_counts);

struct BucketRow {
  int64_t total = 0;
  int64_t exact = 0;
  int64_t csr_matched = 0;
  int64_t csr_total = 0;
};

struct MetricReport {
  std::optional<double> bleu_score;
  std::optional<double> exact_match_pct;
  std::optional<double> csr_pct;
  std::optional<double> window2_pct;
  std::optional<double> window3_pct;
  std::optional<double> one_minus_term_pct;
  std::optional<double> disambig_all_pct;
  std::optional<double> disambig_ambiguous_pct;
  std::map<std::string, BucketRow> buckets;  // "1","2","3","4plus"
  int64_t n_records = 0;
  int64_t n_constraints = 0;

  ojson to_json() const;
  std::string render_table() const;
};

MetricReport build_report(const std::vector<EvalRecord>& records,
                          const DisambigAccuracy* disambig = nullptr);

}  // namespace lexinmt::eval
