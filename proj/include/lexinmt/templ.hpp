#pragma once

#include <string>
#include <vector>

#include "lexinmt/corpus.hpp"

namespace lexinmt::templ {

using corpus::AnnotatedPair;
using corpus::Vocabulary;

// Slotted sentence pair: constraint spans replaced by <C1>..<C3> in source
// order; the target carries the same tags at the positions where each source
// constraint's translation appears, so tag order in the target encodes the
// alignment permutation.
struct TemplatePair {
  TokenSeq src_t;
  TokenSeq tgt_t;
  std::vector<int> align;            // target slot order: source indices, 1-based
  std::vector<TokenSeq> payloads;    // gold target constraint per source slot
};

// Requires gold annotations; errors when a gold constraint cannot be located
// in the target or when located occurrences overlap.
TemplatePair extract_template(const AnnotatedPair& pair);

struct FillResult {
  TokenSeq tokens;
  std::vector<std::string> flags;
};

// Replaces each expected slot tag by its payload. Total by construction:
// duplicate tags beyond the first are dropped, missing tags get their payload
// appended at the end, and either case is flagged.
FillResult fill_template(const TokenSeq& decoded,
                         const std::vector<TokenSeq>& payloads);

// Templated corpus for NMT training: src_t -> tgt_t as plain pairs.
std::vector<AnnotatedPair> templated_pairs(const std::vector<AnnotatedPair>& pairs);

// JSONL cache: {"src_t": str, "tgt_t": str, "align": [int], "payloads": [str]}
std::string templates_to_jsonl(const std::vector<TemplatePair>& tps);
std::vector<TemplatePair> read_templates_jsonl(const std::string& path);
void write_templates_jsonl(const std::string& path,
                           const std::vector<TemplatePair>& tps);

}  // namespace lexinmt::templ
