#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lexinmt/common.hpp"

namespace lexinmt::corpus {

// Dictionary from a source lexicon (token sequence) to its candidate target
// translations. Candidate order is the file/insertion order so candidate
// indices stay reproducible.
class ConstraintInventory {
 public:
  struct Entry {
    TokenSeq lexicon;
    std::vector<TokenSeq> candidates;
  };

  // Appends (deduplicating) a candidate for the lexicon; creates the entry on
  // first sight. Empty lexicons or candidates are rejected.
  void add(const TokenSeq& lexicon, const TokenSeq& candidate);

  const std::vector<TokenSeq>* find(const TokenSeq& lexicon) const;
  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
  std::map<TokenSeq, size_t> index_;
};

struct ConstraintInstance {
  size_t begin = 0;  // half-open token range into the source sentence
  size_t end = 0;
  TokenSeq lexicon;
  std::vector<TokenSeq> candidates;
  std::optional<int> gold;  // index into candidates, when known

  size_t span_len() const { return end - begin; }
};

struct AnnotatedPair {
  TokenSeq src;
  std::optional<TokenSeq> tgt;
  std::vector<ConstraintInstance> constraints;
};

inline constexpr int kMaxConstraintsPerSentence = 3;

// Inventory file: one lexicon per line, TAB-separated fields, tokens
// space-separated inside fields. Duplicate lexicon lines merge.
ConstraintInventory load_inventory(const std::string& path);
ConstraintInventory parse_inventory(const std::string& text,
                                    const std::string& origin);
void save_inventory(const std::string& path, const ConstraintInventory& inv);

// Spots inventory lexicons in src by leftmost-longest matching, attaches all
// candidates, resolves gold against tgt when present, and keeps the first
// three instances.
AnnotatedPair annotate(const TokenSeq& src, const std::optional<TokenSeq>& tgt,
                       const ConstraintInventory& inv);
AnnotatedPair annotate(const AnnotatedPair& pair, const ConstraintInventory& inv);

struct GeneratorConfig {
  int n_lexicons = 50;
  int n_candidates_per_lexicon = 3;
  int n_sentences = 5000;
  int len_min = 6;   // filler tokens per sentence before insertions
  int len_max = 12;
  uint64_t seed = 1;
};

struct SyntheticCorpus {
  ConstraintInventory inventory;
  std::vector<AnnotatedPair> pairs;
};

// Builds a deterministic corpus in which every constraint instance co-occurs
// with a marker token that uniquely identifies the gold candidate, gold
// choices are uniform per lexicon (round-robin), and the target is a
// token-wise image of the source with the gold candidate substituted.
SyntheticCorpus generate_synthetic(const GeneratorConfig& cfg);

struct SplitResult {
  std::vector<AnnotatedPair> train, valid, test;
};
SplitResult split(const std::vector<AnnotatedPair>& pairs,
                  const std::vector<double>& ratios, uint64_t seed);

struct CorpusStats {
  int64_t all = 0;
  int64_t constrained = 0;       // pairs with >= 1 constraint
  int64_t amb_constrained = 0;   // pairs with >= 1 multi-candidate constraint
  int64_t instances = 0;
  int64_t ambiguous_instances = 0;
};
CorpusStats corpus_stats(const std::vector<AnnotatedPair>& pairs);

// JSON-lines corpus file:
//   {"src": str, "tgt": str|null,
//    "constraints": [{"span": [s,e], "candidates": [str...], "gold": int|null}]}
std::vector<AnnotatedPair> read_corpus_jsonl(const std::string& path);
std::string corpus_to_jsonl(const std::vector<AnnotatedPair>& pairs);
void write_corpus_jsonl(const std::string& path,
                        const std::vector<AnnotatedPair>& pairs);

// Token <-> id bijection with reserved ids at the bottom of the range.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kBos = 5;
  static constexpr int kEos = 6;
  static constexpr int kSlot1 = 7;   // <C1>..<C3>, cap matches the
  static constexpr int kSlot2 = 8;   // per-sentence constraint cap
  static constexpr int kSlot3 = 9;
  static constexpr int kNumReserved = 10;

  Vocabulary();

  int add(const std::string& token);       // returns existing id on repeat
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(const TokenSeq& toks) const;
  TokenSeq decode(const std::vector<int>& ids) const;

  static int slot_id(int slot_index);  // 1-based, <=3
  static const std::string& slot_token(int slot_index);
  static bool is_reserved_token(const std::string& token);

  const std::vector<std::string>& tokens() const { return tokens_; }
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  // Reserved tokens first, then first-occurrence order over src, tgt and all
  // candidate sequences.
  static Vocabulary build(const std::vector<AnnotatedPair>& pairs,
                          const ConstraintInventory* inv = nullptr);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

}  // namespace lexinmt::corpus
