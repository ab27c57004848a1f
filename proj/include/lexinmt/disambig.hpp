#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lexinmt/corpus.hpp"
#include "lexinmt/tape.hpp"
#include "lexinmt/transformer.hpp"

namespace lexinmt::disambig {

using corpus::AnnotatedPair;
using corpus::ConstraintInstance;
using corpus::ConstraintInventory;
using corpus::Vocabulary;
using nnet::Matrix;
using nnet::ModelConfig;
using nnet::ParamStore;
using nnet::Tape;
using nnet::Var;

// Assembled context-encoder input: [CLS] lexicon [SEP] masked-sentence, with
// the lexicon and sentence segments position-counted independently. Every
// occurrence of the lexicon in the sentence is replaced token-for-token by
// [MASK] so the encoder only sees the context.
struct ContextInput {
  std::vector<int> ids;
  std::vector<int> positions;
  size_t sentence_offset = 0;  // index of the first sentence token
};

ContextInput build_context_input(const Vocabulary& vocab, const TokenSeq& lexicon,
                                 const TokenSeq& sentence, size_t span_begin,
                                 size_t span_end);

// Context encoder + constraint encoder with disjoint parameters under the
// "ctx." and "cand." prefixes, each a transformer stack plus an adaptation
// layer (two linear maps with a tanh in between).
struct Stage1Model {
  ModelConfig cfg;
  Vocabulary vocab;
  ParamStore params;

  static Stage1Model init(const ModelConfig& cfg, const Vocabulary& vocab,
                          uint64_t seed);
  void save(const std::string& path, const nnet::ojson& run_config) const;
  static Stage1Model load(const std::string& path);
  nnet::ShapeList expected_shapes() const;
};

Var encode_context_tape(Tape& tape, Stage1Model& model, const TokenSeq& lexicon,
                        const TokenSeq& sentence, size_t span_begin,
                        size_t span_end);
Var encode_constraint_tape(Tape& tape, Stage1Model& model,
                           const TokenSeq& candidate);

Matrix encode_context(const Stage1Model& model, const TokenSeq& lexicon,
                      const TokenSeq& sentence, size_t span_begin,
                      size_t span_end);
Matrix encode_constraint(const Stage1Model& model, const TokenSeq& candidate);

struct NegativeSample {
  std::vector<TokenSeq> negatives;
  bool padded_with_replacement = false;
};

// K negatives for one instance: first the instance's own non-gold candidates
// (random K-subset when there are more than K), then gold candidates of other
// batch instances, padding with replacement as a last resort.
NegativeSample sample_negatives(DetRng& rng, const ConstraintInstance& inst,
                                const std::vector<const ConstraintInstance*>& batch,
                                int k);

// Softmax-NLL contrastive loss for one instance; the positive term is part of
// the denominator, so the loss is nonnegative and zero with no negatives.
Var contrastive_loss(Tape& tape, Var e_context, Var e_positive,
                     const std::vector<Var>& e_negatives);

struct DisambigResult {
  int chosen = 0;
  std::vector<double> scores;  // cosine per candidate, input order
};

DisambigResult disambiguate(const Stage1Model& model, const TokenSeq& lexicon,
                            const TokenSeq& sentence, size_t span_begin,
                            size_t span_end,
                            const std::vector<TokenSeq>& candidates);

struct Stage1TrainConfig {
  ModelConfig model;          // vocab_size filled by the trainer
  int steps = 800;
  int batch_size = 16;
  int negatives = 5;          // K
  uint64_t seed = 1;
  nnet::AdamConfig adam{3e-3, 100, 0.9, 0.98, 1e-9};
  bool verbose = false;
};

struct TrainLog {
  std::vector<double> loss_per_step;  // mean per instance
  int64_t padded_negative_batches = 0;
};

struct Stage1TrainResult {
  Stage1Model model;
  TrainLog log;
};

Stage1TrainResult train_disambiguator(const std::vector<AnnotatedPair>& pairs,
                                      const ConstraintInventory& inventory,
                                      const Stage1TrainConfig& cfg);

enum class BaselinePolicy { kRandom, kMostFrequent };

// Gold-index counts per lexicon over a training corpus, for the
// most-frequent selector.
struct GoldStats {
  std::map<TokenSeq, std::vector<int64_t>> counts;
  static GoldStats collect(const std::vector<AnnotatedPair>& pairs);
};

int baseline_select(const ConstraintInstance& inst, BaselinePolicy policy,
                    const GoldStats* stats, DetRng& rng);

}  // namespace lexinmt::disambig
