#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lexinmt/corpus.hpp"
#include "lexinmt/tape.hpp"
#include "lexinmt/transformer.hpp"

namespace lexinmt::vecnmt {

using corpus::AnnotatedPair;
using corpus::Vocabulary;
using nnet::Matrix;
using nnet::ModelConfig;
using nnet::ParamStore;
using nnet::Tape;
using nnet::Var;

inline constexpr double kProbFloor = 1e-12;

// Target-side constraints for one sentence (at most 3; every sequence
// nonempty). ref_pos is the first occurrence in the reference, when known.
struct Constraint {
  std::vector<int> tokens;
  std::optional<int> ref_pos;
};
using ConstraintSet = std::vector<Constraint>;

void validate_constraints(const ConstraintSet& cs);

// Encoder/decoder transformer with a single embedding table shared by the
// encoder input, decoder input and output projection, plus a scalar gate head
// used by the gated decoding path.
struct NmtModel {
  ModelConfig cfg;
  Vocabulary vocab;
  ParamStore params;
  std::string kind;  // "vec" | "template"

  static NmtModel init(const ModelConfig& cfg, const Vocabulary& vocab,
                       const std::string& kind, uint64_t seed);
  void save(const std::string& path, const nnet::ojson& run_config) const;
  static NmtModel load(const std::string& path);
  nnet::ShapeList expected_shapes() const;

  std::vector<int> encoder_input(const TokenSeq& src) const;  // src + [EOS]
};

// Teacher-forced hidden states: encodes src, runs the decoder on [BOS]+tgt,
// returns one hidden row per predicted position (tgt plus final [EOS]).
Var teacher_forced_hidden(Tape& tape, NmtModel& model,
                          const std::vector<int>& src_ids,
                          const std::vector<int>& tgt_ids,
                          const nnet::DropoutCtx& dropout = {});

// softmax(h W^T) over the tied embedding table.
Var p_model_tape(Tape& tape, NmtModel& model, Var hidden);
std::vector<double> p_model(const NmtModel& model, const std::vector<double>& h);

// Constraint-plug scores: zero outside the constraint token set, clipped
// cosine between the token embedding and the hidden state inside it.
std::vector<std::pair<int, double>> p_plug(const NmtModel& model,
                                           const std::vector<double>& h,
                                           const std::set<int>& constraint_tokens);

// Window-softmax cohesion loss over teacher-forced hidden states. Items are
// (position, token id) for every constraint token at its reference position.
// Window [pos-C, pos+C] is clamped to the sequence.
Var integrity_loss(Tape& tape, Var hidden, Var embed,
                   const std::vector<std::pair<int, int>>& items, int window);

// Token-level NLL of the gated mixture (1-g)*P_model + g*P_plug under
// teacher forcing, with a 1e-12 floor inside the log.
Var gated_nll(Tape& tape, NmtModel& model, Var hidden,
              const std::vector<int>& out_ids,
              const std::set<int>& constraint_tokens);

// Plain NLL over log-softmax rows, with optional label smoothing.
Var plain_nll(Tape& tape, NmtModel& model, Var hidden,
              const std::vector<int>& out_ids, double label_smoothing = 0.0);

struct StepLosses {
  double orig = 0.0;
  double integrity = 0.0;
  double total = 0.0;
  int64_t tokens = 0;
  int64_t skipped_constraint_tokens = 0;
  nnet::GradMap grads;  // of total (sum over the batch)
};

// One training step over a batch of gold-annotated pairs:
// total = L_orig + lambda * L_int.
StepLosses nmt_train_step(NmtModel& model, const std::vector<AnnotatedPair>& batch,
                          double lambda, int window,
                          const nnet::DropoutCtx& dropout = {});

struct NmtTrainConfig {
  ModelConfig model;
  std::string kind = "vec";  // "vec" trains the gated objective, "template"
                             // plain NLL on pre-templated pairs
  double lambda = 1.0;
  int window = 5;
  double label_smoothing = 0.0;
  int steps = 1200;
  int batch_size = 8;
  uint64_t seed = 1;
  nnet::AdamConfig adam{3e-3, 100, 0.9, 0.98, 1e-9};
};

struct NmtTrainResult {
  NmtModel model;
  std::vector<double> loss_per_step;  // total per token
  int64_t skipped_constraint_tokens = 0;
};

NmtTrainResult train_nmt(const std::vector<AnnotatedPair>& pairs,
                         const NmtTrainConfig& cfg);

// Per-hypothesis constraint progress. Each constraint runs a KMP automaton
// over the emitted token stream: matches advance the cursor, a breaking token
// re-locks on the longest matched prefix that is a suffix of the stream, and
// a finished constraint freezes. A direct next-token match schedules the
// P_plug=1 boost for the following step.
class ConstraintTracker {
 public:
  ConstraintTracker() = default;
  explicit ConstraintTracker(const std::vector<std::vector<int>>& constraints);

  void feed(int token);
  const std::vector<int>& boosted_tokens() const { return boosted_; }
  int cursor(size_t n) const { return state_[n]; }
  bool finished(size_t n) const { return fin_[n] != 0; }
  bool all_finished() const;
  size_t num_constraints() const { return state_.size(); }
  const std::set<int>& token_set() const;

 private:
  struct Patterns {
    std::vector<std::vector<int>> pats;
    std::vector<std::vector<int>> fails;
    std::set<int> token_set;
  };
  std::shared_ptr<const Patterns> pat_;
  std::vector<int> state_;
  std::vector<uint8_t> fin_;
  std::vector<int> boosted_;
};

struct DecodeOptions {
  int beam_size = 4;
  int max_steps = 0;       // 0 = 2 * src_len + 10
  double len_alpha = 0.6;  // final ranking by cum / steps^alpha
  std::optional<double> gate_override;
  bool cursor_boosts = true;  // gated decoding without boosts = plain mixture
};

struct DecodeResult {
  std::vector<int> tokens;  // without [BOS]/[EOS]
  double cum_logp = 0.0;
  double norm_score = 0.0;
  bool finished = false;
  int steps = 0;
  std::vector<std::string> flags;
};

// Unconstrained length-normalized beam search over P_model.
DecodeResult beam_search(const NmtModel& model, const TokenSeq& src,
                         const DecodeOptions& opts);

// Gated decoding: scores each candidate token by (1-g)*P_model + g*P_plug,
// tracking per-constraint cursors and boosting the next expected token.
DecodeResult gda_decode(const NmtModel& model, const TokenSeq& src,
                        const std::vector<TokenSeq>& constraints,
                        const DecodeOptions& opts);

}  // namespace lexinmt::vecnmt
