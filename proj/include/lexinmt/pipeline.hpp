#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lexinmt/corpus.hpp"
#include "lexinmt/disambig.hpp"
#include "lexinmt/eval.hpp"
#include "lexinmt/templ.hpp"
#include "lexinmt/vecnmt.hpp"

namespace lexinmt::pipeline {

using corpus::AnnotatedPair;
using corpus::ConstraintInventory;
using nnet::ojson;

// ---------------------------------------------------------------------------
// synth

struct SynthConfig {
  corpus::GeneratorConfig gen;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  uint64_t split_seed = 0;  // 0: derive from gen.seed
  std::string out_dir;
};

struct SynthResult {
  corpus::CorpusStats train, valid, test;
  std::string table;  // split / all / constrained / ambiguous-constrained
};

SynthResult run_synth(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// stage 1

struct Stage1FileConfig {
  std::string train_path;
  std::string inventory_path;
  std::string out_ckpt;
  disambig::Stage1TrainConfig train;
};

disambig::Stage1TrainResult run_train_stage1(const Stage1FileConfig& cfg);

struct DisambiguateConfig {
  std::string ckpt;
  std::string input;  // corpus JSONL (tgt may be null)
  std::string out;    // JSONL {"sent_id","span","chosen","scores"}
};

struct DisambigOutput {
  int sent_id = 0;
  size_t span_begin = 0, span_end = 0;
  int chosen = 0;
  std::vector<double> scores;
};

std::vector<DisambigOutput> run_disambiguate(const DisambiguateConfig& cfg);
std::vector<DisambigOutput> read_disambig_jsonl(const std::string& path);

// ---------------------------------------------------------------------------
// stage 2 training

struct TrainNmtConfig {
  std::string train_path;
  std::string out_ckpt;
  vecnmt::NmtTrainConfig train;  // train.kind selects the backend
};

vecnmt::NmtTrainResult run_train_nmt(const TrainNmtConfig& cfg);

// ---------------------------------------------------------------------------
// translate

enum class Selector { kGold, kRandom, kMostFrequent, kStage1 };
Selector selector_from_string(const std::string& s);
std::string selector_to_string(Selector s);

enum class DecoderMode { kGda, kGated, kVanilla };
DecoderMode decoder_from_string(const std::string& s);

struct TranslateConfig {
  std::string ckpt;
  std::string input;
  std::string out;
  Selector selector = Selector::kGold;
  std::string stage1_path;  // required for Selector::kStage1
  std::string train_path;   // required for Selector::kMostFrequent
  DecoderMode decoder = DecoderMode::kGda;
  std::optional<double> gate_override;
  int beam_size = 4;
  double len_alpha = 0.6;
  int max_sentences = 0;  // 0 = all
  uint64_t seed = 1;
  int threads = 1;
};

struct Translation {
  int sent_id = 0;
  TokenSeq hyp;
  std::vector<TokenSeq> constraints_used;
  std::vector<std::string> flags;
};

std::vector<Translation> run_translate(const TranslateConfig& cfg);
std::vector<Translation> read_translations_jsonl(const std::string& path);

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateConfig {
  std::string hyps;
  std::string refs;
  std::string out;          // report JSON; empty = don't write
  std::string stage1_path;  // optional: adds disambiguation accuracy
};

struct EvaluateResult {
  eval::MetricReport report;
  ojson report_json;
};

EvaluateResult run_evaluate(const EvaluateConfig& cfg);

// Builds eval records by joining translations to the reference corpus.
// Required constraints are the gold candidates of the reference annotation.
std::vector<eval::EvalRecord> build_eval_records(
    const std::vector<AnnotatedPair>& refs,
    const std::vector<Translation>& hyps);

// ---------------------------------------------------------------------------
// ablate

struct AblateConfig {
  std::string corpus_dir;  // expects inventory.tsv + train/valid/test.jsonl
  std::string out;         // consolidated report JSON
  disambig::Stage1TrainConfig stage1;
  vecnmt::NmtTrainConfig nmt;
  int max_eval_sentences = 300;
  int beam_size = 4;
  uint64_t seed = 1;
};

struct AblateResult {
  ojson report;
  std::string table;
};

AblateResult run_ablate(const AblateConfig& cfg);

// Shared helpers ------------------------------------------------------------

// Gold target constraints of one pair (instances with gold only).
std::vector<TokenSeq> gold_payloads(const AnnotatedPair& pair);

// Chooses one candidate per instance under a selector policy.
std::vector<int> select_candidates(
    const AnnotatedPair& pair, int sent_id, Selector selector, uint64_t seed,
    const disambig::GoldStats* stats,
    const std::vector<DisambigOutput>* stage1_by_line);

uint64_t resolve_seed(uint64_t configured);  // LEXI_SEED env override

}  // namespace lexinmt::pipeline
