// Command-line front end for the constrained-translation toolkit: synthetic
// corpus generation, the two training stages, constrained decoding, metric
// reports and the ablation grid.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "lexinmt/pipeline.hpp"

namespace lp = lexinmt::pipeline;

namespace {

struct ModelFlags {
  int d_model = 32;
  int n_heads = 4;
  int n_layers = 2;
  int ffn_dim = 64;
  double dropout = 0.0;
  int max_positions = 512;

  void attach(CLI::App* cmd) {
    cmd->add_option("--d-model", d_model, "hidden size");
    cmd->add_option("--heads", n_heads, "attention heads");
    cmd->add_option("--layers", n_layers, "encoder/decoder layers");
    cmd->add_option("--ffn", ffn_dim, "feed-forward size");
    cmd->add_option("--dropout", dropout, "dropout rate");
    cmd->add_option("--max-positions", max_positions, "position limit");
  }
  lexinmt::nnet::ModelConfig to_config() const {
    lexinmt::nnet::ModelConfig m;
    m.d_model = d_model;
    m.n_heads = n_heads;
    m.n_enc_layers = n_layers;
    m.n_dec_layers = n_layers;
    m.ffn_dim = ffn_dim;
    m.dropout = dropout;
    m.max_positions = max_positions;
    m.vocab_size = 1;  // filled by the trainer
    return m;
  }
};

struct AdamFlags {
  double lr = 3e-3;
  int64_t warmup = 100;

  void attach(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "peak learning rate");
    cmd->add_option("--warmup", warmup, "warmup steps");
  }
  lexinmt::nnet::AdamConfig to_config() const {
    return {lr, warmup, 0.9, 0.98, 1e-9};
  }
};

std::optional<double> parse_gate(const std::string& gate) {
  if (gate.empty() || gate == "learned") return std::nullopt;
  if (gate.rfind("fixed:", 0) == 0) {
    double v = std::stod(gate.substr(6));
    if (v < 0.0 || v > 1.0) lexinmt::fail("--gate fixed:<g> needs g in [0,1]");
    return v;
  }
  lexinmt::fail("--gate expects learned or fixed:<g>");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lexinmt: disambiguated lexically constrained translation toolkit"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  lp::SynthConfig synth_cfg;
  synth->add_option("--out", synth_cfg.out_dir, "output directory")->required();
  synth->add_option("--n-lexicons", synth_cfg.gen.n_lexicons);
  synth->add_option("--n-candidates", synth_cfg.gen.n_candidates_per_lexicon);
  synth->add_option("--n-sentences", synth_cfg.gen.n_sentences);
  synth->add_option("--len-min", synth_cfg.gen.len_min);
  synth->add_option("--len-max", synth_cfg.gen.len_max);
  synth->add_option("--seed", synth_cfg.gen.seed);
  synth->add_option("--ratios", synth_cfg.ratios, "train/valid/test ratios")
      ->expected(3);

  // train-stage1 -------------------------------------------------------------
  auto* ts1 = app.add_subcommand("train-stage1",
                                 "train the constraint disambiguation network");
  lp::Stage1FileConfig s1_cfg;
  ModelFlags s1_model;
  AdamFlags s1_adam;
  ts1->add_option("--train", s1_cfg.train_path, "training corpus JSONL")->required();
  ts1->add_option("--inventory", s1_cfg.inventory_path, "inventory TSV")->required();
  ts1->add_option("--out", s1_cfg.out_ckpt, "output checkpoint")->required();
  ts1->add_option("--steps", s1_cfg.train.steps);
  ts1->add_option("--batch", s1_cfg.train.batch_size);
  ts1->add_option("--K", s1_cfg.train.negatives, "negative samples per instance");
  ts1->add_option("--seed", s1_cfg.train.seed);
  s1_model.attach(ts1);
  s1_adam.attach(ts1);

  // disambiguate -------------------------------------------------------------
  auto* dis = app.add_subcommand("disambiguate",
                                 "select constraints with a stage-1 checkpoint");
  lp::DisambiguateConfig dis_cfg;
  dis->add_option("--ckpt", dis_cfg.ckpt)->required();
  dis->add_option("--input", dis_cfg.input, "corpus JSONL")->required();
  dis->add_option("--out", dis_cfg.out, "predictions JSONL")->required();

  // train-nmt ----------------------------------------------------------------
  auto* tn = app.add_subcommand("train-nmt", "train a stage-2 translation model");
  lp::TrainNmtConfig tn_cfg;
  ModelFlags tn_model;
  AdamFlags tn_adam;
  std::string tn_backend = "vec";
  tn->add_option("--train", tn_cfg.train_path)->required();
  tn->add_option("--out", tn_cfg.out_ckpt)->required();
  tn->add_option("--backend", tn_backend, "vec|template");
  tn->add_option("--lambda", tn_cfg.train.lambda, "integrity loss weight");
  tn->add_option("--window", tn_cfg.train.window, "integrity window C");
  tn->add_option("--label-smoothing", tn_cfg.train.label_smoothing);
  tn->add_option("--steps", tn_cfg.train.steps);
  tn->add_option("--batch", tn_cfg.train.batch_size);
  tn->add_option("--seed", tn_cfg.train.seed);
  tn_model.attach(tn);
  tn_adam.attach(tn);

  // translate ------------------------------------------------------------
  auto* tr = app.add_subcommand("translate", "decode a corpus with constraints");
  lp::TranslateConfig tr_cfg;
  std::string tr_selector = "gold", tr_decoder = "gda", tr_gate = "learned";
  tr->add_option("--ckpt", tr_cfg.ckpt)->required();
  tr->add_option("--input", tr_cfg.input)->required();
  tr->add_option("--out", tr_cfg.out)->required();
  tr->add_option("--selector", tr_selector, "stage1|random|mostfreq|gold");
  tr->add_option("--stage1", tr_cfg.stage1_path, "stage-1 predictions JSONL");
  tr->add_option("--train", tr_cfg.train_path,
                 "training corpus (stats for --selector mostfreq)");
  tr->add_option("--decoder", tr_decoder, "gda|gated|vanilla");
  tr->add_option("--gate", tr_gate, "learned|fixed:<g>");
  tr->add_option("--beam", tr_cfg.beam_size);
  tr->add_option("--len-alpha", tr_cfg.len_alpha);
  tr->add_option("--max-sentences", tr_cfg.max_sentences);
  tr->add_option("--seed", tr_cfg.seed);
  tr->add_option("--threads", tr_cfg.threads);

  // evaluate -----------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "score translations against references");
  lp::EvaluateConfig ev_cfg;
  ev->add_option("--hyps", ev_cfg.hyps, "translations JSONL")->required();
  ev->add_option("--refs", ev_cfg.refs, "reference corpus JSONL")->required();
  ev->add_option("--out", ev_cfg.out, "report JSON")->required();
  ev->add_option("--stage1", ev_cfg.stage1_path,
                 "stage-1 predictions (adds disambiguation accuracy)");

  // ablate ---------------------------------------------------------------
  auto* ab = app.add_subcommand(
      "ablate", "integrity/gating grid plus selector comparison");
  lp::AblateConfig ab_cfg;
  ModelFlags ab_model;
  AdamFlags ab_adam;
  ab->add_option("--corpus", ab_cfg.corpus_dir, "synth output directory")->required();
  ab->add_option("--out", ab_cfg.out, "report JSON")->required();
  ab->add_option("--stage1-steps", ab_cfg.stage1.steps);
  ab->add_option("--nmt-steps", ab_cfg.nmt.steps);
  ab->add_option("--batch", ab_cfg.nmt.batch_size);
  ab->add_option("--lambda", ab_cfg.nmt.lambda);
  ab->add_option("--window", ab_cfg.nmt.window);
  ab->add_option("--max-sentences", ab_cfg.max_eval_sentences);
  ab->add_option("--beam", ab_cfg.beam_size);
  ab->add_option("--seed", ab_cfg.seed);
  ab_model.attach(ab);
  ab_adam.attach(ab);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      synth_cfg.gen.seed = lp::resolve_seed(synth_cfg.gen.seed);
      lp::SynthResult res = lp::run_synth(synth_cfg);
      std::cout << res.table;
    } else if (*ts1) {
      s1_cfg.train.model = s1_model.to_config();
      s1_cfg.train.adam = s1_adam.to_config();
      s1_cfg.train.seed = lp::resolve_seed(s1_cfg.train.seed);
      auto res = lp::run_train_stage1(s1_cfg);
      std::cout << "trained stage1: steps=" << res.log.loss_per_step.size()
                << " final_loss=" << (res.log.loss_per_step.empty()
                                          ? 0.0
                                          : res.log.loss_per_step.back())
                << "\n";
    } else if (*dis) {
      auto outs = lp::run_disambiguate(dis_cfg);
      std::cout << "disambiguated " << outs.size() << " instances\n";
    } else if (*tn) {
      tn_cfg.train.model = tn_model.to_config();
      tn_cfg.train.adam = tn_adam.to_config();
      tn_cfg.train.kind = tn_backend;
      if (tn_backend != "vec" && tn_backend != "template")
        lexinmt::fail("--backend expects vec or template");
      tn_cfg.train.seed = lp::resolve_seed(tn_cfg.train.seed);
      auto res = lp::run_train_nmt(tn_cfg);
      std::cout << "trained " << tn_backend
                << " nmt: steps=" << res.loss_per_step.size() << " final_loss="
                << (res.loss_per_step.empty() ? 0.0 : res.loss_per_step.back())
                << "\n";
    } else if (*tr) {
      tr_cfg.selector = lp::selector_from_string(tr_selector);
      tr_cfg.decoder = lp::decoder_from_string(tr_decoder);
      tr_cfg.gate_override = parse_gate(tr_gate);
      tr_cfg.seed = lp::resolve_seed(tr_cfg.seed);
      auto outs = lp::run_translate(tr_cfg);
      std::cout << "translated " << outs.size() << " sentences\n";
    } else if (*ev) {
      auto res = lp::run_evaluate(ev_cfg);
      std::cout << res.report.render_table();
    } else if (*ab) {
      ab_cfg.stage1.model = ab_model.to_config();
      ab_cfg.stage1.adam = ab_adam.to_config();
      ab_cfg.nmt.model = ab_model.to_config();
      ab_cfg.nmt.adam = ab_adam.to_config();
      ab_cfg.seed = lp::resolve_seed(ab_cfg.seed);
      ab_cfg.stage1.seed = ab_cfg.seed;
      ab_cfg.nmt.seed = ab_cfg.seed;
      auto res = lp::run_ablate(ab_cfg);
      std::cout << res.table;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
