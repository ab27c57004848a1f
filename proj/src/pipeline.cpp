#include "lexinmt/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

namespace lexinmt::pipeline {

namespace fs = std::filesystem;

uint64_t resolve_seed(uint64_t configured) {
  const char* env = std::getenv("LEXI_SEED");
  if (!env || !*env) return configured;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') fail("LEXI_SEED must be an unsigned integer");
  return static_cast<uint64_t>(v);
}

namespace {

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) fail(what + ": no path given");
  if (!fs::exists(path)) fail(what + ": file does not exist: " + path);
}

ojson gen_config_json(const corpus::GeneratorConfig& g) {
  ojson j;
  j["n_lexicons"] = g.n_lexicons;
  j["n_candidates_per_lexicon"] = g.n_candidates_per_lexicon;
  j["n_sentences"] = g.n_sentences;
  j["len_min"] = g.len_min;
  j["len_max"] = g.len_max;
  j["seed"] = g.seed;
  return j;
}

ojson stats_json(const corpus::CorpusStats& s) {
  ojson j;
  j["all"] = s.all;
  j["constrained"] = s.constrained;
  j["amb_constrained"] = s.amb_constrained;
  j["instances"] = s.instances;
  j["ambiguous_instances"] = s.ambiguous_instances;
  return j;
}

ojson stage1_train_json(const disambig::Stage1TrainConfig& c) {
  ojson j;
  j["model"] = c.model.to_json();
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["negatives"] = c.negatives;
  j["seed"] = c.seed;
  j["adam"] = c.adam.to_json();
  return j;
}

ojson nmt_train_json(const vecnmt::NmtTrainConfig& c) {
  ojson j;
  j["model"] = c.model.to_json();
  j["kind"] = c.kind;
  j["lambda"] = c.lambda;
  j["window"] = c.window;
  j["label_smoothing"] = c.label_smoothing;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["adam"] = c.adam.to_json();
  return j;
}

}  // namespace

SynthResult run_synth(const SynthConfig& cfg) {
  if (cfg.out_dir.empty()) fail("synth: no output directory");
  corpus::SyntheticCorpus corp = corpus::generate_synthetic(cfg.gen);
  uint64_t split_seed =
      cfg.split_seed ? cfg.split_seed : DetRng::mix(cfg.gen.seed, 0x53504c54);
  corpus::SplitResult splits = corpus::split(corp.pairs, cfg.ratios, split_seed);

  fs::create_directories(cfg.out_dir);
  corpus::save_inventory(cfg.out_dir + "/inventory.tsv", corp.inventory);
  corpus::write_corpus_jsonl(cfg.out_dir + "/train.jsonl", splits.train);
  corpus::write_corpus_jsonl(cfg.out_dir + "/valid.jsonl", splits.valid);
  corpus::write_corpus_jsonl(cfg.out_dir + "/test.jsonl", splits.test);

  SynthResult res;
  res.train = corpus::corpus_stats(splits.train);
  res.valid = corpus::corpus_stats(splits.valid);
  res.test = corpus::corpus_stats(splits.test);

  std::ostringstream table;
  table << "split  all  constrained  amb_constrained\n";
  auto row = [&table](const char* name, const corpus::CorpusStats& s) {
    table << name << "  " << s.all << "  " << s.constrained << "  "
          << s.amb_constrained << "\n";
  };
  row("train", res.train);
  row("valid", res.valid);
  row("test ", res.test);
  res.table = table.str();

  ojson manifest;
  manifest["config"] = gen_config_json(cfg.gen);
  manifest["ratios"] = cfg.ratios;
  manifest["split_seed"] = split_seed;
  ojson counts;
  counts["train"] = stats_json(res.train);
  counts["valid"] = stats_json(res.valid);
  counts["test"] = stats_json(res.test);
  manifest["counts"] = counts;
  atomic_write_file(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");
  return res;
}

disambig::Stage1TrainResult run_train_stage1(const Stage1FileConfig& cfg) {
  require_file(cfg.train_path, "train-stage1 training corpus");
  require_file(cfg.inventory_path, "train-stage1 inventory");
  auto pairs = corpus::read_corpus_jsonl(cfg.train_path);
  auto inv = corpus::load_inventory(cfg.inventory_path);
  disambig::Stage1TrainResult res =
      disambig::train_disambiguator(pairs, inv, cfg.train);
  if (!cfg.out_ckpt.empty())
    res.model.save(cfg.out_ckpt, stage1_train_json(cfg.train));
  return res;
}

std::vector<DisambigOutput> run_disambiguate(const DisambiguateConfig& cfg) {
  require_file(cfg.ckpt, "disambiguate checkpoint");
  require_file(cfg.input, "disambiguate input corpus");
  disambig::Stage1Model model = disambig::Stage1Model::load(cfg.ckpt);
  auto pairs = corpus::read_corpus_jsonl(cfg.input);

  std::vector<DisambigOutput> outs;
  for (size_t line = 0; line < pairs.size(); ++line) {
    for (const auto& inst : pairs[line].constraints) {
      disambig::DisambigResult r =
          disambig::disambiguate(model, inst.lexicon, pairs[line].src,
                                 inst.begin, inst.end, inst.candidates);
      DisambigOutput o;
      o.sent_id = static_cast<int>(line);
      o.span_begin = inst.begin;
      o.span_end = inst.end;
      o.chosen = r.chosen;
      o.scores = r.scores;
      outs.push_back(std::move(o));
    }
  }
  if (!cfg.out.empty()) {
    std::string text;
    for (const auto& o : outs) {
      ojson j;
      j["sent_id"] = o.sent_id;
      j["span"] = {o.span_begin, o.span_end};
      j["chosen"] = o.chosen;
      j["scores"] = o.scores;
      text += j.dump();
      text += '\n';
    }
    atomic_write_file(cfg.out, text);
  }
  return outs;
}

std::vector<DisambigOutput> read_disambig_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<DisambigOutput> outs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const std::exception& e) {
      fail(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    DisambigOutput o;
    o.sent_id = j.at("sent_id").get<int>();
    o.span_begin = j.at("span").at(0).get<size_t>();
    o.span_end = j.at("span").at(1).get<size_t>();
    o.chosen = j.at("chosen").get<int>();
    o.scores = j.at("scores").get<std::vector<double>>();
    outs.push_back(std::move(o));
  }
  return outs;
}

vecnmt::NmtTrainResult run_train_nmt(const TrainNmtConfig& cfg) {
  require_file(cfg.train_path, "train-nmt training corpus");
  auto pairs = corpus::read_corpus_jsonl(cfg.train_path);
  std::vector<AnnotatedPair> train_pairs;
  if (cfg.train.kind == "template") {
    std::vector<AnnotatedPair> with_gold;
    for (const auto& p : pairs) {
      if (!p.tgt) continue;
      bool ok = true;
      for (const auto& c : p.constraints)
        if (!c.gold) ok = false;
      if (ok) with_gold.push_back(p);
    }
    train_pairs = templ::templated_pairs(with_gold);
  } else {
    train_pairs = pairs;
  }
  vecnmt::NmtTrainResult res = vecnmt::train_nmt(train_pairs, cfg.train);
  if (!cfg.out_ckpt.empty())
    res.model.save(cfg.out_ckpt, nmt_train_json(cfg.train));
  return res;
}

Selector selector_from_string(const std::string& s) {
  if (s == "gold") return Selector::kGold;
  if (s == "random") return Selector::kRandom;
  if (s == "mostfreq") return Selector::kMostFrequent;
  if (s == "stage1") return Selector::kStage1;
  fail("unknown selector: " + s + " (expected stage1|random|mostfreq|gold)");
}

std::string selector_to_string(Selector s) {
  switch (s) {
    case Selector::kGold: return "gold";
    case Selector::kRandom: return "random";
    case Selector::kMostFrequent: return "mostfreq";
    case Selector::kStage1: return "stage1";
  }
  return "?";
}

DecoderMode decoder_from_string(const std::string& s) {
  if (s == "gda") return DecoderMode::kGda;
  if (s == "gated") return DecoderMode::kGated;
  if (s == "vanilla") return DecoderMode::kVanilla;
  fail("unknown decoder: " + s + " (expected gda|gated|vanilla)");
}

std::vector<TokenSeq> gold_payloads(const AnnotatedPair& pair) {
  std::vector<TokenSeq> out;
  for (const auto& c : pair.constraints)
    if (c.gold) out.push_back(c.candidates[*c.gold]);
  return out;
}

std::vector<int> select_candidates(
    const AnnotatedPair& pair, int sent_id, Selector selector, uint64_t seed,
    const disambig::GoldStats* stats,
    const std::vector<DisambigOutput>* stage1) {
  std::vector<int> chosen;
  for (size_t k = 0; k < pair.constraints.size(); ++k) {
    const auto& inst = pair.constraints[k];
    switch (selector) {
      case Selector::kGold: {
        if (!inst.gold)
          fail("selector gold: sentence " + std::to_string(sent_id) +
               " has a constraint without gold annotation");
        chosen.push_back(*inst.gold);
        break;
      }
      case Selector::kRandom: {
        DetRng rng(DetRng::mix(DetRng::mix(seed, sent_id), k));
        chosen.push_back(static_cast<int>(rng.below(inst.candidates.size())));
        break;
      }
      case Selector::kMostFrequent: {
        DetRng rng(0);
        chosen.push_back(disambig::baseline_select(
            inst, disambig::BaselinePolicy::kMostFrequent, stats, rng));
        break;
      }
      case Selector::kStage1: {
        if (!stage1) fail("selector stage1: no disambiguation output given");
        const DisambigOutput* hit = nullptr;
        for (const auto& o : *stage1)
          if (o.sent_id == sent_id && o.span_begin == inst.begin &&
              o.span_end == inst.end) {
            hit = &o;
            break;
          }
        if (!hit)
          fail("selector stage1: no prediction for sentence " +
               std::to_string(sent_id) + " span [" +
               std::to_string(inst.begin) + "," + std::to_string(inst.end) + ")");
        chosen.push_back(hit->chosen);
        break;
      }
    }
  }
  return chosen;
}

namespace {

std::vector<const corpus::ConstraintInstance*> sorted_instances(
    const AnnotatedPair& pair) {
  std::vector<const corpus::ConstraintInstance*> insts;
  for (const auto& c : pair.constraints) insts.push_back(&c);
  std::sort(insts.begin(), insts.end(),
            [](const auto* a, const auto* b) { return a->begin < b->begin; });
  return insts;
}

Translation translate_vec(const vecnmt::NmtModel& model, const AnnotatedPair& pair,
                          int sent_id, const std::vector<TokenSeq>& payloads,
                          DecoderMode mode, const vecnmt::DecodeOptions& opts) {
  Translation t;
  t.sent_id = sent_id;
  t.constraints_used = payloads;
  vecnmt::DecodeResult r;
  if (mode == DecoderMode::kVanilla) {
    r = vecnmt::beam_search(model, pair.src, opts);
  } else {
    vecnmt::DecodeOptions o = opts;
    o.cursor_boosts = mode == DecoderMode::kGda;
    r = vecnmt::gda_decode(model, pair.src, payloads, o);
  }
  t.hyp = model.vocab.decode(r.tokens);
  t.flags = r.flags;
  return t;
}

Translation translate_template(const vecnmt::NmtModel& model,
                               const AnnotatedPair& pair, int sent_id,
                               const std::vector<TokenSeq>& payloads_in_src_order,
                               const vecnmt::DecodeOptions& opts) {
  auto insts = sorted_instances(pair);
  Translation t;
  t.sent_id = sent_id;
  t.constraints_used = payloads_in_src_order;

  TokenSeq src_t;
  size_t at = 0;
  for (size_t i = 0; i < insts.size(); ++i) {
    for (size_t p = at; p < insts[i]->begin; ++p) src_t.push_back(pair.src[p]);
    src_t.push_back(corpus::Vocabulary::slot_token(static_cast<int>(i) + 1));
    at = insts[i]->end;
  }
  for (size_t p = at; p < pair.src.size(); ++p) src_t.push_back(pair.src[p]);

  vecnmt::DecodeResult r = vecnmt::beam_search(model, src_t, opts);
  templ::FillResult filled =
      templ::fill_template(model.vocab.decode(r.tokens), payloads_in_src_order);
  t.hyp = filled.tokens;
  t.flags = r.flags;
  for (const auto& f : filled.flags) t.flags.push_back(f);
  return t;
}

}  // namespace

std::vector<Translation> run_translate(const TranslateConfig& cfg) {
  require_file(cfg.ckpt, "translate checkpoint");
  require_file(cfg.input, "translate input corpus");
  vecnmt::NmtModel model = vecnmt::NmtModel::load(cfg.ckpt);
  auto pairs = corpus::read_corpus_jsonl(cfg.input);
  if (cfg.max_sentences > 0 &&
      pairs.size() > static_cast<size_t>(cfg.max_sentences))
    pairs.resize(cfg.max_sentences);

  disambig::GoldStats stats;
  if (cfg.selector == Selector::kMostFrequent) {
    require_file(cfg.train_path, "translate --selector mostfreq stats corpus");
    stats = disambig::GoldStats::collect(corpus::read_corpus_jsonl(cfg.train_path));
  }
  std::vector<DisambigOutput> stage1;
  if (cfg.selector == Selector::kStage1) {
    require_file(cfg.stage1_path, "translate --selector stage1 predictions");
    stage1 = read_disambig_jsonl(cfg.stage1_path);
  }

  vecnmt::DecodeOptions opts;
  opts.beam_size = cfg.beam_size;
  opts.len_alpha = cfg.len_alpha;
  opts.gate_override = cfg.gate_override;

  std::vector<Translation> outs(pairs.size());
  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const AnnotatedPair& pair = pairs[i];
      auto insts = sorted_instances(pair);
      AnnotatedPair ordered = pair;
      ordered.constraints.clear();
      for (const auto* c : insts) ordered.constraints.push_back(*c);
      std::vector<int> chosen =
          select_candidates(ordered, static_cast<int>(i), cfg.selector, cfg.seed,
                            &stats, cfg.selector == Selector::kStage1 ? &stage1
                                                                      : nullptr);
      std::vector<TokenSeq> payloads;
      for (size_t k = 0; k < ordered.constraints.size(); ++k)
        payloads.push_back(ordered.constraints[k].candidates[chosen[k]]);
      outs[i] = model.kind == "template"
                    ? translate_template(model, ordered, static_cast<int>(i),
                                         payloads, opts)
                    : translate_vec(model, ordered, static_cast<int>(i),
                                    payloads, cfg.decoder, opts);
    }
  };

  int threads = std::max(1, cfg.threads);
  if (threads == 1 || pairs.size() < 2) {
    work(0, pairs.size());
  } else {
    std::vector<std::thread> pool;
    size_t chunk = (pairs.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      size_t b = t * chunk;
      size_t e = std::min(pairs.size(), b + chunk);
      if (b >= e) break;
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  if (!cfg.out.empty()) {
    std::string text;
    for (const auto& t : outs) {
      ojson j;
      j["sent_id"] = t.sent_id;
      j["hyp"] = join_ws(t.hyp);
      ojson used = ojson::array();
      for (const auto& c : t.constraints_used) used.push_back(join_ws(c));
      j["constraints_used"] = used;
      j["flags"] = t.flags;
      text += j.dump();
      text += '\n';
    }
    atomic_write_file(cfg.out, text);
  }
  return outs;
}

std::vector<Translation> read_translations_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<Translation> outs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const std::exception& e) {
      fail(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    Translation t;
    t.sent_id = j.at("sent_id").get<int>();
    t.hyp = split_ws(j.at("hyp").get<std::string>());
    for (const auto& c : j.at("constraints_used"))
      t.constraints_used.push_back(split_ws(c.get<std::string>()));
    t.flags = j.at("flags").get<std::vector<std::string>>();
    outs.push_back(std::move(t));
  }
  return outs;
}

std::vector<eval::EvalRecord> build_eval_records(
    const std::vector<AnnotatedPair>& refs,
    const std::vector<Translation>& hyps) {
  std::vector<eval::EvalRecord> records;
  for (const auto& t : hyps) {
    if (t.sent_id < 0 || t.sent_id >= static_cast<int>(refs.size()))
      fail("evaluate: hypothesis sent_id " + std::to_string(t.sent_id) +
           " has no reference");
    const AnnotatedPair& ref = refs[t.sent_id];
    if (!ref.tgt)
      fail("evaluate: reference sentence " + std::to_string(t.sent_id) +
           " has no target");
    eval::EvalRecord r;
    r.hyp = t.hyp;
    r.ref = *ref.tgt;
    for (const auto& inst : ref.constraints) {
      if (!inst.gold) continue;  // requirement unknown: skip for metrics
      const TokenSeq& req = inst.candidates[*inst.gold];
      int pos = -1;
      for (size_t p = 0; p + req.size() <= ref.tgt->size(); ++p) {
        bool ok = true;
        for (size_t q = 0; q < req.size() && ok; ++q)
          ok = (*ref.tgt)[p + q] == req[q];
        if (ok) {
          pos = static_cast<int>(p);
          break;
        }
      }
      r.constraints.push_back(req);
      r.ref_positions.push_back(pos);
    }
    records.push_back(std::move(r));
  }
  return records;
}

EvaluateResult run_evaluate(const EvaluateConfig& cfg) {
  require_file(cfg.hyps, "evaluate hypotheses");
  require_file(cfg.refs, "evaluate references");
  auto refs = corpus::read_corpus_jsonl(cfg.refs);
  auto hyps = read_translations_jsonl(cfg.hyps);
  auto records = build_eval_records(refs, hyps);

  eval::DisambigAccuracy acc;
  bool have_acc = false;
  if (!cfg.stage1_path.empty()) {
    require_file(cfg.stage1_path, "evaluate stage1 predictions");
    auto preds = read_disambig_jsonl(cfg.stage1_path);
    std::vector<int> p, g, n;
    for (const auto& o : preds) {
      if (o.sent_id < 0 || o.sent_id >= static_cast<int>(refs.size())) continue;
      for (const auto& inst : refs[o.sent_id].constraints) {
        if (inst.begin != o.span_begin || inst.end != o.span_end) continue;
        if (!inst.gold) continue;
        p.push_back(o.chosen);
        g.push_back(*inst.gold);
        n.push_back(static_cast<int>(inst.candidates.size()));
      }
    }
    acc = eval::disambig_accuracy(p, g, n);
    have_acc = true;
  }

  EvaluateResult res;
  res.report = eval::build_report(records, have_acc ? &acc : nullptr);
  ojson j;
  ojson config;
  config["hyps"] = cfg.hyps;
  config["refs"] = cfg.refs;
  if (!cfg.stage1_path.empty()) config["stage1"] = cfg.stage1_path;
  j["config"] = config;
  j["report"] = res.report.to_json();
  res.report_json = j;
  if (!cfg.out.empty()) atomic_write_file(cfg.out, j.dump(2) + "\n");
  return res;
}

AblateResult run_ablate(const AblateConfig& cfg) {
  const std::string dir = cfg.corpus_dir;
  require_file(dir + "/inventory.tsv", "ablate inventory");
  require_file(dir + "/train.jsonl", "ablate training corpus");
  require_file(dir + "/test.jsonl", "ablate test corpus");

  auto inv = corpus::load_inventory(dir + "/inventory.tsv");
  auto train = corpus::read_corpus_jsonl(dir + "/train.jsonl");
  auto test = corpus::read_corpus_jsonl(dir + "/test.jsonl");
  if (cfg.max_eval_sentences > 0 &&
      test.size() > static_cast<size_t>(cfg.max_eval_sentences))
    test.resize(cfg.max_eval_sentences);

  // Selector comparison (disambiguation accuracy on the test split).
  disambig::Stage1TrainResult s1 =
      disambig::train_disambiguator(train, inv, cfg.stage1);
  disambig::GoldStats stats = disambig::GoldStats::collect(train);

  std::vector<int> golds, counts, pred_random, pred_mostfreq, pred_stage1;
  DetRng rrng(DetRng::mix(cfg.seed, 0x52414e44));
  for (const auto& pair : test) {
    for (const auto& inst : pair.constraints) {
      if (!inst.gold) continue;
      golds.push_back(*inst.gold);
      counts.push_back(static_cast<int>(inst.candidates.size()));
      pred_random.push_back(disambig::baseline_select(
          inst, disambig::BaselinePolicy::kRandom, nullptr, rrng));
      pred_mostfreq.push_back(disambig::baseline_select(
          inst, disambig::BaselinePolicy::kMostFrequent, &stats, rrng));
      pred_stage1.push_back(
          disambig::disambiguate(s1.model, inst.lexicon, pair.src, inst.begin,
                                 inst.end, inst.candidates)
              .chosen);
    }
  }

  ojson selector_acc;
  auto acc_json = [&](const std::vector<int>& preds) {
    eval::DisambigAccuracy a = eval::disambig_accuracy(preds, golds, counts);
    ojson j;
    j["all"] = a.all ? ojson(*a.all) : ojson(nullptr);
    j["ambiguous"] = a.ambiguous ? ojson(*a.ambiguous) : ojson(nullptr);
    return j;
  };
  selector_acc["random"] = acc_json(pred_random);
  selector_acc["mostfreq"] = acc_json(pred_mostfreq);
  selector_acc["stage1"] = acc_json(pred_stage1);

  // Integrity-loss / gated-decoding grid, gold constraints throughout.
  vecnmt::NmtTrainConfig full_cfg = cfg.nmt;
  full_cfg.kind = "vec";
  vecnmt::NmtTrainConfig noint_cfg = full_cfg;
  noint_cfg.lambda = 0.0;
  vecnmt::NmtTrainResult full_model = vecnmt::train_nmt(train, full_cfg);
  vecnmt::NmtTrainResult noint_model = vecnmt::train_nmt(train, noint_cfg);

  vecnmt::DecodeOptions opts;
  opts.beam_size = cfg.beam_size;

  auto decode_all = [&](const vecnmt::NmtModel& model, DecoderMode mode) {
    std::vector<Translation> outs;
    for (size_t i = 0; i < test.size(); ++i) {
      AnnotatedPair ordered = test[i];
      std::sort(ordered.constraints.begin(), ordered.constraints.end(),
                [](const auto& a, const auto& b) { return a.begin < b.begin; });
      std::vector<TokenSeq> payloads = gold_payloads(ordered);
      outs.push_back(translate_vec(model, ordered, static_cast<int>(i),
                                   payloads, mode, opts));
    }
    return outs;
  };

  ojson grid;
  std::ostringstream table;
  table << "config        ExactM  CSR     (overall)\n";
  auto add_row = [&](const std::string& name, const vecnmt::NmtModel& model,
                     DecoderMode mode) {
    auto outs = decode_all(model, mode);
    auto records = build_eval_records(test, outs);
    eval::MetricReport rep = eval::build_report(records);
    grid[name] = rep.to_json();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-12s  %6.2f  %6.2f\n", name.c_str(),
                  rep.exact_match_pct.value_or(0.0), rep.csr_pct.value_or(0.0));
    table << buf;
  };
  add_row("full", full_model.model, DecoderMode::kGda);
  add_row("wo_gda", full_model.model, DecoderMode::kGated);
  add_row("wo_integrity", noint_model.model, DecoderMode::kGda);
  add_row("original", noint_model.model, DecoderMode::kGated);
  add_row("vanilla", full_model.model, DecoderMode::kVanilla);

  AblateResult res;
  ojson j;
  ojson config;
  config["corpus_dir"] = cfg.corpus_dir;
  config["stage1"] = stage1_train_json(cfg.stage1);
  config["nmt"] = nmt_train_json(cfg.nmt);
  config["max_eval_sentences"] = cfg.max_eval_sentences;
  config["beam_size"] = cfg.beam_size;
  config["seed"] = cfg.seed;
  j["config"] = config;
  j["selector_accuracy"] = selector_acc;
  j["grid"] = grid;
  res.report = j;
  std::ostringstream full_table;
  full_table << "selector accuracy (ambiguous): random "
             << selector_acc["random"]["ambiguous"].dump() << ", mostfreq "
             << selector_acc["mostfreq"]["ambiguous"].dump() << ", stage1 "
             << selector_acc["stage1"]["ambiguous"].dump() << "\n"
             << table.str();
  res.table = full_table.str();
  if (!cfg.out.empty()) atomic_write_file(cfg.out, j.dump(2) + "\n");
  return res;
}

}  // namespace lexinmt::pipeline
