#include "lexinmt/disambig.hpp"

#include <algorithm>
#include <cmath>

namespace lexinmt::disambig {

namespace {

bool tokens_match(const TokenSeq& hay, size_t pos, const TokenSeq& needle) {
  if (pos + needle.size() > hay.size()) return false;
  for (size_t i = 0; i < needle.size(); ++i)
    if (hay[pos + i] != needle[i]) return false;
  return true;
}

}  // namespace

ContextInput build_context_input(const Vocabulary& vocab, const TokenSeq& lexicon,
                                 const TokenSeq& sentence, size_t span_begin,
                                 size_t span_end) {
  if (lexicon.empty()) fail("build_context_input: empty lexicon");
  if (span_begin >= span_end || span_end > sentence.size())
    fail("build_context_input: span out of range");
  if (span_end - span_begin != lexicon.size() ||
      !tokens_match(sentence, span_begin, lexicon))
    fail("build_context_input: span does not match lexicon");

  ContextInput out;
  out.ids.push_back(Vocabulary::kCls);
  out.positions.push_back(0);
  for (size_t i = 0; i < lexicon.size(); ++i) {
    out.ids.push_back(vocab.id(lexicon[i]));
    out.positions.push_back(static_cast<int>(i + 1));
  }
  out.ids.push_back(Vocabulary::kSep);
  out.positions.push_back(static_cast<int>(lexicon.size() + 1));

  out.sentence_offset = out.ids.size();
  // Mask every occurrence of the lexicon, not only the annotated span, so no
  // copy of the answer's source form is visible.
  std::vector<bool> masked(sentence.size(), false);
  for (size_t i = 0; i + lexicon.size() <= sentence.size(); ++i)
    if (tokens_match(sentence, i, lexicon))
      for (size_t j = 0; j < lexicon.size(); ++j) masked[i + j] = true;
  for (size_t i = 0; i < sentence.size(); ++i) {
    out.ids.push_back(masked[i] ? Vocabulary::kMask : vocab.id(sentence[i]));
    out.positions.push_back(static_cast<int>(i));  // sentence counter restarts
  }
  return out;
}

namespace {

Var adaptation(Tape& tape, ParamStore& store, Var h_cls, const std::string& w1,
               const std::string& w2) {
  Var a = tape.tanh(tape.matmul(h_cls, tape.param(store, w1)));
  return tape.matmul(a, tape.param(store, w2));
}

Matrix adaptation_eval(const ParamStore& store, const Matrix& h_cls,
                       const std::string& w1, const std::string& w2) {
  Matrix a = nnet::matmul(h_cls, store.get(w1));
  for (auto& x : a.d) x = std::tanh(x);
  return nnet::matmul(a, store.get(w2));
}

}  // namespace

Stage1Model Stage1Model::init(const ModelConfig& cfg, const Vocabulary& vocab,
                              uint64_t seed) {
  Stage1Model m;
  m.cfg = cfg;
  m.cfg.vocab_size = vocab.size();
  m.cfg.validate();
  m.vocab = vocab;
  DetRng rng(seed);
  nnet::init_embedding(m.params, "ctx.embed", m.cfg, rng);
  nnet::init_encoder_stack(m.params, m.cfg, "ctx.enc.", rng);
  auto& w1 = m.params.create("ctx.adapt.w1", m.cfg.d_model, m.cfg.d_model);
  nnet::init_normal(w1, rng, std::sqrt(1.0 / m.cfg.d_model));
  auto& w2 = m.params.create("ctx.adapt.w2", m.cfg.d_model, m.cfg.d_model);
  nnet::init_normal(w2, rng, std::sqrt(1.0 / m.cfg.d_model));
  nnet::init_embedding(m.params, "cand.embed", m.cfg, rng);
  nnet::init_encoder_stack(m.params, m.cfg, "cand.enc.", rng);
  auto& w3 = m.params.create("cand.adapt.w1", m.cfg.d_model, m.cfg.d_model);
  nnet::init_normal(w3, rng, std::sqrt(1.0 / m.cfg.d_model));
  auto& w4 = m.params.create("cand.adapt.w2", m.cfg.d_model, m.cfg.d_model);
  nnet::init_normal(w4, rng, std::sqrt(1.0 / m.cfg.d_model));
  return m;
}

nnet::ShapeList Stage1Model::expected_shapes() const {
  nnet::ShapeList s;
  auto append = [&s](nnet::ShapeList more) {
    for (auto& e : more) s.push_back(std::move(e));
  };
  append(nnet::embedding_shape("ctx.embed", cfg));
  append(nnet::encoder_shapes(cfg, "ctx.enc."));
  s.push_back({"ctx.adapt.w1", {cfg.d_model, cfg.d_model}});
  s.push_back({"ctx.adapt.w2", {cfg.d_model, cfg.d_model}});
  append(nnet::embedding_shape("cand.embed", cfg));
  append(nnet::encoder_shapes(cfg, "cand.enc."));
  s.push_back({"cand.adapt.w1", {cfg.d_model, cfg.d_model}});
  s.push_back({"cand.adapt.w2", {cfg.d_model, cfg.d_model}});
  return s;
}

void Stage1Model::save(const std::string& path, const nnet::ojson& run_config) const {
  nnet::ojson config;
  config["kind"] = "stage1";
  config["model"] = cfg.to_json();
  config["vocab"] = vocab.tokens();
  config["run_config"] = run_config;
  nnet::save_checkpoint(path, config, params);
}

Stage1Model Stage1Model::load(const std::string& path) {
  nnet::Checkpoint ck = nnet::load_checkpoint(path);
  if (ck.config.at("kind").get<std::string>() != "stage1")
    fail("checkpoint " + path + " is not a stage1 model");
  Stage1Model m;
  m.cfg = ModelConfig::from_json(ck.config.at("model"));
  m.vocab = Vocabulary::from_tokens(
      ck.config.at("vocab").get<std::vector<std::string>>());
  if (m.vocab.size() != m.cfg.vocab_size)
    fail("checkpoint " + path + ": vocab size does not match config");
  m.params = std::move(ck.params);
  nnet::validate_params(m.params, m.expected_shapes());
  return m;
}

Var encode_context_tape(Tape& tape, Stage1Model& model, const TokenSeq& lexicon,
                        const TokenSeq& sentence, size_t span_begin,
                        size_t span_end) {
  ContextInput in = build_context_input(model.vocab, lexicon, sentence,
                                        span_begin, span_end);
  Var h = nnet::encode(tape, model.params, model.cfg, "ctx.embed", "ctx.enc.",
                       in.ids, in.positions, nullptr, {});
  Var h_cls = tape.slice_rows(h, 0, 1);
  return adaptation(tape, model.params, h_cls, "ctx.adapt.w1", "ctx.adapt.w2");
}

Var encode_constraint_tape(Tape& tape, Stage1Model& model,
                           const TokenSeq& candidate) {
  if (candidate.empty()) fail("encode_constraint: empty candidate");
  std::vector<int> ids = {Vocabulary::kCls};
  std::vector<int> positions = {0};
  for (size_t i = 0; i < candidate.size(); ++i) {
    ids.push_back(model.vocab.id(candidate[i]));
    positions.push_back(static_cast<int>(i + 1));
  }
  Var h = nnet::encode(tape, model.params, model.cfg, "cand.embed", "cand.enc.",
                       ids, positions, nullptr, {});
  Var h_cls = tape.slice_rows(h, 0, 1);
  return adaptation(tape, model.params, h_cls, "cand.adapt.w1", "cand.adapt.w2");
}

Matrix encode_context(const Stage1Model& model, const TokenSeq& lexicon,
                      const TokenSeq& sentence, size_t span_begin,
                      size_t span_end) {
  ContextInput in = build_context_input(model.vocab, lexicon, sentence,
                                        span_begin, span_end);
  Matrix h = nnet::encode_eval(model.params, model.cfg, "ctx.embed", "ctx.enc.",
                               in.ids, in.positions);
  Matrix h_cls(1, model.cfg.d_model);
  for (int j = 0; j < model.cfg.d_model; ++j) h_cls.d[j] = h.at(0, j);
  return adaptation_eval(model.params, h_cls, "ctx.adapt.w1", "ctx.adapt.w2");
}

Matrix encode_constraint(const Stage1Model& model, const TokenSeq& candidate) {
  if (candidate.empty()) fail("encode_constraint: empty candidate");
  std::vector<int> ids = {Vocabulary::kCls};
  std::vector<int> positions = {0};
  for (size_t i = 0; i < candidate.size(); ++i) {
    ids.push_back(model.vocab.id(candidate[i]));
    positions.push_back(static_cast<int>(i + 1));
  }
  Matrix h = nnet::encode_eval(model.params, model.cfg, "cand.embed",
                               "cand.enc.", ids, positions);
  Matrix h_cls(1, model.cfg.d_model);
  for (int j = 0; j < model.cfg.d_model; ++j) h_cls.d[j] = h.at(0, j);
  return adaptation_eval(model.params, h_cls, "cand.adapt.w1", "cand.adapt.w2");
}

NegativeSample sample_negatives(DetRng& rng, const ConstraintInstance& inst,
                                const std::vector<const ConstraintInstance*>& batch,
                                int k) {
  if (k < 1) fail("sample_negatives: K must be >= 1");
  if (!inst.gold) fail("sample_negatives: instance has no gold candidate");
  const TokenSeq& gold = inst.candidates[*inst.gold];

  NegativeSample out;
  std::vector<TokenSeq> own;
  for (size_t i = 0; i < inst.candidates.size(); ++i)
    if (static_cast<int>(i) != *inst.gold) own.push_back(inst.candidates[i]);

  if (static_cast<int>(own.size()) >= k) {
    // random K-subset without replacement
    for (int i = 0; i < k; ++i) {
      size_t j = i + rng.below(own.size() - i);
      std::swap(own[i], own[j]);
      out.negatives.push_back(own[i]);
    }
    return out;
  }

  out.negatives = own;
  std::vector<TokenSeq> pool;
  for (const ConstraintInstance* other : batch) {
    if (other == &inst || !other->gold) continue;
    const TokenSeq& g = other->candidates[*other->gold];
    if (g != gold) pool.push_back(g);
  }
  while (static_cast<int>(out.negatives.size()) < k && !pool.empty()) {
    size_t j = rng.below(pool.size());
    out.negatives.push_back(pool[j]);
    pool.erase(pool.begin() + j);
  }
  if (static_cast<int>(out.negatives.size()) < k) {
    // Batch too small; pad by drawing with replacement rather than aborting
    // mid-training.
    std::vector<TokenSeq> all = out.negatives;
    if (all.empty()) return out;  // nothing to draw from at all
    out.padded_with_replacement = true;
    while (static_cast<int>(out.negatives.size()) < k)
      out.negatives.push_back(all[rng.below(all.size())]);
  }
  return out;
}

Var contrastive_loss(Tape& tape, Var e_context, Var e_positive,
                     const std::vector<Var>& e_negatives) {
  if (e_negatives.empty()) return tape.leaf(Matrix::scalar(0.0));
  std::vector<Var> rows;
  rows.reserve(e_negatives.size() + 1);
  rows.push_back(e_positive);
  for (Var v : e_negatives) rows.push_back(v);
  Var stacked = tape.concat_rows(rows);
  Var sims = tape.cosine_rows(stacked, e_context);
  Var lse = tape.logsumexp(sims);
  Var pos = tape.slice_rows(sims, 0, 1);
  return tape.add_scaled(lse, pos, -1.0);
}

DisambigResult disambiguate(const Stage1Model& model, const TokenSeq& lexicon,
                            const TokenSeq& sentence, size_t span_begin,
                            size_t span_end,
                            const std::vector<TokenSeq>& candidates) {
  if (candidates.empty()) fail("disambiguate: no candidates");
  Matrix e_s = encode_context(model, lexicon, sentence, span_begin, span_end);
  const int d = model.cfg.d_model;
  double ns = nnet::norm2(e_s.d.data(), d);
  if (ns < 1e-300) fail("disambiguate: zero-norm context embedding");
  DisambigResult out;
  double best = -2.0;
  for (size_t c = 0; c < candidates.size(); ++c) {
    Matrix e_m = encode_constraint(model, candidates[c]);
    double nm = nnet::norm2(e_m.d.data(), d);
    if (nm < 1e-300) fail("disambiguate: zero-norm candidate embedding");
    double cosv = nnet::dot(e_s.d.data(), e_m.d.data(), d) / (ns * nm);
    out.scores.push_back(cosv);
    if (cosv > best) {  // strict > keeps the lowest index on ties
      best = cosv;
      out.chosen = static_cast<int>(c);
    }
  }
  return out;
}

Stage1TrainResult train_disambiguator(const std::vector<AnnotatedPair>& pairs,
                                      const ConstraintInventory& inventory,
                                      const Stage1TrainConfig& cfg) {
  struct InstRef {
    const AnnotatedPair* pair;
    const ConstraintInstance* inst;
  };
  std::vector<InstRef> instances;
  bool any_ambiguous = false;
  for (const auto& p : pairs)
    for (const auto& c : p.constraints) {
      if (!c.gold) continue;
      instances.push_back({&p, &c});
      if (c.candidates.size() >= 2) any_ambiguous = true;
    }
  if (instances.empty() || !any_ambiguous)
    fail("train_disambiguator: corpus has no ambiguous gold-annotated "
         "instance; nothing to learn");

  Vocabulary vocab = Vocabulary::build(pairs, &inventory);
  Stage1Model model = Stage1Model::init(cfg.model, vocab, cfg.seed);

  nnet::AdamState adam;
  DetRng rng(DetRng::mix(cfg.seed, 0x5741));
  TrainLog log;

  std::vector<size_t> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // trigger shuffle on first use

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const ConstraintInstance*> batch_insts;
    std::vector<const AnnotatedPair*> batch_pairs;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const InstRef& ref = instances[order[cursor++]];
      batch_insts.push_back(ref.inst);
      batch_pairs.push_back(ref.pair);
    }

    Tape tape;
    Var total;
    int counted = 0;
    for (size_t b = 0; b < batch_insts.size(); ++b) {
      const ConstraintInstance& inst = *batch_insts[b];
      NegativeSample negs = sample_negatives(rng, inst, batch_insts, cfg.negatives);
      if (negs.padded_with_replacement) log.padded_negative_batches++;
      Var e_s = encode_context_tape(tape, model, inst.lexicon,
                                    batch_pairs[b]->src, inst.begin, inst.end);
      Var e_pos = encode_constraint_tape(tape, model, inst.candidates[*inst.gold]);
      std::vector<Var> e_negs;
      for (const auto& neg : negs.negatives)
        e_negs.push_back(encode_constraint_tape(tape, model, neg));
      Var loss = contrastive_loss(tape, e_s, e_pos, e_negs);
      total = counted == 0 ? loss : tape.add(total, loss);
      ++counted;
    }
    Var mean = tape.scale(total, 1.0 / counted);
    double loss_value = tape.scalar(mean);
    nnet::GradMap grads = tape.backward(mean);
    nnet::adam_step(model.params, grads, adam, cfg.adam);
    log.loss_per_step.push_back(loss_value);
  }
  return {std::move(model), std::move(log)};
}

GoldStats GoldStats::collect(const std::vector<AnnotatedPair>& pairs) {
  GoldStats st;
  for (const auto& p : pairs)
    for (const auto& c : p.constraints) {
      if (!c.gold) continue;
      auto& counts = st.counts[c.lexicon];
      if (counts.size() < c.candidates.size()) counts.resize(c.candidates.size(), 0);
      counts[*c.gold]++;
    }
  return st;
}

int baseline_select(const ConstraintInstance& inst, BaselinePolicy policy,
                    const GoldStats* stats, DetRng& rng) {
  const int n = static_cast<int>(inst.candidates.size());
  if (n == 0) fail("baseline_select: no candidates");
  if (policy == BaselinePolicy::kRandom)
    return static_cast<int>(rng.below(static_cast<uint64_t>(n)));
  if (!stats) fail("baseline_select: most-frequent policy needs corpus stats");
  auto it = stats->counts.find(inst.lexicon);
  if (it == stats->counts.end()) return 0;  // unseen lexicon
  int best = 0;
  int64_t best_count = -1;
  for (int i = 0; i < n && i < static_cast<int>(it->second.size()); ++i) {
    if (it->second[i] > best_count) {
      best_count = it->second[i];
      best = i;
    }
  }
  return best;
}

}  // namespace lexinmt::disambig
