#include "lexinmt/vecnmt.hpp"

#include <algorithm>
#include <cmath>

namespace lexinmt::vecnmt {

void validate_constraints(const ConstraintSet& cs) {
  if (cs.size() > 3) fail("constraints: at most 3 per sentence");
  for (const auto& c : cs)
    if (c.tokens.empty()) fail("constraints: empty target sequence");
}

NmtModel NmtModel::init(const ModelConfig& cfg, const Vocabulary& vocab,
                        const std::string& kind, uint64_t seed) {
  if (kind != "vec" && kind != "template") fail("NmtModel: unknown kind " + kind);
  NmtModel m;
  m.cfg = cfg;
  m.cfg.vocab_size = vocab.size();
  m.cfg.validate();
  m.vocab = vocab;
  m.kind = kind;
  DetRng rng(seed);
  nnet::init_embedding(m.params, "embed", m.cfg, rng);
  nnet::init_encoder_stack(m.params, m.cfg, "enc.", rng);
  nnet::init_decoder_stack(m.params, m.cfg, "dec.", rng);
  auto& gw = m.params.create("gate.w", 1, m.cfg.d_model);
  nnet::init_normal(gw, rng, std::sqrt(1.0 / m.cfg.d_model));
  m.params.create("gate.b", 1, 1);
  return m;
}

nnet::ShapeList NmtModel::expected_shapes() const {
  nnet::ShapeList s;
  auto append = [&s](nnet::ShapeList more) {
    for (auto& e : more) s.push_back(std::move(e));
  };
  append(nnet::embedding_shape("embed", cfg));
  append(nnet::encoder_shapes(cfg, "enc."));
  append(nnet::decoder_shapes(cfg, "dec."));
  s.push_back({"gate.w", {1, cfg.d_model}});
  s.push_back({"gate.b", {1, 1}});
  return s;
}

void NmtModel::save(const std::string& path, const nnet::ojson& run_config) const {
  nnet::ojson config;
  config["kind"] = kind;
  config["model"] = cfg.to_json();
  config["vocab"] = vocab.tokens();
  config["run_config"] = run_config;
  nnet::save_checkpoint(path, config, params);
}

NmtModel NmtModel::load(const std::string& path) {
  nnet::Checkpoint ck = nnet::load_checkpoint(path);
  std::string kind = ck.config.at("kind").get<std::string>();
  if (kind != "vec" && kind != "template")
    fail("checkpoint " + path + " is not an NMT model");
  NmtModel m;
  m.kind = kind;
  m.cfg = ModelConfig::from_json(ck.config.at("model"));
  m.vocab = Vocabulary::from_tokens(
      ck.config.at("vocab").get<std::vector<std::string>>());
  if (m.vocab.size() != m.cfg.vocab_size)
    fail("checkpoint " + path + ": vocab size does not match config");
  m.params = std::move(ck.params);
  nnet::validate_params(m.params, m.expected_shapes());
  return m;
}

std::vector<int> NmtModel::encoder_input(const TokenSeq& src) const {
  std::vector<int> ids = vocab.encode(src);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

Var teacher_forced_hidden(Tape& tape, NmtModel& model,
                          const std::vector<int>& src_ids,
                          const std::vector<int>& tgt_ids,
                          const nnet::DropoutCtx& dropout) {
  std::vector<int> src_pos(src_ids.size());
  for (size_t i = 0; i < src_ids.size(); ++i) src_pos[i] = static_cast<int>(i);
  Var enc = nnet::encode(tape, model.params, model.cfg, "embed", "enc.",
                         src_ids, src_pos, nullptr, dropout);

  std::vector<int> dec_in;
  dec_in.push_back(Vocabulary::kBos);
  dec_in.insert(dec_in.end(), tgt_ids.begin(), tgt_ids.end());
  std::vector<int> dec_pos(dec_in.size());
  for (size_t i = 0; i < dec_in.size(); ++i) dec_pos[i] = static_cast<int>(i);
  Var x = nnet::embed_sequence(tape, model.params, "embed", model.cfg, dec_in,
                               dec_pos);
  return nnet::decoder_stack(tape, model.params, model.cfg, "dec.", x, enc,
                             dropout);
}

Var p_model_tape(Tape& tape, NmtModel& model, Var hidden) {
  Var logits = tape.matmul_nt(hidden, tape.param(model.params, "embed"));
  return tape.softmax_rows(logits);
}

std::vector<double> p_model(const NmtModel& model, const std::vector<double>& h) {
  const Matrix& e = model.params.get("embed");
  const int v = e.rows, d = e.cols;
  if (static_cast<int>(h.size()) != d) fail("p_model: bad hidden size");
  std::vector<double> out(v);
  double mx = -1e308;
  for (int y = 0; y < v; ++y) {
    out[y] = nnet::dot(e.row(y), h.data(), d);
    mx = std::max(mx, out[y]);
  }
  double sum = 0.0;
  for (int y = 0; y < v; ++y) {
    out[y] = std::exp(out[y] - mx);
    sum += out[y];
  }
  for (int y = 0; y < v; ++y) out[y] /= sum;
  return out;
}

std::vector<std::pair<int, double>> p_plug(const NmtModel& model,
                                           const std::vector<double>& h,
                                           const std::set<int>& constraint_tokens) {
  const Matrix& e = model.params.get("embed");
  const int d = e.cols;
  double hn = nnet::norm2(h.data(), d);
  if (hn < 1e-300) fail("p_plug: zero-norm hidden state");
  std::vector<std::pair<int, double>> out;
  for (int y : constraint_tokens) {
    if (y < 0 || y >= e.rows) fail("p_plug: token id out of range");
    double wn = nnet::norm2(e.row(y), d);
    if (wn < 1e-300) fail("p_plug: zero-norm embedding for token " + std::to_string(y));
    double c = nnet::dot(e.row(y), h.data(), d) / (wn * hn);
    out.push_back({y, std::max(0.0, c)});
  }
  return out;
}

Var integrity_loss(Tape& tape, Var hidden, Var embed,
                   const std::vector<std::pair<int, int>>& items, int window) {
  if (window < 0) fail("integrity_loss: negative window");
  const int t = tape.val(hidden).rows;
  Var total;
  for (const auto& [pos, token] : items) {
    if (pos < 0 || pos >= t) fail("integrity_loss: position out of range");
    Var w = tape.gather_rows(embed, {token});
    int lo = std::max(0, pos - window);
    int hi = std::min(t - 1, pos + window);
    Var win = tape.slice_rows(hidden, lo, hi - lo + 1);
    Var cs = tape.cosine_rows(win, w);
    Var lse = tape.logsumexp(cs);
    Var mine = tape.slice_rows(cs, pos - lo, 1);
    Var term = tape.add_scaled(lse, mine, -1.0);
    total = total.valid() ? tape.add(total, term) : term;
  }
  if (!total.valid()) return tape.leaf(Matrix::scalar(0.0));
  return total;
}

namespace {

Var gate_values(Tape& tape, NmtModel& model, Var hidden) {
  Var z = tape.matmul_nt(hidden, tape.param(model.params, "gate.w"));
  Var ones = tape.leaf(Matrix::filled(tape.val(hidden).rows, 1, 1.0));
  Var b = tape.matmul(ones, tape.param(model.params, "gate.b"));
  return tape.sigmoid(tape.add(z, b));
}

}  // namespace

Var gated_nll(Tape& tape, NmtModel& model, Var hidden,
              const std::vector<int>& out_ids,
              const std::set<int>& constraint_tokens) {
  const int t = tape.val(hidden).rows;
  if (static_cast<int>(out_ids.size()) != t)
    fail("gated_nll: output length mismatch");
  Var pm = p_model_tape(tape, model, hidden);
  Var pm_y = tape.pick_entries(pm, out_ids);

  Var embed = tape.param(model.params, "embed");
  Var wy = tape.gather_rows(embed, out_ids);
  Var cs = tape.cosine_rows(hidden, wy);
  Var pp_y = tape.relu(cs);
  Matrix member(t, 1);
  for (int i = 0; i < t; ++i)
    member.at(i, 0) = constraint_tokens.count(out_ids[i]) ? 1.0 : 0.0;
  pp_y = tape.mul(pp_y, tape.leaf(member));

  Var g = gate_values(tape, model, hidden);
  Var one_minus_g = tape.add_scalar(tape.scale(g, -1.0), 1.0);
  Var mix = tape.add(tape.mul(one_minus_g, pm_y), tape.mul(g, pp_y));
  Var floored = tape.add_scalar(mix, kProbFloor);
  return tape.scale(tape.sum(tape.log(floored)), -1.0);
}

Var plain_nll(Tape& tape, NmtModel& model, Var hidden,
              const std::vector<int>& out_ids, double label_smoothing) {
  const int t = tape.val(hidden).rows;
  if (static_cast<int>(out_ids.size()) != t)
    fail("plain_nll: output length mismatch");
  Var logits = tape.matmul_nt(hidden, tape.param(model.params, "embed"));
  Var logp = tape.log_softmax_rows(logits);
  Var picked = tape.pick_entries(logp, out_ids);
  Var nll = tape.scale(tape.sum(picked), -1.0);
  if (label_smoothing > 0.0) {
    const int v = tape.val(logits).cols;
    Var uniform = tape.scale(tape.sum(logp), -1.0 / v);
    nll = tape.add(tape.scale(nll, 1.0 - label_smoothing),
                   tape.scale(uniform, label_smoothing));
  }
  return nll;
}

namespace {

// First contiguous occurrence of needle in hay, or -1.
int find_tokens(const std::vector<int>& hay, const std::vector<int>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return -1;
  for (size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (size_t j = 0; j < needle.size(); ++j)
      if (hay[i + j] != needle[j]) {
        ok = false;
        break;
      }
    if (ok) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

StepLosses nmt_train_step(NmtModel& model, const std::vector<AnnotatedPair>& batch,
                          double lambda, int window,
                          const nnet::DropoutCtx& dropout) {
  Tape tape;
  Var orig_sum, int_sum;
  StepLosses out;

  for (const auto& pair : batch) {
    if (!pair.tgt) fail("nmt_train_step: pair without target");
    std::vector<int> src_ids = model.encoder_input(pair.src);
    std::vector<int> tgt_ids = model.vocab.encode(*pair.tgt);
    std::vector<int> out_ids = tgt_ids;
    out_ids.push_back(Vocabulary::kEos);
    out.tokens += static_cast<int64_t>(out_ids.size());

    Var hidden = teacher_forced_hidden(tape, model, src_ids, tgt_ids, dropout);

    Var l_pair;
    if (model.kind == "vec") {
      std::set<int> member;
      std::vector<std::pair<int, int>> items;
      for (const auto& inst : pair.constraints) {
        if (!inst.gold) continue;
        std::vector<int> ctoks = model.vocab.encode(inst.candidates[*inst.gold]);
        for (int y : ctoks) member.insert(y);
        int pos = find_tokens(tgt_ids, ctoks);
        if (pos < 0) {
          // constraint missing from the reference: training-data defect,
          // skip its integrity terms but keep training
          out.skipped_constraint_tokens += static_cast<int64_t>(ctoks.size());
          continue;
        }
        for (size_t j = 0; j < ctoks.size(); ++j)
          items.push_back({pos + static_cast<int>(j), ctoks[j]});
      }
      l_pair = gated_nll(tape, model, hidden, out_ids, member);
      if (lambda != 0.0 && !items.empty()) {
        Var embed = tape.param(model.params, "embed");
        Var li = integrity_loss(tape, hidden, embed, items, window);
        int_sum = int_sum.valid() ? tape.add(int_sum, li) : li;
      }
    } else {
      l_pair = plain_nll(tape, model, hidden, out_ids);
    }
    orig_sum = orig_sum.valid() ? tape.add(orig_sum, l_pair) : l_pair;
  }

  Var total = orig_sum;
  if (int_sum.valid() && lambda != 0.0)
    total = tape.add_scaled(orig_sum, int_sum, lambda);

  out.orig = tape.scalar(orig_sum);
  out.integrity = int_sum.valid() ? tape.scalar(int_sum) : 0.0;
  out.total = tape.scalar(total);
  out.grads = tape.backward(total);
  return out;
}

NmtTrainResult train_nmt(const std::vector<AnnotatedPair>& pairs,
                         const NmtTrainConfig& cfg) {
  std::vector<const AnnotatedPair*> usable;
  for (const auto& p : pairs)
    if (p.tgt) usable.push_back(&p);
  if (usable.empty()) fail("train_nmt: no pairs with targets");

  Vocabulary vocab = Vocabulary::build(pairs);
  NmtModel model = NmtModel::init(cfg.model, vocab, cfg.kind, cfg.seed);

  nnet::AdamState adam;
  DetRng rng(DetRng::mix(cfg.seed, 0x6e6d74));
  NmtTrainResult result{std::move(model), {}, 0};

  std::vector<size_t> order(usable.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<AnnotatedPair> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(*usable[order[cursor++]]);
    }
    nnet::DropoutCtx dropout{cfg.model.dropout, cfg.seed, step};
    StepLosses losses = cfg.kind == "vec"
        ? nmt_train_step(result.model, batch, cfg.lambda, cfg.window, dropout)
        : nmt_train_step(result.model, batch, 0.0, cfg.window, dropout);
    result.skipped_constraint_tokens += losses.skipped_constraint_tokens;
    // normalize per token so the learning rate is insensitive to batch length
    double inv = 1.0 / static_cast<double>(losses.tokens);
    for (auto& [name, g] : losses.grads) nnet::scale_inplace(g, inv);
    nnet::adam_step(result.model.params, losses.grads, adam, cfg.adam);
    result.loss_per_step.push_back(losses.total * inv);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Constraint tracking

ConstraintTracker::ConstraintTracker(
    const std::vector<std::vector<int>>& constraints) {
  auto pat = std::make_shared<Patterns>();
  for (const auto& c : constraints) {
    if (c.empty()) fail("ConstraintTracker: empty constraint");
    pat->pats.push_back(c);
    std::vector<int> f(c.size(), 0);
    for (size_t i = 1; i < c.size(); ++i) {
      int k = f[i - 1];
      while (k > 0 && c[i] != c[k]) k = f[k - 1];
      if (c[i] == c[k]) ++k;
      f[i] = k;
    }
    pat->fails.push_back(std::move(f));
    for (int y : c) pat->token_set.insert(y);
  }
  pat_ = pat;
  state_.assign(pat_->pats.size(), 0);
  fin_.assign(pat_->pats.size(), 0);
}

void ConstraintTracker::feed(int token) {
  boosted_.clear();
  if (!pat_) return;
  for (size_t n = 0; n < pat_->pats.size(); ++n) {
    if (fin_[n]) continue;
    const std::vector<int>& p = pat_->pats[n];
    const std::vector<int>& f = pat_->fails[n];
    int s = state_[n];
    bool direct = s < static_cast<int>(p.size()) && p[s] == token;
    while (s > 0 && (s == static_cast<int>(p.size()) || p[s] != token))
      s = f[s - 1];
    if (s < static_cast<int>(p.size()) && p[s] == token) ++s;
    state_[n] = s;
    if (s == static_cast<int>(p.size())) {
      fin_[n] = 1;  // finished constraints never reopen
      continue;
    }
    // Only a direct next-token match schedules a boost for the next step.
    if (direct && s > 0) boosted_.push_back(p[s]);
  }
  std::sort(boosted_.begin(), boosted_.end());
  boosted_.erase(std::unique(boosted_.begin(), boosted_.end()), boosted_.end());
}

bool ConstraintTracker::all_finished() const {
  for (uint8_t f : fin_)
    if (!f) return false;
  return true;
}

const std::set<int>& ConstraintTracker::token_set() const {
  static const std::set<int> kEmpty;
  return pat_ ? pat_->token_set : kEmpty;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

struct FinishedHyp {
  std::vector<int> tokens;  // without EOS
  double cum = 0.0;
  int steps = 0;  // generated tokens including EOS
  ConstraintTracker tracker;
};

double norm_score(double cum, int steps, double alpha) {
  return cum / std::pow(static_cast<double>(std::max(1, steps)), alpha);
}

// Deterministic final ranking: normalized score, then cumulative score, then
// shorter output, then lexicographically smaller token ids.
bool better_final(const FinishedHyp& a, const FinishedHyp& b, double alpha) {
  double na = norm_score(a.cum, a.steps, alpha);
  double nb = norm_score(b.cum, b.steps, alpha);
  if (na != nb) return na > nb;
  if (a.cum != b.cum) return a.cum > b.cum;
  if (a.steps != b.steps) return a.steps < b.steps;
  return a.tokens < b.tokens;
}

struct Cand {
  double score;
  int parent;
  int token;
};

void sort_candidates(std::vector<Cand>& cands) {
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.parent != b.parent) return a.parent < b.parent;
    return a.token < b.token;
  });
}

double gate_value(const NmtModel& model, const std::vector<double>& h) {
  const Matrix& w = model.params.get("gate.w");
  double z = nnet::dot(w.row(0), h.data(), model.cfg.d_model) +
             model.params.get("gate.b").d[0];
  return 0.5 * (std::tanh(0.5 * z) + 1.0);
}

Matrix encode_source(const NmtModel& model, const TokenSeq& src) {
  std::vector<int> ids = model.encoder_input(src);
  std::vector<int> pos(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) pos[i] = static_cast<int>(i);
  return nnet::encode_eval(model.params, model.cfg, "embed", "enc.", ids, pos);
}

int resolve_max_steps(const DecodeOptions& opts, size_t src_len) {
  return opts.max_steps > 0 ? opts.max_steps
                            : static_cast<int>(2 * src_len + 10);
}

}  // namespace

DecodeResult beam_search(const NmtModel& model, const TokenSeq& src,
                         const DecodeOptions& opts) {
  if (opts.beam_size < 1) fail("beam_search: beam size must be >= 1");
  if (src.empty()) fail("beam_search: empty source");
  Matrix enc = encode_source(model, src);
  const int max_steps = resolve_max_steps(opts, src.size());

  struct Hyp {
    std::vector<int> tokens;
    double cum = 0.0;
    nnet::IncrementalDecoder dec;
    int last = Vocabulary::kBos;
  };
  std::vector<Hyp> alive;
  alive.push_back(
      {{}, 0.0, nnet::IncrementalDecoder(model.params, model.cfg, "embed", "dec.", enc),
       Vocabulary::kBos});
  std::vector<FinishedHyp> finished;
  int slots = opts.beam_size;

  for (int step = 0; step < max_steps && !alive.empty(); ++step) {
    std::vector<Cand> cands;
    for (size_t p = 0; p < alive.size(); ++p) {
      std::vector<double> h = alive[p].dec.step(alive[p].last);
      std::vector<double> pm = p_model(model, h);
      for (int y = 0; y < static_cast<int>(pm.size()); ++y) {
        double s = alive[p].cum + std::log(std::max(pm[y], kProbFloor));
        cands.push_back({s, static_cast<int>(p), y});
      }
    }
    sort_candidates(cands);

    std::vector<Hyp> next;
    int taken = 0;
    for (const Cand& c : cands) {
      if (taken >= slots) break;
      ++taken;
      if (c.token == Vocabulary::kEos) {
        finished.push_back({alive[c.parent].tokens, c.score,
                            static_cast<int>(alive[c.parent].tokens.size()) + 1,
                            {}});
        --slots;  // finished hypotheses keep their slot
        continue;
      }
      Hyp h = alive[c.parent];
      h.tokens.push_back(c.token);
      h.cum = c.score;
      h.last = c.token;
      next.push_back(std::move(h));
    }
    alive = std::move(next);
  }

  DecodeResult out;
  if (!finished.empty()) {
    const FinishedHyp* best = &finished[0];
    for (const auto& f : finished)
      if (better_final(f, *best, opts.len_alpha)) best = &f;
    out.tokens = best->tokens;
    out.cum_logp = best->cum;
    out.steps = best->steps;
    out.finished = true;
  } else {
    // ran out of steps: return the best unfinished hypothesis, flagged
    const Hyp* best = nullptr;
    for (const auto& h : alive)
      if (!best || h.cum > best->cum) best = &h;
    if (!best) fail("beam_search: no hypotheses");
    out.tokens = best->tokens;
    out.cum_logp = best->cum;
    out.steps = static_cast<int>(best->tokens.size());
    out.finished = false;
    out.flags.push_back("unfinished");
  }
  out.norm_score = norm_score(out.cum_logp, out.steps, opts.len_alpha);
  return out;
}

DecodeResult gda_decode(const NmtModel& model, const TokenSeq& src,
                        const std::vector<TokenSeq>& constraints,
                        const DecodeOptions& opts) {
  if (opts.beam_size < 1) fail("gda_decode: beam size must be >= 1");
  if (src.empty()) fail("gda_decode: empty source");
  if (constraints.size() > 3) fail("gda_decode: at most 3 constraints");
  std::vector<std::vector<int>> cons_ids;
  for (const auto& c : constraints) {
    if (c.empty()) fail("gda_decode: empty constraint");
    cons_ids.push_back(model.vocab.encode(c));
  }

  Matrix enc = encode_source(model, src);
  const int max_steps = resolve_max_steps(opts, src.size());
  const Matrix& embed = model.params.get("embed");
  const int d = model.cfg.d_model;

  ConstraintTracker tracker0(cons_ids);
  const std::set<int>& member = tracker0.token_set();
  std::vector<std::pair<int, double>> token_norms;  // (id, |w_y|)
  for (int y : member)
    token_norms.push_back({y, nnet::norm2(embed.row(y), d)});

  struct Hyp {
    std::vector<int> tokens;
    double cum = 0.0;
    nnet::IncrementalDecoder dec;
    int last = Vocabulary::kBos;
    ConstraintTracker tracker;
  };
  std::vector<Hyp> alive;
  alive.push_back(
      {{}, 0.0, nnet::IncrementalDecoder(model.params, model.cfg, "embed", "dec.", enc),
       Vocabulary::kBos, tracker0});
  std::vector<FinishedHyp> finished;
  int slots = opts.beam_size;

  for (int step = 0; step < max_steps && !alive.empty(); ++step) {
    std::vector<Cand> cands;
    for (size_t p = 0; p < alive.size(); ++p) {
      std::vector<double> h = alive[p].dec.step(alive[p].last);
      std::vector<double> pm = p_model(model, h);
      // sparse plug scores: clipped cosine, then boosts from the cursor(s)
      std::vector<std::pair<int, double>> pp;
      double hn = nnet::norm2(h.data(), d);
      if (hn < 1e-300) fail("gda_decode: zero-norm hidden state");
      for (const auto& [y, wn] : token_norms) {
        if (wn < 1e-300) fail("gda_decode: zero-norm embedding");
        double c = nnet::dot(embed.row(y), h.data(), d) / (wn * hn);
        pp.push_back({y, std::max(0.0, c)});
      }
      if (opts.cursor_boosts) {
        for (int y : alive[p].tracker.boosted_tokens())
          for (auto& [id, val] : pp)
            if (id == y) val = 1.0;
      }
      double g = opts.gate_override ? *opts.gate_override : gate_value(model, h);

      // score = (1-g) * P_model + g * P_plug; P_plug is zero off-support
      const double one_minus_g = 1.0 - g;
      size_t pp_at = 0;
      for (int y = 0; y < static_cast<int>(pm.size()); ++y) {
        double plug = 0.0;
        if (pp_at < pp.size() && pp[pp_at].first == y) plug = pp[pp_at++].second;
        double mix = one_minus_g * pm[y] + g * plug;
        double s = alive[p].cum + std::log(std::max(mix, kProbFloor));
        cands.push_back({s, static_cast<int>(p), y});
      }
    }
    sort_candidates(cands);

    std::vector<Hyp> next;
    int taken = 0;
    for (const Cand& c : cands) {
      if (taken >= slots) break;
      ++taken;
      if (c.token == Vocabulary::kEos) {
        finished.push_back({alive[c.parent].tokens, c.score,
                            static_cast<int>(alive[c.parent].tokens.size()) + 1,
                            alive[c.parent].tracker});
        --slots;
        continue;
      }
      Hyp h = alive[c.parent];
      h.tokens.push_back(c.token);
      h.cum = c.score;
      h.last = c.token;
      h.tracker.feed(c.token);
      next.push_back(std::move(h));
    }
    alive = std::move(next);
  }

  DecodeResult out;
  ConstraintTracker final_tracker;
  if (!finished.empty()) {
    const FinishedHyp* best = &finished[0];
    for (const auto& f : finished)
      if (better_final(f, *best, opts.len_alpha)) best = &f;
    out.tokens = best->tokens;
    out.cum_logp = best->cum;
    out.steps = best->steps;
    out.finished = true;
    final_tracker = best->tracker;
  } else {
    const Hyp* best = nullptr;
    for (const auto& h : alive)
      if (!best || h.cum > best->cum) best = &h;
    if (!best) fail("gda_decode: no hypotheses");
    out.tokens = best->tokens;
    out.cum_logp = best->cum;
    out.steps = static_cast<int>(best->tokens.size());
    out.finished = false;
    out.flags.push_back("unfinished");
    final_tracker = best->tracker;
  }
  for (size_t n = 0; n < final_tracker.num_constraints(); ++n)
    if (!final_tracker.finished(n))
      out.flags.push_back("constraint_unfinished:" + std::to_string(n + 1));
  out.norm_score = norm_score(out.cum_logp, out.steps, opts.len_alpha);
  return out;
}

}  // namespace lexinmt::vecnmt
