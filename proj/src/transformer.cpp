#include "lexinmt/transformer.hpp"

#include <cmath>
#include <memory>

namespace lexinmt::nnet {

namespace {

constexpr double kMaskNegInf = -1e30;

std::string lname(const std::string& prefix, int layer, const char* rest) {
  return prefix + "l" + std::to_string(layer) + "." + rest;
}

void init_linear(ParamStore& store, const std::string& w, const std::string& b,
                 int in, int out, DetRng& rng) {
  Matrix& mw = store.create(w, in, out);
  init_normal(mw, rng, std::sqrt(2.0 / (in + out)));
  store.create(b, 1, out);  // zeros
}

void init_layer_norm(ParamStore& store, const std::string& base, int d) {
  Matrix& g = store.create(base + ".g", 1, d);
  for (auto& x : g.d) x = 1.0;
  store.create(base + ".b", 1, d);
}

void attn_block_shapes(ShapeList& out, const std::string& base, int d) {
  out.push_back({base + ".wq", {d, d}});
  out.push_back({base + ".bq", {1, d}});
  out.push_back({base + ".wk", {d, d}});
  out.push_back({base + ".bk", {1, d}});
  out.push_back({base + ".wv", {d, d}});
  out.push_back({base + ".bv", {1, d}});
  out.push_back({base + ".wo", {d, d}});
  out.push_back({base + ".bo", {1, d}});
}

void init_attn_block(ParamStore& store, const std::string& base, int d, DetRng& rng) {
  init_linear(store, base + ".wq", base + ".bq", d, d, rng);
  init_linear(store, base + ".wk", base + ".bk", d, d, rng);
  init_linear(store, base + ".wv", base + ".bv", d, d, rng);
  init_linear(store, base + ".wo", base + ".bo", d, d, rng);
}

}  // namespace

void init_embedding(ParamStore& store, const std::string& name,
                    const ModelConfig& cfg, DetRng& rng) {
  Matrix& e = store.create(name, cfg.vocab_size, cfg.d_model);
  init_normal(e, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
}

ShapeList embedding_shape(const std::string& name, const ModelConfig& cfg) {
  return {{name, {cfg.vocab_size, cfg.d_model}}};
}

void init_encoder_stack(ParamStore& store, const ModelConfig& cfg,
                        const std::string& prefix, DetRng& rng) {
  const int d = cfg.d_model;
  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    init_layer_norm(store, lname(prefix, l, "ln1"), d);
    init_attn_block(store, lname(prefix, l, "attn"), d, rng);
    init_layer_norm(store, lname(prefix, l, "ln2"), d);
    init_linear(store, lname(prefix, l, "ffn.w1"), lname(prefix, l, "ffn.b1"), d,
                cfg.ffn_dim, rng);
    init_linear(store, lname(prefix, l, "ffn.w2"), lname(prefix, l, "ffn.b2"),
                cfg.ffn_dim, d, rng);
  }
  init_layer_norm(store, prefix + "ln", d);
}

void init_decoder_stack(ParamStore& store, const ModelConfig& cfg,
                        const std::string& prefix, DetRng& rng) {
  const int d = cfg.d_model;
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    init_layer_norm(store, lname(prefix, l, "ln1"), d);
    init_attn_block(store, lname(prefix, l, "attn"), d, rng);
    init_layer_norm(store, lname(prefix, l, "ln2"), d);
    init_attn_block(store, lname(prefix, l, "cross"), d, rng);
    init_layer_norm(store, lname(prefix, l, "ln3"), d);
    init_linear(store, lname(prefix, l, "ffn.w1"), lname(prefix, l, "ffn.b1"), d,
                cfg.ffn_dim, rng);
    init_linear(store, lname(prefix, l, "ffn.w2"), lname(prefix, l, "ffn.b2"),
                cfg.ffn_dim, d, rng);
  }
  init_layer_norm(store, prefix + "ln", d);
}

ShapeList encoder_shapes(const ModelConfig& cfg, const std::string& prefix) {
  ShapeList out;
  const int d = cfg.d_model;
  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    out.push_back({lname(prefix, l, "ln1.g"), {1, d}});
    out.push_back({lname(prefix, l, "ln1.b"), {1, d}});
    attn_block_shapes(out, lname(prefix, l, "attn"), d);
    out.push_back({lname(prefix, l, "ln2.g"), {1, d}});
    out.push_back({lname(prefix, l, "ln2.b"), {1, d}});
    out.push_back({lname(prefix, l, "ffn.w1"), {d, cfg.ffn_dim}});
    out.push_back({lname(prefix, l, "ffn.b1"), {1, cfg.ffn_dim}});
    out.push_back({lname(prefix, l, "ffn.w2"), {cfg.ffn_dim, d}});
    out.push_back({lname(prefix, l, "ffn.b2"), {1, d}});
  }
  out.push_back({prefix + "ln.g", {1, d}});
  out.push_back({prefix + "ln.b", {1, d}});
  return out;
}

ShapeList decoder_shapes(const ModelConfig& cfg, const std::string& prefix) {
  ShapeList out;
  const int d = cfg.d_model;
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    out.push_back({lname(prefix, l, "ln1.g"), {1, d}});
    out.push_back({lname(prefix, l, "ln1.b"), {1, d}});
    attn_block_shapes(out, lname(prefix, l, "attn"), d);
    out.push_back({lname(prefix, l, "ln2.g"), {1, d}});
    out.push_back({lname(prefix, l, "ln2.b"), {1, d}});
    attn_block_shapes(out, lname(prefix, l, "cross"), d);
    out.push_back({lname(prefix, l, "ln3.g"), {1, d}});
    out.push_back({lname(prefix, l, "ln3.b"), {1, d}});
    out.push_back({lname(prefix, l, "ffn.w1"), {d, cfg.ffn_dim}});
    out.push_back({lname(prefix, l, "ffn.b1"), {1, cfg.ffn_dim}});
    out.push_back({lname(prefix, l, "ffn.w2"), {cfg.ffn_dim, d}});
    out.push_back({lname(prefix, l, "ffn.b2"), {1, d}});
  }
  out.push_back({prefix + "ln.g", {1, d}});
  out.push_back({prefix + "ln.b", {1, d}});
  return out;
}

Var embed_sequence(Tape& tape, ParamStore& store, const std::string& embed_name,
                   const ModelConfig& cfg, const std::vector<int>& ids,
                   const std::vector<int>& positions) {
  if (ids.empty()) fail("embed_sequence: empty input");
  if (ids.size() != positions.size())
    fail("embed_sequence: ids/positions length mismatch");
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      fail("embed_sequence: token id " + std::to_string(id) +
           " outside vocabulary of size " + std::to_string(cfg.vocab_size));
  Var table = tape.param(store, embed_name);
  Var x = tape.gather_rows(table, ids);
  x = tape.scale(x, std::sqrt(static_cast<double>(cfg.d_model)));
  Var pe = tape.leaf(position_encoding(positions, cfg.d_model, cfg.max_positions));
  return tape.add(x, pe);
}

namespace {

Var linear(Tape& tape, ParamStore& store, Var x, const std::string& w,
           const std::string& b) {
  return tape.add_row(tape.matmul(x, tape.param(store, w)),
                      tape.param(store, b));
}

Var layer_norm(Tape& tape, ParamStore& store, Var x, const std::string& base) {
  return tape.layer_norm_rows(x, tape.param(store, base + ".g"),
                              tape.param(store, base + ".b"));
}

Var maybe_drop(Tape& tape, Var x, const DropoutCtx& dropout,
               const std::string& name) {
  if (dropout.p <= 0.0) return x;
  const Matrix& v = tape.val(x);
  Var mask = tape.leaf(
      dropout_mask(v.rows, v.cols, dropout.p, dropout.seed, dropout.step, name));
  return tape.mul(x, mask);
}

// Multi-head attention from pre-normalized queries over pre-normalized
// keys/values (same tensor for self-attention).
Var attention(Tape& tape, ParamStore& store, const ModelConfig& cfg,
              const std::string& base, Var q_in, Var kv_in, Var mask) {
  const int dh = cfg.head_dim();
  Var q = linear(tape, store, q_in, base + ".wq", base + ".bq");
  Var k = linear(tape, store, kv_in, base + ".wk", base + ".bk");
  Var v = linear(tape, store, kv_in, base + ".wv", base + ".bv");
  std::vector<Var> heads;
  heads.reserve(cfg.n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < cfg.n_heads; ++h) {
    Var qh = tape.slice_cols(q, h * dh, dh);
    Var kh = tape.slice_cols(k, h * dh, dh);
    Var vh = tape.slice_cols(v, h * dh, dh);
    Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
    if (mask.valid()) scores = tape.add(scores, mask);
    Var probs = tape.softmax_rows(scores);
    heads.push_back(tape.matmul(probs, vh));
  }
  Var ctx = cfg.n_heads == 1 ? heads[0] : tape.concat_cols(heads);
  return linear(tape, store, ctx, base + ".wo", base + ".bo");
}

Var ffn(Tape& tape, ParamStore& store, Var x, const std::string& base) {
  Var h = tape.tanh(linear(tape, store, x, base + ".w1", base + ".b1"));
  return linear(tape, store, h, base + ".w2", base + ".b2");
}

Matrix causal_mask(int len) {
  Matrix m(len, len);
  for (int i = 0; i < len; ++i)
    for (int j = i + 1; j < len; ++j) m.at(i, j) = kMaskNegInf;
  return m;
}

}  // namespace

Var encoder_stack(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                  const std::string& prefix, Var x, const Matrix* attn_mask,
                  const DropoutCtx& dropout) {
  Var mask;
  if (attn_mask) {
    const Matrix& v = tape.val(x);
    if (attn_mask->rows != v.rows || attn_mask->cols != v.rows)
      fail("encoder_stack: attention mask must be len x len");
    mask = tape.leaf(*attn_mask);
  }
  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    Var n1 = layer_norm(tape, store, x, lname(prefix, l, "ln1"));
    Var a = attention(tape, store, cfg, lname(prefix, l, "attn"), n1, n1, mask);
    a = maybe_drop(tape, a, dropout, lname(prefix, l, "attn.out"));
    x = tape.add(x, a);
    Var n2 = layer_norm(tape, store, x, lname(prefix, l, "ln2"));
    Var f = ffn(tape, store, n2, lname(prefix, l, "ffn"));
    f = maybe_drop(tape, f, dropout, lname(prefix, l, "ffn.out"));
    x = tape.add(x, f);
  }
  return layer_norm(tape, store, x, prefix + "ln");
}

Var decoder_stack(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                  const std::string& prefix, Var x, Var enc_out,
                  const DropoutCtx& dropout) {
  Var mask = tape.leaf(causal_mask(tape.val(x).rows));
  Var no_mask;
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    Var n1 = layer_norm(tape, store, x, lname(prefix, l, "ln1"));
    Var a = attention(tape, store, cfg, lname(prefix, l, "attn"), n1, n1, mask);
    a = maybe_drop(tape, a, dropout, lname(prefix, l, "attn.out"));
    x = tape.add(x, a);
    Var n2 = layer_norm(tape, store, x, lname(prefix, l, "ln2"));
    Var c = attention(tape, store, cfg, lname(prefix, l, "cross"), n2, enc_out,
                      no_mask);
    c = maybe_drop(tape, c, dropout, lname(prefix, l, "cross.out"));
    x = tape.add(x, c);
    Var n3 = layer_norm(tape, store, x, lname(prefix, l, "ln3"));
    Var f = ffn(tape, store, n3, lname(prefix, l, "ffn"));
    f = maybe_drop(tape, f, dropout, lname(prefix, l, "ffn.out"));
    x = tape.add(x, f);
  }
  return layer_norm(tape, store, x, prefix + "ln");
}

Var encode(Tape& tape, ParamStore& store, const ModelConfig& cfg,
           const std::string& embed_name, const std::string& prefix,
           const std::vector<int>& ids, const std::vector<int>& positions,
           const Matrix* attn_mask, const DropoutCtx& dropout) {
  Var x = embed_sequence(tape, store, embed_name, cfg, ids, positions);
  return encoder_stack(tape, store, cfg, prefix, x, attn_mask, dropout);
}

// ---------------------------------------------------------------------------
// Gradient-free paths. Kept in lockstep with the tape path above; the unit
// tests assert the two agree to 1e-9.

namespace {

void layer_norm_rows_eval(Matrix& x, const Matrix& g, const Matrix& b) {
  const int d = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    double* r = x.row(i);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += r[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= d;
    double inv_sigma = 1.0 / std::sqrt(var + 1e-5);
    for (int j = 0; j < d; ++j)
      r[j] = (r[j] - mean) * inv_sigma * g.d[j] + b.d[j];
  }
}

Matrix linear_eval(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out = matmul(x, w);
  for (int i = 0; i < out.rows; ++i) {
    double* r = out.row(i);
    for (int j = 0; j < out.cols; ++j) r[j] += b.d[j];
  }
  return out;
}

Matrix attention_eval(const ParamStore& store, const ModelConfig& cfg,
                      const std::string& base, const Matrix& q_in,
                      const Matrix& kv_in, const Matrix* mask) {
  const int dh = cfg.head_dim();
  Matrix q = linear_eval(q_in, store.get(base + ".wq"), store.get(base + ".bq"));
  Matrix k = linear_eval(kv_in, store.get(base + ".wk"), store.get(base + ".bk"));
  Matrix v = linear_eval(kv_in, store.get(base + ".wv"), store.get(base + ".bv"));
  Matrix ctx(q.rows, cfg.d_model);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> scores(k.rows);
  for (int h = 0; h < cfg.n_heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < q.rows; ++i) {
      double mx = -1e308;
      for (int j = 0; j < k.rows; ++j) {
        double s = dot(q.row(i) + off, k.row(j) + off, dh) * inv_sqrt;
        if (mask) s += mask->at(i, j);
        scores[j] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (int j = 0; j < k.rows; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      double* out = ctx.row(i) + off;
      for (int j = 0; j < k.rows; ++j) {
        double w = scores[j] / sum;
        const double* vr = v.row(j) + off;
        for (int c = 0; c < dh; ++c) out[c] += w * vr[c];
      }
    }
  }
  return linear_eval(ctx, store.get(base + ".wo"), store.get(base + ".bo"));
}

Matrix ffn_eval(const ParamStore& store, const std::string& base, const Matrix& x) {
  Matrix h = linear_eval(x, store.get(base + ".w1"), store.get(base + ".b1"));
  for (auto& v : h.d) v = std::tanh(v);
  return linear_eval(h, store.get(base + ".w2"), store.get(base + ".b2"));
}

Matrix embed_eval(const ParamStore& store, const ModelConfig& cfg,
                  const std::string& embed_name, const std::vector<int>& ids,
                  const std::vector<int>& positions) {
  const Matrix& table = store.get(embed_name);
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      fail("encode_eval: token id outside vocabulary");
  Matrix x(static_cast<int>(ids.size()), cfg.d_model);
  const double s = std::sqrt(static_cast<double>(cfg.d_model));
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* src = table.row(ids[i]);
    double* dst = x.row(static_cast<int>(i));
    for (int j = 0; j < cfg.d_model; ++j) dst[j] = src[j] * s;
  }
  Matrix pe = position_encoding(positions, cfg.d_model, cfg.max_positions);
  add_inplace(x, pe);
  return x;
}

}  // namespace

Matrix encode_eval(const ParamStore& store, const ModelConfig& cfg,
                   const std::string& embed_name, const std::string& prefix,
                   const std::vector<int>& ids, const std::vector<int>& positions,
                   const Matrix* attn_mask) {
  if (ids.empty()) fail("encode_eval: empty input");
  if (ids.size() != positions.size()) fail("encode_eval: ids/positions mismatch");
  Matrix x = embed_eval(store, cfg, embed_name, ids, positions);
  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    Matrix n1 = x;
    layer_norm_rows_eval(n1, store.get(lname(prefix, l, "ln1.g")),
                         store.get(lname(prefix, l, "ln1.b")));
    Matrix a = attention_eval(store, cfg, lname(prefix, l, "attn"), n1, n1,
                              attn_mask);
    add_inplace(x, a);
    Matrix n2 = x;
    layer_norm_rows_eval(n2, store.get(lname(prefix, l, "ln2.g")),
                         store.get(lname(prefix, l, "ln2.b")));
    Matrix f = ffn_eval(store, lname(prefix, l, "ffn"), n2);
    add_inplace(x, f);
  }
  layer_norm_rows_eval(x, store.get(prefix + "ln.g"), store.get(prefix + "ln.b"));
  return x;
}

IncrementalDecoder::IncrementalDecoder(const ParamStore& store,
                                       const ModelConfig& cfg,
                                       std::string embed_name, std::string prefix,
                                       const Matrix& enc_out)
    : store_(&store), cfg_(&cfg), embed_(std::move(embed_name)),
      prefix_(std::move(prefix)) {
  auto cross = std::make_shared<std::vector<LayerCross>>();
  cross->resize(cfg.n_dec_layers);
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string base = lname(prefix_, l, "cross");
    (*cross)[l].k = linear_eval(enc_out, store.get(base + ".wk"),
                                store.get(base + ".bk"));
    (*cross)[l].v = linear_eval(enc_out, store.get(base + ".wv"),
                                store.get(base + ".bv"));
  }
  cross_ = cross;
  self_k_.assign(cfg.n_dec_layers, Matrix(0, cfg.d_model));
  self_v_.assign(cfg.n_dec_layers, Matrix(0, cfg.d_model));
}

std::vector<double> IncrementalDecoder::step(int token_id) {
  const ModelConfig& cfg = *cfg_;
  const ParamStore& store = *store_;
  const int d = cfg.d_model;
  const int dh = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x = embed_eval(store, cfg, embed_, {token_id}, {t_});
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    // self-attention over the cached prefix plus this step
    Matrix n1 = x;
    layer_norm_rows_eval(n1, store.get(lname(prefix_, l, "ln1.g")),
                         store.get(lname(prefix_, l, "ln1.b")));
    const std::string abase = lname(prefix_, l, "attn");
    Matrix q = linear_eval(n1, store.get(abase + ".wq"), store.get(abase + ".bq"));
    Matrix knew = linear_eval(n1, store.get(abase + ".wk"), store.get(abase + ".bk"));
    Matrix vnew = linear_eval(n1, store.get(abase + ".wv"), store.get(abase + ".bv"));
    Matrix& kc = self_k_[l];
    Matrix& vc = self_v_[l];
    Matrix kc2(kc.rows + 1, d), vc2(vc.rows + 1, d);
    std::copy(kc.d.begin(), kc.d.end(), kc2.d.begin());
    std::copy(vc.d.begin(), vc.d.end(), vc2.d.begin());
    std::copy(knew.d.begin(), knew.d.end(), kc2.d.begin() + kc.d.size());
    std::copy(vnew.d.begin(), vnew.d.end(), vc2.d.begin() + vc.d.size());
    kc = std::move(kc2);
    vc = std::move(vc2);

    Matrix ctx(1, d);
    std::vector<double> scores(kc.rows);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const int off = h * dh;
      double mx = -1e308;
      for (int j = 0; j < kc.rows; ++j) {
        scores[j] = dot(q.row(0) + off, kc.row(j) + off, dh) * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < kc.rows; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      double* out = ctx.row(0) + off;
      for (int j = 0; j < kc.rows; ++j) {
        double w = scores[j] / sum;
        const double* vr = vc.row(j) + off;
        for (int c = 0; c < dh; ++c) out[c] += w * vr[c];
      }
    }
    Matrix a = linear_eval(ctx, store.get(abase + ".wo"), store.get(abase + ".bo"));
    add_inplace(x, a);

    // cross-attention over the precomputed encoder keys/values
    Matrix n2 = x;
    layer_norm_rows_eval(n2, store.get(lname(prefix_, l, "ln2.g")),
                         store.get(lname(prefix_, l, "ln2.b")));
    const std::string cbase = lname(prefix_, l, "cross");
    Matrix cq = linear_eval(n2, store.get(cbase + ".wq"), store.get(cbase + ".bq"));
    const Matrix& ck = (*cross_)[l].k;
    const Matrix& cv = (*cross_)[l].v;
    Matrix cctx(1, d);
    std::vector<double> cscores(ck.rows);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const int off = h * dh;
      double mx = -1e308;
      for (int j = 0; j < ck.rows; ++j) {
        cscores[j] = dot(cq.row(0) + off, ck.row(j) + off, dh) * inv_sqrt;
        mx = std::max(mx, cscores[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < ck.rows; ++j) {
        cscores[j] = std::exp(cscores[j] - mx);
        sum += cscores[j];
      }
      double* out = cctx.row(0) + off;
      for (int j = 0; j < ck.rows; ++j) {
        double w = cscores[j] / sum;
        const double* vr = cv.row(j) + off;
        for (int c = 0; c < dh; ++c) out[c] += w * vr[c];
      }
    }
    Matrix co = linear_eval(cctx, store.get(cbase + ".wo"), store.get(cbase + ".bo"));
    add_inplace(x, co);

    Matrix n3 = x;
    layer_norm_rows_eval(n3, store.get(lname(prefix_, l, "ln3.g")),
                         store.get(lname(prefix_, l, "ln3.b")));
    Matrix f = ffn_eval(store, lname(prefix_, l, "ffn"), n3);
    add_inplace(x, f);
  }
  layer_norm_rows_eval(x, store.get(prefix_ + "ln.g"), store.get(prefix_ + "ln.b"));
  ++t_;
  return x.d;
}

}  // namespace lexinmt::nnet
