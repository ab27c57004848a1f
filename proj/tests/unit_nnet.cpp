#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "lexinmt/transformer.hpp"
#include "testutil.hpp"

using namespace lexinmt;
using namespace lexinmt::nnet;

namespace {

ModelConfig tiny_config(int vocab) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 2;
  cfg.n_dec_layers = 2;
  cfg.ffn_dim = 12;
  cfg.vocab_size = vocab;
  cfg.max_positions = 64;
  return cfg;
}

}  // namespace

TEST_CASE("adam: schedule peaks exactly at the warmup step") {
  AdamConfig cfg;
  cfg.peak_lr = 7e-4;
  cfg.warmup = 4000;
  CHECK(adam_lr(cfg, 4000) == doctest::Approx(7e-4).epsilon(1e-12));
  CHECK(adam_lr(cfg, 2000) == doctest::Approx(3.5e-4).epsilon(1e-12));
  CHECK(adam_lr(cfg, 16000) == doctest::Approx(3.5e-4).epsilon(1e-12));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamStore store;
  store.create("w", 2, 2) = Matrix::filled(2, 2, 0.5);
  AdamState state;
  AdamConfig cfg;
  GradMap grads;
  grads.emplace("w", Matrix(2, 2));
  adam_step(store, grads, state, cfg);
  CHECK(state.step == 1);
  for (double v : store.get("w").d) CHECK(v == 0.5);
}

TEST_CASE("adam: one bias-corrected step on a scalar matches the formula") {
  ParamStore store;
  store.create("w", 1, 1) = Matrix::scalar(0.0);
  AdamState state;
  AdamConfig cfg;
  cfg.peak_lr = 1e-3;
  cfg.warmup = 1;  // lr(1) == peak
  GradMap grads;
  grads.emplace("w", Matrix::scalar(1.0));
  adam_step(store, grads, state, cfg);
  // m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
  double expect = -1e-3 / (1.0 + cfg.eps);
  CHECK(store.get("w").d[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam: NaN gradient aborts without touching state") {
  ParamStore store;
  store.create("w", 1, 2) = Matrix::filled(1, 2, 1.0);
  store.create("u", 1, 1) = Matrix::scalar(2.0);
  AdamState state;
  AdamConfig cfg;
  GradMap grads;
  grads.emplace("u", Matrix::scalar(0.5));
  Matrix bad(1, 2);
  bad.d[0] = std::nan("");
  grads.emplace("w", bad);
  CHECK_THROWS_AS(adam_step(store, grads, state, cfg), Error);
  CHECK(state.step == 0);
  CHECK(store.get("u").d[0] == 2.0);
  CHECK(store.get("w").d[0] == 1.0);
}

TEST_CASE("position encoding: bounds are enforced") {
  CHECK_THROWS_AS(position_encoding({64}, 8, 64), Error);
  Matrix pe = position_encoding({0, 5, 2}, 8, 64);
  CHECK(pe.rows == 3);
  CHECK(pe.at(0, 0) == 0.0);  // sin 0
  CHECK(pe.at(0, 1) == 1.0);  // cos 0
}

TEST_CASE("dropout mask: deterministic per key, varies across steps") {
  Matrix a = dropout_mask(4, 8, 0.5, 123, 7, "x");
  Matrix b = dropout_mask(4, 8, 0.5, 123, 7, "x");
  Matrix c = dropout_mask(4, 8, 0.5, 123, 8, "x");
  CHECK(a.d == b.d);
  CHECK(a.d != c.d);
  for (double v : a.d) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("checkpoint: config and tensors round-trip bit-exactly") {
  ParamStore store;
  DetRng rng(99);
  init_normal(store.create("alpha", 3, 5), rng, 1.0);
  init_normal(store.create("beta", 1, 4), rng, 0.5);
  ojson config;
  config["kind"] = "test";
  config["note"] = 42;
  std::string path = "ckpt_roundtrip_test.bin";
  save_checkpoint(path, config, store);
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.config.at("kind") == "test");
  CHECK(ck.config.at("note") == 42);
  REQUIRE(ck.params.names().size() == 2);
  CHECK(ck.params.get("alpha").d == store.get("alpha").d);
  CHECK(ck.params.get("beta").d == store.get("beta").d);

  validate_params(ck.params, {{"alpha", {3, 5}}, {"beta", {1, 4}}});
  CHECK_THROWS_AS(validate_params(ck.params, {{"alpha", {3, 5}}, {"beta", {2, 4}}}),
                  Error);
  CHECK_THROWS_AS(validate_params(ck.params, {{"alpha", {3, 5}}}), Error);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: bad magic is rejected") {
  atomic_write_file("ckpt_bad_magic.bin", "NOPE....");
  CHECK_THROWS_AS(load_checkpoint("ckpt_bad_magic.bin"), Error);
  std::remove("ckpt_bad_magic.bin");
}

TEST_CASE("encoder: deterministic, shape, OOV and position errors") {
  ModelConfig cfg = tiny_config(12);
  ParamStore store;
  DetRng rng(7);
  init_embedding(store, "embed", cfg, rng);
  init_encoder_stack(store, cfg, "enc.", rng);

  std::vector<int> ids = {2, 10, 11, 3};
  std::vector<int> pos = {0, 1, 2, 3};
  Tape t1, t2;
  Var h1 = encode(t1, store, cfg, "embed", "enc.", ids, pos, nullptr, {});
  Var h2 = encode(t2, store, cfg, "embed", "enc.", ids, pos, nullptr, {});
  CHECK(t1.val(h1).rows == 4);
  CHECK(t1.val(h1).cols == cfg.d_model);
  CHECK(t1.val(h1).d == t2.val(h2).d);

  Tape t3;
  Var single = encode(t3, store, cfg, "embed", "enc.", {5}, {0}, nullptr, {});
  CHECK(t3.val(single).rows == 1);

  Tape t4;
  CHECK_THROWS_AS(encode(t4, store, cfg, "embed", "enc.", {12}, {0}, nullptr, {}),
                  Error);
  Tape t5;
  CHECK_THROWS_AS(
      encode(t5, store, cfg, "embed", "enc.", {1}, {cfg.max_positions}, nullptr, {}),
      Error);
}

TEST_CASE("encoder: masking a column makes rows invariant to that token") {
  // A token forbidden for every query cannot influence any output row, no
  // matter how many layers mix positions.
  ModelConfig cfg = tiny_config(12);
  ParamStore store;
  DetRng rng(8);
  init_embedding(store, "embed", cfg, rng);
  init_encoder_stack(store, cfg, "enc.", rng);

  std::vector<int> ids = {4, 5, 6, 7};
  std::vector<int> pos = {0, 1, 2, 3};
  const int j = 2;  // forbidden position
  Matrix mask(4, 4);
  for (int q = 0; q < 4; ++q) mask.at(q, j) = -1e30;

  Tape t1;
  Matrix before = t1.val(encode(t1, store, cfg, "embed", "enc.", ids, pos, &mask, {}));
  store.get("embed").at(ids[j], 0) += 3.0;  // perturb the masked token
  Tape t2;
  Matrix after = t2.val(encode(t2, store, cfg, "embed", "enc.", ids, pos, &mask, {}));
  for (int q = 0; q < 4; ++q) {
    if (q == j) continue;  // the masked token's own row does change
    for (int c = 0; c < cfg.d_model; ++c)
      CHECK(before.at(q, c) == doctest::Approx(after.at(q, c)).epsilon(1e-12));
  }
}

TEST_CASE("encoder: single-layer per-query mask keeps h_i independent of token j") {
  ModelConfig cfg = tiny_config(12);
  cfg.n_enc_layers = 1;
  ParamStore store;
  DetRng rng(9);
  init_embedding(store, "embed", cfg, rng);
  init_encoder_stack(store, cfg, "enc.", rng);

  std::vector<int> ids = {4, 5, 6};
  std::vector<int> pos = {0, 1, 2};
  Matrix mask(3, 3);
  mask.at(0, 2) = -1e30;  // query 0 may not see token 2

  Tape t1;
  Matrix before = t1.val(encode(t1, store, cfg, "embed", "enc.", ids, pos, &mask, {}));
  store.get("embed").at(ids[2], 1) -= 2.5;
  Tape t2;
  Matrix after = t2.val(encode(t2, store, cfg, "embed", "enc.", ids, pos, &mask, {}));
  for (int c = 0; c < cfg.d_model; ++c)
    CHECK(before.at(0, c) == doctest::Approx(after.at(0, c)).epsilon(1e-12));
}

TEST_CASE("raw encoder eval matches the tape path") {
  ModelConfig cfg = tiny_config(15);
  ParamStore store;
  DetRng rng(10);
  init_embedding(store, "embed", cfg, rng);
  init_encoder_stack(store, cfg, "enc.", rng);
  std::vector<int> ids = {2, 11, 12, 13, 3};
  std::vector<int> pos = {0, 1, 2, 3, 4};
  Tape tape;
  Matrix a = tape.val(encode(tape, store, cfg, "embed", "enc.", ids, pos, nullptr, {}));
  Matrix b = encode_eval(store, cfg, "embed", "enc.", ids, pos);
  REQUIRE(a.same_shape(b));
  for (size_t i = 0; i < a.d.size(); ++i)
    CHECK(a.d[i] == doctest::Approx(b.d[i]).epsilon(1e-12));
}

TEST_CASE("decoder: teacher-forced pass equals incremental steps") {
  ModelConfig cfg = tiny_config(15);
  ParamStore store;
  DetRng rng(11);
  init_embedding(store, "embed", cfg, rng);
  init_encoder_stack(store, cfg, "enc.", rng);
  init_decoder_stack(store, cfg, "dec.", rng);

  std::vector<int> src = {2, 11, 12, 3};
  std::vector<int> src_pos = {0, 1, 2, 3};
  std::vector<int> dec_in = {5, 10, 13, 14, 12};

  Tape tape;
  Var enc = encode(tape, store, cfg, "embed", "enc.", src, src_pos, nullptr, {});
  std::vector<int> dec_pos(dec_in.size());
  for (size_t i = 0; i < dec_in.size(); ++i) dec_pos[i] = static_cast<int>(i);
  Var x = embed_sequence(tape, store, "embed", cfg, dec_in, dec_pos);
  Var h = decoder_stack(tape, store, cfg, "dec.", x, enc, {});

  Matrix enc_eval_out = encode_eval(store, cfg, "embed", "enc.", src, src_pos);
  IncrementalDecoder inc(store, cfg, "embed", "dec.", enc_eval_out);
  for (size_t t = 0; t < dec_in.size(); ++t) {
    std::vector<double> row = inc.step(dec_in[t]);
    for (int c = 0; c < cfg.d_model; ++c)
      CHECK(row[c] ==
            doctest::Approx(tape.val(h).at(static_cast<int>(t), c)).epsilon(1e-9));
  }
}

TEST_CASE("decoder: causal, future prefix tokens cannot change h_i") {
  ModelConfig cfg = tiny_config(15);
  ParamStore store;
  DetRng rng(12);
  init_embedding(store, "embed", cfg, rng);
  init_encoder_stack(store, cfg, "enc.", rng);
  init_decoder_stack(store, cfg, "dec.", rng);

  std::vector<int> src = {2, 11, 3};
  std::vector<int> src_pos = {0, 1, 2};
  auto hidden = [&](const std::vector<int>& dec_in) {
    Tape tape;
    Var enc = encode(tape, store, cfg, "embed", "enc.", src, src_pos, nullptr, {});
    std::vector<int> dec_pos(dec_in.size());
    for (size_t i = 0; i < dec_in.size(); ++i) dec_pos[i] = static_cast<int>(i);
    Var x = embed_sequence(tape, store, "embed", cfg, dec_in, dec_pos);
    return tape.val(decoder_stack(tape, store, cfg, "dec.", x, enc, {}));
  };
  Matrix a = hidden({5, 10, 11, 12});
  Matrix b = hidden({5, 10, 13, 14});  // positions 2,3 perturbed
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < cfg.d_model; ++c)
      CHECK(a.at(i, c) == doctest::Approx(b.at(i, c)).epsilon(1e-12));
}

TEST_CASE("gradcheck: encoder + decoder end to end at d_model 8") {
  ModelConfig cfg = tiny_config(10);
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  ParamStore store;
  DetRng rng(13);
  init_embedding(store, "embed", cfg, rng);
  init_encoder_stack(store, cfg, "enc.", rng);
  init_decoder_stack(store, cfg, "dec.", rng);

  std::vector<int> src = {2, 8, 9, 3};
  std::vector<int> src_pos = {0, 1, 2, 3};
  std::vector<int> dec_in = {5, 7, 8};
  std::vector<int> out_ids = {7, 8, 6};

  auto build = [&](Tape& tape) {
    Var enc = encode(tape, store, cfg, "embed", "enc.", src, src_pos, nullptr, {});
    std::vector<int> dec_pos = {0, 1, 2};
    Var x = embed_sequence(tape, store, "embed", cfg, dec_in, dec_pos);
    Var h = decoder_stack(tape, store, cfg, "dec.", x, enc, {});
    Var logits = tape.matmul_nt(h, tape.param(store, "embed"));
    Var lp = tape.log_softmax_rows(logits);
    return tape.scale(tape.sum(tape.pick_entries(lp, out_ids)), -1.0);
  };
  GradMap analytic;
  {
    Tape tape;
    analytic = tape.backward(build(tape));
  }
  auto loss_fn = [&]() {
    Tape tape;
    return tape.scalar(build(tape));
  };
  auto res = testutil::finite_diff_check(store, loss_fn, analytic);
  CAPTURE(res.worst_tensor);
  CHECK(res.max_rel_err < 1e-3);
}
