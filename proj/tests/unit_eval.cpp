#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "lexinmt/eval.hpp"
#include "oracles.hpp"

using namespace lexinmt;
using namespace lexinmt::eval;

namespace {

EvalRecord rec(const std::string& hyp, const std::string& ref,
               const std::vector<std::string>& constraints) {
  EvalRecord r;
  r.hyp = split_ws(hyp);
  r.ref = split_ws(ref);
  for (const auto& c : constraints) {
    r.constraints.push_back(split_ws(c));
    r.ref_positions.push_back(-1);
  }
  return r;
}

}  // namespace

TEST_CASE("exact match: direct containment and partial credit") {
  auto r1 = rec("the respiratory tract is inflamed", "irrelevant ref",
                {"respiratory tract"});
  CHECK(*exact_match({r1}) == 100.0);

  auto r2 = rec("x a y c", "ref here", {"a b", "c"});
  CHECK(*exact_match({r2}) == 50.0);

  auto r3 = rec("a b c", "a b c", {"a b", "c"});
  CHECK(*exact_match({r3}) == 100.0);

  CHECK(!exact_match({rec("x", "y", {})}).has_value());
}

TEST_CASE("csr: order-free token recall with multiplicity") {
  CHECK(*csr({rec("b x a", "r", {"a b"})}) == 100.0);
  CHECK(*csr({rec("a", "r", {"a a"})}) == 50.0);
  auto both = rec("a b c", "r", {"a b", "c"});
  CHECK(*csr({both}) == 100.0);
}

TEST_CASE("window overlap: identity, absence, and a hand-built half case") {
  auto same = rec("u v the red k the blue w", "u v the red k the blue w",
                  {"k"});
  CHECK(*window_overlap({same}, 2) == 100.0);

  auto absent = rec("no constraint here", "k in ref", {"k"});
  CHECK(*window_overlap({absent}, 2) == 0.0);

  // hyp window {the, red}, ref window {the, blue}: intersection 1, max 2
  EvalRecord half;
  half.hyp = split_ws("the red k");
  half.ref = split_ws("the blue k");
  half.constraints = {split_ws("k")};
  half.ref_positions = {2};
  CHECK(*window_overlap({half}, 2) == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("term ter: hand-computed weighted distances") {
  // 10-token reference, one non-constraint substitution: TER 0.1 -> 90
  EvalRecord r;
  r.ref = split_ws("t1 t2 t3 t4 t5 c1 c2 t6 t7 t8");
  r.hyp = r.ref;
  r.hyp[1] = "WRONG";
  r.constraints = {split_ws("c1 c2")};
  r.ref_positions = {5};
  CHECK(term_ter({r}) == doctest::Approx(90.0).epsilon(1e-9));

  // substituting a constraint token costs 2 with the default weight
  EvalRecord r2 = r;
  r2.hyp = r2.ref;
  r2.hyp[5] = "WRONG";
  CHECK(term_ter({r2}) == doctest::Approx(80.0).epsilon(1e-9));

  EvalRecord perfect = r;
  perfect.hyp = perfect.ref;
  CHECK(term_ter({perfect}) == doctest::Approx(100.0).epsilon(1e-12));

  EvalRecord empty_ref;
  empty_ref.hyp = split_ws("x");
  CHECK_THROWS_AS(term_ter({empty_ref}), Error);
}

TEST_CASE("term ter: w=1 and shifts off equals plain edit distance") {
  DetRng rng(404);
  std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
  for (int t = 0; t < 50; ++t) {
    EvalRecord r;
    int rl = 3 + static_cast<int>(rng.below(6));
    int hl = 3 + static_cast<int>(rng.below(6));
    for (int i = 0; i < rl; ++i) r.ref.push_back(vocab[rng.below(vocab.size())]);
    for (int i = 0; i < hl; ++i) r.hyp.push_back(vocab[rng.below(vocab.size())]);
    TerOptions opts;
    opts.term_weight = 1.0;
    opts.shifts = false;
    double ours = term_ter({r}, opts);
    std::vector<bool> mask(r.ref.size(), false);
    double text_book = oracles::oracle_edit_distance(r.hyp, r.ref, mask, 1.0);
    double expect = std::max(0.0, (1.0 - text_book / rl) * 100.0);
    CHECK(ours == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("term ter: a single obvious shift costs one") {
  // hyp "b a", ref "a b": one shift, zero edits -> TER = 1/2
  EvalRecord r;
  r.hyp = split_ws("b a");
  r.ref = split_ws("a b");
  CHECK(term_ter({r}) == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("bleu: identity, brevity penalty, reference computation") {
  std::vector<TokenSeq> refs = {split_ws("the cat sat on the mat"),
                                split_ws("a quick brown fox")};
  CHECK(bleu(refs, refs) == doctest::Approx(100.0).epsilon(1e-9));

  std::vector<TokenSeq> shorts = {split_ws("the"), split_ws("a")};
  double b = bleu(shorts, refs);
  CHECK(b < 100.0);
  CHECK(b >= 0.0);

  std::vector<TokenSeq> hyps = {split_ws("the cat sat on a mat"),
                                split_ws("a quick red fox")};
  CHECK(bleu(hyps, refs) ==
        doctest::Approx(oracles::oracle_bleu(hyps, refs)).epsilon(1e-9));

  CHECK_THROWS_AS(bleu({}, {}), Error);
}

TEST_CASE("disambig accuracy: subsets and error paths") {
  auto a = disambig_accuracy({0, 1, 2}, {0, 1, 0}, {1, 1, 1});
  CHECK(*a.all == doctest::Approx(200.0 / 3.0));
  CHECK(!a.ambiguous.has_value());  // no ambiguous instances

  auto b = disambig_accuracy({0, 1}, {0, 1}, {3, 2});
  CHECK(*b.all == 100.0);
  CHECK(*b.ambiguous == 100.0);

  CHECK_THROWS_AS(disambig_accuracy({0}, {0, 1}, {2, 2}), Error);
}

TEST_CASE("metrics match brute-force oracles on 30 hand-built records") {
  std::vector<EvalRecord> records = {
      rec("a b c d", "a b c d", {"b c"}),
      rec("x a y c", "a b c", {"a b", "c"}),
      rec("the red k", "the blue k", {"k"}),
      rec("k u v", "u v k", {"k"}),
      rec("a a b", "a a b", {"a a"}),
      rec("a", "a a", {"a a"}),
      rec("p q r s", "s r q p", {"q"}),
      rec("m n o", "m n o", {"m", "o"}),
      rec("c1 c2 c3 x", "x c1 c2 c3", {"c1 c2 c3"}),
      rec("w1 w2", "w1 w2 w3", {"w3"}),
      rec("t u v w", "t u v w", {"t u v w"}),
      rec("z", "z", {"z"}),
      rec("a b a b", "b a b a", {"a b"}),
      rec("one two three", "one two three", {"two"}),
      rec("f g h i j", "f g X h j", {"h"}),
      rec("s1 s2 s3", "s3 s2 s1", {"s1", "s3"}),
      rec("g g g", "g g", {"g g"}),
      rec("alpha beta gamma", "alpha beta gamma", {"alpha beta gamma"}),
      rec("u v w x y", "y x w v u", {"w"}),
      rec("a c b d", "a b c d", {"b", "c"}),
      rec("n1 n2 n3 n4", "n1 n2 n3 n4", {"n2 n3"}),
      rec("pre k post", "pre k post", {"k"}),
      rec("x y z k", "k x y z", {"k"}),
      rec("h e l l o", "h e l l o", {"l l"}),
      rec("q w e r t", "q w X r t", {"r t"}),
      rec("d1 d2", "d2 d1", {"d1", "d2"}),
      rec("big long phrase here now", "big long phrase here now",
          {"long phrase here"}),
      rec("c x c", "c c x", {"c c"}),
      rec("m1 m2 m3", "m1 X m3", {"m1", "m3"}),
      rec("tail k", "k head", {"k"}),
  };
  CHECK(*exact_match(records) ==
        doctest::Approx(oracles::oracle_exact_match(records)).epsilon(1e-12));
  CHECK(*csr(records) ==
        doctest::Approx(oracles::oracle_csr(records)).epsilon(1e-12));
  for (int n : {2, 3})
    CHECK(*window_overlap(records, n) ==
          doctest::Approx(oracles::oracle_window_overlap(records, n))
              .epsilon(1e-12));
  CHECK(term_ter(records) ==
        doctest::Approx(oracles::oracle_term_ter(records, 2.0)).epsilon(1e-9));
  std::vector<TokenSeq> hyps, refs;
  for (const auto& r : records) {
    hyps.push_back(r.hyp);
    refs.push_back(r.ref);
  }
  CHECK(bleu(hyps, refs) ==
        doctest::Approx(oracles::oracle_bleu(hyps, refs)).epsilon(1e-9));
}

TEST_CASE("exact match 100 implies csr 100 on randomized records") {
  DetRng rng(777);
  std::vector<std::string> vocab;
  for (int i = 0; i < 12; ++i) vocab.push_back("v" + std::to_string(i));
  for (int t = 0; t < 1000; ++t) {
    EvalRecord r;
    int rl = 4 + static_cast<int>(rng.below(8));
    for (int i = 0; i < rl; ++i) r.ref.push_back(vocab[rng.below(vocab.size())]);
    // constraints cut from the reference
    int nc = 1 + static_cast<int>(rng.below(2));
    for (int c = 0; c < nc; ++c) {
      int len = 1 + static_cast<int>(rng.below(3));
      int pos = static_cast<int>(rng.below(rl - len + 1));
      r.constraints.push_back(
          TokenSeq(r.ref.begin() + pos, r.ref.begin() + pos + len));
      r.ref_positions.push_back(-1);
    }
    // hypothesis guaranteed to contain all constraints contiguously
    for (const auto& c : r.constraints)
      r.hyp.insert(r.hyp.end(), c.begin(), c.end());
    int extra = static_cast<int>(rng.below(4));
    for (int i = 0; i < extra; ++i)
      r.hyp.push_back(vocab[rng.below(vocab.size())]);
    auto em = exact_match({r});
    REQUIRE(em.has_value());
    REQUIRE(*em == 100.0);
    CHECK(*csr({r}) == 100.0);
  }
}

TEST_CASE("metrics are permutation-invariant over records") {
  std::vector<EvalRecord> records = {
      rec("a b c", "a b c", {"b"}),
      rec("x y", "y x", {"x"}),
      rec("m n o p", "m n o p", {"n o"}),
      rec("q r", "q r s", {"s"}),
  };
  std::vector<EvalRecord> shuffled = {records[2], records[0], records[3],
                                      records[1]};
  CHECK(*exact_match(records) == *exact_match(shuffled));
  CHECK(*csr(records) == *csr(shuffled));
  CHECK(*window_overlap(records, 2) == *window_overlap(shuffled, 2));
  CHECK(term_ter(records) == term_ter(shuffled));
  std::vector<TokenSeq> h1, r1, h2, r2;
  for (const auto& r : records) {
    h1.push_back(r.hyp);
    r1.push_back(r.ref);
  }
  for (const auto& r : shuffled) {
    h2.push_back(r.hyp);
    r2.push_back(r.ref);
  }
  CHECK(bleu(h1, r1) == doctest::Approx(bleu(h2, r2)).epsilon(1e-12));
}

TEST_CASE("report: bucket table shape and bounds") {
  std::vector<EvalRecord> records = {
      rec("c0 x", "c0 x", {"c0"}),
      rec("c1 c2 y", "c1 c2 y", {"c1 c2"}),
      rec("a b c d e", "a b c d e", {"a b c d"}),
      rec("m", "m n o", {"n o o2"}),
  };
  MetricReport rep = build_report(records);
  CHECK(rep.n_records == 4);
  CHECK(rep.n_constraints == 4);
  REQUIRE(rep.buckets.count("1"));
  REQUIRE(rep.buckets.count("2"));
  REQUIRE(rep.buckets.count("3"));
  REQUIRE(rep.buckets.count("4plus"));
  CHECK(rep.buckets.at("1").total == 1);
  CHECK(rep.buckets.at("2").total == 1);
  CHECK(rep.buckets.at("3").total == 1);
  CHECK(rep.buckets.at("4plus").total == 1);
  for (auto v : {rep.exact_match_pct, rep.csr_pct, rep.window2_pct,
                 rep.window3_pct}) {
    REQUIRE(v.has_value());
    CHECK(*v >= 0.0);
    CHECK(*v <= 100.0);
  }
  ojson j = rep.to_json();
  CHECK(j.contains("metrics"));
  CHECK(j.contains("buckets"));
}
