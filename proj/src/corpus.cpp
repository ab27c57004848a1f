#include "lexinmt/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"

namespace lexinmt::corpus {

using ojson = nlohmann::ordered_json;

void ConstraintInventory::add(const TokenSeq& lexicon, const TokenSeq& candidate) {
  if (lexicon.empty()) fail("inventory: empty lexicon");
  if (candidate.empty()) fail("inventory: empty candidate");
  auto it = index_.find(lexicon);
  if (it == index_.end()) {
    index_.emplace(lexicon, entries_.size());
    entries_.push_back(Entry{lexicon, {candidate}});
    return;
  }
  auto& cands = entries_[it->second].candidates;
  if (std::find(cands.begin(), cands.end(), candidate) == cands.end())
    cands.push_back(candidate);
}

const std::vector<TokenSeq>* ConstraintInventory::find(const TokenSeq& lexicon) const {
  auto it = index_.find(lexicon);
  if (it == index_.end()) return nullptr;
  return &entries_[it->second].candidates;
}

ConstraintInventory parse_inventory(const std::string& text,
                                    const std::string& origin) {
  ConstraintInventory inv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos
                                              ? std::string::npos
                                              : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2)
      fail(origin + ":" + std::to_string(lineno) +
           ": expected lexicon and at least one candidate");
    TokenSeq lexicon = split_ws(fields[0]);
    if (lexicon.empty())
      fail(origin + ":" + std::to_string(lineno) + ": empty lexicon field");
    for (size_t i = 1; i < fields.size(); ++i) {
      TokenSeq cand = split_ws(fields[i]);
      if (cand.empty())
        fail(origin + ":" + std::to_string(lineno) + ": empty candidate field " +
             std::to_string(i));
      inv.add(lexicon, cand);
    }
  }
  return inv;
}

ConstraintInventory load_inventory(const std::string& path) {
  return parse_inventory(read_file(path), path);
}

void save_inventory(const std::string& path, const ConstraintInventory& inv) {
  std::string out;
  for (const auto& e : inv.entries()) {
    out += join_ws(e.lexicon);
    for (const auto& c : e.candidates) {
      out += '\t';
      out += join_ws(c);
    }
    out += '\n';
  }
  atomic_write_file(path, out);
}

namespace {

bool match_at(const TokenSeq& hay, size_t pos, const TokenSeq& needle) {
  if (pos + needle.size() > hay.size()) return false;
  for (size_t i = 0; i < needle.size(); ++i)
    if (hay[pos + i] != needle[i]) return false;
  return true;
}

// First position where `needle` occurs contiguously in `hay`, or npos.
size_t find_subseq(const TokenSeq& hay, const TokenSeq& needle, size_t from = 0) {
  if (needle.empty() || needle.size() > hay.size()) return std::string::npos;
  for (size_t pos = from; pos + needle.size() <= hay.size(); ++pos)
    if (match_at(hay, pos, needle)) return pos;
  return std::string::npos;
}

}  // namespace

AnnotatedPair annotate(const TokenSeq& src, const std::optional<TokenSeq>& tgt,
                       const ConstraintInventory& inv) {
  // Index entries by first token, longest lexicon first, so the scan below is
  // leftmost-longest (maximal munch).
  std::map<std::string, std::vector<const ConstraintInventory::Entry*>> by_first;
  for (const auto& e : inv.entries()) by_first[e.lexicon.front()].push_back(&e);
  for (auto& [tok, list] : by_first)
    std::stable_sort(list.begin(), list.end(),
                     [](const auto* a, const auto* b) {
                       return a->lexicon.size() > b->lexicon.size();
                     });

  AnnotatedPair out;
  out.src = src;
  out.tgt = tgt;
  size_t i = 0;
  while (i < src.size() &&
         out.constraints.size() < static_cast<size_t>(kMaxConstraintsPerSentence)) {
    auto it = by_first.find(src[i]);
    const ConstraintInventory::Entry* hit = nullptr;
    if (it != by_first.end()) {
      for (const auto* e : it->second) {
        if (match_at(src, i, e->lexicon)) {
          hit = e;
          break;
        }
      }
    }
    if (!hit) {
      ++i;
      continue;
    }
    ConstraintInstance inst;
    inst.begin = i;
    inst.end = i + hit->lexicon.size();
    inst.lexicon = hit->lexicon;
    inst.candidates = hit->candidates;
    if (tgt) {
      for (size_t c = 0; c < hit->candidates.size(); ++c) {
        if (find_subseq(*tgt, hit->candidates[c]) != std::string::npos) {
          inst.gold = static_cast<int>(c);
          break;  // lowest stored index wins ties
        }
      }
    }
    out.constraints.push_back(std::move(inst));
    i += hit->lexicon.size();
  }
  return out;
}

AnnotatedPair annotate(const AnnotatedPair& pair, const ConstraintInventory& inv) {
  return annotate(pair.src, pair.tgt, inv);
}

SyntheticCorpus generate_synthetic(const GeneratorConfig& cfg) {
  if (cfg.n_lexicons < 1) fail("generate_synthetic: n_lexicons must be >= 1");
  if (cfg.n_candidates_per_lexicon < 2)
    fail("generate_synthetic: n_candidates_per_lexicon must be >= 2 "
         "(no ambiguity to test)");
  if (cfg.n_sentences < 1) fail("generate_synthetic: n_sentences must be >= 1");
  if (cfg.len_min < 3 || cfg.len_max < cfg.len_min)
    fail("generate_synthetic: invalid sentence_len_range");

  DetRng rng(cfg.seed);
  const int L = cfg.n_lexicons;
  const int K = cfg.n_candidates_per_lexicon;

  const int n_fillers = 30;
  std::vector<std::string> filler_src(n_fillers), filler_tgt(n_fillers);
  for (int f = 0; f < n_fillers; ++f) {
    filler_src[f] = "w" + std::to_string(f);
    filler_tgt[f] = "W" + std::to_string(f);
  }

  SyntheticCorpus out;
  std::vector<TokenSeq> lexicons(L);
  std::vector<std::vector<TokenSeq>> candidates(L);
  std::vector<std::vector<std::string>> marker_src(L), marker_tgt(L);
  for (int i = 0; i < L; ++i) {
    TokenSeq lex;
    lex.push_back("lex" + std::to_string(i));
    if (i % 2 == 1) lex.push_back("lex" + std::to_string(i) + "b");
    lexicons[i] = lex;
    candidates[i].resize(K);
    marker_src[i].resize(K);
    marker_tgt[i].resize(K);
    for (int j = 0; j < K; ++j) {
      int len = 1 + (i * K + j) % 4;  // candidate lengths cycle 1..4
      TokenSeq cand;
      for (int t = 0; t < len; ++t)
        cand.push_back("c" + std::to_string(i) + "_" + std::to_string(j) + "_" +
                       std::to_string(t));
      candidates[i][j] = cand;
      marker_src[i][j] = "mk" + std::to_string(i) + "_" + std::to_string(j);
      marker_tgt[i][j] = "MK" + std::to_string(i) + "_" + std::to_string(j);
      out.inventory.add(lex, cand);
    }
  }

  // Round-robin gold assignment keeps per-lexicon gold counts uniform (+-1),
  // so the most-frequent selector cannot beat chance on this corpus.
  std::vector<int> gold_counter(L, 0);

  for (int s = 0; s < cfg.n_sentences; ++s) {
    // ~10% unconstrained, then 1..3 instances
    uint64_t roll = rng.below(100);
    int n_c = roll < 10 ? 0 : roll < 55 ? 1 : roll < 85 ? 2 : 3;
    n_c = std::min<int>(n_c, L);

    std::vector<int> lex_ids;
    while (static_cast<int>(lex_ids.size()) < n_c) {
      int cand = static_cast<int>(rng.below(L));
      if (std::find(lex_ids.begin(), lex_ids.end(), cand) == lex_ids.end())
        lex_ids.push_back(cand);
    }

    int n_fill = cfg.len_min + static_cast<int>(rng.below(cfg.len_max - cfg.len_min + 1));
    TokenSeq src;
    for (int t = 0; t < n_fill; ++t)
      src.push_back(filler_src[rng.below(n_fillers)]);

    struct Placed {
      int lex_id;
      int gold;
    };
    std::vector<Placed> placed;
    // owner[i]: index into `placed` whose block covers token i, or -1.
    // A gap position g may not fall strictly inside an existing block.
    std::vector<int> owner(src.size(), -1);
    auto splits_block = [&](size_t g) {
      return g > 0 && g < owner.size() && owner[g - 1] >= 0 &&
             owner[g - 1] == owner[g];
    };
    for (int lex_id : lex_ids) {
      int gold = gold_counter[lex_id]++ % K;
      const TokenSeq& block = lexicons[lex_id];
      size_t gap = rng.below(src.size() + 1);
      while (splits_block(gap)) ++gap;
      src.insert(src.begin() + gap, block.begin(), block.end());
      owner.insert(owner.begin() + gap, block.size(),
                   static_cast<int>(placed.size()));
      placed.push_back({lex_id, gold});
    }
    // Each marker sits directly after its lexicon block, so the pairing
    // between marker and lexicon is positional rather than memorized.
    for (size_t i = 0; i < placed.size(); ++i) {
      size_t gap = 0;
      while (gap < owner.size() && owner[gap] != static_cast<int>(i)) ++gap;
      while (gap < owner.size() && owner[gap] == static_cast<int>(i)) ++gap;
      src.insert(src.begin() + gap, marker_src[placed[i].lex_id][placed[i].gold]);
      owner.insert(owner.begin() + gap, 1, -1);
    }

    // Target: token-wise image with the gold candidate substituted.
    TokenSeq tgt;
    AnnotatedPair pair;
    std::vector<std::pair<size_t, Placed>> spans;
    for (size_t i = 0; i < placed.size(); ++i) {
      size_t pos = 0;
      while (pos < owner.size() && owner[pos] != static_cast<int>(i)) ++pos;
      spans.push_back({pos, placed[i]});
    }
    std::sort(spans.begin(), spans.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    size_t t = 0;
    size_t next_span = 0;
    while (t < src.size()) {
      if (next_span < spans.size() && t == spans[next_span].first) {
        const auto& p = spans[next_span].second;
        const TokenSeq& cand = candidates[p.lex_id][p.gold];
        tgt.insert(tgt.end(), cand.begin(), cand.end());
        t += lexicons[p.lex_id].size();
        ++next_span;
        continue;
      }
      const std::string& tok = src[t];
      if (tok[0] == 'w') {
        tgt.push_back("W" + tok.substr(1));
      } else {  // marker
        tgt.push_back("M" + tok.substr(1));
      }
      ++t;
    }

    pair.src = src;
    pair.tgt = tgt;
    for (const auto& [pos, p] : spans) {
      ConstraintInstance inst;
      inst.begin = pos;
      inst.end = pos + lexicons[p.lex_id].size();
      inst.lexicon = lexicons[p.lex_id];
      inst.candidates = candidates[p.lex_id];
      inst.gold = p.gold;
      pair.constraints.push_back(std::move(inst));
    }
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

SplitResult split(const std::vector<AnnotatedPair>& pairs,
                  const std::vector<double>& ratios, uint64_t seed) {
  if (pairs.empty()) fail("split: empty corpus");
  if (ratios.size() != 3) fail("split: expected three ratios");
  double sum = 0;
  for (double r : ratios) {
    if (r < 0) fail("split: negative ratio");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail("split: ratios must sum to 1");

  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  DetRng rng(seed);
  rng.shuffle(order);

  size_t n = pairs.size();
  std::vector<size_t> sizes(3);
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<size_t>(ratios[i] * n);
    assigned += sizes[i];
  }
  for (size_t i = 0; assigned < n; ++assigned, ++i) sizes[i % 3]++;

  SplitResult out;
  size_t pos = 0;
  auto take = [&](size_t count) {
    std::vector<AnnotatedPair> part;
    part.reserve(count);
    for (size_t i = 0; i < count; ++i) part.push_back(pairs[order[pos++]]);
    return part;
  };
  out.train = take(sizes[0]);
  out.valid = take(sizes[1]);
  out.test = take(sizes[2]);
  return out;
}

CorpusStats corpus_stats(const std::vector<AnnotatedPair>& pairs) {
  CorpusStats st;
  st.all = static_cast<int64_t>(pairs.size());
  for (const auto& p : pairs) {
    if (!p.constraints.empty()) st.constrained++;
    bool amb = false;
    for (const auto& c : p.constraints) {
      st.instances++;
      if (c.candidates.size() >= 2) {
        st.ambiguous_instances++;
        amb = true;
      }
    }
    if (amb) st.amb_constrained++;
  }
  return st;
}

namespace {

ojson pair_to_json(const AnnotatedPair& p) {
  ojson j;
  j["src"] = join_ws(p.src);
  if (p.tgt)
    j["tgt"] = join_ws(*p.tgt);
  else
    j["tgt"] = nullptr;
  ojson cons = ojson::array();
  for (const auto& c : p.constraints) {
    ojson jc;
    jc["span"] = {c.begin, c.end};
    ojson cands = ojson::array();
    for (const auto& cand : c.candidates) cands.push_back(join_ws(cand));
    jc["candidates"] = cands;
    if (c.gold)
      jc["gold"] = *c.gold;
    else
      jc["gold"] = nullptr;
    cons.push_back(jc);
  }
  j["constraints"] = cons;
  return j;
}

AnnotatedPair pair_from_json(const ojson& j, const std::string& where) {
  AnnotatedPair p;
  p.src = split_ws(j.at("src").get<std::string>());
  if (!j.at("tgt").is_null()) p.tgt = split_ws(j.at("tgt").get<std::string>());
  for (const auto& jc : j.at("constraints")) {
    ConstraintInstance c;
    c.begin = jc.at("span").at(0).get<size_t>();
    c.end = jc.at("span").at(1).get<size_t>();
    if (c.begin >= c.end || c.end > p.src.size())
      fail(where + ": constraint span out of range");
    c.lexicon.assign(p.src.begin() + c.begin, p.src.begin() + c.end);
    for (const auto& cand : jc.at("candidates")) {
      TokenSeq toks = split_ws(cand.get<std::string>());
      if (toks.empty()) fail(where + ": empty candidate");
      c.candidates.push_back(toks);
    }
    if (c.candidates.empty()) fail(where + ": constraint without candidates");
    if (!jc.at("gold").is_null()) {
      int g = jc.at("gold").get<int>();
      if (g < 0 || g >= static_cast<int>(c.candidates.size()))
        fail(where + ": gold index out of range");
      c.gold = g;
    }
    p.constraints.push_back(std::move(c));
  }
  // spans must not overlap
  for (size_t a = 0; a < p.constraints.size(); ++a)
    for (size_t b = a + 1; b < p.constraints.size(); ++b) {
      const auto& x = p.constraints[a];
      const auto& y = p.constraints[b];
      if (x.begin < y.end && y.begin < x.end)
        fail(where + ": overlapping constraint spans");
    }
  return p;
}

}  // namespace

std::vector<AnnotatedPair> read_corpus_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<AnnotatedPair> pairs;
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
    pairs.push_back(pair_from_json(j, path + ":" + std::to_string(lineno)));
  }
  return pairs;
}

std::string corpus_to_jsonl(const std::vector<AnnotatedPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += pair_to_json(p).dump();
    out += '\n';
  }
  return out;
}

void write_corpus_jsonl(const std::string& path,
                        const std::vector<AnnotatedPair>& pairs) {
  atomic_write_file(path, corpus_to_jsonl(pairs));
}

namespace {
const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kReserved = {
      "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
      "[BOS]", "[EOS]", "<C1>",  "<C2>",  "<C3>"};
  return kReserved;
}
}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) {
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) fail("Vocabulary: id out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::encode(const TokenSeq& toks) const {
  std::vector<int> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(id(t));
  return out;
}

TokenSeq Vocabulary::decode(const std::vector<int>& ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

int Vocabulary::slot_id(int slot_index) {
  if (slot_index < 1 || slot_index > 3) fail("slot index must be in 1..3");
  return kSlot1 + slot_index - 1;
}

const std::string& Vocabulary::slot_token(int slot_index) {
  return reserved_tokens()[slot_id(slot_index)];
}

bool Vocabulary::is_reserved_token(const std::string& token) {
  const auto& r = reserved_tokens();
  return std::find(r.begin(), r.end(), token) != r.end();
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < static_cast<size_t>(kNumReserved))
    fail("Vocabulary::from_tokens: missing reserved tokens");
  for (int i = 0; i < kNumReserved; ++i)
    if (tokens[i] != reserved_tokens()[i])
      fail("Vocabulary::from_tokens: reserved token mismatch at " +
           std::to_string(i));
  for (size_t i = kNumReserved; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

Vocabulary Vocabulary::build(const std::vector<AnnotatedPair>& pairs,
                             const ConstraintInventory* inv) {
  Vocabulary v;
  for (const auto& p : pairs) {
    for (const auto& t : p.src) v.add(t);
    if (p.tgt)
      for (const auto& t : *p.tgt) v.add(t);
    for (const auto& c : p.constraints)
      for (const auto& cand : c.candidates)
        for (const auto& t : cand) v.add(t);
  }
  if (inv) {
    for (const auto& e : inv->entries()) {
      for (const auto& t : e.lexicon) v.add(t);
      for (const auto& c : e.candidates)
        for (const auto& t : c) v.add(t);
    }
  }
  return v;
}

}  // namespace lexinmt::corpus
