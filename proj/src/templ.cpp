#include "lexinmt/templ.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace lexinmt::templ {

using ojson = nlohmann::ordered_json;

namespace {

// Leftmost occurrence of needle in hay starting at or after `from` that does
// not intersect any range in `taken`.
int find_unconsumed(const TokenSeq& hay, const TokenSeq& needle,
                    const std::vector<std::pair<size_t, size_t>>& taken) {
  if (needle.empty() || needle.size() > hay.size()) return -1;
  for (size_t pos = 0; pos + needle.size() <= hay.size(); ++pos) {
    bool match = true;
    for (size_t j = 0; j < needle.size() && match; ++j)
      match = hay[pos + j] == needle[j];
    if (!match) continue;
    bool clash = false;
    for (const auto& [b, e] : taken)
      if (pos < e && b < pos + needle.size()) {
        clash = true;
        break;
      }
    if (!clash) return static_cast<int>(pos);
    // an occurrence that overlaps an already consumed one is a data defect
    fail("extract_template: overlapping target constraint occurrences");
  }
  return -1;
}

}  // namespace

TemplatePair extract_template(const AnnotatedPair& pair) {
  if (!pair.tgt) fail("extract_template: pair has no target");
  const size_t n = pair.constraints.size();
  if (n > 3) fail("extract_template: more than 3 constraints");
  for (const auto& t : pair.src)
    if (Vocabulary::is_reserved_token(t))
      fail("extract_template: reserved token in source text");
  for (const auto& t : *pair.tgt)
    if (Vocabulary::is_reserved_token(t))
      fail("extract_template: reserved token in target text");

  // constraints in source order
  std::vector<const corpus::ConstraintInstance*> insts;
  for (const auto& c : pair.constraints) insts.push_back(&c);
  std::sort(insts.begin(), insts.end(),
            [](const auto* a, const auto* b) { return a->begin < b->begin; });

  TemplatePair out;
  size_t at = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!insts[i]->gold) fail("extract_template: constraint without gold");
    for (size_t t = at; t < insts[i]->begin; ++t) out.src_t.push_back(pair.src[t]);
    out.src_t.push_back(Vocabulary::slot_token(static_cast<int>(i) + 1));
    at = insts[i]->end;
    out.payloads.push_back(insts[i]->candidates[*insts[i]->gold]);
  }
  for (size_t t = at; t < pair.src.size(); ++t) out.src_t.push_back(pair.src[t]);

  // locate each gold payload in the target (leftmost unconsumed occurrence)
  std::vector<std::pair<size_t, size_t>> taken;
  std::vector<std::pair<size_t, int>> slots;  // (tgt position, source index)
  for (size_t i = 0; i < n; ++i) {
    int pos = find_unconsumed(*pair.tgt, out.payloads[i], taken);
    if (pos < 0)
      fail("extract_template: gold constraint \"" + join_ws(out.payloads[i]) +
           "\" not found in target");
    taken.push_back({static_cast<size_t>(pos),
                     static_cast<size_t>(pos) + out.payloads[i].size()});
    slots.push_back({static_cast<size_t>(pos), static_cast<int>(i) + 1});
  }
  std::sort(slots.begin(), slots.end());

  size_t t = 0;
  size_t next = 0;
  while (t < pair.tgt->size()) {
    if (next < slots.size() && t == slots[next].first) {
      out.tgt_t.push_back(Vocabulary::slot_token(slots[next].second));
      out.align.push_back(slots[next].second);
      t += out.payloads[slots[next].second - 1].size();
      ++next;
      continue;
    }
    out.tgt_t.push_back((*pair.tgt)[t]);
    ++t;
  }
  return out;
}

FillResult fill_template(const TokenSeq& decoded,
                         const std::vector<TokenSeq>& payloads) {
  const int n = static_cast<int>(payloads.size());
  if (n > 3) fail("fill_template: more than 3 payloads");
  for (const auto& p : payloads) {
    if (p.empty()) fail("fill_template: empty payload");
    for (const auto& t : p)
      if (Vocabulary::is_reserved_token(t))
        fail("fill_template: reserved token inside payload");
  }

  FillResult out;
  std::vector<bool> seen(n, false);
  for (const auto& tok : decoded) {
    int slot = 0;
    for (int i = 1; i <= 3; ++i)
      if (tok == Vocabulary::slot_token(i)) slot = i;
    if (slot == 0) {
      out.tokens.push_back(tok);
      continue;
    }
    if (slot > n) {
      out.flags.push_back("unexpected_slot:" + std::to_string(slot));
      continue;  // tag with no payload: drop, tags must never leak
    }
    if (seen[slot - 1]) {
      out.flags.push_back("duplicate_slot:" + std::to_string(slot));
      continue;  // first occurrence wins
    }
    seen[slot - 1] = true;
    const TokenSeq& p = payloads[slot - 1];
    out.tokens.insert(out.tokens.end(), p.begin(), p.end());
  }
  for (int i = 0; i < n; ++i) {
    if (seen[i]) continue;
    // a dropped slot must not drop its constraint; append and flag
    out.flags.push_back("missing_slot:" + std::to_string(i + 1));
    out.tokens.insert(out.tokens.end(), payloads[i].begin(), payloads[i].end());
  }
  return out;
}

std::vector<AnnotatedPair> templated_pairs(const std::vector<AnnotatedPair>& pairs) {
  std::vector<AnnotatedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    TemplatePair tp = extract_template(p);
    AnnotatedPair q;
    q.src = tp.src_t;
    q.tgt = tp.tgt_t;
    out.push_back(std::move(q));
  }
  return out;
}

std::string templates_to_jsonl(const std::vector<TemplatePair>& tps) {
  std::string out;
  for (const auto& tp : tps) {
    ojson j;
    j["src_t"] = join_ws(tp.src_t);
    j["tgt_t"] = join_ws(tp.tgt_t);
    j["align"] = tp.align;
    ojson pl = ojson::array();
    for (const auto& p : tp.payloads) pl.push_back(join_ws(p));
    j["payloads"] = pl;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TemplatePair> read_templates_jsonl(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<TemplatePair> out;
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
    TemplatePair tp;
    tp.src_t = split_ws(j.at("src_t").get<std::string>());
    tp.tgt_t = split_ws(j.at("tgt_t").get<std::string>());
    tp.align = j.at("align").get<std::vector<int>>();
    for (const auto& p : j.at("payloads"))
      tp.payloads.push_back(split_ws(p.get<std::string>()));
    out.push_back(std::move(tp));
  }
  return out;
}

void write_templates_jsonl(const std::string& path,
                           const std::vector<TemplatePair>& tps) {
  atomic_write_file(path, templates_to_jsonl(tps));
}

}  // namespace lexinmt::templ
