#pragma once

// Transformation-based chunk tagger: most-frequent-tag baseline per POS, then
// greedily learned rules that rewrite one chunk tag given the words, POS tags
// and current chunk tags within three positions on either side.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "basenp/corpus.hpp"
#include "basenp/error.hpp"

namespace basenp {

/// A sentence with a chunk tag per token. Mid-learning the tags need not be a
/// valid IOB sequence.
struct TaggedSentence
{
  std::vector<Token> tokens;
  std::vector<ChunkTag> chunk_tags;

  friend bool operator==(const TaggedSentence&, const TaggedSentence&) = default;
};

enum class Feature : std::uint8_t { Word, Pos, Chunk };

inline const char* to_string(Feature f)
{
  switch (f) {
    case Feature::Word: return "word";
    case Feature::Pos: return "pos";
    case Feature::Chunk: return "chunk";
  }
  return "?";
}

inline std::optional<Feature> feature_from(std::string_view s)
{
  if (s == "word") return Feature::Word;
  if (s == "pos") return Feature::Pos;
  if (s == "chunk") return Feature::Chunk;
  return std::nullopt;
}

inline constexpr int kWindow = 3;

struct Condition
{
  int offset = 0;
  Feature feature = Feature::Pos;
  std::string value;  ///< word, POS tag, or "I"/"O"/"B"

  friend bool operator==(const Condition&, const Condition&) = default;
};

struct TblRule
{
  ChunkTag from = ChunkTag::I;
  ChunkTag to = ChunkTag::B;
  std::vector<Condition> conditions;

  friend bool operator==(const TblRule&, const TblRule&) = default;
};

/// The (offset, feature) slots a family of rules conditions on.
struct Template
{
  std::vector<std::pair<int, Feature>> slots;

  friend bool operator==(const Template&, const Template&) = default;
};

struct LearnerConfig
{
  std::size_t min_gain = 2;
  std::size_t max_rules = 500;
  std::vector<Template> templates;
};

using BaselineMap = std::map<std::string, ChunkTag>;

struct LearnedRule
{
  TblRule rule;
  std::size_t gain = 0;
  std::size_t errors_before = 0;  ///< training tag errors before this rule
  std::size_t errors_after = 0;
};

struct TblModel
{
  BaselineMap baseline;
  std::vector<LearnedRule> rules;
  std::size_t baseline_errors = 0;

  std::vector<TblRule> rule_list() const
  {
    std::vector<TblRule> out;
    for (const auto& r : rules) out.push_back(r.rule);
    return out;
  }
};

// ---------------------------------------------------------------------------
// templates

inline bool valid_template(const Template& t)
{
  if (t.slots.empty() || t.slots.size() > 4) return false;
  for (std::size_t i = 0; i < t.slots.size(); ++i) {
    if (t.slots[i].first < -kWindow || t.slots[i].first > kWindow) return false;
    for (std::size_t j = 0; j < i; ++j)
      if (t.slots[j] == t.slots[i]) return false;
  }
  return true;
}

/// Every single slot and every pair of slots over word/pos/chunk at offsets
/// -3..3 (chunk at offset 0 is implied by the rule's from-tag), plus
/// pos[0] pos[1] chunk[-1] chunk[-2].
inline std::vector<Template> default_templates()
{
  std::vector<std::pair<int, Feature>> slots;
  for (auto f : {Feature::Word, Feature::Pos, Feature::Chunk})
    for (int o = -kWindow; o <= kWindow; ++o)
      if (!(f == Feature::Chunk && o == 0)) slots.emplace_back(o, f);
  std::vector<Template> out;
  for (const auto& s : slots) out.push_back({{s}});
  for (std::size_t i = 0; i < slots.size(); ++i)
    for (std::size_t j = i + 1; j < slots.size(); ++j) out.push_back({{slots[i], slots[j]}});
  out.push_back({{{0, Feature::Pos}, {1, Feature::Pos}, {-1, Feature::Chunk}, {-2, Feature::Chunk}}});
  return out;
}

inline std::string template_to_string(const Template& t)
{
  std::string out;
  for (const auto& [o, f] : t.slots) {
    if (!out.empty()) out += ' ';
    out += std::string(to_string(f)) + "[" + std::to_string(o) + "]";
  }
  return out;
}

namespace detail {

/// Parses "feature[offset]" and returns the position after it.
inline std::pair<int, Feature> parse_slot(std::string_view s, std::size_t line)
{
  auto lb = s.find('[');
  auto rb = s.find(']');
  if (lb == std::string_view::npos || rb == std::string_view::npos || rb < lb)
    throw ParseError("expected feature[offset], got '" + std::string(s) + "'", line, 0);
  auto f = feature_from(s.substr(0, lb));
  if (!f) throw ParseError("unknown feature '" + std::string(s.substr(0, lb)) + "'", line, 0);
  std::string num(s.substr(lb + 1, rb - lb - 1));
  int off = 0;
  try {
    std::size_t used = 0;
    off = std::stoi(num, &used);
    if (used != num.size()) throw std::invalid_argument(num);
  } catch (const std::exception&) {
    throw ParseError("bad offset '" + num + "'", line, lb + 1);
  }
  if (off < -kWindow || off > kWindow) throw ParseError("offset outside the +/-3 window", line, lb + 1);
  return {off, *f};
}

inline std::vector<std::string_view> words_of(std::string_view line)
{
  std::vector<std::string_view> out;
  for (auto [atom, col] : split_atoms(line)) out.push_back(atom);
  return out;
}

} // namespace detail

/// One template per line: space-separated "feature[offset]" slots.
inline std::vector<Template> parse_templates(std::string_view text)
{
  std::vector<Template> out;
  std::size_t line_no = 0;
  for (auto line : detail::split_lines(text)) {
    ++line_no;
    auto words = detail::words_of(line);
    if (words.empty() || words[0].front() == '#') continue;
    Template t;
    for (auto w : words) t.slots.push_back(detail::parse_slot(w, line_no));
    if (!valid_template(t)) throw ParseError("template needs 1-4 distinct slots", line_no, 0);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// rules as text: from=I to=B IF pos[0]=DT pos[1]=NN chunk[-1]=I chunk[-2]=I

inline std::string rule_to_string(const TblRule& r)
{
  std::string out = std::string("from=") + to_char(r.from) + " to=" + to_char(r.to) + " IF";
  for (const auto& c : r.conditions)
    out += " " + std::string(to_string(c.feature)) + "[" + std::to_string(c.offset) + "]=" + c.value;
  return out;
}

inline TblRule parse_tbl_rule(std::string_view text, std::size_t line = 1)
{
  auto words = detail::words_of(text);
  if (words.size() < 4 || words[0].substr(0, 5) != "from=" || words[1].substr(0, 3) != "to=" || words[2] != "IF")
    throw ParseError("expected 'from=X to=Y IF cond...'", line, 0);
  TblRule r;
  auto from = chunk_tag_from(words[0].substr(5));
  auto to = chunk_tag_from(words[1].substr(3));
  if (!from || !to) throw ParseError("chunk tags must be I, O or B", line, 0);
  if (*from == *to) throw ParseError("from and to tags must differ", line, 0);
  r.from = *from;
  r.to = *to;
  for (std::size_t i = 3; i < words.size(); ++i) {
    auto eq = words[i].find("]=");
    if (eq == std::string_view::npos) throw ParseError("expected feature[offset]=value", line, 0);
    auto [off, f] = detail::parse_slot(words[i].substr(0, eq + 1), line);
    std::string value(words[i].substr(eq + 2));
    if (value.empty()) throw ParseError("empty condition value", line, 0);
    if (f == Feature::Chunk && !chunk_tag_from(value)) throw ParseError("chunk condition must be I, O or B", line, 0);
    for (const auto& c : r.conditions)
      if (c.offset == off && c.feature == f) throw ParseError("duplicate condition slot", line, 0);
    r.conditions.push_back({off, f, std::move(value)});
  }
  return r;
}

/// One rule per line followed by a tab and "gain=N".
inline std::string serialize_model_rules(const std::vector<LearnedRule>& rules)
{
  std::string out;
  for (const auto& r : rules) out += rule_to_string(r.rule) + "\tgain=" + std::to_string(r.gain) + "\n";
  return out;
}

inline std::vector<LearnedRule> parse_model_rules(std::string_view text)
{
  std::vector<LearnedRule> out;
  std::size_t line_no = 0;
  for (auto line : detail::split_lines(text)) {
    ++line_no;
    if (detail::words_of(line).empty() || line.front() == '#') continue;
    LearnedRule lr;
    auto tab = line.find('\t');
    auto rule_part = line.substr(0, tab);
    if (tab != std::string_view::npos) {
      auto g = line.substr(tab + 1);
      if (g.substr(0, 5) != "gain=") throw ParseError("expected gain=N after the rule", line_no, tab + 1);
      try {
        lr.gain = std::stoul(std::string(g.substr(5)));
      } catch (const std::exception&) {
        throw ParseError("bad gain value", line_no, tab + 6);
      }
    }
    lr.rule = parse_tbl_rule(rule_part, line_no);
    out.push_back(std::move(lr));
  }
  return out;
}

inline std::string serialize_baseline(const BaselineMap& m)
{
  std::string out;
  for (const auto& [pos, tag] : m) out += pos + "\t" + to_char(tag) + "\n";
  return out;
}

inline BaselineMap parse_baseline(std::string_view text)
{
  BaselineMap m;
  std::size_t line_no = 0;
  for (auto line : detail::split_lines(text)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError("expected POS<TAB>TAG", line_no, 0);
    auto tag = chunk_tag_from(line.substr(tab + 1));
    if (!tag || tab == 0) throw ParseError("expected POS<TAB>I|O|B", line_no, tab + 1);
    m[std::string(line.substr(0, tab))] = *tag;
  }
  return m;
}

// ---------------------------------------------------------------------------
// baseline

/// Most frequent gold chunk tag per POS tag; ties go I, then O, then B.
inline BaselineMap baseline_map(const Corpus& train)
{
  if (train.token_count() == 0) throw Error("baseline_map: training corpus has no tokens");
  std::map<std::string, std::array<std::size_t, 3>> counts;
  for (const auto& s : train.sentences) {
    auto tags = spans_to_iob(s);
    for (std::size_t i = 0; i < s.size(); ++i) ++counts[s.tokens[i].pos][static_cast<std::size_t>(tags[i])];
  }
  BaselineMap m;
  for (const auto& [pos, c] : counts) {
    ChunkTag best = ChunkTag::I;
    for (auto t : {ChunkTag::O, ChunkTag::B})
      if (c[static_cast<std::size_t>(t)] > c[static_cast<std::size_t>(best)]) best = t;
    m[pos] = best;
  }
  return m;
}

inline TaggedSentence apply_baseline(const BaselineMap& m, const AnnotatedSentence& s)
{
  TaggedSentence t{s.tokens, {}};
  for (const auto& tok : s.tokens) {
    auto it = m.find(tok.pos);
    t.chunk_tags.push_back(it == m.end() ? ChunkTag::O : it->second);
  }
  return t;
}

inline std::vector<TaggedSentence> apply_baseline(const BaselineMap& m, const Corpus& raw)
{
  std::vector<TaggedSentence> out;
  out.reserve(raw.size());
  for (const auto& s : raw.sentences) out.push_back(apply_baseline(m, s));
  return out;
}

// ---------------------------------------------------------------------------
// rule application

inline bool rule_matches(const TblRule& r, const TaggedSentence& s, std::size_t i)
{
  if (i >= s.tokens.size() || s.chunk_tags[i] != r.from) return false;
  for (const auto& c : r.conditions) {
    auto j = static_cast<std::ptrdiff_t>(i) + c.offset;
    if (j < 0 || j >= static_cast<std::ptrdiff_t>(s.tokens.size())) return false;
    auto k = static_cast<std::size_t>(j);
    switch (c.feature) {
      case Feature::Word:
        if (s.tokens[k].word != c.value) return false;
        break;
      case Feature::Pos:
        if (s.tokens[k].pos != c.value) return false;
        break;
      case Feature::Chunk:
        if (std::string(1, to_char(s.chunk_tags[k])) != c.value) return false;
        break;
    }
  }
  return true;
}

/// Positions where the rule fires, all judged against the same (current) tags.
inline std::vector<std::size_t> firing_positions(const TblRule& r, const TaggedSentence& s)
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.tokens.size(); ++i)
    if (rule_matches(r, s, i)) out.push_back(i);
  return out;
}

/// Simultaneous application: find every firing site first, then rewrite.
inline std::size_t apply_tbl_rule(const TblRule& r, TaggedSentence& s)
{
  auto sites = firing_positions(r, s);
  for (auto i : sites) s.chunk_tags[i] = r.to;
  return sites.size();
}

inline long score_rule(const TblRule& r, const std::vector<TaggedSentence>& tagged,
                       const std::vector<std::vector<ChunkTag>>& truth_tags)
{
  if (tagged.size() != truth_tags.size()) throw AlignmentError("score_rule: sentence counts differ");
  long gain = 0;
  for (std::size_t k = 0; k < tagged.size(); ++k) {
    if (tagged[k].chunk_tags.size() != truth_tags[k].size()) throw AlignmentError("score_rule: sentence lengths differ");
    for (auto i : firing_positions(r, tagged[k])) {
      auto cur = tagged[k].chunk_tags[i];
      auto truth = truth_tags[k][i];
      if (r.to == truth && cur != truth) ++gain;
      else if (cur == truth && r.to != truth) --gain;
    }
  }
  return gain;
}

inline std::size_t count_tag_errors(const std::vector<TaggedSentence>& tagged,
                                    const std::vector<std::vector<ChunkTag>>& truth_tags)
{
  std::size_t n = 0;
  for (std::size_t k = 0; k < tagged.size(); ++k)
    for (std::size_t i = 0; i < truth_tags[k].size(); ++i) n += tagged[k].chunk_tags[i] != truth_tags[k][i];
  return n;
}

/// Baseline, then every rule in order; invalid B tags are repaired to I
/// before the tags are turned back into spans.
inline Corpus apply_tbl(const std::vector<TblRule>& rules, const BaselineMap& m, const Corpus& raw)
{
  Corpus out;
  out.label = raw.label;
  for (const auto& s : raw.sentences) {
    auto t = apply_baseline(m, s);
    for (const auto& r : rules) apply_tbl_rule(r, t);
    repair_iob(t.chunk_tags);
    out.sentences.push_back(AnnotatedSentence{s.tokens, iob_to_spans(t.chunk_tags)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// learning

namespace detail {

/// Training state flattened into arrays, with kWindow pad positions between
/// and around sentences so that window lookups never cross a boundary.
struct FlatState
{
  static constexpr std::int32_t kPad = -1;
  static constexpr std::uint8_t kPadTag = 3;

  std::vector<std::int32_t> word;
  std::vector<std::int32_t> pos;
  std::vector<std::uint8_t> cur;
  std::vector<std::uint8_t> truth;
  std::vector<std::size_t> real;  ///< indices of non-pad positions
  std::vector<std::string> word_names;
  std::vector<std::string> pos_names;

  std::int32_t value(Feature f, std::size_t i) const
  {
    switch (f) {
      case Feature::Word: return word[i];
      case Feature::Pos: return pos[i];
      case Feature::Chunk: return cur[i] == kPadTag ? kPad : static_cast<std::int32_t>(cur[i]);
    }
    return kPad;
  }

  std::string name(Feature f, std::int32_t v) const
  {
    switch (f) {
      case Feature::Word: return word_names[static_cast<std::size_t>(v)];
      case Feature::Pos: return pos_names[static_cast<std::size_t>(v)];
      case Feature::Chunk: return std::string(1, to_char(static_cast<ChunkTag>(v)));
    }
    return {};
  }

  std::size_t errors() const
  {
    std::size_t n = 0;
    for (auto i : real) n += cur[i] != truth[i];
    return n;
  }
};

inline FlatState flatten(const std::vector<TaggedSentence>& tagged, const std::vector<std::vector<ChunkTag>>& truth)
{
  FlatState st;
  std::unordered_map<std::string, std::int32_t> words, tags;
  auto intern = [](auto& table, auto& names, const std::string& s) {
    auto [it, fresh] = table.emplace(s, static_cast<std::int32_t>(names.size()));
    if (fresh) names.push_back(s);
    return it->second;
  };
  auto pad = [&st] {
    for (int k = 0; k < kWindow; ++k) {
      st.word.push_back(FlatState::kPad);
      st.pos.push_back(FlatState::kPad);
      st.cur.push_back(FlatState::kPadTag);
      st.truth.push_back(FlatState::kPadTag);
    }
  };
  pad();
  for (std::size_t k = 0; k < tagged.size(); ++k) {
    for (std::size_t i = 0; i < tagged[k].tokens.size(); ++i) {
      st.real.push_back(st.word.size());
      st.word.push_back(intern(words, st.word_names, tagged[k].tokens[i].word));
      st.pos.push_back(intern(tags, st.pos_names, tagged[k].tokens[i].pos));
      st.cur.push_back(static_cast<std::uint8_t>(tagged[k].chunk_tags[i]));
      st.truth.push_back(static_cast<std::uint8_t>(truth[k][i]));
    }
    pad();
  }
  return st;
}

struct CandidateKey
{
  std::uint32_t templ = 0;
  std::uint8_t from = 0;
  std::uint8_t to = 0;
  std::array<std::int32_t, 4> values{};

  friend bool operator==(const CandidateKey&, const CandidateKey&) = default;
};

struct CandidateHash
{
  std::size_t operator()(const CandidateKey& k) const noexcept
  {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    };
    mix(k.templ);
    mix(static_cast<std::uint64_t>(k.from) << 8 | k.to);
    for (auto v : k.values) mix(static_cast<std::uint32_t>(v));
    return static_cast<std::size_t>(h);
  }
};

class Learner
{
public:
  Learner(FlatState& st, const std::vector<Template>& templates) : st_(st), templates_(templates) {}

  bool fires(const CandidateKey& k, std::size_t i) const
  {
    if (st_.cur[i] != k.from) return false;
    const auto& slots = templates_[k.templ].slots;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      auto j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + slots[s].first);
      if (st_.value(slots[s].second, j) != k.values[s]) return false;
    }
    return true;
  }

  /// Tie-break: template index, then slot values (as text), then from, to.
  bool key_less(const CandidateKey& a, const CandidateKey& b) const
  {
    if (a.templ != b.templ) return a.templ < b.templ;
    const auto& slots = templates_[a.templ].slots;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (a.values[s] == b.values[s]) continue;
      return st_.name(slots[s].second, a.values[s]) < st_.name(slots[s].second, b.values[s]);
    }
    if (a.from != b.from) return a.from < b.from;
    return a.to < b.to;
  }

  TblRule to_rule(const CandidateKey& k) const
  {
    TblRule r;
    r.from = static_cast<ChunkTag>(k.from);
    r.to = static_cast<ChunkTag>(k.to);
    const auto& slots = templates_[k.templ].slots;
    for (std::size_t s = 0; s < slots.size(); ++s)
      r.conditions.push_back({slots[s].first, slots[s].second, st_.name(slots[s].second, k.values[s])});
    return r;
  }

  /// Best candidate and its net gain, or nullopt when nothing reaches min_gain.
  std::optional<std::pair<CandidateKey, std::size_t>> best(std::size_t min_gain)
  {
    // good(c) = number of error positions that generate c; each such position
    // is one the rule would fix.
    std::unordered_map<CandidateKey, std::uint32_t, CandidateHash> good;
    for (auto i : st_.real) {
      if (st_.cur[i] == st_.truth[i]) continue;
      for (std::uint32_t t = 0; t < templates_.size(); ++t) {
        CandidateKey k;
        k.templ = t;
        k.from = st_.cur[i];
        k.to = st_.truth[i];
        bool ok = true;
        const auto& slots = templates_[t].slots;
        for (std::size_t s = 0; s < slots.size() && ok; ++s) {
          auto j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + slots[s].first);
          k.values[s] = st_.value(slots[s].second, j);
          ok = k.values[s] != FlatState::kPad;
        }
        if (ok) ++good[k];
      }
    }
    std::vector<std::pair<CandidateKey, std::uint32_t>> cands(good.begin(), good.end());
    std::sort(cands.begin(), cands.end(), [this](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return key_less(a.first, b.first);
    });

    // Positions a rewrite would break: currently correct, tagged `from`.
    std::array<std::vector<std::size_t>, 3> correct;
    for (auto i : st_.real)
      if (st_.cur[i] == st_.truth[i]) correct[st_.cur[i]].push_back(i);

    std::optional<std::pair<CandidateKey, std::size_t>> best;
    for (const auto& [key, g] : cands) {
      if (g < min_gain) break;
      if (best && g < best->second) break;  // gain <= good
      std::size_t bad = 0;
      for (auto i : correct[key.from]) {
        if (fires(key, i)) ++bad;
        if (bad > g) break;
      }
      if (bad > g) continue;
      std::size_t gain = g - bad;
      if (gain < min_gain) continue;
      if (!best || gain > best->second || (gain == best->second && key_less(key, best->first)))
        best = std::make_pair(key, gain);
    }
    return best;
  }

  void apply(const CandidateKey& k)
  {
    std::vector<std::size_t> sites;
    for (auto i : st_.real)
      if (fires(k, i)) sites.push_back(i);
    for (auto i : sites) st_.cur[i] = k.to;
  }

private:
  FlatState& st_;
  const std::vector<Template>& templates_;
};

} // namespace detail

inline std::vector<std::vector<ChunkTag>> truth_tags(const Corpus& c)
{
  std::vector<std::vector<ChunkTag>> out;
  out.reserve(c.size());
  for (const auto& s : c.sentences) out.push_back(spans_to_iob(s));
  return out;
}

/// Greedy error-driven learning from gold-annotated training data.
inline TblModel learn(const Corpus& train, const LearnerConfig& cfg)
{
  if (cfg.min_gain < 1) throw Error("learn: min_gain must be at least 1");
  // An empty template list means the built-in set.
  const auto templates = cfg.templates.empty() ? default_templates() : cfg.templates;
  for (const auto& t : templates)
    if (!valid_template(t)) throw Error("learn: invalid template " + template_to_string(t));
  TblModel model;
  model.baseline = baseline_map(train);
  auto gold = truth_tags(train);
  auto state = detail::flatten(apply_baseline(model.baseline, strip_spans(train)), gold);
  model.baseline_errors = state.errors();

  detail::Learner learner(state, templates);
  std::size_t errors = model.baseline_errors;
  while (model.rules.size() < cfg.max_rules) {
    auto best = learner.best(cfg.min_gain);
    if (!best) break;
    learner.apply(best->first);
    LearnedRule lr{learner.to_rule(best->first), best->second, errors, state.errors()};
    errors = lr.errors_after;
    model.rules.push_back(std::move(lr));
  }
  return model;
}

inline Corpus apply_tbl(const TblModel& m, const Corpus& raw)
{
  return apply_tbl(m.rule_list(), m.baseline, raw);
}

} // namespace basenp
