#pragma once

// Quantified pattern language over tagged tokens.
//
//   pattern     := element*
//   element     := "(" quantifier constraint+ ")"
//   quantifier  := "{" n "}" | "*" | "+"            n >= 1
//   constraint  := "."            any token
//                | "t=" REGEX     whole POS tag matches REGEX
//                | "w=" REGEX     whole word matches REGEX
//                | "c=" (I|O|B)   current chunk tag of the token
//                | "^" | "$"      sentence start / end (zero width, {1} only)
//
// A rule is matched as the concatenation before + target + after, with the
// leftmost-start, greedy-with-backtracking semantics of a Perl global
// substitution. After a match, scanning resumes behind the after-context.

#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "basenp/corpus.hpp"
#include "basenp/error.hpp"

namespace basenp {

struct AtomConstraint
{
  enum class Kind { Wildcard, Word, Tag, Chunk, SentenceStart, SentenceEnd };

  Kind kind = Kind::Wildcard;
  std::string expr;                          ///< regex text for Word/Tag, "I"/"O"/"B" for Chunk
  ChunkTag chunk = ChunkTag::O;
  std::shared_ptr<const std::regex> regex;   ///< compiled expr for Word/Tag

  bool zero_width() const { return kind == Kind::SentenceStart || kind == Kind::SentenceEnd; }

  std::string to_string() const
  {
    switch (kind) {
      case Kind::Wildcard: return ".";
      case Kind::Word: return "w=" + expr;
      case Kind::Tag: return "t=" + expr;
      case Kind::Chunk: return "c=" + expr;
      case Kind::SentenceStart: return "^";
      case Kind::SentenceEnd: return "$";
    }
    return {};
  }
};

struct Quantifier
{
  enum class Kind { Exactly, Star, Plus };
  Kind kind = Kind::Exactly;
  std::size_t n = 1;

  std::size_t min() const { return kind == Kind::Exactly ? n : kind == Kind::Plus ? 1 : 0; }
  std::string to_string() const
  {
    switch (kind) {
      case Kind::Exactly: return "{" + std::to_string(n) + "}";
      case Kind::Star: return "*";
      case Kind::Plus: return "+";
    }
    return {};
  }
};

struct PatternElement
{
  Quantifier quantifier;
  std::vector<AtomConstraint> constraints;

  bool zero_width() const { return !constraints.empty() && constraints.front().zero_width(); }
  std::string to_string() const
  {
    std::string s = "(" + quantifier.to_string();
    for (const auto& c : constraints) s += " " + c.to_string();
    return s + ")";
  }
};

struct SequencePattern
{
  std::vector<PatternElement> elements;

  bool empty() const { return elements.empty(); }
  std::string to_string() const
  {
    std::string s;
    for (const auto& e : elements) {
      if (!s.empty()) s += ' ';
      s += e.to_string();
    }
    return s;
  }
};

/// One application site of a rule. Empty contexts are nullopt; a present
/// before-extent ends at target.start and an after-extent begins at target.end.
struct MatchSite
{
  ChunkSpan target;
  std::optional<ChunkSpan> before_extent;
  std::optional<ChunkSpan> after_extent;

  std::size_t full_start() const { return before_extent ? before_extent->start : target.start; }
  std::size_t full_end() const { return after_extent ? after_extent->end : target.end; }

  friend bool operator==(const MatchSite&, const MatchSite&) = default;
};

// ---------------------------------------------------------------------------
// parsing

namespace detail {

class PatternParser
{
public:
  explicit PatternParser(std::string_view text) : text_(text) {}

  SequencePattern parse()
  {
    SequencePattern p;
    skip_space();
    while (pos_ < text_.size()) {
      p.elements.push_back(element());
      skip_space();
    }
    return p;
  }

private:
  [[noreturn]] void fail(const std::string& what, std::size_t at) const { throw ParseError(what, 0, at); }

  void skip_space()
  {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

  PatternElement element()
  {
    std::size_t open = pos_;
    if (text_[pos_] != '(') fail("expected '('", pos_);
    ++pos_;
    skip_space();
    PatternElement e;
    e.quantifier = quantifier();
    while (true) {
      std::size_t before = pos_;
      skip_space();
      if (pos_ >= text_.size()) fail("unterminated element", open);
      if (text_[pos_] == ')') {
        ++pos_;
        break;
      }
      if (pos_ == before) fail("expected whitespace before constraint", pos_);
      e.constraints.push_back(constraint());
    }
    if (e.constraints.empty()) fail("element needs at least one constraint", open);
    bool any_zero = false, any_token = false;
    for (const auto& c : e.constraints) (c.zero_width() ? any_zero : any_token) = true;
    if (any_zero && any_token) fail("'^'/'$' cannot be combined with token constraints", open);
    if (any_zero && !(e.quantifier.kind == Quantifier::Kind::Exactly && e.quantifier.n == 1))
      fail("'^'/'$' require quantifier {1}", open);
    return e;
  }

  Quantifier quantifier()
  {
    if (pos_ >= text_.size()) fail("expected quantifier", pos_);
    char c = text_[pos_];
    if (c == '*') {
      ++pos_;
      return {Quantifier::Kind::Star, 0};
    }
    if (c == '+') {
      ++pos_;
      return {Quantifier::Kind::Plus, 0};
    }
    if (c != '{') fail("expected quantifier '{n}', '*' or '+'", pos_);
    std::size_t start = ++pos_;
    std::size_t n = 0;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
      n = n * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      if (n > 1000000) fail("repetition count too large", start);
      ++pos_;
    }
    if (pos_ == start) fail("expected repetition count", pos_);
    if (pos_ >= text_.size() || text_[pos_] != '}') fail("expected '}'", pos_);
    ++pos_;
    if (n < 1) fail("repetition count must be at least 1", start);
    return {Quantifier::Kind::Exactly, n};
  }

  bool at_token_end() const { return pos_ >= text_.size() || is_space(text_[pos_]) || text_[pos_] == ')'; }

  AtomConstraint constraint()
  {
    std::size_t start = pos_;
    AtomConstraint a;
    char c = text_[pos_];
    if (c == '.' || c == '^' || c == '$') {
      ++pos_;
      if (!at_token_end()) fail("unexpected character after '" + std::string(1, c) + "'", pos_);
      a.kind = c == '.' ? AtomConstraint::Kind::Wildcard
             : c == '^' ? AtomConstraint::Kind::SentenceStart
                        : AtomConstraint::Kind::SentenceEnd;
      return a;
    }
    if (pos_ + 1 >= text_.size() || text_[pos_ + 1] != '=' || (c != 't' && c != 'w' && c != 'c'))
      fail("unknown constraint", start);
    pos_ += 2;
    std::size_t expr_start = pos_;
    a.expr = regex_text();
    if (a.expr.empty()) fail("empty constraint value", expr_start);
    if (c == 'c') {
      auto tag = chunk_tag_from(a.expr);
      if (!tag) fail("chunk constraint must be c=I, c=O or c=B", expr_start);
      a.kind = AtomConstraint::Kind::Chunk;
      a.chunk = *tag;
      return a;
    }
    a.kind = c == 't' ? AtomConstraint::Kind::Tag : AtomConstraint::Kind::Word;
    try {
      a.regex = std::make_shared<const std::regex>(a.expr, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      fail("invalid regular expression '" + a.expr + "': " + e.what(), expr_start);
    }
    return a;
  }

  // Reads up to whitespace or the element's closing ')', honouring nested
  // groups, character classes and escapes inside the expression.
  std::string regex_text()
  {
    std::size_t start = pos_;
    int depth = 0;
    bool in_class = false;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\\') {
        pos_ += 2;
        continue;
      }
      if (in_class) {
        if (c == ']') in_class = false;
      } else if (c == '[') {
        in_class = true;
      } else if (c == '(') {
        ++depth;
      } else if (c == ')') {
        if (depth == 0) break;
        --depth;
      } else if (is_space(c) && depth == 0) {
        break;
      }
      ++pos_;
    }
    if (pos_ > text_.size()) pos_ = text_.size();
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline SequencePattern parse_pattern(std::string_view text)
{
  return detail::PatternParser(text).parse();
}

// ---------------------------------------------------------------------------
// matching

namespace detail {

/// Per-sentence acceptance table for a list of elements.
class ElementTable
{
public:
  ElementTable(const AnnotatedSentence& s, const std::vector<const PatternElement*>& elements)
    : n_(s.size()), elements_(elements), accept_(elements.size() * s.size(), 0)
  {
    auto tags = spans_to_iob(s);
    for (std::size_t k = 0; k < elements.size(); ++k) {
      if (elements[k]->zero_width()) continue;
      for (std::size_t i = 0; i < n_; ++i) accept_[k * n_ + i] = accepts(*elements[k], s.tokens[i], tags[i]);
    }
  }

  std::size_t size() const { return elements_.size(); }
  const PatternElement& element(std::size_t k) const { return *elements_[k]; }
  bool accepts(std::size_t k, std::size_t i) const { return accept_[k * n_ + i] != 0; }

  /// Counts element k may consume at position p within [.., limit), in
  /// backtracking preference order (largest first).
  std::vector<std::size_t> counts(std::size_t k, std::size_t p, std::size_t limit) const
  {
    const auto& e = element(k);
    if (e.zero_width()) {
      bool ok = true;
      for (const auto& c : e.constraints) {
        if (c.kind == AtomConstraint::Kind::SentenceStart && p != 0) ok = false;
        if (c.kind == AtomConstraint::Kind::SentenceEnd && p != n_) ok = false;
      }
      return ok ? std::vector<std::size_t>{0} : std::vector<std::size_t>{};
    }
    std::size_t cap = e.quantifier.kind == Quantifier::Kind::Exactly ? e.quantifier.n : limit - p;
    std::size_t run = 0;
    while (run < cap && p + run < limit && accepts(k, p + run)) ++run;
    std::vector<std::size_t> out;
    for (std::size_t c = run + 1; c-- > e.quantifier.min();) out.push_back(c);
    return out;
  }

private:
  static bool accepts(const PatternElement& e, const Token& t, ChunkTag tag)
  {
    for (const auto& c : e.constraints) {
      switch (c.kind) {
        case AtomConstraint::Kind::Wildcard: break;
        case AtomConstraint::Kind::Word:
          if (!std::regex_match(t.word, *c.regex)) return false;
          break;
        case AtomConstraint::Kind::Tag:
          if (!std::regex_match(t.pos, *c.regex)) return false;
          break;
        case AtomConstraint::Kind::Chunk:
          if (tag != c.chunk) return false;
          break;
        default: return false;
      }
    }
    return true;
  }

  std::size_t n_;
  std::vector<const PatternElement*> elements_;
  std::vector<char> accept_;
};

inline std::vector<const PatternElement*> element_ptrs(const SequencePattern& p)
{
  std::vector<const PatternElement*> out;
  for (const auto& e : p.elements) out.push_back(&e);
  return out;
}

/// All positions reachable after matching elements [0, size) from `from`,
/// never passing `limit`.
inline std::set<std::size_t> reachable_ends(const ElementTable& table, std::size_t from, std::size_t limit)
{
  std::set<std::size_t> frontier{from};
  for (std::size_t k = 0; k < table.size() && !frontier.empty(); ++k) {
    std::set<std::size_t> next;
    for (auto p : frontier)
      for (auto c : table.counts(k, p, limit)) next.insert(p + c);
    frontier = std::move(next);
  }
  return frontier;
}

} // namespace detail

enum class Anchor { Left, Right };

/// Every extent inside `region` that `p` matches completely and that is flush
/// with the anchored edge. Extents may be empty (start == end).
inline std::vector<ChunkSpan> match_segment(const SequencePattern& p, const AnnotatedSentence& s,
                                            ChunkSpan region, Anchor anchor)
{
  if (region.start > region.end || region.end > s.size()) throw Error("match_segment: region out of bounds");
  detail::ElementTable table(s, detail::element_ptrs(p));
  std::vector<ChunkSpan> out;
  if (anchor == Anchor::Left) {
    for (auto e : detail::reachable_ends(table, region.start, region.end)) out.push_back({region.start, e});
  } else {
    for (std::size_t st = region.start; st <= region.end; ++st)
      if (detail::reachable_ends(table, st, region.end).count(region.end)) out.push_back({st, region.end});
  }
  return out;
}

/// Before-context with its leading '*' elements removed. Those elements may
/// always match nothing, so they never constrain where a site starts.
inline SequencePattern normalized_before(const SequencePattern& before)
{
  SequencePattern out;
  std::size_t k = 0;
  while (k < before.elements.size() && before.elements[k].quantifier.kind == Quantifier::Kind::Star) ++k;
  out.elements.assign(before.elements.begin() + static_cast<std::ptrdiff_t>(k), before.elements.end());
  return out;
}

/// Fewest tokens any match of `p` consumes.
inline std::size_t min_length(const SequencePattern& p)
{
  std::size_t n = 0;
  for (const auto& e : p.elements)
    if (!e.zero_width()) n += e.quantifier.min();
  return n;
}

/// Left-to-right, non-overlapping application sites of a three-part rule.
inline std::vector<MatchSite> find_sites(const SequencePattern& before, const SequencePattern& target,
                                         const SequencePattern& after, const AnnotatedSentence& s)
{
  if (min_length(target) == 0) throw Error("find_sites: target pattern must consume at least one token");
  auto nb = normalized_before(before);
  std::vector<const PatternElement*> elems;
  for (const auto& e : nb.elements) elems.push_back(&e);
  for (const auto& e : target.elements) elems.push_back(&e);
  for (const auto& e : after.elements) elems.push_back(&e);
  const std::size_t n_before = nb.elements.size();
  const std::size_t n_target = target.elements.size();
  const std::size_t m = elems.size();
  const std::size_t n = s.size();

  detail::ElementTable table(s, elems);
  // Whether a suffix of the concatenation can match from a position does not
  // depend on how that position was reached, so failures are memoised.
  std::vector<char> failed((m + 1) * (n + 1), 0);
  std::vector<std::size_t> ends(m, 0);

  auto dfs = [&](auto&& self, std::size_t k, std::size_t p) -> bool {
    if (k == m) return true;
    if (failed[k * (n + 1) + p]) return false;
    for (auto c : table.counts(k, p, n)) {
      if (self(self, k + 1, p + c)) {
        ends[k] = p + c;
        return true;
      }
    }
    failed[k * (n + 1) + p] = 1;
    return false;
  };

  std::vector<MatchSite> sites;
  std::size_t resume = 0;
  while (resume <= n) {
    bool found = false;
    for (std::size_t start = resume; start <= n; ++start) {
      if (!dfs(dfs, 0, start)) continue;
      std::size_t t0 = n_before ? ends[n_before - 1] : start;
      std::size_t t1 = ends[n_before + n_target - 1];
      std::size_t a1 = m > n_before + n_target ? ends[m - 1] : t1;
      MatchSite site;
      site.target = {t0, t1};
      if (n_before) site.before_extent = ChunkSpan{start, t0};
      if (m > n_before + n_target) site.after_extent = ChunkSpan{t1, a1};
      sites.push_back(site);
      resume = a1;
      found = true;
      break;
    }
    if (!found) break;
  }
  return sites;
}

// ---------------------------------------------------------------------------
// flat-text compilation

namespace detail {

struct RegexShape
{
  bool top_level_alternation = false;
  std::size_t capture_groups = 0;
};

inline RegexShape regex_shape(std::string_view r)
{
  RegexShape shape;
  int depth = 0;
  bool in_class = false;
  for (std::size_t i = 0; i < r.size(); ++i) {
    char c = r[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (in_class) {
      if (c == ']') in_class = false;
      continue;
    }
    if (c == '[') in_class = true;
    else if (c == '(') {
      ++depth;
      if (i + 1 >= r.size() || r[i + 1] != '?') ++shape.capture_groups;
    } else if (c == ')') --depth;
    else if (c == '|' && depth == 0) shape.top_level_alternation = true;
  }
  return shape;
}

struct FlatPiece
{
  std::string text;
  std::size_t groups = 0;
};

inline FlatPiece compile_element(const PatternElement& e)
{
  const AtomConstraint* tag = nullptr;
  for (const auto& c : e.constraints) {
    switch (c.kind) {
      case AtomConstraint::Kind::Wildcard: break;
      case AtomConstraint::Kind::Tag:
        if (tag) throw UnsupportedAtomError("more than one t= constraint in " + e.to_string());
        tag = &c;
        break;
      case AtomConstraint::Kind::Word:
        // A match may start inside a flat atom, where a word regex would see
        // only a suffix of the word.
        throw UnsupportedAtomError("word constraint " + c.to_string() + " has no flat-text form");
      case AtomConstraint::Kind::Chunk:
        throw UnsupportedAtomError("chunk-state constraint " + c.to_string() + " has no flat-text form");
      case AtomConstraint::Kind::SentenceStart:
      case AtomConstraint::Kind::SentenceEnd:
        throw UnsupportedAtomError("sentence boundary " + c.to_string() + " has no flat-text form");
    }
  }
  FlatPiece piece;
  auto embed = [&piece](const std::string& r) {
    auto shape = regex_shape(r);
    piece.groups += shape.capture_groups;
    return shape.top_level_alternation ? "(?:" + r + ")" : r;
  };
  std::string word_part = tag ? R"([^\s_]+)" : R"([^\s_()]+)";
  std::string tag_part = tag ? embed(tag->expr) : R"([^\s_]+)";
  piece.text = "(" + word_part + "__" + tag_part + R"(\s+))";
  piece.groups += 1;
  switch (e.quantifier.kind) {
    case Quantifier::Kind::Exactly:
      if (e.quantifier.n > 1) piece.text += "{" + std::to_string(e.quantifier.n) + "}";
      break;
    case Quantifier::Kind::Star: piece.text += "*"; break;
    case Quantifier::Kind::Plus: piece.text += "+"; break;
  }
  return piece;
}

/// Compiles a context; returns the text and the number of the group that
/// captures the whole context (0 when the context is empty).
inline std::string compile_context(const SequencePattern& p, std::size_t& next_group, std::size_t& ref)
{
  ref = 0;
  if (p.empty()) return {};
  const auto& only = p.elements.front();
  bool single_plain = p.elements.size() == 1 && only.quantifier.kind == Quantifier::Kind::Exactly &&
                      only.quantifier.n == 1;
  std::string out;
  if (!single_plain) {
    ref = next_group++;
    out += "(";
  } else {
    ref = next_group;
  }
  for (const auto& e : p.elements) {
    auto piece = compile_element(e);
    out += piece.text;
    next_group += piece.groups;
  }
  if (!single_plain) out += ")";
  return out;
}

} // namespace detail

/// Translates a rule into a Perl-style global substitution over the flat
/// encoding, e.g. s{(([^\s_]+__DT\s+))([^\s_]+__VBD\s+)}{ ( $1 ) $3 }g.
inline std::string compile_flat(const SequencePattern& before, const SequencePattern& target,
                                const SequencePattern& after)
{
  if (target.empty()) throw Error("compile_flat: target pattern must not be empty");
  auto nb = normalized_before(before);
  std::size_t next_group = 1;
  std::size_t before_ref = 0, target_ref = 0, after_ref = 0;

  std::string out = "s{";
  out += detail::compile_context(nb, next_group, before_ref);

  target_ref = next_group++;
  out += "(";
  for (const auto& e : target.elements) {
    auto piece = detail::compile_element(e);
    out += piece.text;
    next_group += piece.groups;
  }
  out += ")";

  out += detail::compile_context(after, next_group, after_ref);
  out += "}{";
  if (before_ref) out += " $" + std::to_string(before_ref);
  out += " ( $" + std::to_string(target_ref) + " )";
  if (after_ref) out += " $" + std::to_string(after_ref);
  out += " }g";
  return out;
}

} // namespace basenp
