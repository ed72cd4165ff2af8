#pragma once

// Data model for POS-tagged, base-NP annotated text, and the three on-disk
// representations:
//
//   slash   ( The/DT dog/NN ) barked/VBD          one sentence per line
//   flat    ( The__DT dog__NN ) barked__VBD       one sentence per line
//   column  The<TAB>DT<TAB>I                      one token per line, blank
//                                                 line after every sentence

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "basenp/error.hpp"

namespace basenp {

struct Token
{
  std::string word;
  std::string pos;

  friend bool operator==(const Token&, const Token&) = default;
};

enum class ChunkTag : std::uint8_t { I, O, B };

inline char to_char(ChunkTag t)
{
  switch (t) {
    case ChunkTag::I: return 'I';
    case ChunkTag::O: return 'O';
    case ChunkTag::B: return 'B';
  }
  return '?';
}

inline std::optional<ChunkTag> chunk_tag_from(std::string_view s)
{
  if (s == "I") return ChunkTag::I;
  if (s == "O") return ChunkTag::O;
  if (s == "B") return ChunkTag::B;
  return std::nullopt;
}

/// Half-open token range [start, end).
struct ChunkSpan
{
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool contains(std::size_t i) const { return start <= i && i < end; }
  bool intersects(const ChunkSpan& o) const { return start < o.end && o.start < end; }

  friend auto operator<=>(const ChunkSpan&, const ChunkSpan&) = default;
};

struct AnnotatedSentence
{
  std::vector<Token> tokens;
  std::vector<ChunkSpan> spans;  ///< sorted by start, pairwise disjoint

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> pos_tags(const ChunkSpan& s) const
  {
    std::vector<std::string> out;
    for (std::size_t i = s.start; i < s.end; ++i) out.push_back(tokens[i].pos);
    return out;
  }

  friend bool operator==(const AnnotatedSentence&, const AnnotatedSentence&) = default;
};

struct Corpus
{
  std::vector<AnnotatedSentence> sentences;
  std::string label;

  std::size_t size() const { return sentences.size(); }
  std::size_t token_count() const
  {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }
  std::size_t span_count() const
  {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.spans.size();
    return n;
  }

  /// Sentences and spans only; the label is a name, not content.
  friend bool operator==(const Corpus& a, const Corpus& b) { return a.sentences == b.sentences; }
};

// ---------------------------------------------------------------------------
// validation

inline bool has_space(std::string_view s)
{
  return std::any_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

inline bool valid_token(const Token& t)
{
  return !t.word.empty() && !t.pos.empty() && !has_space(t.word) && !has_space(t.pos);
}

/// Returns a description of the first broken invariant, or nullopt.
inline std::optional<std::string> check_sentence(const AnnotatedSentence& s)
{
  for (std::size_t i = 0; i < s.tokens.size(); ++i)
    if (!valid_token(s.tokens[i])) return "token " + std::to_string(i) + " is empty or contains whitespace";
  for (std::size_t k = 0; k < s.spans.size(); ++k) {
    const auto& sp = s.spans[k];
    if (!(sp.start < sp.end && sp.end <= s.tokens.size()))
      return "span " + std::to_string(k) + " out of bounds";
    if (k > 0 && s.spans[k - 1].end > sp.start)
      return "span " + std::to_string(k) + " overlaps or is out of order";
  }
  return std::nullopt;
}

/// Sorts spans and verifies the sentence invariants; throws Error.
inline AnnotatedSentence make_sentence(std::vector<Token> tokens, std::vector<ChunkSpan> spans)
{
  AnnotatedSentence s{std::move(tokens), std::move(spans)};
  std::sort(s.spans.begin(), s.spans.end());
  if (auto bad = check_sentence(s)) throw Error("invalid sentence: " + *bad);
  return s;
}

// ---------------------------------------------------------------------------
// spans <-> IOB

inline std::vector<ChunkTag> spans_to_iob(const AnnotatedSentence& s)
{
  std::vector<ChunkTag> tags(s.tokens.size(), ChunkTag::O);
  std::optional<std::size_t> prev_end;
  for (const auto& sp : s.spans) {
    for (std::size_t i = sp.start; i < sp.end; ++i) tags[i] = ChunkTag::I;
    if (prev_end && *prev_end == sp.start) tags[sp.start] = ChunkTag::B;
    prev_end = sp.end;
  }
  return tags;
}

/// Index of the first B that starts the sequence or follows an O.
struct IobViolation
{
  std::size_t index;
};

inline std::optional<IobViolation> validate_iob(const std::vector<ChunkTag>& tags)
{
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == ChunkTag::B && (i == 0 || tags[i - 1] == ChunkTag::O)) return IobViolation{i};
  return std::nullopt;
}

inline std::vector<ChunkSpan> iob_to_spans(const std::vector<ChunkTag>& tags)
{
  if (auto v = validate_iob(tags))
    throw InvalidSequenceError("B at position " + std::to_string(v->index) +
                                 " does not follow another base NP", v->index);
  std::vector<ChunkSpan> spans;
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::size_t open = none;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == ChunkTag::O || tags[i] == ChunkTag::B) {
      if (open != none) spans.push_back({open, i});
      open = none;
    }
    if (tags[i] == ChunkTag::I && open == none) open = i;
    if (tags[i] == ChunkTag::B) open = i;
  }
  if (open != none) spans.push_back({open, tags.size()});
  return spans;
}

/// Turns every B that starts a sentence or follows an O into I.
inline void repair_iob(std::vector<ChunkTag>& tags)
{
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == ChunkTag::B && (i == 0 || tags[i - 1] == ChunkTag::O)) tags[i] = ChunkTag::I;
}

// ---------------------------------------------------------------------------
// corpus helpers

inline Corpus strip_spans(Corpus c)
{
  for (auto& s : c.sentences) s.spans.clear();
  return c;
}

/// Throws AlignmentError unless both corpora carry identical token sequences.
inline void check_aligned(const Corpus& a, const Corpus& b)
{
  if (a.sentences.size() != b.sentences.size())
    throw AlignmentError("corpora differ in sentence count (" + std::to_string(a.sentences.size()) +
                         " vs " + std::to_string(b.sentences.size()) + ")");
  for (std::size_t i = 0; i < a.sentences.size(); ++i)
    if (a.sentences[i].tokens != b.sentences[i].tokens)
      throw AlignmentError("sentence " + std::to_string(i + 1) + " differs in its tokens");
}

namespace detail {

inline std::vector<std::pair<std::string_view, std::size_t>> split_atoms(std::string_view line)
{
  std::vector<std::pair<std::string_view, std::size_t>> atoms;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) atoms.emplace_back(line.substr(i, j - i), i);
    i = j;
  }
  return atoms;
}

inline std::vector<std::string_view> split_lines(std::string_view text)
{
  std::vector<std::string_view> lines;
  std::size_t i = 0;
  while (i < text.size()) {
    auto nl = text.find('\n', i);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(i));
      break;
    }
    lines.push_back(text.substr(i, nl - i));
    i = nl + 1;
  }
  return lines;
}

enum class AtomStyle { Slash, Flat };

inline AnnotatedSentence parse_bracketed_line(std::string_view line, std::size_t line_no, AtomStyle style)
{
  AnnotatedSentence s;
  std::optional<std::size_t> open;
  for (auto [atom, col] : split_atoms(line)) {
    if (atom == "(") {
      if (open) throw ParseError("nested parenthesis", line_no, col);
      open = s.tokens.size();
      continue;
    }
    if (atom == ")") {
      if (!open) throw ParseError("unbalanced ')'", line_no, col);
      if (*open == s.tokens.size()) throw ParseError("empty base NP", line_no, col);
      s.spans.push_back({*open, s.tokens.size()});
      open.reset();
      continue;
    }
    Token t;
    if (style == AtomStyle::Slash) {
      auto slash = atom.rfind('/');
      if (slash == std::string_view::npos) throw ParseError("atom without '/': " + std::string(atom), line_no, col);
      t.word = std::string(atom.substr(0, slash));
      t.pos = std::string(atom.substr(slash + 1));
    } else {
      auto sep = atom.find("__");
      if (sep == std::string_view::npos) throw ParseError("atom without '__': " + std::string(atom), line_no, col);
      t.word = std::string(atom.substr(0, sep));
      t.pos = std::string(atom.substr(sep + 2));
      if (t.word.find('_') != std::string::npos || t.pos.find('_') != std::string::npos)
        throw ParseError("underscore inside flat atom: " + std::string(atom), line_no, col);
    }
    if (t.word.empty() || t.pos.empty())
      throw ParseError("empty word or tag in atom: " + std::string(atom), line_no, col);
    s.tokens.push_back(std::move(t));
  }
  if (open) throw ParseError("unbalanced '('", line_no, line.size());
  return s;
}

inline Corpus parse_lines(std::string_view text, std::string label, AtomStyle style)
{
  Corpus c;
  c.label = std::move(label);
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) c.sentences.push_back(parse_bracketed_line(line, ++line_no, style));
  return c;
}

} // namespace detail

// ---------------------------------------------------------------------------
// slash format

inline std::string serialize_slash(const AnnotatedSentence& s)
{
  for (const auto& t : s.tokens)
    if (t.pos.find('/') != std::string::npos)
      throw EncodingError("tag '" + t.pos + "' contains '/' and has no slash encoding");
  std::string out;
  auto sp = s.spans.begin();
  auto put = [&out](std::string_view a) {
    if (!out.empty()) out += ' ';
    out += a;
  };
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (sp != s.spans.end() && sp->start == i) put("(");
    put(s.tokens[i].word + "/" + s.tokens[i].pos);
    if (sp != s.spans.end() && sp->end == i + 1) {
      put(")");
      ++sp;
    }
  }
  return out;
}

inline std::string serialize_slash(const Corpus& c)
{
  std::string out;
  for (const auto& s : c.sentences) out += serialize_slash(s) + "\n";
  return out;
}

/// One sentence per line; atoms are "(", ")" or word/TAG split on the last slash.
inline Corpus parse_slash_format(std::string_view text, std::string label = {})
{
  return detail::parse_lines(text, std::move(label), detail::AtomStyle::Slash);
}

// ---------------------------------------------------------------------------
// flat format (the encoding the compiled substitution expressions run on)

inline std::string serialize_flat(const AnnotatedSentence& s)
{
  for (const auto& t : s.tokens)
    if (t.word.find('_') != std::string::npos || t.pos.find('_') != std::string::npos)
      throw EncodingError("token '" + t.word + "/" + t.pos + "' contains '_' and has no flat encoding");
  std::string out;
  auto sp = s.spans.begin();
  auto put = [&out](std::string_view a) {
    if (!out.empty()) out += ' ';
    out += a;
  };
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (sp != s.spans.end() && sp->start == i) put("(");
    put(s.tokens[i].word + "__" + s.tokens[i].pos);
    if (sp != s.spans.end() && sp->end == i + 1) {
      put(")");
      ++sp;
    }
  }
  return out;
}

inline std::string serialize_flat(const Corpus& c)
{
  std::string out;
  for (const auto& s : c.sentences) out += serialize_flat(s) + "\n";
  return out;
}

inline AnnotatedSentence parse_flat_sentence(std::string_view line)
{
  return detail::parse_bracketed_line(line, 1, detail::AtomStyle::Flat);
}

inline Corpus parse_flat(std::string_view text, std::string label = {})
{
  return detail::parse_lines(text, std::move(label), detail::AtomStyle::Flat);
}

// ---------------------------------------------------------------------------
// column format

inline std::string write_column(const Corpus& c)
{
  std::string out;
  for (const auto& s : c.sentences) {
    auto tags = spans_to_iob(s);
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out += s.tokens[i].word;
      out += '\t';
      out += s.tokens[i].pos;
      out += '\t';
      out += to_char(tags[i]);
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

inline Corpus read_column(std::string_view text, std::string label = {})
{
  Corpus c;
  c.label = std::move(label);
  std::vector<Token> tokens;
  std::vector<ChunkTag> tags;
  std::size_t first_line = 1;
  bool pending = false;
  auto flush = [&](std::size_t line_no) {
    if (auto v = validate_iob(tags))
      throw ParseError("invalid IOB sequence: B does not follow a base NP", first_line + v->index, 0);
    c.sentences.push_back(AnnotatedSentence{std::move(tokens), iob_to_spans(tags)});
    tokens.clear();
    tags.clear();
    first_line = line_no + 1;
    pending = false;
  };
  std::size_t line_no = 0;
  for (auto line : detail::split_lines(text)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      flush(line_no);
      continue;
    }
    pending = true;
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (true) {
      auto tab = line.find('\t', i);
      fields.push_back(line.substr(i, tab == std::string_view::npos ? std::string_view::npos : tab - i));
      if (tab == std::string_view::npos) break;
      i = tab + 1;
    }
    if (fields.size() != 3) throw ParseError("expected word<TAB>pos<TAB>tag", line_no, 0);
    Token t{std::string(fields[0]), std::string(fields[1])};
    if (!valid_token(t)) throw ParseError("empty word or tag, or embedded whitespace", line_no, 0);
    auto tag = chunk_tag_from(fields[2]);
    if (!tag) throw ParseError("chunk tag must be I, O or B", line_no, fields[0].size() + fields[1].size() + 2);
    tokens.push_back(std::move(t));
    tags.push_back(*tag);
  }
  if (pending) flush(line_no);
  return c;
}

// ---------------------------------------------------------------------------
// format dispatch

enum class CorpusFormat { Slash, Flat, Column };

inline std::optional<CorpusFormat> corpus_format_from(std::string_view name)
{
  if (name == "slash") return CorpusFormat::Slash;
  if (name == "flat") return CorpusFormat::Flat;
  if (name == "column") return CorpusFormat::Column;
  return std::nullopt;
}

inline Corpus parse_corpus(std::string_view text, CorpusFormat f, std::string label = {})
{
  switch (f) {
    case CorpusFormat::Slash: return parse_slash_format(text, std::move(label));
    case CorpusFormat::Flat: return parse_flat(text, std::move(label));
    case CorpusFormat::Column: return read_column(text, std::move(label));
  }
  return {};
}

inline std::string serialize_corpus(const Corpus& c, CorpusFormat f)
{
  switch (f) {
    case CorpusFormat::Slash: return serialize_slash(c);
    case CorpusFormat::Flat: return serialize_flat(c);
    case CorpusFormat::Column: return write_column(c);
  }
  return {};
}

} // namespace basenp
