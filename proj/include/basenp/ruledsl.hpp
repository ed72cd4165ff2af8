#pragma once

// Four-action bracketing rules. A rule file is a sequence of blocks separated
// by blank lines; '#' lines are comments. Each block is
//
//   A                                  action: A(dd) K(ill) T(ransform) M(erge)
//   (* .)                              before-context ("-" for none)
//   ({1} t=DT) (* t=JJ[RS]?) (+ t=NNP?S?)   target
//   ({1} t=VB[DGNPZ]?)                 after-context ("-" for none)
//
// A line that starts with whitespace continues the previous pattern line.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "basenp/corpus.hpp"
#include "basenp/error.hpp"
#include "basenp/eval.hpp"
#include "basenp/pattern.hpp"

namespace basenp {

enum class RuleAction { Add, Kill, Transform, Merge };

inline char to_char(RuleAction a)
{
  switch (a) {
    case RuleAction::Add: return 'A';
    case RuleAction::Kill: return 'K';
    case RuleAction::Transform: return 'T';
    case RuleAction::Merge: return 'M';
  }
  return '?';
}

struct Rule
{
  RuleAction action = RuleAction::Add;
  SequencePattern before;
  SequencePattern target;
  SequencePattern after;
  std::string source_text;  ///< the block as written, without a trailing newline
};

class RuleList
{
public:
  RuleList() = default;
  RuleList(std::vector<Rule> rules, std::uint64_t version) : rules_(std::move(rules)), version_(version) {}

  const std::vector<Rule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }
  const Rule& operator[](std::size_t i) const { return rules_[i]; }
  std::uint64_t version() const { return version_; }

  void insert(std::size_t at, Rule r)
  {
    if (at > rules_.size()) throw Error("rule index out of range");
    rules_.insert(rules_.begin() + static_cast<std::ptrdiff_t>(at), std::move(r));
    ++version_;
  }
  void push_back(Rule r) { insert(rules_.size(), std::move(r)); }
  void erase(std::size_t at)
  {
    if (at >= rules_.size()) throw Error("rule index out of range");
    rules_.erase(rules_.begin() + static_cast<std::ptrdiff_t>(at));
    ++version_;
  }
  void replace(std::size_t at, Rule r)
  {
    if (at >= rules_.size()) throw Error("rule index out of range");
    rules_[at] = std::move(r);
    ++version_;
  }

  /// Same rules, same order (compared by their source text).
  bool same_rules(const RuleList& o) const
  {
    return std::equal(rules_.begin(), rules_.end(), o.rules_.begin(), o.rules_.end(),
                      [](const Rule& a, const Rule& b) { return a.source_text == b.source_text; });
  }

private:
  std::vector<Rule> rules_;
  std::uint64_t version_ = 1;
};

// ---------------------------------------------------------------------------
// parsing

namespace detail {

inline bool starts_with_space(std::string_view l) { return !l.empty() && (l[0] == ' ' || l[0] == '\t'); }

inline bool blank(std::string_view l)
{
  return l.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline std::string_view chomp(std::string_view l)
{
  if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  return l;
}

inline SequencePattern parse_pattern_line(const std::string& text, std::size_t line)
{
  std::string_view t = text;
  auto first = t.find_first_not_of(" \t\r\n");
  auto last = t.find_last_not_of(" \t\r\n");
  if (first != std::string_view::npos && t.substr(first, last - first + 1) == "-") return {};
  try {
    return parse_pattern(text);
  } catch (const ParseError& e) {
    // Map the pattern offset back onto the physical line it falls on.
    std::size_t extra = 0;
    for (std::size_t i = 0; i < e.offset() && i < text.size(); ++i)
      if (text[i] == '\n') ++extra;
    throw ParseError(e.message(), line + extra, 0);
  }
}

} // namespace detail

/// Parses one rule block. `first_line` is the 1-based line number of the
/// block's action line within its file, used in error positions.
inline Rule parse_rule(std::string_view text, std::size_t first_line = 1)
{
  std::vector<std::string_view> lines;
  for (auto l : detail::split_lines(text)) lines.push_back(detail::chomp(l));
  while (!lines.empty() && detail::blank(lines.back())) lines.pop_back();
  if (lines.empty()) throw ParseError("empty rule", first_line, 0);

  Rule r;
  auto action = lines[0];
  auto a0 = action.find_first_not_of(" \t");
  auto a1 = action.find_last_not_of(" \t");
  std::string_view letter = a0 == std::string_view::npos ? std::string_view{} : action.substr(a0, a1 - a0 + 1);
  if (letter == "A") r.action = RuleAction::Add;
  else if (letter == "K") r.action = RuleAction::Kill;
  else if (letter == "T") r.action = RuleAction::Transform;
  else if (letter == "M") r.action = RuleAction::Merge;
  else throw ParseError("unknown action '" + std::string(letter) + "' (expected A, K, T or M)", first_line, 0);

  // Group the remaining lines into three logical pattern lines.
  std::vector<std::string> parts;
  std::vector<std::size_t> part_lines;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::starts_with_space(lines[i]) && !parts.empty()) {
      parts.back() += "\n";
      parts.back() += lines[i];
    } else {
      parts.emplace_back(lines[i]);
      part_lines.push_back(first_line + i);
    }
  }
  if (parts.size() != 3)
    throw ParseError("a rule needs an action line and exactly three pattern lines, found " +
                       std::to_string(parts.size()) + " pattern lines", first_line, 0);
  r.before = detail::parse_pattern_line(parts[0], part_lines[0]);
  r.target = detail::parse_pattern_line(parts[1], part_lines[1]);
  r.after = detail::parse_pattern_line(parts[2], part_lines[2]);
  if (min_length(r.target) == 0) throw ParseError("target must consume at least one token", part_lines[1], 0);

  std::string src;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) src += '\n';
    src += lines[i];
  }
  r.source_text = std::move(src);
  return r;
}

/// Error raised by parse_rule_list; `rule_index` is 1-based.
class RuleListError : public ParseError
{
public:
  RuleListError(std::size_t rule_index, const ParseError& cause)
    : ParseError("rule " + std::to_string(rule_index) + ": " + cause.message(), cause.line(), cause.offset()),
      rule_index_(rule_index)
  {}
  std::size_t rule_index() const noexcept { return rule_index_; }

private:
  std::size_t rule_index_;
};

inline RuleList parse_rule_list(std::string_view text)
{
  std::vector<Rule> rules;
  std::string block;
  std::size_t block_start = 0;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (block.empty()) return;
    try {
      rules.push_back(parse_rule(block, block_start));
    } catch (const ParseError& e) {
      throw RuleListError(rules.size() + 1, e);
    }
    block.clear();
  };
  for (auto raw : detail::split_lines(text)) {
    ++line_no;
    auto line = detail::chomp(raw);
    if (!line.empty() && line[0] == '#') continue;
    if (detail::blank(line)) {
      flush();
      continue;
    }
    if (block.empty()) block_start = line_no;
    else block += '\n';
    block += line;
  }
  flush();
  return RuleList(std::move(rules), 1);
}

/// Rule blocks separated by one blank line, newline-terminated.
inline std::string serialize_rule_list(const RuleList& rl)
{
  std::string out;
  for (std::size_t i = 0; i < rl.size(); ++i) {
    if (i) out += '\n';
    out += rl[i].source_text;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// application

namespace detail {

inline std::vector<std::size_t> intersecting(const std::vector<ChunkSpan>& spans, const ChunkSpan& t)
{
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < spans.size(); ++k)
    if (spans[k].intersects(t)) out.push_back(k);
  return out;
}

/// Applies one action at one site; returns false when its precondition fails.
inline bool apply_action(RuleAction action, std::vector<ChunkSpan>& spans, const ChunkSpan& t)
{
  auto hit = intersecting(spans, t);
  switch (action) {
    case RuleAction::Add:
      if (!hit.empty()) return false;
      spans.push_back(t);
      break;
    case RuleAction::Kill:
      if (hit.size() != 1 || spans[hit[0]] != t) return false;
      spans.erase(spans.begin() + static_cast<std::ptrdiff_t>(hit[0]));
      break;
    case RuleAction::Transform:
      if (hit.size() != 1) return false;
      spans[hit[0]] = t;
      break;
    case RuleAction::Merge: {
      if (hit.size() != 2) return false;
      const auto& first = spans[hit[0]];
      const auto& second = spans[hit[1]];
      // The target has to cover the gap between the two NPs.
      if (t.start > first.end || t.end < second.start) return false;
      ChunkSpan hull{first.start, second.end};
      spans.erase(spans.begin() + static_cast<std::ptrdiff_t>(hit[1]));
      spans[hit[0]] = hull;
      break;
    }
  }
  std::sort(spans.begin(), spans.end());
  return true;
}

} // namespace detail

/// Sites are found once against the sentence as given; actions are then
/// applied left to right, skipping sites whose precondition no longer holds.
inline AnnotatedSentence apply_rule(const Rule& r, const AnnotatedSentence& s)
{
  AnnotatedSentence out = s;
  for (const auto& site : find_sites(r.before, r.target, r.after, s))
    detail::apply_action(r.action, out.spans, site.target);
  return out;
}

inline Corpus apply_rule_list(const RuleList& rl, const Corpus& c)
{
  Corpus out = c;
  for (const auto& rule : rl.rules())
    for (auto& s : out.sentences) s = apply_rule(rule, s);
  return out;
}

// ---------------------------------------------------------------------------
// accept/reject deltas

struct SentenceDelta
{
  std::size_t sentence = 0;
  std::vector<ChunkSpan> gained_correct;   ///< correct under the new list only
  std::vector<ChunkSpan> lost_correct;     ///< correct under the old list only
  std::vector<ChunkSpan> new_errors;       ///< wrong spans the new list introduces
  std::vector<ChunkSpan> removed_errors;   ///< wrong spans the new list no longer emits

  bool empty() const
  {
    return gained_correct.empty() && lost_correct.empty() && new_errors.empty() && removed_errors.empty();
  }
};

struct RuleListDelta
{
  EvalReport old_report;
  EvalReport new_report;
  std::vector<SentenceDelta> sentences;  ///< only sentences that changed

  double precision_delta() const { return new_report.precision - old_report.precision; }
  double recall_delta() const { return new_report.recall - old_report.recall; }
  double f_delta() const { return new_report.f_measure - old_report.f_measure; }
  double mean_delta() const { return new_report.pr_mean - old_report.pr_mean; }

  std::size_t total(std::vector<ChunkSpan> SentenceDelta::*field) const
  {
    std::size_t n = 0;
    for (const auto& d : sentences) n += (d.*field).size();
    return n;
  }
};

/// Compares two predicted corpora against the same truth.
inline RuleListDelta diff_outputs(const Corpus& truth, const Corpus& old_out, const Corpus& new_out)
{
  RuleListDelta d;
  d.old_report = score(truth, old_out);
  d.new_report = score(truth, new_out);
  auto minus = [](const std::vector<ChunkSpan>& a, const std::vector<ChunkSpan>& b) {
    std::vector<ChunkSpan> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
  };
  auto split = [&](const std::vector<ChunkSpan>& gold, const std::vector<ChunkSpan>& pred,
                   std::vector<ChunkSpan>& ok, std::vector<ChunkSpan>& bad) {
    std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(), std::back_inserter(ok));
    bad = minus(pred, gold);
  };
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& gold = truth.sentences[i].spans;
    std::vector<ChunkSpan> ok_old, bad_old, ok_new, bad_new;
    split(gold, old_out.sentences[i].spans, ok_old, bad_old);
    split(gold, new_out.sentences[i].spans, ok_new, bad_new);
    SentenceDelta sd;
    sd.sentence = i;
    sd.gained_correct = minus(ok_new, ok_old);
    sd.lost_correct = minus(ok_old, ok_new);
    sd.new_errors = minus(bad_new, bad_old);
    sd.removed_errors = minus(bad_old, bad_new);
    if (!sd.empty()) d.sentences.push_back(std::move(sd));
  }
  return d;
}

/// Runs both lists over `raw` and reports how the new one changes the result.
inline RuleListDelta diff_rule_lists(const RuleList& old_list, const RuleList& new_list, const Corpus& truth,
                                     const Corpus& raw)
{
  check_aligned(truth, raw);
  return diff_outputs(truth, apply_rule_list(old_list, raw), apply_rule_list(new_list, raw));
}

} // namespace basenp
