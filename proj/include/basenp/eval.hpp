#pragma once

// Chunking evaluation: exact-span precision/recall/F, the four display
// categories, and recall stratified by how often an NP's tag sequence was
// seen in training.

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "basenp/corpus.hpp"
#include "json.hpp"

namespace basenp {

struct EvalReport
{
  double precision = 0.0;  ///< percent
  double recall = 0.0;     ///< percent
  double f_measure = 0.0;
  double pr_mean = 0.0;    ///< (P + R) / 2
  std::size_t truth_spans = 0;
  std::size_t predicted_spans = 0;
  std::size_t matched_spans = 0;
};

/// 100 * num / den, with 0/0 read as perfect agreement.
inline double percent(std::size_t num, std::size_t den, std::size_t other)
{
  if (den == 0) return other == 0 ? 100.0 : 0.0;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

inline EvalReport make_report(std::size_t truth, std::size_t predicted, std::size_t matched)
{
  EvalReport r;
  r.truth_spans = truth;
  r.predicted_spans = predicted;
  r.matched_spans = matched;
  r.precision = percent(matched, predicted, truth);
  r.recall = percent(matched, truth, predicted);
  r.f_measure = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.pr_mean = (r.precision + r.recall) / 2;
  return r;
}

inline std::size_t count_matched(const std::vector<ChunkSpan>& a, const std::vector<ChunkSpan>& b)
{
  // both sorted
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

inline EvalReport score(const Corpus& truth, const Corpus& predicted)
{
  check_aligned(truth, predicted);
  std::size_t t = 0, p = 0, m = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    t += truth.sentences[i].spans.size();
    p += predicted.sentences[i].spans.size();
    m += count_matched(truth.sentences[i].spans, predicted.sentences[i].spans);
  }
  return make_report(t, p, m);
}

// ---------------------------------------------------------------------------
// display categories

enum class SpanCategory : int { Outside = 1, Correct = 2, RecallError = 3, PrecisionError = 4 };

struct CategorizedSpan
{
  ChunkSpan span;
  SpanCategory category;
  friend bool operator==(const CategorizedSpan&, const CategorizedSpan&) = default;
};

struct SentenceCategories
{
  std::vector<SpanCategory> tokens;      ///< one per token
  std::vector<CategorizedSpan> spans;    ///< sorted by (start, end, category)
};

/// Per-token precedence when a token sits in several spans: 3 > 4 > 2 > 1.
inline int display_rank(SpanCategory c)
{
  switch (c) {
    case SpanCategory::RecallError: return 3;
    case SpanCategory::PrecisionError: return 2;
    case SpanCategory::Correct: return 1;
    case SpanCategory::Outside: return 0;
  }
  return 0;
}

inline SentenceCategories classify_spans(const AnnotatedSentence& truth, const AnnotatedSentence& predicted)
{
  if (truth.tokens != predicted.tokens) throw AlignmentError("classify_spans: token sequences differ");
  SentenceCategories out;
  out.tokens.assign(truth.size(), SpanCategory::Outside);
  for (const auto& s : truth.spans) {
    bool hit = std::binary_search(predicted.spans.begin(), predicted.spans.end(), s);
    out.spans.push_back({s, hit ? SpanCategory::Correct : SpanCategory::RecallError});
  }
  for (const auto& s : predicted.spans)
    if (!std::binary_search(truth.spans.begin(), truth.spans.end(), s))
      out.spans.push_back({s, SpanCategory::PrecisionError});
  std::sort(out.spans.begin(), out.spans.end(), [](const CategorizedSpan& a, const CategorizedSpan& b) {
    if (a.span != b.span) return a.span < b.span;
    return static_cast<int>(a.category) < static_cast<int>(b.category);
  });
  for (const auto& cs : out.spans)
    for (std::size_t i = cs.span.start; i < cs.span.end; ++i)
      if (display_rank(cs.category) > display_rank(out.tokens[i])) out.tokens[i] = cs.category;
  return out;
}

// ---------------------------------------------------------------------------
// frequency-stratified recall

struct FreqBucket
{
  std::size_t train_count = 0;
  std::size_t test_nps = 0;
  std::size_t recalled = 0;
  double recall = 0.0;  ///< percent

  friend bool operator==(const FreqBucket&, const FreqBucket&) = default;
};

struct FreqAggregate
{
  std::size_t test_nps = 0;
  std::size_t recalled = 0;
  double recall = 0.0;
};

struct FreqAnalysis
{
  std::vector<FreqBucket> buckets;  ///< ascending train_count
  std::size_t threshold = 6;
  FreqAggregate below;              ///< train_count < threshold
  FreqAggregate at_or_above;
};

inline std::string tag_sequence_key(const AnnotatedSentence& s, const ChunkSpan& sp)
{
  std::string key;
  for (std::size_t i = sp.start; i < sp.end; ++i) {
    if (i > sp.start) key += ' ';
    key += s.tokens[i].pos;
  }
  return key;
}

inline FreqAnalysis freq_recall(const Corpus& train_truth, const Corpus& test_truth, const Corpus& predicted,
                                std::size_t threshold = 6)
{
  check_aligned(test_truth, predicted);
  std::map<std::string, std::size_t> train_counts;
  for (const auto& s : train_truth.sentences)
    for (const auto& sp : s.spans) ++train_counts[tag_sequence_key(s, sp)];

  std::map<std::size_t, FreqBucket> buckets;
  for (std::size_t i = 0; i < test_truth.size(); ++i) {
    const auto& gold = test_truth.sentences[i];
    const auto& pred = predicted.sentences[i].spans;
    for (const auto& sp : gold.spans) {
      auto it = train_counts.find(tag_sequence_key(gold, sp));
      std::size_t count = it == train_counts.end() ? 0 : it->second;
      auto& b = buckets[count];
      b.train_count = count;
      ++b.test_nps;
      if (std::binary_search(pred.begin(), pred.end(), sp)) ++b.recalled;
    }
  }
  FreqAnalysis fa;
  fa.threshold = threshold;
  for (auto& [count, b] : buckets) {
    b.recall = percent(b.recalled, b.test_nps, 0);
    auto& agg = count < threshold ? fa.below : fa.at_or_above;
    agg.test_nps += b.test_nps;
    agg.recalled += b.recalled;
    fa.buckets.push_back(b);
  }
  for (auto* agg : {&fa.below, &fa.at_or_above}) agg->recall = percent(agg->recalled, agg->test_nps, 0);
  return fa;
}

// ---------------------------------------------------------------------------
// the ( CD CD ) TO ( CD CD ) regression

struct CdCdResult
{
  bool pass = false;
  bool both_nps_found = false;
  bool merged_span_emitted = false;
  std::string detail;
};

/// `truth` is the shipped fixture; `output` the system's annotation of it.
/// Every ( CD CD ) TO ( CD CD ) run in the truth must come out as two NPs,
/// never as one five-token NP.
inline CdCdResult cd_cd_fixture_check(const Corpus& truth, const Corpus& output)
{
  check_aligned(truth, output);
  CdCdResult r;
  std::size_t sites = 0, found = 0, merged = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& gold = truth.sentences[i];
    const auto& pred = output.sentences[i].spans;
    for (std::size_t k = 0; k + 1 < gold.spans.size(); ++k) {
      const auto& a = gold.spans[k];
      const auto& b = gold.spans[k + 1];
      if (a.size() != 2 || b.size() != 2 || a.end + 1 != b.start) continue;
      if (tag_sequence_key(gold, a) != "CD CD" || tag_sequence_key(gold, b) != "CD CD" ||
          gold.tokens[a.end].pos != "TO")
        continue;
      ++sites;
      bool has_a = std::binary_search(pred.begin(), pred.end(), a);
      bool has_b = std::binary_search(pred.begin(), pred.end(), b);
      if (has_a && has_b) ++found;
      if (std::binary_search(pred.begin(), pred.end(), ChunkSpan{a.start, b.end})) ++merged;
    }
  }
  r.both_nps_found = sites > 0 && found == sites;
  r.merged_span_emitted = merged > 0;
  r.pass = r.both_nps_found && !r.merged_span_emitted;
  if (sites == 0) r.detail = "fixture contains no ( CD CD ) TO ( CD CD ) sequence";
  else if (r.pass) r.detail = "both NPs bracketed separately";
  else if (r.merged_span_emitted) r.detail = "merged the whole CD CD TO CD CD sequence into one NP";
  else r.detail = "missed the CD CD NPs (recall errors) without merging them";
  return r;
}

// ---------------------------------------------------------------------------
// published reference values (documented, not reproduced)

struct ReferenceScore
{
  const char* system;
  double precision;
  double recall;
  double f_measure;
  double pr_mean;
};

/// Transformation-based learner on the test corpus, by training-set size.
inline constexpr ReferenceScore kMachineReference[] = {
  {"R&M 25k words", 88.7, 89.3, 89.0, 89.0},
  {"R&M 200k words", 91.8, 92.3, 92.0, 92.1},
};

/// Human rule writers on the test corpus (25k-word training set).
inline constexpr ReferenceScore kStudentReference[] = {
  {"Student 1", 88.0, 88.8, 88.4, 88.4},  {"Student 2", 88.2, 87.9, 88.0, 88.1},
  {"Student 3", 88.3, 87.8, 88.0, 88.1},  {"Student 4", 86.9, 85.9, 86.4, 86.4},
  {"Student 5", 85.8, 85.8, 85.8, 85.8},  {"Student 6", 85.8, 87.1, 86.4, 86.5},
  {"Student 7", 85.3, 87.3, 86.3, 86.3},  {"Student 8", 83.1, 85.7, 84.4, 84.4},
  {"Student 9", 83.5, 84.8, 84.1, 84.2},  {"Student 10", 83.3, 84.4, 83.8, 83.8},
  {"Student 11", 84.0, 77.4, 80.6, 80.7},
};

/// Recall by training frequency: at count 5, and split at 6 occurrences.
struct FreqReference
{
  double students_at_5 = 63.6;
  double machine_at_5 = 83.5;
  double machine_below_6 = 62.8;
  double students_below_6 = 54.8;
  double machine_at_or_above_6 = 93.7;
  double students_at_or_above_6 = 93.5;
};
inline constexpr FreqReference kFreqReference{};

// ---------------------------------------------------------------------------
// serialization

inline std::string fixed(double v, int digits = 2)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline nlohmann::json to_json(const EvalReport& r)
{
  return {{"precision", r.precision},       {"recall", r.recall},
          {"f_measure", r.f_measure},       {"pr_mean", r.pr_mean},
          {"truth_spans", r.truth_spans},   {"predicted_spans", r.predicted_spans},
          {"matched_spans", r.matched_spans}};
}

inline EvalReport report_from_json(const nlohmann::json& j)
{
  return make_report(j.at("truth_spans").get<std::size_t>(), j.at("predicted_spans").get<std::size_t>(),
                     j.at("matched_spans").get<std::size_t>());
}

inline nlohmann::json to_json(const FreqAnalysis& fa)
{
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& b : fa.buckets)
    buckets.push_back({{"train_count", b.train_count}, {"test_nps", b.test_nps},
                       {"recalled", b.recalled}, {"recall", b.recall}});
  auto agg = [](const FreqAggregate& a) {
    return nlohmann::json{{"test_nps", a.test_nps}, {"recalled", a.recalled}, {"recall", a.recall}};
  };
  return {{"threshold", fa.threshold}, {"buckets", buckets}, {"below", agg(fa.below)},
          {"at_or_above", agg(fa.at_or_above)}};
}

/// Column order: Precision, Recall, F-Measure, (P+R)/2.
inline std::string report_table(const EvalReport& r, const std::string& label = "output")
{
  std::string out = "system\tprecision\trecall\tf-measure\t(p+r)/2\ttruth\tpredicted\tmatched\n";
  out += label + "\t" + fixed(r.precision) + "\t" + fixed(r.recall) + "\t" + fixed(r.f_measure) + "\t" +
         fixed(r.pr_mean) + "\t" + std::to_string(r.truth_spans) + "\t" + std::to_string(r.predicted_spans) +
         "\t" + std::to_string(r.matched_spans) + "\n";
  return out;
}

inline std::string freq_table(const FreqAnalysis& fa)
{
  std::string out = "train_count\ttest_nps\trecalled\trecall\n";
  for (const auto& b : fa.buckets)
    out += std::to_string(b.train_count) + "\t" + std::to_string(b.test_nps) + "\t" + std::to_string(b.recalled) +
           "\t" + fixed(b.recall) + "\n";
  out += "<" + std::to_string(fa.threshold) + "\t" + std::to_string(fa.below.test_nps) + "\t" +
         std::to_string(fa.below.recalled) + "\t" + fixed(fa.below.recall) + "\n";
  out += ">=" + std::to_string(fa.threshold) + "\t" + std::to_string(fa.at_or_above.test_nps) + "\t" +
         std::to_string(fa.at_or_above.recalled) + "\t" + fixed(fa.at_or_above.recall) + "\n";
  return out;
}

/// (train_count, recall) pairs, one per line, for plotting.
inline std::string freq_series(const FreqAnalysis& fa)
{
  std::string out;
  for (const auto& b : fa.buckets) out += std::to_string(b.train_count) + "\t" + fixed(b.recall) + "\n";
  return out;
}

} // namespace basenp
