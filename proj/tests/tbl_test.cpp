#include <gtest/gtest.h>

#include <random>

#include "basenp/tbl.hpp"
#include "generators.hpp"

using namespace basenp;
using T = ChunkTag;

namespace {

Corpus slash(const std::string& text) { return parse_slash_format(text); }

TaggedSentence tagged(const std::string& text, std::vector<T> tags)
{
  auto s = slash(text).sentences.at(0);
  return {s.tokens, std::move(tags)};
}

// The determiner rule: an I-tagged DT right after an NP token starts a new NP.
TblRule dt_rule() { return {T::I, T::B, {{0, Feature::Pos, "DT"}, {-1, Feature::Chunk, "I"}}}; }

// Error delta measured by applying the rule to a copy: the oracle for score_rule.
long measured_gain(const TblRule& r, std::vector<TaggedSentence> t, const std::vector<std::vector<T>>& truth)
{
  auto before = static_cast<long>(count_tag_errors(t, truth));
  for (auto& s : t) apply_tbl_rule(r, s);
  return before - static_cast<long>(count_tag_errors(t, truth));
}

// Every rule a template can form at an error position, scored by brute force.
long best_possible_gain(const std::vector<TaggedSentence>& t, const std::vector<std::vector<T>>& truth)
{
  long best = 0;
  for (std::size_t k = 0; k < t.size(); ++k)
    for (std::size_t i = 0; i < t[k].tokens.size(); ++i) {
      if (t[k].chunk_tags[i] == truth[k][i]) continue;
      for (const auto& tpl : default_templates()) {
        TblRule r{t[k].chunk_tags[i], truth[k][i], {}};
        bool ok = true;
        for (auto [off, f] : tpl.slots) {
          auto j = static_cast<long>(i) + off;
          if (j < 0 || j >= static_cast<long>(t[k].tokens.size())) {
            ok = false;
            break;
          }
          const auto& tok = t[k].tokens[j];
          std::string v = f == Feature::Word ? tok.word : f == Feature::Pos ? tok.pos : std::string(1, to_char(t[k].chunk_tags[j]));
          r.conditions.push_back({off, f, v});
        }
        if (ok) best = std::max(best, measured_gain(r, t, truth));
      }
    }
  return best;
}

// NP NP adjacency where the second NP starts with a determiner.
Corpus dt_after_np_fixture()
{
  std::string text;
  const char* nouns[] = {"dog", "cat", "owl", "man", "boy", "car", "hat"};
  for (int i = 0; i < 7; ++i)
    text += std::string("( the/DT ") + nouns[i] + "/NN ) gave/VBD ( him/PRP ) ( the/DT " + nouns[(i + 1) % 7] +
            "/NN ) ./.\n";
  return slash(text);
}

} // namespace

TEST(Templates, DefaultSet)
{
  auto t = default_templates();
  EXPECT_EQ(t.size(), 211u);
  for (const auto& x : t) {
    EXPECT_TRUE(valid_template(x));
    for (auto [off, f] : x.slots) EXPECT_FALSE(off == 0 && f == Feature::Chunk);
  }
  EXPECT_EQ(template_to_string(t.back()), "pos[0] pos[1] chunk[-1] chunk[-2]");
}

TEST(Templates, Parse)
{
  auto t = parse_templates("# comment\npos[0] chunk[-1]\nword[+2]\n");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].slots, (std::vector<std::pair<int, Feature>>{{0, Feature::Pos}, {-1, Feature::Chunk}}));
  EXPECT_EQ(t[1].slots[0].first, 2);
  EXPECT_THROW(parse_templates("pos[4]"), ParseError);
  EXPECT_THROW(parse_templates("pos[0] pos[0]"), ParseError);
  EXPECT_THROW(parse_templates("tag[0]"), ParseError);
  EXPECT_THROW(parse_templates("pos[0] pos[1] pos[2] pos[3] pos[-1]"), ParseError);
}

TEST(Baseline, MostFrequentTagPerPos)
{
  auto m = baseline_map(slash("( the/DT dog/NN ) barked/VBD\n( a/DT ) ( the/DT cat/NN ) ran/VBD\nran/NN\n"));
  EXPECT_EQ(m.at("DT"), T::I);    // I, I, B
  EXPECT_EQ(m.at("NN"), T::I);    // I, I, O: I wins
  EXPECT_EQ(m.at("VBD"), T::O);
  auto t = apply_baseline(m, slash("the/DT dog/NN xyz/FW").sentences[0]);
  EXPECT_EQ(t.chunk_tags, (std::vector<T>{T::I, T::I, T::O}));  // unseen POS -> O
}

TEST(Baseline, TiesPreferIThenO)
{
  auto m = baseline_map(slash("( a/X ) b/X\nc/Y ( d/DT ) ( e/Y )\n"));
  EXPECT_EQ(m.at("X"), T::I);
  EXPECT_EQ(m.at("Y"), T::O);  // O once, B once
  EXPECT_THROW(baseline_map(Corpus{}), Error);
}

TEST(Rules, DeterminerRuleMatches)
{
  auto s = tagged("the/DT dog/NN the/DT cat/NN", {T::I, T::I, T::I, T::I});
  EXPECT_FALSE(rule_matches(dt_rule(), s, 0));  // no previous token
  EXPECT_TRUE(rule_matches(dt_rule(), s, 2));
  EXPECT_FALSE(rule_matches(dt_rule(), s, 3));
  EXPECT_EQ(firing_positions(dt_rule(), s), (std::vector<std::size_t>{2}));
}

TEST(Rules, SimultaneousApplication)
{
  // Sequential application would block the second site because the first
  // rewrite changes its chunk[-1]; simultaneous application fires both.
  TblRule r{T::I, T::O, {{-1, Feature::Chunk, "I"}}};
  auto s = tagged("a/NN b/NN c/NN", {T::I, T::I, T::I});
  EXPECT_EQ(apply_tbl_rule(r, s), 2u);
  EXPECT_EQ(s.chunk_tags, (std::vector<T>{T::I, T::O, T::O}));
}

TEST(Rules, ScoreFixtures)
{
  // Five DTs that should start an NP and two that should not.
  std::vector<TaggedSentence> t;
  std::vector<std::vector<T>> truth;
  for (int i = 0; i < 5; ++i) {
    t.push_back(tagged("her/PRP$ the/DT dog/NN", {T::I, T::I, T::I}));
    truth.push_back({T::I, T::B, T::I});
  }
  for (int i = 0; i < 2; ++i) {
    t.push_back(tagged("all/PDT the/DT dogs/NNS", {T::I, T::I, T::I}));
    truth.push_back({T::I, T::I, T::I});
  }
  EXPECT_EQ(score_rule(dt_rule(), t, truth), 3);
  EXPECT_EQ(score_rule(dt_rule(), t, truth), measured_gain(dt_rule(), t, truth));

  std::vector<TaggedSentence> four{tagged("a/NN the/DT b/NN the/DT c/NN the/DT d/NN the/DT", std::vector<T>(8, T::I))};
  std::vector<std::vector<T>> four_truth{{T::I, T::B, T::I, T::B, T::I, T::B, T::I, T::B}};
  EXPECT_EQ(score_rule(dt_rule(), four, four_truth), 4);
}

TEST(Rules, ScoreMatchesMeasuredDelta)
{
  std::mt19937 rng(8);
  for (int iter = 0; iter < 300; ++iter) {
    auto c = testgen::random_corpus(rng, 4, 8);
    auto truth = truth_tags(c);
    std::vector<TaggedSentence> t;
    for (auto& s : c.sentences) {
      TaggedSentence ts{s.tokens, {}};
      for (std::size_t i = 0; i < s.size(); ++i) ts.chunk_tags.push_back(static_cast<T>(rng() % 3));
      t.push_back(ts);
    }
    TblRule r{static_cast<T>(rng() % 3), T::I, {}};
    r.to = static_cast<T>((static_cast<int>(r.from) + 1 + rng() % 2) % 3);
    int off = static_cast<int>(rng() % 3) - 1;
    r.conditions.push_back({off, Feature::Pos, testgen::small_tagset()[rng() % 6]});
    EXPECT_EQ(score_rule(r, t, truth), measured_gain(r, t, truth));
  }
}

TEST(Serialization, RulesAndBaseline)
{
  LearnedRule lr{dt_rule(), 7, 10, 3};
  auto text = serialize_model_rules({lr});
  EXPECT_EQ(text, "from=I to=B IF pos[0]=DT chunk[-1]=I\tgain=7\n");
  auto back = parse_model_rules(text);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].rule, dt_rule());
  EXPECT_EQ(back[0].gain, 7u);
  EXPECT_THROW(parse_tbl_rule("from=I to=I IF pos[0]=DT"), ParseError);
  EXPECT_THROW(parse_tbl_rule("from=I to=B IF chunk[-1]=Q"), ParseError);
  EXPECT_THROW(parse_tbl_rule("from=I to=B pos[0]=DT"), ParseError);

  BaselineMap m{{"DT", T::I}, {"VBD", T::O}};
  EXPECT_EQ(serialize_baseline(m), "DT\tI\nVBD\tO\n");
  EXPECT_EQ(parse_baseline(serialize_baseline(m)), m);
  EXPECT_THROW(parse_baseline("DT I\n"), ParseError);
}

TEST(Learn, DeterminerAfterNp)
{
  auto train = dt_after_np_fixture();
  auto model = learn(train, {});
  ASSERT_EQ(model.rules.size(), 1u);
  EXPECT_EQ(model.baseline_errors, 7u);
  EXPECT_EQ(model.rules[0].rule.from, T::I);
  EXPECT_EQ(model.rules[0].rule.to, T::B);
  EXPECT_EQ(model.rules[0].gain, 7u);
  EXPECT_EQ(model.rules[0].errors_after, 0u);
  EXPECT_EQ(apply_tbl(model, strip_spans(train)), train);
}

TEST(Learn, StoppingConditions)
{
  auto train = dt_after_np_fixture();
  LearnerConfig high;
  high.min_gain = 8;
  EXPECT_TRUE(learn(train, high).rules.empty());
  LearnerConfig none;
  none.max_rules = 0;
  auto m = learn(train, none);
  EXPECT_TRUE(m.rules.empty());
  EXPECT_FALSE(m.baseline.empty());
  LearnerConfig zero;
  zero.min_gain = 0;
  EXPECT_THROW(learn(train, zero), Error);
}

TEST(Learn, GreedyChoiceIsOptimalAndLogIsExact)
{
  std::mt19937 rng(99);
  for (int iter = 0; iter < 4; ++iter) {
    auto train = testgen::random_corpus(rng, 12, 8);
    LearnerConfig cfg;
    cfg.min_gain = 1;
    cfg.max_rules = 1;
    auto model = learn(train, cfg);
    auto truth = truth_tags(train);
    auto t = apply_baseline(model.baseline, strip_spans(train));
    EXPECT_EQ(model.baseline_errors, count_tag_errors(t, truth));
    long best = best_possible_gain(t, truth);
    if (best < 1) {
      EXPECT_TRUE(model.rules.empty());
      continue;
    }
    ASSERT_EQ(model.rules.size(), 1u);
    EXPECT_EQ(static_cast<long>(model.rules[0].gain), best);
    EXPECT_EQ(measured_gain(model.rules[0].rule, t, truth), best);
  }
}

TEST(Learn, DeterministicAndMonotone)
{
  std::mt19937 rng(123);
  auto train = testgen::random_corpus(rng, 60, 10);
  LearnerConfig cfg;
  cfg.max_rules = 15;
  auto a = learn(train, cfg);
  auto b = learn(train, cfg);
  EXPECT_EQ(serialize_model_rules(a.rules), serialize_model_rules(b.rules));

  auto truth = truth_tags(train);
  auto t = apply_baseline(a.baseline, strip_spans(train));
  std::size_t errors = a.baseline_errors;
  for (const auto& lr : a.rules) {
    EXPECT_EQ(lr.errors_before, errors);
    EXPECT_EQ(static_cast<long>(lr.gain), score_rule(lr.rule, t, truth));
    for (auto& s : t) apply_tbl_rule(lr.rule, s);
    EXPECT_EQ(count_tag_errors(t, truth), lr.errors_after);
    EXPECT_EQ(lr.errors_before - lr.errors_after, lr.gain);
    EXPECT_GE(lr.gain, cfg.min_gain);
    errors = lr.errors_after;
  }
}

TEST(ApplyTbl, RepairsOrphanB)
{
  TblRule r{T::O, T::B, {{0, Feature::Pos, "NN"}}};
  BaselineMap m{{"NN", T::O}};
  auto out = apply_tbl({r}, m, slash("a/NN b/NN"));
  EXPECT_EQ(out.sentences[0].spans, (std::vector<ChunkSpan>{{0, 1}, {1, 2}}));
}
