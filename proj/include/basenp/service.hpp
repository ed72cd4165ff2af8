#pragma once

// Rule-writing sessions: a training corpus (plus optional test corpus), a
// committed rule list, at most one tentative list under evaluation, and the
// score history of every committed version.
//
// On-disk layout under the service root, one directory per session:
//
//   <id>/session.json        {"id", "has_test"}
//   <id>/train.txt           gold training corpus, slash format
//   <id>/test.txt            gold test corpus, slash format (optional)
//   <id>/rules/v0000.rules   committed rule list text, one file per version
//   <id>/history.json        [{"version", "report"}...]; the last entry names
//                            the committed version
//
// Files are replaced by write-then-rename, and history.json is written last,
// so a commit is either fully visible after a restart or not at all.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "basenp/corpus.hpp"
#include "basenp/error.hpp"
#include "basenp/eval.hpp"
#include "basenp/ruledsl.hpp"
#include "json.hpp"

namespace basenp {

class SessionNotFound : public Error
{
public:
  using Error::Error;
};

class NoTentativeError : public Error
{
public:
  using Error::Error;
};

class RangeError : public Error
{
public:
  using Error::Error;
};

struct HistoryEntry
{
  std::uint64_t version = 0;
  EvalReport report;
};

struct Proposal
{
  std::uint64_t version = 0;   ///< version the tentative list would get
  EvalReport report;           ///< tentative list on the training corpus
  RuleListDelta delta;         ///< relative to the committed list
};

struct RenderSentence
{
  std::size_t index = 0;
  std::vector<Token> tokens;
  std::vector<SpanCategory> categories;
  std::vector<ChunkSpan> truth;
  std::vector<ChunkSpan> predicted;
  std::vector<CategorizedSpan> spans;
};

struct RenderModel
{
  std::string which;
  std::uint64_t version = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t total = 0;
  std::vector<RenderSentence> sentences;
};

struct SessionReports
{
  std::vector<HistoryEntry> history;
  EvalReport train;
  std::optional<EvalReport> test;
  std::optional<FreqAnalysis> freq;
  std::string rules_text;
};

enum class Which { Committed, Tentative };

namespace detail {

inline std::string read_file(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_atomic(const std::filesystem::path& p, const std::string& content)
{
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

inline std::string version_file(std::uint64_t v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%04llu.rules", static_cast<unsigned long long>(v));
  return buf;
}

} // namespace detail

class Session
{
public:
  Session(std::string id, std::filesystem::path dir, Corpus train, std::optional<Corpus> test)
    : id_(std::move(id)), dir_(std::move(dir)),
      train_truth_(std::make_shared<const Corpus>(std::move(train))),
      train_raw_(std::make_shared<const Corpus>(strip_spans(*train_truth_)))
  {
    if (test) {
      test_truth_ = std::make_shared<const Corpus>(std::move(*test));
      test_raw_ = std::make_shared<const Corpus>(strip_spans(*test_truth_));
    }
    committed_ = RuleList({}, 0);
    committed_output_ = train_raw_;
  }

  const std::string& id() const { return id_; }

private:
  friend class Service;

  std::string id_;
  std::filesystem::path dir_;
  std::shared_ptr<const Corpus> train_truth_;
  std::shared_ptr<const Corpus> train_raw_;
  std::shared_ptr<const Corpus> test_truth_;
  std::shared_ptr<const Corpus> test_raw_;

  mutable std::mutex mu_;       ///< guards everything below
  std::mutex writer_;           ///< serializes edits (propose/commit/rollback)
  RuleList committed_;
  std::shared_ptr<const Corpus> committed_output_;
  std::optional<RuleList> tentative_;
  std::shared_ptr<const Corpus> tentative_output_;
  std::vector<HistoryEntry> history_;
};

class Service
{
public:
  /// Opens (or creates) a service rooted at `root`, restoring every session
  /// found there.
  explicit Service(std::filesystem::path root) : root_(std::move(root))
  {
    std::filesystem::create_directories(root_);
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root_))
      if (e.is_directory() && std::filesystem::exists(e.path() / "history.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) load(d);
  }

  const std::filesystem::path& root() const { return root_; }

  std::vector<std::string> session_ids() const
  {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
  }

  /// New session from gold corpora; starts with an empty committed list.
  std::string create_session(Corpus train, std::optional<Corpus> test = std::nullopt)
  {
    std::unique_lock lock(mu_);
    std::string id;
    do id = fresh_id(); while (sessions_.count(id) || std::filesystem::exists(root_ / id));
    auto dir = root_ / id;
    auto session = std::make_shared<Session>(id, dir, std::move(train), std::move(test));

    std::filesystem::create_directories(dir / "rules");
    detail::write_file_atomic(dir / "train.txt", serialize_slash(*session->train_truth_));
    if (session->test_truth_) detail::write_file_atomic(dir / "test.txt", serialize_slash(*session->test_truth_));
    detail::write_file_atomic(dir / "session.json",
                              nlohmann::json{{"id", id}, {"has_test", session->test_truth_ != nullptr}}.dump(2) + "\n");
    session->history_.push_back({0, score(*session->train_truth_, *session->train_raw_)});
    detail::write_file_atomic(dir / "rules" / detail::version_file(0), "");
    write_history(*session);
    sessions_[id] = session;
    return id;
  }

  /// Parse errors propagate and no session is created.
  std::string create_session(std::string_view train_text, CorpusFormat train_format,
                             std::optional<std::string_view> test_text = std::nullopt,
                             CorpusFormat test_format = CorpusFormat::Slash)
  {
    Corpus train = parse_corpus(train_text, train_format, "train");
    std::optional<Corpus> test;
    if (test_text) test = parse_corpus(*test_text, test_format, "test");
    return create_session(std::move(train), std::move(test));
  }

  std::string create_session_from_files(const std::filesystem::path& train, CorpusFormat train_format,
                                        const std::optional<std::filesystem::path>& test = std::nullopt,
                                        CorpusFormat test_format = CorpusFormat::Slash)
  {
    auto load_file = [](const std::filesystem::path& p, CorpusFormat f, const char* label) {
      try {
        return parse_corpus(detail::read_file(p), f, label);
      } catch (const ParseError& e) {
        throw ParseError(p.string() + ": " + e.message(), e.line(), e.offset());
      }
    };
    Corpus train_corpus = load_file(train, train_format, "train");
    std::optional<Corpus> test_corpus;
    if (test) test_corpus = load_file(*test, test_format, "test");
    return create_session(std::move(train_corpus), std::move(test_corpus));
  }

  /// Evaluates `rules_text` on the training corpus as the new tentative list.
  /// The committed list is never touched; on a parse error the previous
  /// tentative list is discarded and the error rethrown.
  Proposal propose_rules(const std::string& id, std::string_view rules_text)
  {
    auto s = get(id);
    std::lock_guard edit(s->writer_);
    RuleList committed;
    std::shared_ptr<const Corpus> committed_out;
    {
      std::lock_guard lock(s->mu_);
      committed = s->committed_;
      committed_out = s->committed_output_;
    }
    RuleList list;
    try {
      list = parse_rule_list(rules_text);
    } catch (...) {
      std::lock_guard lock(s->mu_);
      s->tentative_.reset();
      s->tentative_output_.reset();
      throw;
    }
    list = RuleList(list.rules(), committed.version() + 1);
    auto out = std::make_shared<const Corpus>(apply_rule_list(list, *s->train_raw_));
    Proposal p;
    p.version = list.version();
    p.delta = diff_outputs(*s->train_truth_, *committed_out, *out);
    p.report = p.delta.new_report;
    std::lock_guard lock(s->mu_);
    s->tentative_ = std::move(list);
    s->tentative_output_ = std::move(out);
    return p;
  }

  /// Promotes the tentative list; returns the new history entry.
  HistoryEntry commit(const std::string& id)
  {
    auto s = get(id);
    std::lock_guard edit(s->writer_);
    RuleList list;
    std::shared_ptr<const Corpus> out;
    {
      std::lock_guard lock(s->mu_);
      if (!s->tentative_) throw NoTentativeError("session " + id + " has no tentative rule list to commit");
      list = *s->tentative_;
      out = s->tentative_output_;
    }
    HistoryEntry entry{list.version(), score(*s->train_truth_, *out)};
    auto history = s->history_;
    history.push_back(entry);
    detail::write_file_atomic(s->dir_ / "rules" / detail::version_file(entry.version), serialize_rule_list(list));
    detail::write_file_atomic(s->dir_ / "history.json", history_json(history).dump(2) + "\n");
    std::lock_guard lock(s->mu_);
    s->committed_ = std::move(list);
    s->committed_output_ = std::move(out);
    s->history_ = std::move(history);
    s->tentative_.reset();
    s->tentative_output_.reset();
    return entry;
  }

  void rollback(const std::string& id)
  {
    auto s = get(id);
    std::lock_guard edit(s->writer_);
    std::lock_guard lock(s->mu_);
    if (!s->tentative_) throw NoTentativeError("session " + id + " has no tentative rule list to roll back");
    s->tentative_.reset();
    s->tentative_output_.reset();
  }

  RenderModel view_page(const std::string& id, std::size_t start, std::size_t end, Which which) const
  {
    auto s = get(id);
    std::shared_ptr<const Corpus> out;
    RenderModel m;
    {
      std::lock_guard lock(s->mu_);
      if (which == Which::Tentative) {
        if (!s->tentative_) throw NoTentativeError("session " + id + " has no tentative rule list");
        out = s->tentative_output_;
        m.version = s->tentative_->version();
      } else {
        out = s->committed_output_;
        m.version = s->committed_.version();
      }
    }
    const auto& truth = *s->train_truth_;
    if (start > end || end > truth.size())
      throw RangeError("sentence range [" + std::to_string(start) + ", " + std::to_string(end) +
                       ") outside [0, " + std::to_string(truth.size()) + ")");
    m.which = which == Which::Committed ? "committed" : "tentative";
    m.start = start;
    m.end = end;
    m.total = truth.size();
    for (std::size_t i = start; i < end; ++i) {
      const auto& gold = truth.sentences[i];
      const auto& pred = out->sentences[i];
      auto cats = classify_spans(gold, pred);
      m.sentences.push_back({i, gold.tokens, cats.tokens, gold.spans, pred.spans, cats.spans});
    }
    return m;
  }

  /// Score history, committed rule text, and (the only place they appear)
  /// test-set scores with the frequency analysis.
  SessionReports reports(const std::string& id) const
  {
    auto s = get(id);
    SessionReports r;
    RuleList committed;
    std::shared_ptr<const Corpus> out;
    {
      std::lock_guard lock(s->mu_);
      r.history = s->history_;
      committed = s->committed_;
      out = s->committed_output_;
    }
    r.train = score(*s->train_truth_, *out);
    r.rules_text = serialize_rule_list(committed);
    if (s->test_truth_) {
      auto test_out = apply_rule_list(committed, *s->test_raw_);
      r.test = score(*s->test_truth_, test_out);
      r.freq = freq_recall(*s->train_truth_, *s->test_truth_, test_out);
    }
    return r;
  }

  std::size_t sentence_count(const std::string& id) const { return get(id)->train_truth_->size(); }

  std::string committed_rules(const std::string& id) const
  {
    auto s = get(id);
    std::lock_guard lock(s->mu_);
    return serialize_rule_list(s->committed_);
  }

  std::uint64_t committed_version(const std::string& id) const
  {
    auto s = get(id);
    std::lock_guard lock(s->mu_);
    return s->committed_.version();
  }

  std::optional<std::uint64_t> tentative_version(const std::string& id) const
  {
    auto s = get(id);
    std::lock_guard lock(s->mu_);
    if (!s->tentative_) return std::nullopt;
    return s->tentative_->version();
  }

  static nlohmann::json history_json(const std::vector<HistoryEntry>& h)
  {
    auto arr = nlohmann::json::array();
    for (const auto& e : h) arr.push_back({{"version", e.version}, {"report", to_json(e.report)}});
    return arr;
  }

private:
  std::shared_ptr<Session> get(const std::string& id) const
  {
    std::shared_lock lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionNotFound("no session '" + id + "'");
    return it->second;
  }

  void write_history(const Session& s) const
  {
    detail::write_file_atomic(s.dir_ / "history.json", history_json(s.history_).dump(2) + "\n");
  }

  void load(const std::filesystem::path& dir)
  {
    auto meta = nlohmann::json::parse(detail::read_file(dir / "session.json"));
    auto id = meta.at("id").get<std::string>();
    auto train = parse_slash_format(detail::read_file(dir / "train.txt"), "train");
    std::optional<Corpus> test;
    if (meta.at("has_test").get<bool>()) test = parse_slash_format(detail::read_file(dir / "test.txt"), "test");
    auto s = std::make_shared<Session>(id, dir, std::move(train), std::move(test));
    for (const auto& e : nlohmann::json::parse(detail::read_file(dir / "history.json")))
      s->history_.push_back({e.at("version").get<std::uint64_t>(), report_from_json(e.at("report"))});
    if (s->history_.empty()) throw Error("session " + id + " has an empty history");
    auto version = s->history_.back().version;
    auto list = parse_rule_list(detail::read_file(dir / "rules" / detail::version_file(version)));
    s->committed_ = RuleList(list.rules(), version);
    s->committed_output_ = std::make_shared<const Corpus>(apply_rule_list(s->committed_, *s->train_raw_));
    sessions_[id] = s;
  }

  std::string fresh_id()
  {
    static constexpr char hex[] = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 16; ++i) id += hex[rng_() & 15];
    return id;
  }

  std::filesystem::path root_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 rng_{std::random_device{}()};
};

// ---------------------------------------------------------------------------
// JSON documents exchanged by the HTTP API

inline nlohmann::json to_json(const ChunkSpan& s) { return nlohmann::json::array({s.start, s.end}); }

inline nlohmann::json spans_json(const std::vector<ChunkSpan>& v)
{
  auto a = nlohmann::json::array();
  for (const auto& s : v) a.push_back(to_json(s));
  return a;
}

inline nlohmann::json to_json(const RuleListDelta& d)
{
  auto sentences = nlohmann::json::array();
  for (const auto& s : d.sentences)
    sentences.push_back({{"sentence", s.sentence},
                         {"gained_correct", spans_json(s.gained_correct)},
                         {"lost_correct", spans_json(s.lost_correct)},
                         {"new_errors", spans_json(s.new_errors)},
                         {"removed_errors", spans_json(s.removed_errors)}});
  return {{"committed", to_json(d.old_report)},
          {"tentative", to_json(d.new_report)},
          {"precision", d.precision_delta()},
          {"recall", d.recall_delta()},
          {"f_measure", d.f_delta()},
          {"pr_mean", d.mean_delta()},
          {"gained_correct", d.total(&SentenceDelta::gained_correct)},
          {"lost_correct", d.total(&SentenceDelta::lost_correct)},
          {"new_errors", d.total(&SentenceDelta::new_errors)},
          {"removed_errors", d.total(&SentenceDelta::removed_errors)},
          {"sentences", sentences}};
}

inline nlohmann::json to_json(const Proposal& p)
{
  return {{"version", p.version}, {"report", to_json(p.report)}, {"delta", to_json(p.delta)}};
}

inline nlohmann::json to_json(const RenderModel& m)
{
  auto sentences = nlohmann::json::array();
  for (const auto& s : m.sentences) {
    auto tokens = nlohmann::json::array();
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      tokens.push_back({{"word", s.tokens[i].word}, {"pos", s.tokens[i].pos},
                        {"category", static_cast<int>(s.categories[i])}});
    auto spans = nlohmann::json::array();
    for (const auto& cs : s.spans)
      spans.push_back({{"span", to_json(cs.span)}, {"category", static_cast<int>(cs.category)}});
    sentences.push_back({{"index", s.index}, {"tokens", tokens}, {"truth", spans_json(s.truth)},
                         {"predicted", spans_json(s.predicted)}, {"spans", spans}});
  }
  return {{"which", m.which}, {"version", m.version}, {"start", m.start}, {"end", m.end},
          {"total", m.total}, {"sentences", sentences}};
}

inline nlohmann::json to_json(const SessionReports& r)
{
  nlohmann::json j{{"history", Service::history_json(r.history)},
                   {"train", to_json(r.train)},
                   {"rules", r.rules_text}};
  j["test"] = r.test ? to_json(*r.test) : nlohmann::json(nullptr);
  j["freq"] = r.freq ? to_json(*r.freq) : nlohmann::json(nullptr);
  return j;
}

} // namespace basenp
