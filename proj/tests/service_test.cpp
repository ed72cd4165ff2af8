#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "basenp/service.hpp"
#include "basenp/service_http.hpp"
#include "test_util.hpp"

using namespace basenp;
namespace fs = std::filesystem;

namespace {

const char* kTrain = "( The/DT quick/JJ fox/NN ) jumped/VBD over/IN ( the/DT lazy/JJ dog/NN ) ./.\n"
                     "( a/DT cat/NN ) sat/VBD\n";
const char* kTest = "( the/DT dog/NN ) ran/VBD\n";
const char* kDtNn = "A\n-\n({1} t=DT) (* t=JJ) ({1} t=NN)\n-\n";
const char* kNn = "A\n-\n({1} t=NN)\n-\n";

class TempRoot : public ::testing::Test
{
protected:
  void SetUp() override
  {
    root = fs::temp_directory_path() /
           ("basenp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(root);
  }
  void TearDown() override { fs::remove_all(root); }

  std::map<std::string, std::string> snapshot() const
  {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = detail::read_file(e.path());
    return out;
  }

  fs::path root;
};

} // namespace

using ServiceTest = TempRoot;

TEST_F(ServiceTest, CreateStartsAtVersionZero)
{
  Service svc(root);
  auto id = svc.create_session(kTrain, CorpusFormat::Slash, std::string_view(kTest));
  EXPECT_EQ(id.size(), 16u);
  EXPECT_EQ(svc.committed_version(id), 0u);
  EXPECT_FALSE(svc.tentative_version(id));
  EXPECT_EQ(svc.committed_rules(id), "");
  auto r = svc.reports(id);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].version, 0u);
  EXPECT_EQ(r.train.predicted_spans, 0u);
  EXPECT_TRUE(fs::exists(root / id / "rules" / "v0000.rules"));
}

TEST_F(ServiceTest, BadCorpusCreatesNothing)
{
  Service svc(root);
  EXPECT_THROW(svc.create_session("( a/DT", CorpusFormat::Slash), ParseError);
  EXPECT_TRUE(svc.session_ids().empty());
  EXPECT_THROW(svc.create_session_from_files(root / "missing.txt", CorpusFormat::Slash), Error);
}

TEST_F(ServiceTest, ProposeCommitRollback)
{
  Service svc(root);
  auto id = svc.create_session(kTrain, CorpusFormat::Slash);
  auto p = svc.propose_rules(id, kDtNn);
  EXPECT_EQ(p.version, 1u);
  EXPECT_DOUBLE_EQ(p.report.recall, 100.0);
  EXPECT_DOUBLE_EQ(p.delta.recall_delta(), 100.0);
  EXPECT_EQ(p.delta.total(&SentenceDelta::gained_correct), 3u);
  EXPECT_EQ(svc.committed_version(id), 0u);  // nothing committed yet
  EXPECT_EQ(svc.tentative_version(id), 1u);

  auto e = svc.commit(id);
  EXPECT_EQ(e.version, 1u);
  EXPECT_EQ(svc.committed_version(id), 1u);
  EXPECT_FALSE(svc.tentative_version(id));
  EXPECT_EQ(svc.committed_rules(id), kDtNn);
  EXPECT_THROW(svc.commit(id), NoTentativeError);
  EXPECT_THROW(svc.rollback(id), NoTentativeError);

  auto p2 = svc.propose_rules(id, std::string(kDtNn) + "\n" + kNn);
  EXPECT_EQ(p2.version, 2u);
  EXPECT_EQ(p2.delta.total(&SentenceDelta::new_errors), 0u);  // NN is already inside every NP
  svc.rollback(id);
  EXPECT_EQ(svc.committed_version(id), 1u);
  EXPECT_EQ(svc.reports(id).history.size(), 2u);
}

TEST_F(ServiceTest, BadRulesDiscardTentative)
{
  Service svc(root);
  auto id = svc.create_session(kTrain, CorpusFormat::Slash);
  svc.propose_rules(id, kNn);
  EXPECT_THROW(svc.propose_rules(id, "A\n-\n({1} t=NN\n-\n"), RuleListError);
  EXPECT_FALSE(svc.tentative_version(id));
  EXPECT_EQ(svc.committed_version(id), 0u);
}

TEST_F(ServiceTest, ViewPage)
{
  Service svc(root);
  auto id = svc.create_session(kTrain, CorpusFormat::Slash);
  svc.propose_rules(id, kNn);
  auto v = svc.view_page(id, 0, 1, Which::Tentative);
  EXPECT_EQ(v.which, "tentative");
  EXPECT_EQ(v.version, 1u);
  EXPECT_EQ(v.total, 2u);
  ASSERT_EQ(v.sentences.size(), 1u);
  const auto& s = v.sentences[0];
  EXPECT_EQ(s.predicted, (std::vector<ChunkSpan>{{2, 3}, {7, 8}}));
  EXPECT_EQ(s.categories[0], SpanCategory::RecallError);
  EXPECT_EQ(s.categories[3], SpanCategory::Outside);

  auto c = svc.view_page(id, 1, 2, Which::Committed);
  EXPECT_EQ(c.version, 0u);
  EXPECT_TRUE(c.sentences[0].predicted.empty());
  EXPECT_THROW(svc.view_page(id, 0, 3, Which::Committed), RangeError);
  EXPECT_THROW(svc.view_page(id, 2, 1, Which::Committed), RangeError);
  EXPECT_TRUE(svc.view_page(id, 2, 2, Which::Committed).sentences.empty());
  EXPECT_THROW(svc.view_page("nope", 0, 1, Which::Committed), SessionNotFound);
  svc.rollback(id);
  EXPECT_THROW(svc.view_page(id, 0, 1, Which::Tentative), NoTentativeError);
}

TEST_F(ServiceTest, ReportsCarryTestScoresAndFreq)
{
  Service svc(root);
  auto id = svc.create_session(kTrain, CorpusFormat::Slash, std::string_view(kTest));
  svc.propose_rules(id, kDtNn);
  svc.commit(id);
  auto r = svc.reports(id);
  ASSERT_TRUE(r.test);
  EXPECT_DOUBLE_EQ(r.test->f_measure, 100.0);
  ASSERT_TRUE(r.freq);
  ASSERT_EQ(r.freq->buckets.size(), 1u);
  EXPECT_EQ(r.freq->buckets[0].train_count, 1u);  // "DT NN" seen once in training
  EXPECT_EQ(r.rules_text, kDtNn);
  auto j = to_json(r);
  EXPECT_EQ(j["history"].size(), 2u);
  EXPECT_EQ(j["rules"], kDtNn);
}

TEST_F(ServiceTest, RestartRestoresCommittedState)
{
  std::string id;
  std::map<std::string, std::string> before;
  {
    Service svc(root);
    id = svc.create_session(kTrain, CorpusFormat::Slash, std::string_view(kTest));
    svc.propose_rules(id, kNn);
    svc.commit(id);
    svc.propose_rules(id, kDtNn);
    svc.commit(id);
    svc.propose_rules(id, "K\n-\n({1} t=NN)\n-\n");  // tentative is not persisted
    before = snapshot();
  }
  Service again(root);
  EXPECT_EQ(again.session_ids(), std::vector<std::string>{id});
  EXPECT_EQ(again.committed_version(id), 2u);
  EXPECT_FALSE(again.tentative_version(id));
  EXPECT_EQ(again.committed_rules(id), kDtNn);
  EXPECT_EQ(again.reports(id).history.size(), 3u);
  EXPECT_DOUBLE_EQ(again.reports(id).train.recall, 100.0);
  EXPECT_EQ(snapshot(), before);
  auto p = again.propose_rules(id, kNn);
  EXPECT_EQ(p.version, 3u);
}

TEST_F(ServiceTest, IncompleteSessionDirectoryIgnored)
{
  fs::create_directories(root / "partial");
  {
    std::ofstream(root / "partial" / "train.txt") << "a/DT\n";
  }
  Service svc(root);
  EXPECT_TRUE(svc.session_ids().empty());
}

TEST_F(ServiceTest, ConcurrentProposalsLeaveCommittedStateAlone)
{
  Service svc(root);
  auto a = svc.create_session(kTrain, CorpusFormat::Slash);
  auto b = svc.create_session(kTrain, CorpusFormat::Slash);
  svc.propose_rules(a, kDtNn);
  svc.commit(a);
  auto rules_a = svc.committed_rules(a);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        svc.propose_rules(t % 2 ? a : b, i % 2 ? kNn : kDtNn);
        svc.view_page(a, 0, 2, Which::Committed);
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(svc.committed_rules(a), rules_a);
  EXPECT_EQ(svc.committed_version(a), 1u);
  EXPECT_EQ(svc.committed_version(b), 0u);
  EXPECT_EQ(svc.reports(a).history.size(), 2u);
  EXPECT_EQ(svc.reports(b).history.size(), 1u);
}

// ---------------------------------------------------------------------------
// HTTP

class HttpTest : public TempRoot
{
protected:
  void SetUp() override
  {
    TempRoot::SetUp();
    service = std::make_unique<Service>(root);
    install_routes(server, *service);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  void TearDown() override
  {
    server.stop();
    thread.join();
    TempRoot::TearDown();
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body, int expect)
  {
    auto res = client->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << res->body;
    return nlohmann::json::parse(res->body);
  }
  nlohmann::json get(const std::string& path, int expect)
  {
    auto res = client->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << res->body;
    return nlohmann::json::parse(res->body);
  }

  std::unique_ptr<Service> service;
  httplib::Server server;
  int port = 0;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;
};

TEST_F(HttpTest, GoldenSessionFlow)
{
  auto created = post("/api/sessions", {{"train", {{"text", read_fixture("quick_fox.slash")}}}}, 201);
  auto id = created["id"].get<std::string>();
  EXPECT_EQ(created["version"], 0);
  EXPECT_EQ(get("/api/sessions", 200)["sessions"], nlohmann::json::array({id}));

  auto proposal = post("/api/sessions/" + id + "/propose", {{"rules", read_fixture("np_add.rules")}}, 200);
  auto golden = nlohmann::json::parse(read_fixture("http_propose_quick_fox.json"));
  EXPECT_EQ(proposal, golden) << proposal.dump(2);

  auto committed = post("/api/sessions/" + id + "/commit", nlohmann::json::object(), 200);
  EXPECT_EQ(committed["version"], 1);
  EXPECT_EQ(committed["report"]["recall"], 50.0);

  auto view = get("/api/sessions/" + id + "/view?start=0&end=1", 200);
  EXPECT_EQ(view["which"], "committed");
  EXPECT_EQ(view["sentences"][0]["predicted"], nlohmann::json::parse("[[0,3]]"));
  EXPECT_EQ(view["sentences"][0]["tokens"][5]["category"], 3);

  auto rules = client->Get("/api/sessions/" + id + "/rules");
  ASSERT_TRUE(rules);
  EXPECT_EQ(rules->body, read_fixture("np_add.rules"));

  auto reports = get("/api/sessions/" + id + "/reports", 200);
  EXPECT_EQ(reports["history"].size(), 2u);
  EXPECT_TRUE(reports["test"].is_null());
}

TEST_F(HttpTest, ErrorStatuses)
{
  auto id = post("/api/sessions", {{"train", {{"text", "( a/DT b/NN ) c/VBD\n"}}}}, 201)["id"].get<std::string>();
  auto bad_corpus = post("/api/sessions", {{"train", {{"text", "( a/DT\n"}}}}, 400);
  EXPECT_EQ(bad_corpus["error"], "parse");
  EXPECT_EQ(bad_corpus["line"], 1);
  post("/api/sessions", {{"train", {{"text", "a/DT"}, {"format", "xml"}}}}, 422);
  post("/api/sessions/" + id + "/commit", nlohmann::json::object(), 409);
  post("/api/sessions/" + id + "/rollback", nlohmann::json::object(), 409);
  post("/api/sessions/nosuch/propose", {{"rules", ""}}, 404);
  auto bad_rule = post("/api/sessions/" + id + "/propose", {{"rules", "A\n-\n-\n-\n"}}, 400);
  EXPECT_EQ(bad_rule["error"], "parse");
  get("/api/sessions/" + id + "/view?start=0&end=9", 416);
  get("/api/sessions/" + id + "/view?start=x", 416);
  get("/api/sessions/" + id + "/view?which=tentative", 409);
  auto res = client->Post("/api/sessions", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}
