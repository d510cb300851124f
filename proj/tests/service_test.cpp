#include "panelscope/service.hpp"

#include <gtest/gtest.h>
#include <signal.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

#include "serve_process.hpp"
#include "support.hpp"

namespace panelscope {
namespace {

// Two books; "pic" has image_refs (relative to the corpus dir), "plain" has none.
Corpus small_corpus(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "img");
    std::vector<Panel> panels;
    for (int i = 0; i < 3; ++i) {
        auto ref = "img/pic_" + std::to_string(i) + ".png";
        std::ofstream(dir / ref, std::ios::binary) << "\x89PNG-fake-" << i;
        panels.push_back({"pic", 0, i, ref});
        panels.push_back({"plain", 0, i, std::nullopt});
    }
    return Corpus({{"pic", "Pic", "humor", 1}, {"plain", "Plain", "battle", 1}}, panels);
}

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        corpus_ = small_corpus(dir_.path());
        store_ = std::make_unique<SessionStore>(dir_ / "sessions.jsonl", &corpus_);
        service_ = std::make_unique<AnnotationService>(*store_, &corpus_, dir_.path());
        service_->mount(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    json post(const std::string& path, const json& body, int expect) {
        auto r = client_->Post(path, body.dump(), "application/json");
        EXPECT_TRUE(r);
        if (!r) return {};
        EXPECT_EQ(r->status, expect) << r->body;
        return json::parse(r->body);
    }
    json get(const std::string& path, int expect = 200) {
        auto r = client_->Get(path);
        EXPECT_TRUE(r);
        if (!r) return {};
        EXPECT_EQ(r->status, expect) << r->body;
        return json::parse(r->body);
    }

    std::string create(const std::vector<std::string>& keys, const std::string& annotator = "ann") {
        return post("/sessions", {{"annotator_id", annotator}, {"pairs", keys}}, 201).at("session_id");
    }

    testutil::TempDir dir_;
    Corpus corpus_;
    std::unique_ptr<SessionStore> store_;
    std::unique_ptr<AnnotationService> service_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceTest, FullSessionWalk) {
    json created = post("/sessions",
                        {{"annotator_id", "ann"},
                         {"pairs", json::array({"pic:0:0", to_json(make_pair("pic", 0, 1))})},
                         {"mode", "ground_truth"}},
                        201);
    const std::string id = created.at("session_id");
    EXPECT_EQ(created.at("total"), 2);

    json next = get("/sessions/" + id + "/next");
    EXPECT_EQ(next.at("status"), "pending");
    EXPECT_EQ(next.at("key"), "pic:0:0");
    EXPECT_EQ(next.at("image_refs"), json::array({"img/pic_0.png", "img/pic_1.png"}));

    json ack = post("/sessions/" + id + "/labels", {{"key", "pic:0:0"}, {"label", "ACT"}}, 200);
    EXPECT_EQ(ack.at("ack"), true);
    EXPECT_EQ(ack.at("progress").at("completed"), 1);

    ack = post("/sessions/" + id + "/labels", {{"pair", to_json(make_pair("pic", 0, 1))}, {"label", "sub"}}, 200);
    EXPECT_EQ(ack.at("progress").at("complete"), true);

    json done = get("/sessions/" + id + "/next");
    EXPECT_EQ(done.at("status"), "complete");
    EXPECT_EQ(done.at("summary").at("per_label").at("ACT"), 1);
    EXPECT_EQ(done.at("summary").at("per_label").at("SUB"), 1);

    json prog = get("/sessions/" + id + "/progress");
    EXPECT_EQ(prog.at("completed"), 2);
    EXPECT_EQ(prog.at("annotator_id"), "ann");
    EXPECT_TRUE(prog.at("round_index").is_null());

    json list = get("/sessions");
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0].at("session_id"), id);
}

TEST_F(ServiceTest, NoPredictionIsExposed) {
    json created = post("/sessions",
                        {{"annotator_id", "ann"}, {"pairs", {"pic:0:0"}}, {"mode", "round_feedback"}, {"round_index", 3}},
                        201);
    json next = get("/sessions/" + created.at("session_id").get<std::string>() + "/next");
    EXPECT_EQ(next.at("mode"), "round_feedback");
    const auto text = next.dump();
    for (const char* word : {"predict", "score", "label\""}) EXPECT_EQ(text.find(word), std::string::npos) << word;
}

TEST_F(ServiceTest, Errors) {
    get("/sessions/nope/next", 404);
    get("/sessions/nope/progress", 404);
    post("/sessions/nope/labels", {{"key", "pic:0:0"}, {"label", "ACT"}}, 404);
    post("/sessions", {{"annotator_id", "ann"}, {"pairs", json::array()}}, 400);
    post("/sessions", {{"annotator_id", ""}, {"pairs", {"pic:0:0"}}}, 400);
    post("/sessions", {{"annotator_id", "ann"}, {"pairs", {"pic:0:2"}}}, 400);  // not a pair of the corpus
    post("/sessions", {{"annotator_id", "ann"}, {"pairs", {"pic:zero:0"}}}, 400);
    post("/sessions", {{"annotator_id", "ann"}, {"pairs", {"pic:0:0"}}, {"mode", "whenever"}}, 400);
    auto r = client_->Post("/sessions", "{oops", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);

    auto id = create({"pic:0:0", "pic:0:1"});
    post("/sessions/" + id + "/labels", {{"key", "pic:0:0"}, {"label", "XYZ"}}, 400);
    post("/sessions/" + id + "/labels", {{"label", "ACT"}}, 400);
    post("/sessions/" + id + "/labels", {{"key", "plain:0:0"}, {"label", "ACT"}}, 409);
    post("/sessions/" + id + "/labels", {{"key", "pic:0:0"}, {"label", "ACT"}}, 200);
    post("/sessions/" + id + "/labels", {{"key", "pic:0:0"}, {"label", "ASP"}}, 409);
}

TEST_F(ServiceTest, DuplicatePairsWarn) {
    json created = post("/sessions", {{"annotator_id", "ann"}, {"pairs", {"pic:0:0", "pic:0:0"}}}, 201);
    EXPECT_EQ(created.at("total"), 1);
    EXPECT_EQ(created.at("warnings").size(), 1u);
}

TEST_F(ServiceTest, AbandonViaDelete) {
    auto id = create({"pic:0:0", "pic:0:1"});
    auto r = client_->Delete("/sessions/" + id);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body).at("abandoned"), true);
    EXPECT_EQ(get("/sessions/" + id + "/next").at("status"), "abandoned");
    post("/sessions/" + id + "/labels", {{"key", "pic:0:0"}, {"label", "ACT"}}, 409);
    EXPECT_EQ(client_->Delete("/sessions/zzz")->status, 404);
}

TEST_F(ServiceTest, ImageEndpoints) {
    json refs = get("/pairs/pic:0:1/images");
    EXPECT_EQ(refs.at("first"), "img/pic_1.png");
    EXPECT_EQ(refs.at("second"), "img/pic_2.png");
    auto r = client_->Get("/pairs/pic:0:1/images/second");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(r->body, "\x89PNG-fake-2");
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    get("/pairs/plain:0:0/images", 404);
    EXPECT_EQ(client_->Get("/pairs/plain:0:0/images/first")->status, 404);
    EXPECT_EQ(client_->Get("/pairs/bad-key/images")->status, 400);
    json plain_next = get("/sessions/" + create({"plain:0:0"}) + "/next");
    EXPECT_TRUE(plain_next.at("image_refs").is_null());
}

TEST_F(ServiceTest, ConcurrentAnnotatorsStayIsolated) {
    auto a = create({"pic:0:0", "pic:0:1", "plain:0:0", "plain:0:1"}, "ann");
    auto b = create({"pic:0:0", "pic:0:1", "plain:0:0", "plain:0:1"}, "bob");
    auto worker = [&](const std::string& id, const std::string& label) {
        httplib::Client c("127.0.0.1", port_);
        for (;;) {
            auto n = json::parse(c.Get("/sessions/" + id + "/next")->body);
            if (n.at("status") == "complete") return;
            c.Post("/sessions/" + id + "/labels", json{{"key", n.at("key")}, {"label", label}}.dump(), "application/json");
        }
    };
    std::thread ta(worker, a, "ACT"), tb(worker, b, "NON");
    ta.join();
    tb.join();
    for (const auto& [p, l] : store_->get(a).completed) EXPECT_EQ(l, TransitionLabel::ACT);
    for (const auto& [p, l] : store_->get(b).completed) EXPECT_EQ(l, TransitionLabel::NON);
    EXPECT_EQ(store_->get(a).completed.size(), 4u);
}

// Labels acknowledged over HTTP survive SIGKILL of the server process.
TEST(ServiceDurabilityTest, AcknowledgedLabelsSurviveKill) {
    testutil::TempDir dir;
    const auto log = dir / "sessions.jsonl";
    std::string id;
    json before;
    {
        testutil::ServeProcess srv(PANELSCOPE_CLI, PANELSCOPE_SAMPLE_DIR, log);
        httplib::Client c("127.0.0.1", srv.port());
        auto r = c.Post("/sessions", json{{"annotator_id", "ann"}, {"pairs", {"sample00:0:0", "sample00:0:1", "sample00:1:0"}}}.dump(),
                        "application/json");
        ASSERT_TRUE(r);
        ASSERT_EQ(r->status, 201) << r->body;
        id = json::parse(r->body).at("session_id");
        for (const char* key : {"sample00:0:0", "sample00:1:0"}) {
            auto ack = c.Post("/sessions/" + id + "/labels", json{{"key", key}, {"label", "MOM"}}.dump(), "application/json");
            ASSERT_TRUE(ack);
            ASSERT_EQ(ack->status, 200);
        }
        before = json::parse(c.Get("/sessions")->body);
        srv.kill_hard();
    }
    testutil::ServeProcess again(PANELSCOPE_CLI, PANELSCOPE_SAMPLE_DIR, log);
    httplib::Client c("127.0.0.1", again.port());
    EXPECT_EQ(json::parse(c.Get("/sessions")->body), before);
    auto next = json::parse(c.Get("/sessions/" + id + "/next")->body);
    EXPECT_EQ(next.at("key"), "sample00:0:1");
    EXPECT_EQ(next.at("progress").at("completed"), 2);
}

}  // namespace
}  // namespace panelscope
