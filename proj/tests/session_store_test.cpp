#include "panelscope/session_store.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <future>
#include <thread>

#include "support.hpp"

namespace panelscope {
namespace {

std::vector<PanelPair> pairs_of(int n, const std::string& book = "b") {
    std::vector<PanelPair> out;
    for (int i = 0; i < n; ++i) out.push_back(make_pair(book, 0, i));
    return out;
}

TEST(SessionStoreTest, CreateAndWalkQueue) {
    testutil::TempDir dir;
    SessionStore store(dir / "log.jsonl");
    auto ps = pairs_of(3);
    auto c = store.create("ann", ps, SessionMode::GroundTruth);
    EXPECT_EQ(c.session_id, "s1");
    EXPECT_TRUE(c.warnings.empty());
    EXPECT_EQ(store.next(c.session_id), ps[0]);
    store.submit(c.session_id, ps[0], TransitionLabel::ACT);
    EXPECT_EQ(store.next(c.session_id), ps[1]);
    // out-of-order submission is accepted; next() is the first pending task
    auto p = store.submit(c.session_id, ps[2], TransitionLabel::SUB);
    EXPECT_EQ(p.completed, 2u);
    EXPECT_EQ(p.total, 3u);
    EXPECT_FALSE(p.complete);
    EXPECT_EQ(store.next(c.session_id), ps[1]);
    p = store.submit(c.session_id, ps[1], TransitionLabel::NON);
    EXPECT_TRUE(p.complete);
    EXPECT_FALSE(store.next(c.session_id).has_value());
    EXPECT_EQ(store.create("ann", ps, SessionMode::GroundTruth).session_id, "s2");
}

TEST(SessionStoreTest, DuplicatesDroppedWithWarning) {
    testutil::TempDir dir;
    SessionStore store(dir / "log.jsonl");
    auto ps = pairs_of(2);
    ps.push_back(ps[0]);
    testutil::WarningCapture w;
    auto c = store.create("ann", ps, SessionMode::GroundTruth);
    ASSERT_EQ(c.warnings.size(), 1u);
    EXPECT_TRUE(w.contains("duplicate pair b:0:0"));
    EXPECT_EQ(store.get(c.session_id).task_queue.size(), 2u);
}

TEST(SessionStoreTest, ValidationErrors) {
    testutil::TempDir dir;
    SessionStore store(dir / "log.jsonl");
    EXPECT_THROW(store.create("ann", {}, SessionMode::GroundTruth), ValidationError);
    auto ps = pairs_of(1);
    EXPECT_THROW(store.create("", ps, SessionMode::GroundTruth), ValidationError);
    EXPECT_THROW(store.get("s9"), NotFoundError);
    EXPECT_THROW(parse_session_mode("later"), ValidationError);
}

TEST(SessionStoreTest, UnknownPairRejectedWithCorpus) {
    testutil::TempDir dir;
    Corpus corpus({{"b", "B", "humor", 1}}, {{"b", 0, 0, {}}, {"b", 0, 1, {}}});
    SessionStore store(dir / "log.jsonl", &corpus);
    std::vector<PanelPair> ok = {make_pair("b", 0, 0)};
    std::vector<PanelPair> bad = {make_pair("b", 0, 1)};
    EXPECT_NO_THROW(store.create("a", ok, SessionMode::GroundTruth));
    EXPECT_THROW(store.create("a", bad, SessionMode::GroundTruth), ValidationError);
}

TEST(SessionStoreTest, Conflicts) {
    testutil::TempDir dir;
    SessionStore store(dir / "log.jsonl");
    auto ps = pairs_of(2);
    auto id = store.create("ann", ps, SessionMode::GroundTruth).session_id;
    store.submit(id, ps[0], TransitionLabel::ACT);
    EXPECT_THROW(store.submit(id, ps[0], TransitionLabel::ASP), ConflictError);
    EXPECT_THROW(store.submit(id, make_pair("other", 0, 0), TransitionLabel::ASP), ConflictError);
    EXPECT_EQ(store.get(id).completed.at(ps[0]), TransitionLabel::ACT);
    store.abandon(id);
    EXPECT_THROW(store.submit(id, ps[1], TransitionLabel::ASP), ConflictError);
    EXPECT_TRUE(store.progress(id).abandoned);

    auto done = store.create("ann", std::vector<PanelPair>{ps[0]}, SessionMode::GroundTruth).session_id;
    store.submit(done, ps[0], TransitionLabel::ACT);
    EXPECT_THROW(store.abandon(done), ConflictError);
}

TEST(SessionStoreTest, ReplayRestoresState) {
    testutil::TempDir dir;
    auto log = dir / "log.jsonl";
    std::vector<Session> before;
    {
        SessionStore store(log);
        auto a = pairs_of(4);
        auto b = pairs_of(3, "c");
        auto s1 = store.create("ann", a, SessionMode::GroundTruth).session_id;
        auto s2 = store.create("bob", b, SessionMode::RoundFeedback, 2).session_id;
        store.submit(s1, a[1], TransitionLabel::SCE);
        store.submit(s1, a[0], TransitionLabel::MOM);
        store.submit(s2, b[0], TransitionLabel::NON);
        store.abandon(s2);
        before = store.sessions();
    }
    SessionStore again(log);
    EXPECT_EQ(again.sessions(), before);
    EXPECT_EQ(again.get("s2").round_index, 2);
    EXPECT_EQ(again.create("ann", pairs_of(1), SessionMode::GroundTruth).session_id, "s3");
}

TEST(SessionStoreTest, TornTrailingLineIgnored) {
    testutil::TempDir dir;
    auto log = dir / "log.jsonl";
    auto ps = pairs_of(2);
    {
        SessionStore store(log);
        auto id = store.create("ann", ps, SessionMode::GroundTruth).session_id;
        store.submit(id, ps[0], TransitionLabel::ACT);
    }
    {
        std::ofstream f(log, std::ios::app);
        f << R"({"type":"label","session_id":"s1","annotator_id":"ann","pair":{"book_id":"b","page_)";
    }
    testutil::WarningCapture w;
    SessionStore store(log);
    EXPECT_TRUE(w.contains("incomplete trailing record"));
    EXPECT_EQ(store.get("s1").completed.size(), 1u);
}

TEST(SessionStoreTest, CorruptMiddleLineIsError) {
    testutil::TempDir dir;
    auto log = dir / "log.jsonl";
    {
        std::ofstream f(log);
        f << "{not json\n{\"type\":\"session_abandoned\",\"session_id\":\"s1\"}\n";
    }
    EXPECT_THROW(SessionStore{log}, ParseError);
}

TEST(SessionStoreTest, ExportRoundTrip) {
    testutil::TempDir dir;
    auto log = dir / "log.jsonl";
    SessionStore store(log);
    auto ps = pairs_of(3);
    auto id = store.create("ann", ps, SessionMode::GroundTruth).session_id;
    std::vector<AnnotationRecord> expect;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto l = label_at(i + 1);
        store.submit(id, ps[i], l);
        expect.push_back({ps[i], "ann", l});
    }
    EXPECT_EQ(export_annotations(log), expect);
    auto out = dir / "exported.jsonl";
    save_annotations(out, expect);
    EXPECT_EQ(load_annotations(out), expect);
}

TEST(SessionStoreTest, AnnotatorsAreIsolated) {
    testutil::TempDir dir;
    SessionStore store(dir / "log.jsonl");
    auto ps = pairs_of(2);
    auto a = store.create("ann", ps, SessionMode::GroundTruth).session_id;
    auto b = store.create("bob", ps, SessionMode::GroundTruth).session_id;
    store.submit(a, ps[0], TransitionLabel::ACT);
    store.submit(b, ps[0], TransitionLabel::SUB);
    EXPECT_EQ(store.get(a).completed.at(ps[0]), TransitionLabel::ACT);
    EXPECT_EQ(store.get(b).completed.at(ps[0]), TransitionLabel::SUB);
    EXPECT_EQ(store.progress(b).completed, 1u);
}

TEST(SessionFeedbackTest, BlocksUntilAnnotatorFinishes) {
    testutil::TempDir dir;
    SessionStore store(dir / "log.jsonl");
    auto ps = pairs_of(3);
    std::vector<TransitionLabel> truth = {TransitionLabel::ASP, TransitionLabel::ACT, TransitionLabel::MOM};
    std::promise<std::string> started;
    SessionFeedback fb(store, "ann", [&](const std::string& id) { started.set_value(id); });
    std::thread annotator([&] {
        auto id = started.get_future().get();
        auto s = store.get(id);
        EXPECT_EQ(s.mode, SessionMode::RoundFeedback);
        EXPECT_EQ(s.round_index, 4);
        // answer in reverse to make sure labels come back in batch order
        for (int i = 2; i >= 0; --i) store.submit(id, ps[static_cast<std::size_t>(i)], truth[static_cast<std::size_t>(i)]);
    });
    auto got = fb.collect(4, ps);
    annotator.join();
    EXPECT_EQ(got, truth);
}

TEST(SessionFeedbackTest, AbandonAborts) {
    testutil::TempDir dir;
    SessionStore store(dir / "log.jsonl");
    auto ps = pairs_of(2);
    SessionFeedback fb(store, "ann", [&](const std::string& id) {
        std::thread([&store, id] {
            store.submit(id, make_pair("b", 0, 0), TransitionLabel::ACT);
            store.abandon(id);
        }).detach();
    });
    EXPECT_THROW(fb.collect(0, ps), AbortedError);
}

}  // namespace
}  // namespace panelscope
