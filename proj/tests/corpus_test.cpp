#include "panelscope/corpus.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "support.hpp"

namespace panelscope {
namespace {

std::vector<Panel> page_panels(const std::string& book, int page, int n) {
    std::vector<Panel> out;
    for (int i = 0; i < n; ++i) out.push_back({book, page, i, std::nullopt});
    return out;
}

Corpus one_page(int n) { return Corpus({{"b", "B", "humor", 1}}, page_panels("b", 0, n)); }

TEST(CorpusTest, ThreePanelsGiveTwoPairs) {
    auto c = one_page(3);
    EXPECT_EQ(c.panel_count(), 3u);
    auto pairs = extract_all_pairs(c);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_EQ(pairs[0], make_pair("b", 0, 0));
    EXPECT_EQ(pairs[1], make_pair("b", 0, 1));
}

TEST(CorpusTest, NonContiguousPanelIndicesRejected) {
    std::vector<Panel> panels = {{"b", 0, 0, std::nullopt}, {"b", 0, 2, std::nullopt}};
    EXPECT_THROW(Corpus({{"b", "B", "humor", 1}}, panels), ValidationError);
}

TEST(CorpusTest, StructuralErrors) {
    EXPECT_THROW(Corpus({{"b", "", "humor", 1}, {"b", "", "humor", 1}}, {}), ValidationError);
    EXPECT_THROW(Corpus({{"b", "", "humor", 0}}, {}), ValidationError);
    EXPECT_THROW(Corpus({{"b", "", "humor", 1}}, {{"x", 0, 0, std::nullopt}}), ValidationError);
    EXPECT_THROW(Corpus({{"b", "", "humor", 1}}, {{"b", 1, 0, std::nullopt}}), ValidationError);
    EXPECT_THROW(Corpus({{"b", "", "humor", 1}}, {{"b", 0, 0, std::nullopt}, {"b", 0, 0, std::nullopt}}),
                 ValidationError);
    EXPECT_THROW(Corpus({{"b", "", "not a genre", 1}}, {}), ValidationError);
}

TEST(CorpusTest, PanelsMayArriveOutOfOrder) {
    std::vector<Panel> panels = {{"b", 0, 2, std::nullopt}, {"b", 0, 0, std::nullopt}, {"b", 0, 1, std::nullopt}};
    Corpus c({{"b", "", "humor", 1}}, panels);
    EXPECT_EQ(c.pages("b")[0][2].panel_index, 2);
}

TEST(ExtractPairsTest, FourPanelPage) {
    auto pairs = extract_pairs("b", one_page(4));
    ASSERT_EQ(pairs.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(pairs[static_cast<std::size_t>(i)].first_panel_index, i);
        EXPECT_EQ(pairs[static_cast<std::size_t>(i)].second_panel_index, i + 1);
    }
}

TEST(ExtractPairsTest, SinglePanelPageIsEmpty) { EXPECT_TRUE(extract_pairs("b", one_page(1)).empty()); }

TEST(ExtractPairsTest, TwoPagesKeepPageOrder) {
    auto panels = page_panels("b", 0, 4);
    auto p1 = page_panels("b", 1, 3);
    panels.insert(panels.end(), p1.begin(), p1.end());
    Corpus c({{"b", "", "humor", 2}}, panels);
    auto pairs = extract_pairs("b", c);
    ASSERT_EQ(pairs.size(), 5u);
    std::vector<std::pair<int, int>> got;
    for (const auto& p : pairs) got.emplace_back(p.page_index, p.first_panel_index);
    std::vector<std::pair<int, int>> want = {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}};
    EXPECT_EQ(got, want);
}

TEST(ExtractPairsTest, CrossPageOnlyWhenEnabled) {
    auto panels = page_panels("b", 0, 2);
    auto p1 = page_panels("b", 1, 2);
    panels.insert(panels.end(), p1.begin(), p1.end());
    Corpus c({{"b", "", "humor", 2}}, panels);
    EXPECT_EQ(extract_pairs("b", c).size(), 2u);
    auto all = extract_pairs("b", c, {.cross_page = true});
    ASSERT_EQ(all.size(), 3u);
    const auto& x = all[1];
    EXPECT_TRUE(x.crosses_page);
    EXPECT_EQ(x.first_key(), (PanelKey{"b", 0, 1}));
    EXPECT_EQ(x.second_key(), (PanelKey{"b", 1, 0}));
    EXPECT_TRUE(c.has_pair(x));
    EXPECT_EQ(parse_pair_key(x.key()), x);
}

TEST(ExtractPairsTest, UnknownBook) { EXPECT_THROW(extract_pairs("zzz", one_page(2)), NotFoundError); }

// 30 books whose page sizes are drawn at random, then topped up so the
// within-page pair total is exactly 22197. Oracle: sum of (panels - 1).
TEST(ExtractPairsTest, ThirtyBookManifest) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> panels_per_page(1, 9);
    std::vector<BookMeta> books;
    std::vector<std::vector<int>> sizes(30);
    long expected = 0;
    for (int b = 0; b < 30; ++b) {
        for (int p = 0; p < 90; ++p) {
            sizes[static_cast<std::size_t>(b)].push_back(panels_per_page(rng));
            expected += sizes[static_cast<std::size_t>(b)].back() - 1;
        }
    }
    ASSERT_LT(expected, 22197);
    // Remaining pairs go onto extra 10-panel pages (9 pairs each) plus one remainder page.
    long missing = 22197 - expected;
    for (std::size_t b = 0; missing > 0; b = (b + 1) % 30) {
        int add = static_cast<int>(std::min<long>(9, missing));
        sizes[b].push_back(add + 1);
        missing -= add;
    }
    std::vector<Panel> panels;
    long oracle = 0;
    for (int b = 0; b < 30; ++b) {
        std::string id = "book" + std::to_string(b);
        const auto& s = sizes[static_cast<std::size_t>(b)];
        books.push_back({id, id, std::string(kGenres[static_cast<std::size_t>(b) % kGenres.size()]),
                         static_cast<int>(s.size())});
        for (std::size_t p = 0; p < s.size(); ++p) {
            auto pp = page_panels(id, static_cast<int>(p), s[p]);
            panels.insert(panels.end(), pp.begin(), pp.end());
            oracle += s[p] - 1;
        }
    }
    ASSERT_EQ(oracle, 22197);
    Corpus c(books, panels);
    EXPECT_EQ(extract_all_pairs(c).size(), 22197u);
}

TEST(PairKeyTest, RoundTripAndErrors) {
    auto p = make_pair("a:b", 3, 4);
    EXPECT_EQ(p.key(), "a:b:3:4");
    EXPECT_EQ(parse_pair_key(p.key()), p);
    EXPECT_THROW(parse_pair_key("book"), ValidationError);
    EXPECT_THROW(parse_pair_key("book:x:1"), ValidationError);
    EXPECT_THROW(parse_pair_key("book:1:-1"), ValidationError);
}

TEST(PairJsonTest, RejectsNonConsecutive) {
    json j = {{"book_id", "b"}, {"page_index", 0}, {"first_panel_index", 1}, {"second_panel_index", 3}};
    EXPECT_THROW(pair_from_json(j), ValidationError);
    j["second_panel_index"] = 2;
    EXPECT_EQ(pair_from_json(j), make_pair("b", 0, 1));
}

std::vector<AnnotationRecord> records(std::initializer_list<TransitionLabel> ls) {
    std::vector<AnnotationRecord> out;
    int i = 0;
    for (auto l : ls) out.push_back({make_pair("b", 0, i++), "a", l});
    return out;
}

TEST(LabelDistributionTest, AllAct) {
    using enum TransitionLabel;
    auto d = label_distribution(records({ACT, ACT, ACT}));
    EXPECT_EQ(d, (LabelVector{1, 0, 0, 0, 0, 0}));
}

TEST(LabelDistributionTest, ThreeActOneNon) {
    using enum TransitionLabel;
    auto d = label_distribution(records({ACT, ACT, ACT, NON}));
    EXPECT_EQ(d, (LabelVector{.75, 0, 0, 0, 0, .25}));
}

TEST(LabelDistributionTest, EmptyIsError) {
    EXPECT_THROW(label_distribution(std::vector<AnnotationRecord>{}), EmptyInputError);
}

TEST(LabelDistributionTest, SumsToOne) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<AnnotationRecord> rs;
        std::uniform_int_distribution<std::size_t> lab(0, 5);
        for (int i = 0; i < 1 + t * 7; ++i) rs.push_back({make_pair("b", 0, i), "a", label_at(lab(rng))});
        auto d = label_distribution(rs);
        double s = 0;
        for (double v : d) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(GenreTest, Groups) {
    EXPECT_EQ(genre_group_of("sports"), GenreGroup::Action);
    EXPECT_EQ(genre_group_of("battle"), GenreGroup::Action);
    EXPECT_EQ(genre_group_of("four frame cartoons"), GenreGroup::FourPanel);
    EXPECT_EQ(genre_group_of("horror"), std::nullopt);
    EXPECT_EQ(genre_group_of("humor"), std::nullopt);
    EXPECT_EQ(normalize_genre("  Sports "), "sports");
}

TEST(GenreTest, GroupsArePartitionOfTheirMembers) {
    std::set<std::string_view> seen;
    for (auto g : kAllGroups)
        for (auto m : group_members(g)) {
            EXPECT_TRUE(seen.insert(m).second) << m;
            EXPECT_EQ(genre_group_of(m), g);
        }
    EXPECT_EQ(seen.size(), kGenres.size() - 2);
}

TEST(GroundTruthTest, MajorityWithLowestIndexTieBreak) {
    using enum TransitionLabel;
    auto p = make_pair("b", 0, 0);
    auto q = make_pair("b", 0, 1);
    std::vector<AnnotationRecord> rs = {{p, "a", SUB}, {p, "b", SUB}, {p, "c", ACT},
                                        {q, "a", NON}, {q, "b", ASP}};
    auto gt = ground_truth(rs);
    EXPECT_EQ(gt.at(p), SUB);
    EXPECT_EQ(gt.at(q), ASP);
    auto only_a = ground_truth(rs, "a");
    EXPECT_EQ(only_a.at(q), NON);
}

TEST(CorpusTest, LaterAnnotationReplacesEarlier) {
    auto c = one_page(3);
    c.add_annotation({make_pair("b", 0, 0), "a", TransitionLabel::ACT});
    c.add_annotation({make_pair("b", 0, 1), "a", TransitionLabel::ACT});
    c.add_annotation({make_pair("b", 0, 0), "a", TransitionLabel::MOM});
    ASSERT_EQ(c.annotations().size(), 2u);
    EXPECT_EQ(c.annotations()[0].label, TransitionLabel::MOM);
    EXPECT_THROW(c.add_annotation({make_pair("b", 0, 2), "a", TransitionLabel::ACT}), ValidationError);
}

TEST(CorpusIoTest, SaveLoadRoundTrip) {
    testutil::TempDir dir;
    std::vector<Panel> panels = page_panels("b", 0, 3);
    panels[1].image_ref = "img/b_0_1.png";
    Corpus c({{"b", "Title", "Sports", 1}}, panels, {{make_pair("b", 0, 0), "x", TransitionLabel::SCE}});
    save_corpus(c, dir.path());
    auto d = load_corpus(dir.path());
    ASSERT_EQ(d.books().size(), 1u);
    EXPECT_EQ(d.books()[0], c.books()[0]);
    EXPECT_EQ(d.pages("b"), c.pages("b"));
    ASSERT_EQ(d.annotations().size(), 1u);
    EXPECT_EQ(d.annotations()[0], c.annotations()[0]);
}

TEST(CorpusIoTest, UnknownFieldsIgnoredAndLineNumbersReported) {
    testutil::TempDir dir;
    {
        std::ofstream(dir / "books.jsonl") << R"({"book_id":"b","genre":"humor","page_count":1,"extra":5})" << "\n";
        std::ofstream(dir / "panels.jsonl") << R"({"book_id":"b","page_index":0,"panel_index":0,"bbox":[1,2]})"
                                            << "\n\n"
                                            << R"({"book_id":"b","page_index":0,"panel_index":1})" << "\n";
    }
    EXPECT_EQ(load_corpus(dir.path()).panel_count(), 2u);
    { std::ofstream(dir / "annotations.jsonl") << "{}\n{broken\n"; }
    try {
        load_corpus(dir.path());
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("annotations.jsonl:1"), std::string::npos) << e.what();
    }
}

}  // namespace
}  // namespace panelscope
