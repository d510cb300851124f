#include "panelscope/agreement.hpp"

#include <gtest/gtest.h>

#include <random>

namespace panelscope {
namespace {

using enum TransitionLabel;

// Textbook form: p_o from the diagonal, p_e from products of marginal
// proportions.
double oracle_kappa(const std::vector<std::vector<std::uint64_t>>& m) {
    const std::size_t k = m.size();
    double n = 0, diag = 0;
    std::vector<double> row(k, 0), col(k, 0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            n += static_cast<double>(m[i][j]);
            row[i] += static_cast<double>(m[i][j]);
            col[j] += static_cast<double>(m[i][j]);
            if (i == j) diag += static_cast<double>(m[i][j]);
        }
    double po = diag / n, pe = 0;
    for (std::size_t i = 0; i < k; ++i) pe += (row[i] / n) * (col[i] / n);
    return (po - pe) / (1 - pe);
}

TEST(KappaTest, HandComputedTwoByTwo) {
    // p_o = 35/50 = 0.7; rows (25, 25), cols (30, 20): p_e = .5*.6 + .5*.4 = 0.5
    auto s = cohen_kappa(ConfusionMatrix::from_rows({{20, 5}, {10, 15}}));
    EXPECT_NEAR(s.observed_agreement, 0.7, 1e-15);
    EXPECT_NEAR(s.expected_agreement, 0.5, 1e-15);
    EXPECT_NEAR(s.kappa, 0.4, 1e-15);
    EXPECT_EQ(s.band, "fair");
}

TEST(KappaTest, PerfectAgreementIsExactlyOne) {
    auto m = confusion_from_labels(std::vector{ACT, ASP, ACT, NON}, std::vector{ACT, ASP, ACT, NON});
    EXPECT_EQ(cohen_kappa(m).kappa, 1.0);
}

TEST(KappaTest, SymmetricUnderTransposition) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::uint64_t> cell(0, 30);
    for (int t = 0; t < 100; ++t) {
        ConfusionMatrix m;
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) m.add(i, j, cell(rng));
        EXPECT_NEAR(cohen_kappa(m).kappa, cohen_kappa(m.transposed()).kappa, 1e-14);
    }
}

TEST(KappaTest, RandomMatricesMatchOracle) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 200; ++t) {
        std::size_t k = 2 + static_cast<std::size_t>(t % 5);
        std::vector<std::vector<std::uint64_t>> rows(k, std::vector<std::uint64_t>(k));
        std::uniform_int_distribution<std::uint64_t> cell(0, 1000 / (k * k));
        for (auto& r : rows)
            for (auto& c : r) c = cell(rng);
        auto m = ConfusionMatrix::from_rows(rows);
        auto s = try_cohen_kappa(m);
        if (!s) continue;
        EXPECT_NEAR(s->kappa, oracle_kappa(rows), 1e-12);
        EXPECT_GE(s->kappa, -1.0);
        EXPECT_LE(s->kappa, 1.0);
    }
}

TEST(KappaTest, SingleSharedLabelIsDegenerate) {
    auto m = confusion_from_labels(std::vector{ACT, ACT}, std::vector{ACT, ACT});
    EXPECT_THROW(cohen_kappa(m), DegenerateError);
    EXPECT_FALSE(try_cohen_kappa(m).has_value());
}

TEST(KappaTest, EmptyMatrixIsError) { EXPECT_THROW(cohen_kappa(ConfusionMatrix{}), EmptyInputError); }

TEST(KappaBandTest, QuotedValues) {
    EXPECT_EQ(interpret_kappa(0.774), "substantial");
    EXPECT_EQ(interpret_kappa(0.5131), "moderate");
    EXPECT_EQ(interpret_kappa(-0.1), "no agreement");
}

TEST(KappaBandTest, UpperEndsClosed) {
    EXPECT_EQ(interpret_kappa(0.0), "no agreement");
    EXPECT_EQ(interpret_kappa(0.20), "none to slight");
    EXPECT_EQ(interpret_kappa(0.40), "fair");
    EXPECT_EQ(interpret_kappa(0.60), "moderate");
    EXPECT_EQ(interpret_kappa(0.80), "substantial");
    EXPECT_EQ(interpret_kappa(0.81), "almost perfect");
    EXPECT_EQ(interpret_kappa(1.0), "almost perfect");
    EXPECT_THROW(interpret_kappa(1.5), ValidationError);
}

std::vector<AnnotationRecord> rater(const std::string& id, std::vector<TransitionLabel> ls, int offset = 0) {
    std::vector<AnnotationRecord> out;
    for (std::size_t i = 0; i < ls.size(); ++i) out.push_back({make_pair("b", 0, static_cast<int>(i) + offset), id, ls[i]});
    return out;
}

TEST(BuildConfusionTest, IdenticalRaters) {
    std::vector<TransitionLabel> ten(10, ACT);
    auto m = build_confusion(rater("a", ten), rater("b", ten));
    EXPECT_EQ(m.at(ACT, ACT), 10u);
    EXPECT_EQ(m.total(), 10u);
}

TEST(BuildConfusionTest, RowsAreRaterA) {
    auto m = build_confusion(rater("a", {ACT, ASP}), rater("b", {ASP, ASP}));
    EXPECT_EQ(m.at(ACT, ASP), 1u);
    EXPECT_EQ(m.at(ASP, ASP), 1u);
    EXPECT_EQ(m.total(), 2u);
}

TEST(BuildConfusionTest, OnlyOverlapCounts) {
    std::vector<TransitionLabel> a(200, SUB), b(129, SUB);
    auto m = build_confusion(rater("a", a), rater("b", b, 71));
    EXPECT_EQ(m.total(), 129u);
}

TEST(BuildConfusionTest, NoOverlapIsError) {
    try {
        build_confusion(rater("a", {ACT}), rater("b", {ACT}, 5));
        FAIL();
    } catch (const EmptyInputError& e) {
        EXPECT_NE(std::string(e.what()).find("evaluation-set"), std::string::npos);
    }
}

TEST(AllPairsTest, ListsEveryRaterPair) {
    auto rs = rater("a1", {ACT, ASP, SUB});
    auto r2 = rater("a2", {ACT, ASP, ACT});
    auto r3 = rater("a3", {ACT}, 9);
    rs.insert(rs.end(), r2.begin(), r2.end());
    rs.insert(rs.end(), r3.begin(), r3.end());
    auto all = all_pairs_agreement(rs);
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[0].rater_a, "a1");
    EXPECT_EQ(all[0].rater_b, "a2");
    EXPECT_EQ(all[0].overlap, 3u);
    ASSERT_TRUE(all[0].score.has_value());
    EXPECT_EQ(all[1].overlap, 0u);
    EXPECT_FALSE(all[1].score.has_value());
}

}  // namespace
}  // namespace panelscope
