#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ragcrit/metrics.hpp"

using namespace ragcrit;

TEST(Levenshtein, Classic) { EXPECT_EQ(levenshtein("kitten", "sitting"), 3u); }

TEST(Levenshtein, IdentityAndEmpty) {
    EXPECT_EQ(levenshtein("same text", "same text"), 0u);
    EXPECT_EQ(levenshtein("", "abc"), 3u);
    EXPECT_EQ(levenshtein("abc", ""), 3u);
    EXPECT_EQ(levenshtein("", ""), 0u);
}

TEST(Levenshtein, CountsCodePointsNotBytes) {
    EXPECT_EQ(levenshtein("λ", "l"), 1u);
    EXPECT_EQ(levenshtein("中文", "中"), 1u);
    EXPECT_EQ(levenshtein("😀", ""), 1u);
}

TEST(Levenshtein, MatchesOracleOnRandomPairs) {
    std::mt19937_64 rng(29);
    for (int i = 0; i < 2000; ++i) {
        const auto a = oracle::random_u32(rng, 25);
        const auto b = oracle::random_u32(rng, 25);
        ASSERT_EQ(levenshtein(oracle::utf8(a), oracle::utf8(b)), oracle::levenshtein(a, b));
    }
}

TEST(Levenshtein, SymmetricAndTriangle) {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 1000; ++i) {
        const auto a = oracle::utf8(oracle::random_u32(rng, 15));
        const auto b = oracle::utf8(oracle::random_u32(rng, 15));
        const auto c = oracle::utf8(oracle::random_u32(rng, 15));
        EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
        EXPECT_LE(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c));
    }
}

TEST(Utf8, InvalidBytesBecomeReplacement) {
    const auto s = decode_utf8("a\xFF" "b");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[1], U'�');
}

TEST(EditSimilarity, Examples) {
    EXPECT_DOUBLE_EQ(edit_similarity("abc", "abc"), 1.0);
    EXPECT_NEAR(edit_similarity("abc", "abd"), 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(edit_similarity("", ""), 1.0);
    EXPECT_DOUBLE_EQ(edit_similarity("", "ab"), 0.0);
}

TEST(EditSimilarity, SymmetricBoundedAndOneIffEqual) {
    std::mt19937_64 rng(37);
    for (int i = 0; i < 2000; ++i) {
        const auto a = oracle::utf8(oracle::random_u32(rng, 6));
        const auto b = oracle::utf8(oracle::random_u32(rng, 6));
        const double es = edit_similarity(a, b);
        EXPECT_EQ(es, edit_similarity(b, a));
        EXPECT_GE(es, 0.0);
        EXPECT_LE(es, 1.0);
        EXPECT_EQ(es == 1.0, a == b);
    }
}

TEST(ExactMatch, Examples) {
    EXPECT_TRUE(exact_match("x = 1", "x = 1"));
    EXPECT_TRUE(exact_match("x = 1  \n", "x = 1"));
    EXPECT_FALSE(exact_match("x = 1", "x = 2"));
    EXPECT_TRUE(exact_match("a  \nb\t\n\n\n", "a\nb"));
    EXPECT_FALSE(exact_match("  a", "a"));
}

TEST(ExactMatch, ImpliesFullSimilarityWithoutTrailingWhitespace) {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 2000; ++i) {
        auto a = oracle::utf8(oracle::random_u32(rng, 4));
        auto b = oracle::utf8(oracle::random_u32(rng, 4));
        while (!a.empty() && (a.back() == ' ' || a.back() == '\n')) a.pop_back();
        while (!b.empty() && (b.back() == ' ' || b.back() == '\n')) b.pop_back();
        if (normalize_for_match(a) != a || normalize_for_match(b) != b) continue;
        if (exact_match(a, b)) {
            EXPECT_EQ(edit_similarity(a, b), 1.0);
        }
    }
}

TEST(ScoreTarget, Examples) {
    const CompletionSample s{"id", "p", "abcd", std::nullopt};
    PredictionTrace t;
    t.text = "abcd";
    EXPECT_EQ(score_target(s, t), 1.0);
    t.text = "abXd";
    EXPECT_DOUBLE_EQ(score_target(s, t), 0.75);
    const CompletionSample s2{"id", "p", "ab", std::nullopt};
    t.text = "";
    EXPECT_EQ(score_target(s2, t), 0.0);
}

TEST(Truncation, KeepsGroundTruthLineCount) {
    EXPECT_EQ(truncate_lines("a\nb\nc", 2), "a\nb");
    EXPECT_EQ(truncate_lines("a\nb", 5), "a\nb");
    EXPECT_EQ(count_lines("a\nb\nc"), 3u);
    const CompletionSample s{"id", "p", "one line", std::nullopt};
    PredictionTrace t;
    t.text = "one line\nextra";
    EXPECT_LT(score_target(s, t, false), 1.0);
    EXPECT_EQ(score_target(s, t, true), 1.0);
    const auto m = evaluate_prediction("x\ny", "x\ny\nz", true);
    EXPECT_TRUE(m.em);
    EXPECT_EQ(m.es, 1.0);
}
