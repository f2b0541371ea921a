#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "spatten/pruning.hpp"

using namespace spatten;

TEST(AccumulateTokens, UniformProbs) {
    ImportanceState st(4, 1);
    std::vector<Matrix> probs{Matrix(2, 4, 0.25)};
    accumulate_token_importance(st, probs);
    for (double s : st.token_scores) EXPECT_NEAR(s, 0.5, 1e-15);
}

TEST(AccumulateTokens, OneHotProbs) {
    ImportanceState st(4, 3);
    std::vector<Matrix> probs(3, Matrix(2, 4));
    for (auto& m : probs)
        for (std::size_t r = 0; r < 2; ++r) m(r, 3) = 1.0;
    accumulate_token_importance(st, probs);
    EXPECT_NEAR(st.token_scores[3], 6.0, 1e-15);  // h * L0
    for (int t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(st.token_scores[t], 0.0);
}

TEST(AccumulateTokens, ConservationOverRandomRows) {
    std::mt19937_64 rng(3);
    ImportanceState st(16, 4);
    std::vector<Matrix> probs(4, Matrix(5, 16));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& m : probs)
        for (std::size_t r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (std::size_t t = 0; t < 16; ++t) sum += m(r, t) = uni(rng);
            for (std::size_t t = 0; t < 16; ++t) m(r, t) /= sum;
        }
    accumulate_token_importance(st, probs);
    const double total = std::accumulate(st.token_scores.begin(), st.token_scores.end(), 0.0);
    EXPECT_NEAR(total, 4.0 * 5.0, 1e-9);
}

TEST(AccumulateTokens, ShapeMismatchRejected) {
    ImportanceState st(4, 2);
    std::vector<Matrix> probs{Matrix(2, 4)};  // only one head supplied
    EXPECT_THROW(accumulate_token_importance(st, probs), std::invalid_argument);
    probs = {Matrix(2, 3), Matrix(2, 3)};  // wrong token count
    EXPECT_THROW(accumulate_token_importance(st, probs), std::invalid_argument);
}

TEST(AccumulateHeads, ZeroOutputLeavesScores) {
    ImportanceState st(4, 2);
    accumulate_head_importance(st, Matrix(3, 8));
    for (double s : st.head_scores) EXPECT_DOUBLE_EQ(s, 0.0);
}

TEST(AccumulateHeads, CountsAbsoluteValues) {
    ImportanceState st(4, 2);
    Matrix out(2, 6);  // h=2, D=3
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) out(r, c) = r == 0 ? 1.0 : -1.0;
    accumulate_head_importance(st, out);
    EXPECT_NEAR(st.head_scores[0], 6.0, 1e-15);
    EXPECT_DOUBLE_EQ(st.head_scores[1], 0.0);
}

TEST(AccumulateHeads, MatchesNaiveTripleLoop) {
    std::mt19937_64 rng(5);
    ImportanceState st(4, 3);
    Matrix out = random_normal_matrix(4, 12, rng);
    accumulate_head_importance(st, out);
    for (std::size_t h = 0; h < 3; ++h) {
        double want = 0.0;
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 4; ++c) want += std::abs(out(r, h * 4 + c));
        EXPECT_NEAR(st.head_scores[h], want, 1e-12);
    }
}

TEST(AccumulateHeads, IndivisibleWidthRejected) {
    ImportanceState st(4, 3);
    EXPECT_THROW(accumulate_head_importance(st, Matrix(2, 8)), std::invalid_argument);
}

TEST(SelectTokens, RatioOneKeepsEverything) {
    ImportanceState st(8, 1);
    select_tokens(st, 1.0);
    EXPECT_EQ(st.kept_tokens.size(), 8u);
}

TEST(SelectTokens, KeepsHighestScores) {
    ImportanceState st(4, 1);
    st.token_scores = {3, 1, 2, 0};
    select_tokens(st, 0.5);
    EXPECT_EQ(st.kept_tokens, (std::vector<std::size_t>{0, 2}));
}

TEST(SelectTokens, TiesFavorLowIndices) {
    ImportanceState st(4, 1);
    st.token_scores = {1, 1, 1, 1};
    select_tokens(st, 0.5);
    EXPECT_EQ(st.kept_tokens, (std::vector<std::size_t>{0, 1}));
}

TEST(SelectTokens, CeilGuaranteesSurvivor) {
    ImportanceState st(3, 1);
    st.token_scores = {0.1, 0.5, 0.3};
    select_tokens(st, 0.01);
    EXPECT_EQ(st.kept_tokens, (std::vector<std::size_t>{1}));
    EXPECT_THROW(select_tokens(st, 0.0), std::invalid_argument);
}

TEST(SelectTokens, ScaleInvariance) {
    std::mt19937_64 rng(7);
    ImportanceState a(32, 1), b(32, 1);
    std::uniform_real_distribution<double> uni(0.0, 10.0);
    for (std::size_t i = 0; i < 32; ++i) {
        a.token_scores[i] = uni(rng);
        b.token_scores[i] = a.token_scores[i] * 37.5;
    }
    select_tokens(a, 0.4);
    select_tokens(b, 0.4);
    EXPECT_EQ(a.kept_tokens, b.kept_tokens);
}

TEST(SelectHeads, SortOracle) {
    ImportanceState st(4, 4);
    st.head_scores = {5, 1, 4, 2};
    select_heads(st, 0.5);
    EXPECT_EQ(st.kept_heads, (std::vector<std::size_t>{0, 2}));
    select_heads(st, 1.0);
    EXPECT_EQ(st.kept_heads, (std::vector<std::size_t>{0, 2}));
}

TEST(Cascade, KeptSetsOnlyShrink) {
    std::mt19937_64 rng(11);
    ImportanceState st(64, 8);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::size_t> prev_tokens = st.kept_tokens;
    std::vector<std::size_t> prev_heads = st.kept_heads;
    for (int layer = 0; layer < 12; ++layer) {
        for (double& s : st.token_scores) s += uni(rng);
        for (double& s : st.head_scores) s += uni(rng);
        select_tokens(st, 0.85);
        select_heads(st, 0.9);
        EXPECT_TRUE(std::includes(prev_tokens.begin(), prev_tokens.end(), st.kept_tokens.begin(),
                                  st.kept_tokens.end()));
        EXPECT_TRUE(std::includes(prev_heads.begin(), prev_heads.end(), st.kept_heads.begin(),
                                  st.kept_heads.end()));
        prev_tokens = st.kept_tokens;
        prev_heads = st.kept_heads;
    }
}

TEST(LocalValuePrune, UniformRowTieBreak) {
    const std::vector<double> row{0.25, 0.25, 0.25, 0.25};
    EXPECT_EQ(local_value_prune(row, 0.5), (std::vector<std::size_t>{0, 1}));
}

TEST(LocalValuePrune, OneHotKeepsHotIndex) {
    const std::vector<double> row{0, 0, 1, 0};
    EXPECT_EQ(local_value_prune(row, 0.25), (std::vector<std::size_t>{2}));
}

TEST(LocalValuePrune, RatioOneIsIdentity) {
    const std::vector<double> row{0.5, 0.2, 0.3};
    EXPECT_EQ(local_value_prune(row, 1.0), iota_indices(3));
    EXPECT_THROW(local_value_prune({}, 0.5), std::invalid_argument);
}

TEST(ScheduleRatios, AllOnesAtFullKeep) {
    auto r = schedule_ratios(12, 1.0, 0.15);
    for (double x : r) EXPECT_DOUBLE_EQ(x, 1.0);
}

TEST(ScheduleRatios, PrefixAndMean) {
    auto r = schedule_ratios(12, 0.6, 0.15);
    ASSERT_EQ(r.size(), 12u);
    EXPECT_DOUBLE_EQ(r[0], 1.0);  // ceil(0.15 * 12) = 2 prefix layers
    EXPECT_DOUBLE_EQ(r[1], 1.0);
    EXPECT_LT(r[2], 1.0);
    double mean = 0.0;
    for (std::size_t i = 2; i < 12; ++i) mean += r[i];
    mean /= 10.0;
    EXPECT_NEAR(mean, 0.6, 1e-12);
}

TEST(ScheduleRatios, InterpolationDecreasesMonotonically) {
    auto r = schedule_ratios(12, 0.5, 0.15);
    for (std::size_t i = 3; i < r.size(); ++i) EXPECT_LT(r[i], r[i - 1]);
}

TEST(ScheduleRatios, LowAverageStaysPositive) {
    auto r = schedule_ratios(24, 1.0 / 3.8, 0.15);
    double mean = 0.0;
    std::size_t count = 0;
    for (double x : r) {
        EXPECT_GT(x, 0.0);
        EXPECT_LE(x, 1.0);
        if (x < 1.0) {
            mean += x;
            ++count;
        }
    }
    EXPECT_NEAR(mean / static_cast<double>(count), 1.0 / 3.8, 1e-12);
}

TEST(ScheduleRatios, RejectsDegenerateArgs) {
    EXPECT_THROW(schedule_ratios(0, 0.5, 0.15), std::invalid_argument);
    EXPECT_THROW(schedule_ratios(4, 0.0, 0.15), std::invalid_argument);
    EXPECT_THROW(schedule_ratios(4, 1.5, 0.15), std::invalid_argument);
}

TEST(ApplySchedule, CumulativeTargets) {
    ImportanceState st(100, 4);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (double& s : st.token_scores) s = uni(rng);
    PruneSchedule sched = PruneSchedule::flat(3, 0.25, 1.0);
    apply_schedule_layer(st, sched, 0, 100, 4);
    EXPECT_EQ(st.kept_tokens.size(), 25u);
    // Same target again is a no-op (cascade can only shrink).
    LayerSelection sel = apply_schedule_layer(st, sched, 1, 100, 4);
    EXPECT_EQ(st.kept_tokens.size(), 25u);
    EXPECT_TRUE(sel.engine_runs.empty());
}

TEST(ImportanceCsv, RoundTrip) {
    ImportanceState st(5, 1);
    st.token_scores = {0.5, 1.25, 0.0, 3.75, 2.0};
    std::stringstream ss;
    write_importance_csv(ss, st);
    auto back = read_importance_csv(ss);
    ASSERT_EQ(back.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(back[i], st.token_scores[i]);
}
