#include <gtest/gtest.h>

#include "ammpl/harness.hpp"
#include "ammpl/selftest.hpp"

using namespace ammpl;

TEST(Selftest, StraightThroughIdentity) {
    const CheckResult r = check_straight_through(20, 5);
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Selftest, PipelineGradients) {
    const CheckResult r = check_pipeline_gradients(2);
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Selftest, BernoulliStatistics) {
    const CheckResult r = check_bernoulli_statistics(10000, 3);
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Selftest, MaskPadding) {
    const CheckResult r = check_mask_padding(4);
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Selftest, InteractionNoop) {
    const CheckResult r = check_interaction_noop(6);
    EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Selftest, PublishedTableShape) {
    const auto& table = published_hm_table();
    ASSERT_EQ(table.size(), 27u);
    for (const auto& row : table) {
        EXPECT_GT(row.base, 0.0);
        EXPECT_GT(row.novel, 0.0);
        EXPECT_LE(row.hm, std::max(row.base, row.novel));
    }
}

TEST(Selftest, SuiteReportsEveryCheck) {
    std::size_t seen = 0;
    const auto results = run_selftest([&](const CheckResult&) { ++seen; });
    EXPECT_EQ(results.size(), 6u);
    EXPECT_EQ(seen, 6u);
}
