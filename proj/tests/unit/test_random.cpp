#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ammpl/random.hpp"

using namespace ammpl;

TEST(Random, SameSeedAndNameGiveSameSequence) {
    RandomStream a(42, "stream"), b(42, "stream");
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Random, NameAndSeedSeparateStreams) {
    RandomStream a(42, "one"), b(42, "two"), c(43, "one");
    EXPECT_NE(a.next_u64(), b.next_u64());
    RandomStream a2(42, "one");
    EXPECT_NE(a2.next_u64(), c.next_u64());
}

TEST(Random, PhiloxKnownAnswer) {
    // Random123 reference vector for philox4x32-10 with zero counter and key.
    const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Random, UniformRangeAndMean) {
    RandomStream r(7, "u");
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(Random, NormalMoments) {
    RandomStream r(9, "n");
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.03);
    EXPECT_NEAR(s2 / n, 1.0, 0.04);
}

TEST(Random, BelowCoversRange) {
    RandomStream r(3, "below");
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 500; ++i) {
        const auto v = r.below(7);
        ASSERT_LT(v, 7u);
        seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 7u);
}

TEST(Random, ForkDoesNotAdvanceParent) {
    RandomStream a(5, "p"), b(5, "p");
    RandomStream child = a.fork("c");
    EXPECT_EQ(a.draws(), 0u);
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(child.key(), a.key());
}

TEST(Random, FnvKnownAnswer) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
