#include "celltwin/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace celltwin::rng;

TEST(Rng, DrawsArePureFunctionsOfTheKey)
{
    const Key key{42, Stream::ProcessB, 17, 3, 0};
    EXPECT_EQ(bits(key), bits(key));
    EXPECT_EQ(standard_normal(key), standard_normal(key));
}

TEST(Rng, EveryKeyComponentChangesTheDraw)
{
    const Key base{42, Stream::ProcessB, 17, 3, 0};
    std::set<std::uint64_t> seen{bits(base)};
    Key k = base;
    k.seed = 43;
    seen.insert(bits(k));
    k = base;
    k.stream = Stream::ProcessLog10A;
    seen.insert(bits(k));
    k = base;
    k.cycle = 18;
    seen.insert(bits(k));
    k = base;
    k.index = 4;
    seen.insert(bits(k));
    k = base;
    k.lane = 1;
    seen.insert(bits(k));
    EXPECT_EQ(seen.size(), 6u);
}

TEST(Rng, UniformRanges)
{
    for (std::uint64_t i = 0; i < 10000; ++i)
    {
        const Key key{1, Stream::Synthetic, 0, i, 0};
        const double u = uniform01(key);
        const double v = uniform_open(key);
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Rng, NormalMomentsAreStandard)
{
    const int n = 200000;
    double sum = 0.0;
    double sum_sq = 0.0;
    int beyond_2sd = 0;
    for (int i = 0; i < n; ++i)
    {
        const double z = standard_normal({9, Stream::Synthetic, 0, static_cast<std::uint64_t>(i), 0});
        sum += z;
        sum_sq += z * z;
        beyond_2sd += std::abs(z) > 1.959964 ? 1 : 0;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(var, 1.0, 0.015);
    EXPECT_NEAR(static_cast<double>(beyond_2sd) / n, 0.05, 0.003);
}

TEST(Rng, DeriveSeedSeparatesNamesAndBases)
{
    EXPECT_EQ(derive_seed(1, "b1c0"), derive_seed(1, "b1c0"));
    EXPECT_NE(derive_seed(1, "b1c0"), derive_seed(1, "b1c1"));
    EXPECT_NE(derive_seed(1, "b1c0"), derive_seed(2, "b1c0"));
    static_assert(derive_seed(5, "x") == derive_seed(5, "x"));
}

TEST(Rng, CounterRngIsReproducibleAndAdvances)
{
    CounterRng a(11);
    CounterRng b(11);
    std::vector<double> xs;
    for (int i = 0; i < 5; ++i)
    {
        const double x = a.normal(2.0, 0.5);
        EXPECT_EQ(x, b.normal(2.0, 0.5));
        xs.push_back(x);
    }
    EXPECT_EQ(a.counter(), 5u);
    EXPECT_EQ(std::set<double>(xs.begin(), xs.end()).size(), xs.size());
    const double u = a.uniform(3.0, 4.0);
    EXPECT_GE(u, 3.0);
    EXPECT_LT(u, 4.0);
}
