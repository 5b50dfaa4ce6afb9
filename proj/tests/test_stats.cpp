#include "celltwin/stats.hpp"

#include "celltwin/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

using namespace celltwin;

namespace
{

// Brute force: smallest v among values with sum of weights of {x <= v} >= level * total.
double brute_lower_quantile(const std::vector<double>& values, const std::vector<double>& weights, double level)
{
    double total = 0.0;
    for (const double w : weights)
        total += w;
    double best = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < values.size(); ++i)
    {
        if (weights[i] <= 0.0)
            continue;
        double mass = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j)
            if (values[j] <= values[i])
                mass += weights[j];
        if (mass >= level * total - 1e-12 && (!found || values[i] < best))
        {
            best = values[i];
            found = true;
        }
    }
    return best;
}

} // namespace

TEST(Stats, WeightedQuantileMatchesBruteForce)
{
    rng::CounterRng gen(3);
    for (int trial = 0; trial < 200; ++trial)
    {
        const auto n = static_cast<std::size_t>(1 + trial % 17);
        std::vector<double> values(n);
        std::vector<double> weights(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            values[i] = std::round(gen.uniform(0.0, 20.0));  // force ties
            weights[i] = i % 5 == 4 ? 0.0 : gen.uniform();
        }
        weights[0] = 0.3;
        for (const double level : {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 1.0})
            EXPECT_EQ(stats::weighted_quantile(values, weights, level), brute_lower_quantile(values, weights, level))
                << "trial " << trial << " level " << level;
    }
}

TEST(Stats, EqualHalvesGiveTheLowerValue)
{
    const std::vector<double> v{10.0, 20.0};
    const std::vector<double> w{0.5, 0.5};
    EXPECT_EQ(stats::weighted_quantile(v, w, 0.5), 10.0);
    EXPECT_EQ(stats::weighted_quantile(v, w, 0.500001), 20.0);
}

TEST(Stats, LowerMedianAndQuantile)
{
    EXPECT_EQ(stats::lower_median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(stats::lower_median({4.0, 1.0, 3.0, 2.0}), 2.0);
    const std::vector<double> twenty = [] {
        std::vector<double> v;
        for (int i = 20; i >= 1; --i)
            v.push_back(i);
        return v;
    }();
    EXPECT_EQ(stats::lower_quantile(twenty, 0.05), 1.0);
    EXPECT_EQ(stats::lower_quantile(twenty, 0.5), 10.0);
    EXPECT_EQ(stats::lower_quantile(twenty, 0.95), 19.0);
    EXPECT_EQ(stats::lower_quantile(twenty, 0.0), 1.0);
    EXPECT_EQ(stats::lower_quantile(twenty, 1.0), 20.0);
}

TEST(Stats, RejectsBadInput)
{
    EXPECT_THROW(stats::lower_median({}), PreconditionViolation);
    const std::vector<double> v{1.0};
    const std::vector<double> w{1.0, 2.0};
    EXPECT_THROW(stats::weighted_quantile(v, w, 0.5), PreconditionViolation);
    EXPECT_THROW(stats::weighted_quantile(v, std::vector<double>{1.0}, 1.5), PreconditionViolation);
}
