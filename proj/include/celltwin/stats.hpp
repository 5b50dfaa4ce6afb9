#pragma once

#include "celltwin/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace celltwin::stats
{

// Cumulative sums are compared against the target level with this slack so
// that e.g. two weights of 0.5 reach the 0.5 level despite rounding.
inline constexpr double kCumulativeSlack = 1e-12;

/// Index permutation sorting `values` ascending, ties broken by index.
inline std::vector<std::size_t> sorted_order(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t lhs, std::size_t rhs) { return values[lhs] < values[rhs]; });
    return order;
}

/// Lower weighted quantile over a precomputed ascending order:
/// the smallest value whose cumulative weight reaches `level` of the total.
inline double weighted_quantile_sorted(std::span<const double> values, std::span<const double> weights,
                                       std::span<const std::size_t> order, double level, double total)
{
    const double target = level * total - kCumulativeSlack;
    double cumulative = 0.0;
    for (const std::size_t i : order)
    {
        cumulative += weights[i];
        if (cumulative >= target && weights[i] > 0.0)
            return values[i];
    }
    // Only reached when trailing weights are zero; return the largest weighted value.
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (weights[*it] > 0.0)
            return values[*it];
    return values[order.back()];
}

inline double weighted_quantile(std::span<const double> values, std::span<const double> weights, double level)
{
    require(!values.empty() && values.size() == weights.size(), "weighted_quantile: size mismatch or empty input");
    require(level >= 0.0 && level <= 1.0, "weighted_quantile: level outside [0, 1]");
    const auto order = sorted_order(values);
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    return weighted_quantile_sorted(values, weights, order, level, total);
}

/// Lower median of an unweighted sample (element (n-1)/2 of the sorted copy).
inline double lower_median(std::vector<double> values)
{
    require(!values.empty(), "lower_median: empty input");
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

/// Lower quantile of an unweighted sample: smallest x with rank/n >= level.
inline double lower_quantile(std::vector<double> values, double level)
{
    require(!values.empty(), "lower_quantile: empty input");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(level * n - kCumulativeSlack));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

} // namespace celltwin::stats
