#pragma once

#include "celltwin/filter.hpp"
#include "celltwin/io.hpp"
#include "celltwin/model.hpp"
#include "celltwin/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace celltwin
{

/// Largest span (in cycles) a projection may cover beyond its start.
inline constexpr int kDefaultMaxHorizonSpan = 100'000;

/**
 * Frozen-parameter projection of every particle from `from_cycle` onward.
 * Trajectory values are clamped below at `eol_threshold`.
 */
struct CapacityProjection
{
    int from_cycle = 1;
    int horizon_cycle = 1;
    double eol_threshold = 0.5;
    std::vector<double> median_q;                  // index 0 is from_cycle
    std::vector<double> quantile_levels;
    std::vector<std::vector<double>> quantile_bands;  // one band per level, same length as median_q
    std::vector<double> per_particle_eol;
    std::vector<double> weights;                   // particle weights, aligned with per_particle_eol
    bool horizon_capped = false;

    std::size_t length() const { return median_q.size(); }
    double median_at(int cycle) const { return median_q.at(static_cast<std::size_t>(cycle - from_cycle)); }
};

inline CapacityProjection project(const ParticleEnsemble& ens, int from_cycle, double eol_threshold = 0.5,
                                  std::span<const double> quantiles = {},
                                  int max_horizon_span = kDefaultMaxHorizonSpan)
{
    require(ens.size() >= 1, "project: empty ensemble");
    require(from_cycle >= 1 && from_cycle >= ens.last_cycle,
            "project: from_cycle " + std::to_string(from_cycle) + " precedes last assimilated cycle " +
                std::to_string(ens.last_cycle));
    require(eol_threshold > 0.0 && eol_threshold < 1.0, "project: eol_threshold must lie in (0, 1)");
    for (const double level : quantiles)
        require(level >= 0.0 && level <= 1.0, "project: quantile levels must lie in [0, 1]");

    const std::size_t n = ens.size();
    CapacityProjection proj;
    proj.from_cycle = from_cycle;
    proj.eol_threshold = eol_threshold;
    proj.quantile_levels.assign(quantiles.begin(), quantiles.end());
    proj.weights = ens.weight;
    proj.per_particle_eol.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        proj.per_particle_eol[i] = analytic_eol_log10(ens.log10_a[i], ens.b[i], eol_threshold);

    const double total_weight = std::accumulate(ens.weight.begin(), ens.weight.end(), 0.0);
    const double eol_p99 = stats::weighted_quantile(proj.per_particle_eol, ens.weight, 0.99);
    double horizon = std::ceil(eol_p99);
    const double cap = static_cast<double>(from_cycle) + max_horizon_span;
    if (!(horizon <= cap))
    {
        horizon = cap;
        proj.horizon_capped = true;
    }
    proj.horizon_cycle = std::max(from_cycle, static_cast<int>(horizon));

    const auto length = static_cast<std::size_t>(proj.horizon_cycle - from_cycle + 1);
    proj.median_q.resize(length);
    proj.quantile_bands.assign(quantiles.size(), std::vector<double>(length));

    // Power-law curves cross pairwise at most once, so the sorted order at
    // cycle k is nearly sorted at k+1 and insertion sort stays cheap.
    std::vector<double> values(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto less = [&](std::size_t lhs, std::size_t rhs) {
        return values[lhs] < values[rhs] || (values[lhs] == values[rhs] && lhs < rhs);
    };
    for (std::size_t t = 0; t < length; ++t)
    {
        const double k = static_cast<double>(from_cycle) + static_cast<double>(t);
        for (std::size_t i = 0; i < n; ++i)
            values[i] = std::max(capacity_log10(ens.log10_a[i], ens.b[i], k), eol_threshold);
        if (t == 0)
            std::sort(order.begin(), order.end(), less);
        else
            for (std::size_t j = 1; j < n; ++j)
            {
                const std::size_t item = order[j];
                std::size_t pos = j;
                while (pos > 0 && less(item, order[pos - 1]))
                {
                    order[pos] = order[pos - 1];
                    --pos;
                }
                order[pos] = item;
            }
        proj.median_q[t] = stats::weighted_quantile_sorted(values, ens.weight, order, 0.5, total_weight);
        for (std::size_t qi = 0; qi < quantiles.size(); ++qi)
            proj.quantile_bands[qi][t] =
                stats::weighted_quantile_sorted(values, ens.weight, order, quantiles[qi], total_weight);
    }
    return proj;
}

/// Weighted empirical distribution of end-of-life cycles.
class EolDistribution
{
  public:
    EolDistribution() = default;

    EolDistribution(std::span<const double> eol, std::span<const double> weights)
    {
        require(!eol.empty() && eol.size() == weights.size(), "EolDistribution: size mismatch or empty input");
        const auto order = stats::sorted_order(eol);
        double total = 0.0;
        for (const double w : weights)
            total += w;
        require(total > 0.0, "EolDistribution: weights sum to zero");
        points_.reserve(eol.size());
        for (const std::size_t i : order)
            points_.emplace_back(eol[i], weights[i] / total);
        cumulative_.reserve(points_.size());
        double running = 0.0;
        for (const auto& [value, weight] : points_)
            cumulative_.push_back(running += weight);
    }

    /// Sorted (eol, normalized weight) pairs.
    const std::vector<std::pair<double, double>>& points() const { return points_; }

    /// P(EOL <= x), right-continuous; exactly 1 at and above the largest support point.
    double cdf(double x) const
    {
        if (points_.empty() || x < points_.front().first)
            return 0.0;
        if (x >= points_.back().first)
            return 1.0;
        const auto it = std::upper_bound(points_.begin(), points_.end(), x,
                                         [](double value, const auto& point) { return value < point.first; });
        return cumulative_[static_cast<std::size_t>(it - points_.begin()) - 1];
    }

    /// Lower quantile: smallest support point with cdf >= level.
    double quantile(double level) const
    {
        require(!points_.empty(), "EolDistribution: empty distribution");
        const double target = level - stats::kCumulativeSlack;
        for (std::size_t i = 0; i < points_.size(); ++i)
            if (cumulative_[i] >= target && points_[i].second > 0.0)
                return points_[i].first;
        return points_.back().first;
    }

    double median() const { return quantile(0.5); }
    bool empty() const { return points_.empty(); }

  private:
    std::vector<std::pair<double, double>> points_;
    std::vector<double> cumulative_;
};

inline EolDistribution eol_distribution(const CapacityProjection& proj)
{
    return EolDistribution(proj.per_particle_eol, proj.weights);
}

struct RulPrediction
{
    int at_cycle = 0;
    double rul_median = 0.0;
    std::map<double, double> rul_quantiles;  // level -> cycles
    double eol_threshold = 0.5;
};

inline RulPrediction rul(const CapacityProjection& proj, int at_cycle, std::span<const double> quantiles = {})
{
    std::vector<double> remaining(proj.per_particle_eol.size());
    for (std::size_t i = 0; i < remaining.size(); ++i)
        remaining[i] = std::max(proj.per_particle_eol[i] - static_cast<double>(at_cycle), 0.0);
    const EolDistribution dist(remaining, proj.weights);
    RulPrediction out;
    out.at_cycle = at_cycle;
    out.eol_threshold = proj.eol_threshold;
    out.rul_median = dist.median();
    for (const double level : quantiles)
        out.rul_quantiles[level] = dist.quantile(level);
    return out;
}

/// CSV `cycle,median_q,<band labels>` (e.g. q05,q95).
inline std::string projection_csv(const CapacityProjection& proj)
{
    std::vector<std::string> header{"cycle", "median_q"};
    for (const double level : proj.quantile_levels)
        header.push_back(io::quantile_label(level));
    io::CsvWriter csv(header);
    std::vector<double> row(proj.quantile_levels.size() + 1);
    for (std::size_t t = 0; t < proj.length(); ++t)
    {
        row[0] = proj.median_q[t];
        for (std::size_t qi = 0; qi < proj.quantile_levels.size(); ++qi)
            row[qi + 1] = proj.quantile_bands[qi][t];
        csv.add(proj.from_cycle + static_cast<int>(t), row);
    }
    return csv.str();
}

/// CSV `eol_cycle,weight`, sorted by cycle.
inline std::string eol_csv(const EolDistribution& dist)
{
    io::CsvWriter csv({"eol_cycle", "weight"});
    for (const auto& [eol, weight] : dist.points())
        csv.add(eol, weight);
    return csv.str();
}

inline EolDistribution parse_eol_csv(const std::string& text, const std::string& source)
{
    std::vector<double> eol;
    std::vector<double> weight;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size())
    {
        const auto end = text.find('\n', start);
        const std::string_view line(text.data() + start, (end == std::string::npos ? text.size() : end) - start);
        start = end == std::string::npos ? text.size() : end + 1;
        ++line_no;
        if (io::trim(line).empty() || line_no == 1)
            continue;
        const auto fields = io::split_fields(line);
        const auto x = fields.size() == 2 ? io::parse_double(fields[0]) : std::nullopt;
        const auto w = fields.size() == 2 ? io::parse_double(fields[1]) : std::nullopt;
        if (!x || !w)
            throw MalformedRow(source + ":" + std::to_string(line_no) + ": expected 'eol_cycle,weight'");
        eol.push_back(*x);
        weight.push_back(*w);
    }
    if (eol.empty())
        throw MalformedRow(source + ": no EOL samples");
    return EolDistribution(eol, weight);
}

} // namespace celltwin
