#pragma once

#include "celltwin/dataset.hpp"
#include "celltwin/io.hpp"
#include "celltwin/prognosis.hpp"

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

namespace celltwin
{

struct RulErrorPoint
{
    int cycle = 0;
    double true_rul = 0.0;
    double predicted_rul = 0.0;
    double signed_error = 0.0;  // predicted - true
};

struct RulErrorSeries
{
    std::string cell_id;
    int true_eol = 0;
    std::vector<RulErrorPoint> points;
};

/// First cycle (measured or extrapolated) at which q falls to the threshold.
inline std::optional<int> true_eol(const NormalizedTrace& trace, double eol_threshold)
{
    for (std::size_t i = 0; i < trace.size(); ++i)
        if (trace.q[i] <= eol_threshold)
            return trace.cycles[i];
    return std::nullopt;
}

/// Signed RUL errors of each prediction made at or before the true end of life.
inline RulErrorSeries rul_errors(const NormalizedTrace& trace, std::span<const RulPrediction> predictions,
                                 double eol_threshold)
{
    const auto eol = true_eol(trace, eol_threshold);
    if (!eol)
        throw NoTrueEol("cell '" + trace.cell_id + "' never reaches q = " + io::format_double(eol_threshold));
    RulErrorSeries series;
    series.cell_id = trace.cell_id;
    series.true_eol = *eol;
    for (std::size_t i = 0; i < predictions.size(); ++i)
    {
        require(i == 0 || predictions[i].at_cycle > predictions[i - 1].at_cycle,
                "rul_errors: predictions must be sorted by cycle");
        const auto& p = predictions[i];
        if (p.at_cycle > *eol)
            continue;
        const double truth = static_cast<double>(*eol - p.at_cycle);
        series.points.push_back({p.at_cycle, truth, p.rul_median, p.rul_median - truth});
    }
    return series;
}

inline std::string rul_errors_csv(const RulErrorSeries& series)
{
    io::CsvWriter csv({"cycle", "true_rul", "pred_rul", "err"});
    for (const auto& p : series.points)
        csv.add(p.cycle, p.true_rul, p.predicted_rul, p.signed_error);
    return csv.str();
}

/// Anything exposing an inverse CDF.
template <typename D>
concept PredictiveDistribution = requires(const D& d, double level) {
    { d.quantile(level) } -> std::convertible_to<double>;
};

struct CalibrationCurve
{
    std::vector<double> levels;    // expected confidence
    std::vector<double> observed;  // empirical coverage of the central interval
    std::size_t n_samples = 0;
    double area_deviation = 0.0;   // mean |observed - expected|
};

/**
 * Reliability curve: for each level c, the fraction of observations inside
 * the central interval [F^-1((1-c)/2), F^-1((1+c)/2)] of their own predictive
 * distribution (closed interval).
 */
template <PredictiveDistribution D>
CalibrationCurve calibration_curve(std::span<const D> predictive, std::span<const double> observations,
                                   std::span<const double> levels)
{
    if (predictive.size() != observations.size())
        throw LengthMismatch("calibration_curve: " + std::to_string(predictive.size()) + " distributions but " +
                             std::to_string(observations.size()) + " observations");
    require(!observations.empty(), "calibration_curve: no observations");
    CalibrationCurve curve;
    curve.n_samples = observations.size();
    curve.levels.assign(levels.begin(), levels.end());
    double deviation = 0.0;
    for (const double level : levels)
    {
        require(level > 0.0 && level < 1.0, "calibration_curve: levels must lie in (0, 1)");
        std::size_t inside = 0;
        for (std::size_t i = 0; i < observations.size(); ++i)
        {
            const double lo = predictive[i].quantile((1.0 - level) / 2.0);
            const double hi = predictive[i].quantile((1.0 + level) / 2.0);
            if (observations[i] >= lo && observations[i] <= hi)
                ++inside;
        }
        const double fraction = static_cast<double>(inside) / static_cast<double>(observations.size());
        curve.observed.push_back(fraction);
        deviation += std::abs(fraction - level);
    }
    curve.area_deviation = levels.empty() ? 0.0 : deviation / static_cast<double>(levels.size());
    return curve;
}

inline std::string calibration_csv(const CalibrationCurve& curve)
{
    io::CsvWriter csv({"level", "observed"});
    for (std::size_t i = 0; i < curve.levels.size(); ++i)
        csv.add(curve.levels[i], curve.observed[i]);
    return csv.str();
}

} // namespace celltwin
