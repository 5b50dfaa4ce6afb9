#pragma once

#include "celltwin/dataset.hpp"
#include "celltwin/model.hpp"
#include "celltwin/stats.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace celltwin
{

struct FitOptions
{
    double epsilon = 1e-4;          // points with q >= 1 - epsilon are left out of the log-linear fit
    std::size_t min_points = 10;
    bool refine = true;             // Levenberg-Marquardt polish of the q-space squared error
    int max_iterations = 200;
};

struct PowerLawFit
{
    double log10_a = 0.0;
    double b = 0.0;
    double rmse = 0.0;          // of reconstructed q over all measured points
    double se_log10_a = 0.0;
    double se_b = 0.0;
    std::size_t n_qualifying = 0;
    bool refined = false;

    PowerLawParams params() const { return PowerLawParams::from_log10(log10_a, b); }
};

namespace detail
{

struct LineFit
{
    double intercept, slope, se_intercept, se_slope;
};

inline LineFit ordinary_least_squares(std::span<const double> x, std::span<const double> y)
{
    const auto n = static_cast<double>(x.size());
    double mean_x = 0.0;
    double mean_y = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxx += (x[i] - mean_x) * (x[i] - mean_x);
        sxy += (x[i] - mean_x) * (y[i] - mean_y);
    }
    const double slope = sxy / sxx;
    const double intercept = mean_y - slope * mean_x;
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        const double r = y[i] - intercept - slope * x[i];
        ssr += r * r;
    }
    const double s2 = x.size() > 2 ? ssr / (n - 2.0) : 0.0;
    return {intercept, slope, std::sqrt(s2 * (1.0 / n + mean_x * mean_x / sxx)), std::sqrt(s2 / sxx)};
}

inline double q_space_cost(std::span<const double> log_k, std::span<const double> q, double ln_a, double b)
{
    double cost = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i)
    {
        const double r = q[i] - (1.0 - std::exp(ln_a + b * log_k[i]));
        cost += r * r;
    }
    return cost;
}

} // namespace detail

/**
 * Fits Q(k) = 1 - a k^b to the measured part of a trace.
 *
 * The log-linear form ln(1 - q) = ln a + b ln k is solved by ordinary least
 * squares over points with q < 1 - epsilon. With `refine` set, that solution
 * seeds a Levenberg-Marquardt minimization of the squared error in q over all
 * measured points; the log transform alone is badly biased once measurement
 * noise is comparable to early-life fade.
 */
inline PowerLawFit fit_power_law(const NormalizedTrace& trace, const FitOptions& options = {})
{
    const std::size_t measured = trace.measured_count();
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t i = 0; i < measured; ++i)
        if (trace.q[i] < 1.0 - options.epsilon)
        {
            x.push_back(std::log(static_cast<double>(trace.cycles[i])));
            y.push_back(std::log1p(-trace.q[i]));
        }
    if (x.size() < std::max<std::size_t>(options.min_points, 2))
        throw InsufficientFade("cell '" + trace.cell_id + "': only " + std::to_string(x.size()) +
                               " measured points below q = 1 - " + io::format_double(options.epsilon) + ", need " +
                               std::to_string(options.min_points));

    const auto line = detail::ordinary_least_squares(x, y);
    double ln_a = line.intercept;
    double b = line.slope;

    PowerLawFit fit;
    fit.n_qualifying = x.size();
    fit.se_log10_a = line.se_intercept / kLn10;
    fit.se_b = line.se_slope;

    std::vector<double> log_k(measured);
    std::vector<double> q(trace.q.begin(), trace.q.begin() + static_cast<std::ptrdiff_t>(measured));
    for (std::size_t i = 0; i < measured; ++i)
        log_k[i] = std::log(static_cast<double>(trace.cycles[i]));

    if (options.refine && measured >= 3)
    {
        double cost = detail::q_space_cost(log_k, q, ln_a, b);
        double lambda = 1e-3;
        for (int iter = 0; iter < options.max_iterations; ++iter)
        {
            // Residual r_i = q_i - 1 + f_i with f_i = exp(ln a + b ln k_i); dr/d(ln a) = f, dr/db = f ln k.
            double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, g0 = 0.0, g1 = 0.0;
            for (std::size_t i = 0; i < measured; ++i)
            {
                const double f = std::exp(ln_a + b * log_k[i]);
                const double r = q[i] - 1.0 + f;
                const double j0 = f;
                const double j1 = f * log_k[i];
                jtj00 += j0 * j0;
                jtj01 += j0 * j1;
                jtj11 += j1 * j1;
                g0 += j0 * r;
                g1 += j1 * r;
            }
            bool improved = false;
            double d0 = 0.0, d1 = 0.0;
            while (lambda < 1e16)
            {
                const double a00 = jtj00 * (1.0 + lambda);
                const double a11 = jtj11 * (1.0 + lambda);
                const double det = a00 * a11 - jtj01 * jtj01;
                if (det > 0.0 && std::isfinite(det))
                {
                    d0 = -(a11 * g0 - jtj01 * g1) / det;
                    d1 = -(a00 * g1 - jtj01 * g0) / det;
                    const double trial = detail::q_space_cost(log_k, q, ln_a + d0, b + d1);
                    if (trial < cost && b + d1 > 0.0)
                    {
                        ln_a += d0;
                        b += d1;
                        const double drop = cost - trial;
                        cost = trial;
                        lambda = std::max(lambda * 0.1, 1e-15);
                        improved = drop > 1e-15 * cost && std::max(std::abs(d0), std::abs(d1)) > 1e-13;
                        break;
                    }
                }
                lambda *= 10.0;
            }
            if (!improved)
                break;
        }
        fit.refined = true;

        // Standard errors from the Gauss-Newton covariance at the optimum.
        double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0;
        for (std::size_t i = 0; i < measured; ++i)
        {
            const double f = std::exp(ln_a + b * log_k[i]);
            jtj00 += f * f;
            jtj01 += f * f * log_k[i];
            jtj11 += f * f * log_k[i] * log_k[i];
        }
        const double det = jtj00 * jtj11 - jtj01 * jtj01;
        const double s2 = cost / static_cast<double>(measured - 2);
        if (det > 0.0)
        {
            fit.se_log10_a = std::sqrt(s2 * jtj11 / det) / kLn10;
            fit.se_b = std::sqrt(s2 * jtj00 / det);
        }
    }

    fit.log10_a = ln_a / kLn10;
    fit.b = b;
    double ssr = 0.0;
    for (std::size_t i = 0; i < measured; ++i)
    {
        const double r = q[i] - (1.0 - std::exp(ln_a + b * log_k[i]));
        ssr += r * r;
    }
    fit.rmse = std::sqrt(ssr / static_cast<double>(measured));
    return fit;
}

struct CellFit
{
    double log10_a = 0.0;
    double b = 0.0;
    double rmse = 0.0;
};

struct FleetFit
{
    std::map<std::string, CellFit> per_cell;
    std::map<std::string, std::string> failed;  // cell_id -> reason
    double median_log10_a = 0.0;
    double median_b = 0.0;
    std::map<int, double> ah_percentiles;  // percentile -> total measured Ah
};

/// Total discharge Ah over the measured (non-extrapolated) points of a trace.
inline double measured_total_ah(const NormalizedTrace& trace)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < trace.measured_count(); ++i)
        sum += trace.q[i] * trace.q0_ah;
    return sum;
}

inline FleetFit fleet_calibrate(std::span<const NormalizedTrace> train, const FitOptions& options = {})
{
    FleetFit fleet;
    std::vector<double> log10_a;
    std::vector<double> b;
    std::vector<double> total_ah;
    for (const auto& trace : train)
    {
        total_ah.push_back(measured_total_ah(trace));
        try
        {
            const auto fit = fit_power_law(trace, options);
            fleet.per_cell[trace.cell_id] = CellFit{fit.log10_a, fit.b, fit.rmse};
            log10_a.push_back(fit.log10_a);
            b.push_back(fit.b);
        }
        catch (const InsufficientFade& e)
        {
            fleet.failed[trace.cell_id] = e.what();
        }
    }
    if (log10_a.empty())
        throw NoFitsSucceeded("no training cell could be fitted (" + std::to_string(train.size()) + " cells given)");
    fleet.median_log10_a = stats::lower_median(log10_a);
    fleet.median_b = stats::lower_median(b);
    for (const int pct : {5, 50, 95})
        fleet.ah_percentiles[pct] = stats::lower_quantile(total_ah, pct / 100.0);
    return fleet;
}

inline nlohmann::json to_json(const FleetFit& fleet)
{
    nlohmann::json doc;
    doc["median_log10_a"] = fleet.median_log10_a;
    doc["median_b"] = fleet.median_b;
    nlohmann::json pct = nlohmann::json::object();
    for (const auto& [p, v] : fleet.ah_percentiles)
        pct[std::to_string(p)] = v;
    doc["ah_percentiles"] = pct;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [id, fit] : fleet.per_cell)
        cells.push_back({{"cell_id", id}, {"log10_a", fit.log10_a}, {"b", fit.b}, {"rmse", fit.rmse}});
    doc["per_cell"] = cells;
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& [id, reason] : fleet.failed)
        failed.push_back({{"cell_id", id}, {"reason", reason}});
    doc["failed"] = failed;
    return doc;
}

inline FleetFit fleet_fit_from_json(const nlohmann::json& doc)
{
    try
    {
        FleetFit fleet;
        fleet.median_log10_a = doc.at("median_log10_a").get<double>();
        fleet.median_b = doc.at("median_b").get<double>();
        for (const auto& [key, value] : doc.at("ah_percentiles").items())
            fleet.ah_percentiles[std::stoi(key)] = value.get<double>();
        for (const auto& cell : doc.at("per_cell"))
            fleet.per_cell[cell.at("cell_id").get<std::string>()] =
                CellFit{cell.at("log10_a").get<double>(), cell.at("b").get<double>(), cell.at("rmse").get<double>()};
        if (doc.contains("failed"))
            for (const auto& cell : doc.at("failed"))
                fleet.failed[cell.at("cell_id").get<std::string>()] = cell.at("reason").get<std::string>();
        return fleet;
    }
    catch (const std::exception& e)
    {
        throw DataError("MalformedFleetFit", std::string("malformed fleet fit document: ") + e.what());
    }
}

} // namespace celltwin
