#pragma once

#include "celltwin/error.hpp"
#include "celltwin/io.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace celltwin
{

/**
 * Exponential utility phi(v) = sigma - tau * exp(-v / r), scaled so that
 * phi(l_u) = 0 and phi(h_u) = 1:
 *
 *   sigma = e^{-l/r} / (e^{-l/r} - e^{-h/r})
 *   tau   = 1        / (e^{-l/r} - e^{-h/r})
 *
 * Evaluation uses the equivalent form (1 - e^{-(v-l)/r}) / (1 - e^{-(h-l)/r}),
 * which stays finite when l/r is large and hits both bounds exactly.
 */
struct ExpUtility
{
    double l_u = 0.0;
    double h_u = 1.0;
    double r = 1.0;
    double sigma_coef = 0.0;
    double tau_coef = 0.0;
    bool clamp = true;

    double operator()(double v) const
    {
        const double x = clamp ? std::clamp(v, l_u, h_u) : v;
        return -std::expm1(-(x - l_u) / r) / -std::expm1(-(h_u - l_u) / r);
    }
};

inline ExpUtility make_exp_utility(double l_u, double h_u, double r, bool clamp = true)
{
    if (!std::isfinite(l_u) || !std::isfinite(h_u) || !(h_u > l_u))
        throw DegenerateBounds("utility bounds need h_u > l_u (got l_u=" + io::format_double(l_u) +
                               ", h_u=" + io::format_double(h_u) + ")");
    if (!(r > 0.0) || !std::isfinite(r))
        throw NonPositiveRisk("risk tolerance must be positive (got " + io::format_double(r) + ")");
    const double lower = std::exp(-l_u / r);
    const double upper = std::exp(-h_u / r);
    return ExpUtility{l_u, h_u, r, lower / (lower - upper), 1.0 / (lower - upper), clamp};
}

inline double eval_utility(const ExpUtility& u, double v) { return u(v); }

enum class Extractor
{
    TotalAh,
    MeanTimeBetweenCharges
};

inline std::string to_string(Extractor e)
{
    return e == Extractor::TotalAh ? "total_ah" : "mtbc";
}

inline std::optional<Extractor> parse_extractor(std::string_view text)
{
    if (text == "total_ah")
        return Extractor::TotalAh;
    if (text == "mtbc")
        return Extractor::MeanTimeBetweenCharges;
    return std::nullopt;
}

struct AttributeSpec
{
    std::string name;
    ExpUtility utility;
    Extractor extractor = Extractor::TotalAh;
    double weight = 1.0;
};

inline constexpr double kWeightSumTolerance = 1e-9;

inline void validate_weights(std::span<const AttributeSpec> specs)
{
    if (specs.empty())
        throw InvalidWeights("at least one attribute is required");
    double total = 0.0;
    for (const auto& spec : specs)
    {
        if (!(spec.weight >= 0.0))
            throw InvalidWeights("attribute '" + spec.name + "' has a negative weight");
        total += spec.weight;
    }
    if (std::abs(total - 1.0) > kWeightSumTolerance)
        throw InvalidWeights("attribute weights sum to " + io::format_double(total) + ", expected 1");
}

/// Equal-weight attributes, the plain average of the individual utilities.
inline void set_equal_weights(std::span<AttributeSpec> specs)
{
    for (auto& spec : specs)
        spec.weight = 1.0 / static_cast<double>(specs.size());
}

/// Total Ah throughput (300..1000 Ah, R = 200) and MTBC (0.21..0.25 h, R = 0.015), weighted 1/2 each.
inline std::vector<AttributeSpec> case_study_attributes()
{
    return {
        {"ah", make_exp_utility(300.0, 1000.0, 200.0), Extractor::TotalAh, 0.5},
        {"mtbc", make_exp_utility(0.21, 0.25, 0.015), Extractor::MeanTimeBetweenCharges, 0.5},
    };
}

/**
 * Cumulative discharge throughput sum_{k=1..x_c} q(k) * q0_ah, assuming one full
 * discharge per cycle. `q_by_cycle[0]` is cycle 1.
 */
inline double total_ah(std::span<const double> q_by_cycle, double q0_ah, int x_c)
{
    require(q0_ah > 0.0, "total_ah: q0_ah must be positive");
    require(x_c >= 0, "total_ah: x_c must be non-negative");
    if (static_cast<std::size_t>(x_c) > q_by_cycle.size())
        throw IncompleteTrajectory("total_ah: trajectory covers cycles 1.." + std::to_string(q_by_cycle.size()) +
                                   ", cannot sum to cycle " + std::to_string(x_c));
    double sum = 0.0;
    for (int k = 0; k < x_c; ++k)
        sum += q_by_cycle[static_cast<std::size_t>(k)] * q0_ah;
    return sum;
}

/// Full-depth discharge duration in hours at a constant C-rate.
inline double mtbc(double q_at_xc, double discharge_rate_c = 4.0)
{
    require(q_at_xc > 0.0 && q_at_xc <= 1.15, "mtbc: normalized capacity " + io::format_double(q_at_xc) +
                                                  " outside (0, 1.15]");
    require(discharge_rate_c > 0.0, "mtbc: discharge rate must be positive");
    return q_at_xc / discharge_rate_c;
}

/// Weighted sum of per-attribute utilities.
inline double combined_utility(std::span<const AttributeSpec> specs, std::span<const double> values)
{
    if (specs.size() != values.size())
        throw LengthMismatch("combined_utility: " + std::to_string(specs.size()) + " attributes but " +
                             std::to_string(values.size()) + " values");
    validate_weights(specs);
    double total = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i)
        total += specs[i].weight * specs[i].utility(values[i]);
    return total;
}

} // namespace celltwin
