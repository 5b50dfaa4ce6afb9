#pragma once

// Power-law capacity fade: Q(k) = 1 - a * k^b.

#include "celltwin/error.hpp"
#include "celltwin/io.hpp"

#include <cmath>
#include <numbers>

namespace celltwin
{

inline constexpr double kLn10 = std::numbers::ln10;

struct PowerLawParams
{
    double a = 0.0;  // fade coefficient, natural scale ~1e-16
    double b = 1.0;  // fade exponent

    static PowerLawParams from_log10(double log10_a, double b) { return {std::pow(10.0, log10_a), b}; }
    double log10_a() const { return std::log10(a); }
};

struct NoiseSpec
{
    double sigma_meas = 0.01;    // std of measured normalized capacity
    double sigma_log10_a = 0.05; // random-walk std of log10(a) per assimilated cycle
    double sigma_b = 0.05;       // random-walk std of b per assimilated cycle
};

inline void validate(const PowerLawParams& p)
{
    if (!(p.a >= 0.0) || !std::isfinite(p.a) || !(p.b > 0.0) || !std::isfinite(p.b))
        throw PreconditionViolation("power-law parameters require a >= 0 and b > 0 (a=" + io::format_double(p.a) +
                                    ", b=" + io::format_double(p.b) + ")");
}

/// a * k^b evaluated as exp(ln a + b ln k), with a given in log10 form.
inline double fade_log10(double log10_a, double b, double k)
{
    return std::exp(log10_a * kLn10 + b * std::log(k));
}

inline double capacity_log10(double log10_a, double b, double k)
{
    return 1.0 - fade_log10(log10_a, b, k);
}

/// Normalized capacity at (possibly fractional) cycle k >= 1. May be negative far past end of life.
inline double capacity(const PowerLawParams& params, double k)
{
    if (params.a == 0.0)
        return 1.0;
    return 1.0 - std::exp(std::log(params.a) + params.b * std::log(k));
}

/// Real-valued cycle at which capacity falls to `threshold`: ((1 - t) / a)^(1/b).
inline double analytic_eol(const PowerLawParams& params, double threshold)
{
    require(threshold > 0.0 && threshold < 1.0, "analytic_eol: threshold must lie in (0, 1)");
    if (params.a == 0.0)
        throw ZeroFadeCoefficient("a = 0 never fades, end of life is unbounded");
    return std::exp((std::log1p(-threshold) - std::log(params.a)) / params.b);
}

inline double analytic_eol_log10(double log10_a, double b, double threshold)
{
    return std::exp((std::log1p(-threshold) - log10_a * kLn10) / b);
}

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178; // ln(sqrt(2*pi))

/// Gaussian log-density of an observed normalized capacity given a predicted one.
inline double gaussian_log_density(double observed, double predicted, double sigma)
{
    const double z = (observed - predicted) / sigma;
    return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

inline double log_likelihood(const PowerLawParams& params, double k, double q_obs, double sigma_meas)
{
    require(sigma_meas > 0.0, "log_likelihood: sigma_meas must be positive");
    return gaussian_log_density(q_obs, capacity(params, k), sigma_meas);
}

} // namespace celltwin
