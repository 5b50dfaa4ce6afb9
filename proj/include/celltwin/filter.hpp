#pragma once

/**
 * Sequential importance resampling over the power-law parameters (a, b).
 *
 * Particles live in (log10 a, b). Each assimilated cycle runs
 *   predict:  log10 a += N(0, sigma_log10_a), b = |b + N(0, sigma_b)|
 *   update:   w *= N(q_obs; Q(k), sigma_meas), normalized in log space
 *   resample: systematic, when ESS = 1 / sum(w^2) drops below threshold * n
 *
 * All noise is drawn from the counter generator keyed by (seed, cycle,
 * particle), so the ensemble after cycle k depends only on the seed and the
 * observations up to k.
 */

#include "celltwin/dataset.hpp"
#include "celltwin/error.hpp"
#include "celltwin/model.hpp"
#include "celltwin/rng.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace celltwin
{

struct FilterConfig
{
    std::size_t n_particles = 1000;
    NoiseSpec noise{};
    double init_log10_a = -15.77;
    double init_b = 5.45;
    double init_spread_log10_a = 0.5;
    double init_spread_b = 0.5;
    double resample_threshold = 0.5;  // fraction of n_particles
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n_particles < 2)
            throw ConfigError("filter: n_particles must be >= 2");
        if (!(noise.sigma_meas > 0.0))
            throw ConfigError("filter: sigma_meas must be positive");
        if (!(noise.sigma_log10_a >= 0.0) || !(noise.sigma_b >= 0.0))
            throw ConfigError("filter: process noise must be non-negative");
        if (!(init_spread_log10_a >= 0.0) || !(init_spread_b >= 0.0))
            throw ConfigError("filter: initial spreads must be non-negative");
        if (!(resample_threshold > 0.0 && resample_threshold <= 1.0))
            throw ConfigError("filter: resample_threshold must lie in (0, 1]");
        if (!std::isfinite(init_log10_a) || !(init_b > 0.0))
            throw ConfigError("filter: initial parameters need finite log10(a) and b > 0");
    }
};

struct ParticleEnsemble
{
    std::vector<double> log10_a;
    std::vector<double> b;
    std::vector<double> weight;
    int last_cycle = 0;
    std::uint64_t seed = 0;
    double resample_threshold = 0.5;

    std::size_t size() const { return weight.size(); }
    PowerLawParams params(std::size_t i) const { return PowerLawParams::from_log10(log10_a[i], b[i]); }

    double effective_sample_size() const
    {
        double sum_sq = 0.0;
        for (const double w : weight)
            sum_sq += w * w;
        return 1.0 / sum_sq;
    }
};

// Smallest positive value b is reflected to when a perturbation lands exactly on zero.
inline constexpr double kMinExponent = std::numeric_limits<double>::min();

/// Observations whose nearest particle is farther than this many sigma raise DegenerateWeights.
inline constexpr double kDefaultOutlierSigma = 100.0;

inline ParticleEnsemble init(const FilterConfig& config)
{
    config.validate();
    ParticleEnsemble ens;
    const std::size_t n = config.n_particles;
    ens.log10_a.resize(n);
    ens.b.resize(n);
    ens.weight.assign(n, 1.0 / static_cast<double>(n));
    ens.seed = config.seed;
    ens.resample_threshold = config.resample_threshold;
    for (std::size_t i = 0; i < n; ++i)
    {
        ens.log10_a[i] = config.init_log10_a +
                         config.init_spread_log10_a *
                             rng::standard_normal({config.seed, rng::Stream::InitLog10A, 0, i, 0});
        // Truncate b to (0, inf) by redrawing; lanes index the attempts.
        double b = 0.0;
        for (std::uint64_t attempt = 0; attempt < 64; ++attempt)
        {
            b = config.init_b + config.init_spread_b *
                                    rng::standard_normal({config.seed, rng::Stream::InitB, 0, i, attempt});
            if (b > 0.0)
                break;
        }
        ens.b[i] = b > 0.0 ? b : config.init_b;
    }
    return ens;
}

namespace detail
{

inline void systematic_resample(ParticleEnsemble& ens, int cycle)
{
    const std::size_t n = ens.size();
    const double offset = rng::uniform01({ens.seed, rng::Stream::Resample, static_cast<std::uint64_t>(cycle), 0, 0});
    std::vector<double> new_log10_a(n);
    std::vector<double> new_b(n);
    double cumulative = ens.weight[0];
    std::size_t source = 0;
    const double step = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j)
    {
        const double position = (offset + static_cast<double>(j)) * step;
        while (position > cumulative && source + 1 < n)
            cumulative += ens.weight[++source];
        new_log10_a[j] = ens.log10_a[source];
        new_b[j] = ens.b[source];
    }
    ens.log10_a = std::move(new_log10_a);
    ens.b = std::move(new_b);
    ens.weight.assign(n, step);
}

} // namespace detail

/// Assimilates one observation at cycle k (> ens.last_cycle).
inline ParticleEnsemble step(ParticleEnsemble ens, int k, double q_obs, const NoiseSpec& noise,
                             double outlier_sigma = kDefaultOutlierSigma)
{
    require(std::isfinite(q_obs), "step: observation at cycle " + std::to_string(k) + " is not finite");
    require(k > ens.last_cycle, "step: cycle " + std::to_string(k) + " does not follow last assimilated cycle " +
                                    std::to_string(ens.last_cycle));
    require(noise.sigma_meas > 0.0, "step: sigma_meas must be positive");
    require(ens.size() >= 1, "step: empty ensemble");

    const std::size_t n = ens.size();
    const auto cycle_key = static_cast<std::uint64_t>(k);
    const double log_k = std::log(static_cast<double>(k));

    std::vector<double> log_weight(n);
    double max_log_weight = -std::numeric_limits<double>::infinity();
    double min_abs_z = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
    {
        ens.log10_a[i] += noise.sigma_log10_a * rng::standard_normal({ens.seed, rng::Stream::ProcessLog10A, cycle_key, i, 0});
        double b = std::abs(ens.b[i] + noise.sigma_b * rng::standard_normal({ens.seed, rng::Stream::ProcessB, cycle_key, i, 0}));
        ens.b[i] = b > 0.0 ? b : kMinExponent;

        const double predicted = 1.0 - std::exp(ens.log10_a[i] * kLn10 + ens.b[i] * log_k);
        const double z = (q_obs - predicted) / noise.sigma_meas;
        const double ll = gaussian_log_density(q_obs, predicted, noise.sigma_meas);
        log_weight[i] = std::log(ens.weight[i]) + ll;
        if (std::isnan(log_weight[i]))
            log_weight[i] = -std::numeric_limits<double>::infinity();
        if (log_weight[i] > max_log_weight)
            max_log_weight = log_weight[i];
        if (ens.weight[i] > 0.0 && std::abs(z) < min_abs_z)
            min_abs_z = std::abs(z);
    }
    if (!std::isfinite(max_log_weight) || !(min_abs_z <= outlier_sigma))
        throw DegenerateWeights("cycle " + std::to_string(k) + ": observation " + io::format_double(q_obs) +
                                " is " + io::format_double(min_abs_z) +
                                " sigma from every particle (gross outlier; consider widening sigma_meas)");

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        log_weight[i] = std::exp(log_weight[i] - max_log_weight);
        total += log_weight[i];
    }
    for (std::size_t i = 0; i < n; ++i)
        ens.weight[i] = log_weight[i] / total;

    if (ens.effective_sample_size() < ens.resample_threshold * static_cast<double>(n))
        detail::systematic_resample(ens, k);
    ens.last_cycle = k;
    return ens;
}

/// Folds `step` over the trace's measured points in (ens.last_cycle, upto_cycle]; extrapolated points are skipped.
inline ParticleEnsemble assimilate(ParticleEnsemble ens, const NormalizedTrace& trace, int upto_cycle,
                                   const NoiseSpec& noise, double outlier_sigma = kDefaultOutlierSigma)
{
    if (upto_cycle <= ens.last_cycle)
        return ens;
    require(!trace.cycles.empty() && upto_cycle <= trace.last_cycle(),
            "assimilate: cycle " + std::to_string(upto_cycle) + " is beyond the end of cell '" + trace.cell_id + "'");
    const auto measured_end = trace.cycles.begin() + static_cast<std::ptrdiff_t>(trace.measured_count());
    const auto begin = std::upper_bound(trace.cycles.begin(), measured_end, ens.last_cycle);
    for (auto it = begin; it != measured_end && *it <= upto_cycle; ++it)
    {
        const auto i = static_cast<std::size_t>(it - trace.cycles.begin());
        try
        {
            ens = step(std::move(ens), *it, trace.q[i], noise, outlier_sigma);
        }
        catch (const DegenerateWeights& e)
        {
            throw DegenerateWeights("cell '" + trace.cell_id + "', " + std::string(e.what()));
        }
    }
    return ens;
}

struct PosteriorSummary
{
    double mean_log10_a = 0.0;
    double mean_b = 0.0;
    std::array<std::array<double, 2>, 2> cov{};  // (log10 a, b)
};

inline PosteriorSummary posterior_summary(const ParticleEnsemble& ens)
{
    PosteriorSummary s;
    for (std::size_t i = 0; i < ens.size(); ++i)
    {
        s.mean_log10_a += ens.weight[i] * ens.log10_a[i];
        s.mean_b += ens.weight[i] * ens.b[i];
    }
    for (std::size_t i = 0; i < ens.size(); ++i)
    {
        const double da = ens.log10_a[i] - s.mean_log10_a;
        const double db = ens.b[i] - s.mean_b;
        s.cov[0][0] += ens.weight[i] * da * da;
        s.cov[0][1] += ens.weight[i] * da * db;
        s.cov[1][1] += ens.weight[i] * db * db;
    }
    s.cov[1][0] = s.cov[0][1];
    return s;
}

/// Snapshot for pausing and resuming the online loop.
inline nlohmann::json to_json(const ParticleEnsemble& ens)
{
    nlohmann::json doc;
    doc["generator"] = rng::kGeneratorName;
    doc["last_cycle"] = ens.last_cycle;
    doc["seed"] = ens.seed;
    doc["resample_threshold"] = ens.resample_threshold;
    doc["log10_a"] = ens.log10_a;
    doc["b"] = ens.b;
    doc["weight"] = ens.weight;
    return doc;
}

inline ParticleEnsemble ensemble_from_json(const nlohmann::json& doc)
{
    try
    {
        ParticleEnsemble ens;
        if (doc.contains("generator") && doc.at("generator").get<std::string>() != rng::kGeneratorName)
            throw DataError("IncompatibleSnapshot", "snapshot was written by generator '" +
                                                        doc.at("generator").get<std::string>() + "'");
        ens.last_cycle = doc.at("last_cycle").get<int>();
        ens.seed = doc.at("seed").get<std::uint64_t>();
        ens.resample_threshold = doc.value("resample_threshold", 0.5);
        ens.log10_a = doc.at("log10_a").get<std::vector<double>>();
        ens.b = doc.at("b").get<std::vector<double>>();
        ens.weight = doc.at("weight").get<std::vector<double>>();
        if (ens.log10_a.size() != ens.b.size() || ens.b.size() != ens.weight.size() || ens.weight.empty())
            throw DataError("IncompatibleSnapshot", "particle arrays differ in length");
        const double total = std::accumulate(ens.weight.begin(), ens.weight.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-9)
            throw DataError("IncompatibleSnapshot", "weights do not sum to 1");
        return ens;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DataError("IncompatibleSnapshot", std::string("malformed ensemble snapshot: ") + e.what());
    }
}

} // namespace celltwin
