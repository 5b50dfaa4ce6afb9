#pragma once

#include "celltwin/dataset.hpp"
#include "celltwin/filter.hpp"
#include "celltwin/prognosis.hpp"
#include "celltwin/utility.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace celltwin
{

struct CandidateSet
{
    std::vector<int> cycles;
    bool truncated_at_horizon = false;  // the median never reached the floor within the projection
};

/**
 * Integer cycles from `current` through the first cycle (counted from the
 * projection start) whose median capacity is at or below `floor`.
 */
inline CandidateSet candidate_cycles(int current, const CapacityProjection& proj, double floor)
{
    require(current >= proj.from_cycle, "candidate_cycles: current cycle " + std::to_string(current) +
                                            " precedes the projection start " + std::to_string(proj.from_cycle));
    std::optional<int> crossing;
    for (std::size_t t = 0; t < proj.length(); ++t)
        if (proj.median_q[t] <= floor)
        {
            crossing = proj.from_cycle + static_cast<int>(t);
            break;
        }

    CandidateSet out;
    int last = 0;
    if (crossing)
    {
        if (*crossing < current)
            throw EmptyCandidateSet("projected median capacity reached the floor " + io::format_double(floor) +
                                    " at cycle " + std::to_string(*crossing) + ", before cycle " +
                                    std::to_string(current));
        last = *crossing;
    }
    else
    {
        if (current > proj.horizon_cycle)
            throw EmptyCandidateSet("cycle " + std::to_string(current) + " lies beyond the projection horizon " +
                                    std::to_string(proj.horizon_cycle));
        last = proj.horizon_cycle;
        out.truncated_at_horizon = true;
    }
    out.cycles.reserve(static_cast<std::size_t>(last - current + 1));
    for (int k = current; k <= last; ++k)
        out.cycles.push_back(k);
    return out;
}

struct RetirementOptions
{
    double trigger_threshold = 0.95;
    double eol_threshold = 0.5;
    double retire_floor = 0.5;
    double discharge_rate_c = 4.0;
    int max_horizon_span = kDefaultMaxHorizonSpan;
};

struct UtilityPoint
{
    int cycle = 0;
    double utility = 0.0;
    std::vector<double> phi;  // per attribute
    std::vector<double> raw;  // per attribute, in attribute units
};

struct RetirementDecision
{
    int current_cycle = 0;
    std::vector<int> candidates;
    std::vector<std::string> attribute_names;
    std::vector<UtilityPoint> utility_curve;
    int optimal_cycle = 0;
    double optimal_utility = 0.0;
    bool truncated_at_horizon = false;
    bool utilities_clamped = true;
};

/// Measured q for cycles 1..current followed by the projected median beyond, indexed from cycle 1.
inline std::vector<double> hybrid_trajectory(const NormalizedTrace& trace, const CapacityProjection& proj,
                                             int current, int last_cycle)
{
    std::vector<double> q;
    q.reserve(static_cast<std::size_t>(last_cycle));
    for (int k = 1; k <= current; ++k)
    {
        const auto value = trace.at(k);
        if (!value)
            throw IncompleteTrajectory("cell '" + trace.cell_id + "' has no measurement at cycle " +
                                       std::to_string(k) + " (needed for cycles 1.." + std::to_string(current) + ")");
        q.push_back(*value);
    }
    for (int k = current + 1; k <= last_cycle; ++k)
        q.push_back(proj.median_at(k));
    return q;
}

/// Largest utility on a curve, earliest cycle on ties.
inline std::size_t argmax_earliest(std::span<const UtilityPoint> curve)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        if (curve[i].utility > curve[best].utility)
            best = i;
    return best;
}

/**
 * Exhaustive retirement-cycle search over the projected future of a cell.
 * `ens` must be assimilated no further than `current`.
 */
inline RetirementDecision optimize_retirement(const NormalizedTrace& trace, const ParticleEnsemble& ens,
                                              std::span<const AttributeSpec> specs, int current,
                                              const RetirementOptions& options = {})
{
    validate_weights(specs);
    const auto q_current = trace.at(current);
    require(q_current.has_value() && (!trace.extrapolated_from || current < *trace.extrapolated_from),
            "optimize_retirement: cell '" + trace.cell_id + "' has no measurement at cycle " + std::to_string(current));
    if (*q_current > options.trigger_threshold)
        throw NotTriggered("cell '" + trace.cell_id + "' at cycle " + std::to_string(current) + " has q = " +
                           io::format_double(*q_current) + " > trigger " +
                           io::format_double(options.trigger_threshold));

    const auto proj = project(ens, current, options.eol_threshold, {}, options.max_horizon_span);
    const auto candidates = candidate_cycles(current, proj, options.retire_floor);
    const auto q = hybrid_trajectory(trace, proj, current, candidates.cycles.back());

    // Prefix sums accumulate in the same order as total_ah, so values match it exactly.
    std::vector<double> cumulative_ah(q.size() + 1, 0.0);
    for (std::size_t i = 0; i < q.size(); ++i)
        cumulative_ah[i + 1] = cumulative_ah[i] + q[i] * trace.q0_ah;

    RetirementDecision decision;
    decision.current_cycle = current;
    decision.candidates = candidates.cycles;
    decision.truncated_at_horizon = candidates.truncated_at_horizon;
    for (const auto& spec : specs)
    {
        decision.attribute_names.push_back(spec.name);
        decision.utilities_clamped = decision.utilities_clamped && spec.utility.clamp;
    }
    decision.utility_curve.reserve(candidates.cycles.size());

    std::vector<double> raw(specs.size());
    for (const int x_c : candidates.cycles)
    {
        const auto idx = static_cast<std::size_t>(x_c);
        for (std::size_t i = 0; i < specs.size(); ++i)
            raw[i] = specs[i].extractor == Extractor::TotalAh ? cumulative_ah[idx]
                                                              : mtbc(q[idx - 1], options.discharge_rate_c);
        UtilityPoint point;
        point.cycle = x_c;
        point.raw = raw;
        point.phi.reserve(specs.size());
        for (std::size_t i = 0; i < specs.size(); ++i)
            point.phi.push_back(specs[i].utility(raw[i]));
        point.utility = combined_utility(specs, raw);
        decision.utility_curve.push_back(std::move(point));
    }

    const auto best = argmax_earliest(decision.utility_curve);
    decision.optimal_cycle = decision.utility_curve[best].cycle;
    decision.optimal_utility = decision.utility_curve[best].utility;
    return decision;
}

/// CSV `cycle,utility,phi_<name>...,<name>...`; the case study gives `cycle,utility,phi_ah,phi_mtbc,ah,mtbc`.
inline std::string utility_curve_csv(const RetirementDecision& decision)
{
    std::vector<std::string> header{"cycle", "utility"};
    for (const auto& name : decision.attribute_names)
        header.push_back("phi_" + name);
    for (const auto& name : decision.attribute_names)
        header.push_back(name);
    io::CsvWriter csv(header);
    for (const auto& point : decision.utility_curve)
        csv.add(point.cycle, point.utility, point.phi, point.raw);
    return csv.str();
}

inline nlohmann::json to_json(const RetirementDecision& decision)
{
    nlohmann::json doc;
    doc["optimal_cycle"] = decision.optimal_cycle;
    doc["optimal_utility"] = decision.optimal_utility;
    doc["current_cycle"] = decision.current_cycle;
    doc["n_candidates"] = decision.candidates.size();
    doc["truncated_at_horizon"] = decision.truncated_at_horizon;
    doc["utilities_clamped"] = decision.utilities_clamped;
    return doc;
}

} // namespace celltwin
