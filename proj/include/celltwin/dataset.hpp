#pragma once

#include "celltwin/error.hpp"
#include "celltwin/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace celltwin
{

enum class Split
{
    Train,
    PrimaryTest,
    SecondaryTest
};

inline std::string to_string(Split split)
{
    switch (split)
    {
    case Split::Train: return "train";
    case Split::PrimaryTest: return "test1";
    case Split::SecondaryTest: return "test2";
    }
    return "train";
}

inline std::optional<Split> parse_split(std::string_view text)
{
    if (text == "train")
        return Split::Train;
    if (text == "test1")
        return Split::PrimaryTest;
    if (text == "test2")
        return Split::SecondaryTest;
    return std::nullopt;
}

using SplitManifest = std::map<std::string, Split, std::less<>>;

/// One cell's per-cycle discharge capacity history.
struct CellRecord
{
    std::string cell_id;
    Split split = Split::Train;
    std::vector<int> cycles;
    std::vector<double> capacity_ah;
    double nominal_capacity_ah = 1.0;
    std::optional<int> extrapolated_from;
};

/// Per-cycle capacity divided by the early-life reference capacity `q0_ah`.
struct NormalizedTrace
{
    std::string cell_id;
    Split split = Split::Train;
    std::vector<int> cycles;
    std::vector<double> q;
    double q0_ah = 1.0;
    std::optional<int> extrapolated_from;

    std::size_t size() const { return cycles.size(); }
    int first_cycle() const { return cycles.front(); }
    int last_cycle() const { return cycles.back(); }

    /// Number of leading points that are measurements (not synthetic extension).
    std::size_t measured_count() const
    {
        if (!extrapolated_from)
            return cycles.size();
        return static_cast<std::size_t>(std::lower_bound(cycles.begin(), cycles.end(), *extrapolated_from) -
                                        cycles.begin());
    }

    std::optional<double> at(int cycle) const
    {
        const auto it = std::lower_bound(cycles.begin(), cycles.end(), cycle);
        if (it == cycles.end() || *it != cycle)
            return std::nullopt;
        return q[static_cast<std::size_t>(it - cycles.begin())];
    }
};

// Sanity bound for normalized capacity; LFP cells rise slightly early in life.
inline constexpr double kMaxNormalizedCapacity = 1.15;

inline void validate(const CellRecord& cell)
{
    const std::string where = "cell '" + cell.cell_id + "': ";
    if (cell.cycles.empty() || cell.cycles.size() != cell.capacity_ah.size())
        throw InvalidRecord(where + "cycles and capacities must be non-empty and of equal length");
    for (std::size_t i = 0; i < cell.cycles.size(); ++i)
    {
        if (cell.cycles[i] < 1 || (i > 0 && cell.cycles[i] <= cell.cycles[i - 1]))
            throw NonMonotoneCycles(where + "cycle indices must be positive and strictly increasing (at position " +
                                    std::to_string(i) + ", cycle " + std::to_string(cell.cycles[i]) + ")");
        if (!(cell.capacity_ah[i] > 0.0) || !std::isfinite(cell.capacity_ah[i]))
            throw InvalidRecord(where + "non-positive capacity at cycle " + std::to_string(cell.cycles[i]));
    }
    if (!(cell.nominal_capacity_ah > 0.0))
        throw InvalidRecord(where + "nominal capacity must be positive");
}

/// Reads a two-column `cell_id,split` manifest.
inline SplitManifest load_split_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("UnreadableFile", "cannot open split manifest '" + path.string() + "'");
    SplitManifest manifest;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        auto text = io::trim(line);
        if (line_no == 1 && text.starts_with("\xEF\xBB\xBF"))
            text.remove_prefix(3);
        if (text.empty())
            continue;
        const auto fields = io::split_fields(text);
        if (line_no == 1)
        {
            if (fields.size() != 2 || fields[0] != "cell_id" || fields[1] != "split")
                throw MalformedRow(path.string() + ":1: expected header 'cell_id,split'");
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        if (fields.size() != 2)
            throw MalformedRow(where + "expected 2 columns, found " + std::to_string(fields.size()));
        const auto split = parse_split(fields[1]);
        if (!split)
            throw MalformedRow(where + "unknown split '" + std::string(fields[1]) + "'");
        if (!manifest.emplace(std::string(fields[0]), *split).second)
            throw MalformedRow(where + "cell '" + std::string(fields[0]) + "' listed twice");
    }
    return manifest;
}

/**
 * Loads per-cycle capacity rows and groups them into one record per cell.
 *
 * Accepted headers:
 *   cell_id,split,cycle,discharge_capacity_ah,nominal_capacity_ah
 *   cell_id,cycle,discharge_capacity_ah,nominal_capacity_ah   (manifest required)
 *
 * When a manifest is supplied it decides each cell's split and must list
 * every cell in the file. Records are returned sorted by cell_id with rows
 * sorted by cycle.
 */
inline std::vector<CellRecord> load_cells(const std::filesystem::path& path, const SplitManifest* manifest = nullptr)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("UnreadableFile", "cannot open dataset '" + path.string() + "'");

    struct Row
    {
        double capacity;
        std::size_t line;
    };
    struct Group
    {
        Split split;
        double nominal;
        std::map<int, Row> rows;
    };
    std::map<std::string, Group> groups;

    std::string line;
    std::size_t line_no = 0;
    bool has_split_column = true;
    std::size_t expected_columns = 5;
    while (std::getline(in, line))
    {
        ++line_no;
        auto text = io::trim(line);
        if (line_no == 1 && text.starts_with("\xEF\xBB\xBF"))
            text.remove_prefix(3);
        if (text.empty())
            continue;
        const auto fields = io::split_fields(text);
        if (line_no == 1)
        {
            const std::vector<std::string_view> with_split{"cell_id", "split", "cycle", "discharge_capacity_ah",
                                                           "nominal_capacity_ah"};
            const std::vector<std::string_view> without_split{"cell_id", "cycle", "discharge_capacity_ah",
                                                              "nominal_capacity_ah"};
            if (fields == with_split)
                has_split_column = true;
            else if (fields == without_split)
                has_split_column = false;
            else
                throw MalformedRow(path.string() +
                                   ":1: expected header "
                                   "'cell_id,split,cycle,discharge_capacity_ah,nominal_capacity_ah'");
            if (!has_split_column && manifest == nullptr)
                throw MalformedRow(path.string() + ":1: file has no split column and no split manifest was given");
            expected_columns = fields.size();
            continue;
        }

        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        if (fields.size() != expected_columns)
            throw MalformedRow(where + "expected " + std::to_string(expected_columns) + " columns, found " +
                               std::to_string(fields.size()));
        const std::string cell_id(fields[0]);
        if (cell_id.empty())
            throw MalformedRow(where + "empty cell_id");
        const std::size_t off = has_split_column ? 1 : 0;
        const auto cycle = io::parse_int(fields[1 + off]);
        const auto capacity = io::parse_double(fields[2 + off]);
        const auto nominal = io::parse_double(fields[3 + off]);
        if (!cycle || !capacity || !nominal)
            throw MalformedRow(where + "cell '" + cell_id + "': non-numeric cycle or capacity field");
        if (!std::isfinite(*capacity) || *capacity <= 0.0 || !std::isfinite(*nominal) || *nominal <= 0.0)
            throw MalformedRow(where + "cell '" + cell_id + "': capacities must be positive and finite");
        if (*cycle < 1 || *cycle > std::numeric_limits<int>::max())
            throw NonMonotoneCycles(where + "cell '" + cell_id + "': cycle index " + std::to_string(*cycle) +
                                    " is not a positive integer");

        Split split = Split::Train;
        if (manifest)
        {
            const auto it = manifest->find(cell_id);
            if (it == manifest->end())
                throw UnknownCell(where + "cell '" + cell_id + "' is not listed in the split manifest");
            split = it->second;
        }
        else
        {
            const auto parsed = parse_split(fields[1]);
            if (!parsed)
                throw MalformedRow(where + "cell '" + cell_id + "': unknown split '" + std::string(fields[1]) +
                                   "' (expected train, test1 or test2)");
            split = *parsed;
        }

        auto [it, inserted] = groups.try_emplace(cell_id, Group{split, *nominal, {}});
        Group& group = it->second;
        if (!inserted)
        {
            if (group.split != split)
                throw MalformedRow(where + "cell '" + cell_id + "': split changes between rows");
            if (group.nominal != *nominal)
                throw MalformedRow(where + "cell '" + cell_id + "': nominal capacity changes between rows");
        }
        const int k = static_cast<int>(*cycle);
        if (const auto prev = group.rows.find(k); prev != group.rows.end())
            throw DuplicateCycle(where + "cell '" + cell_id + "': cycle " + std::to_string(k) +
                                 " already given on line " + std::to_string(prev->second.line));
        group.rows.emplace(k, Row{*capacity, line_no});
    }
    if (line_no == 0)
        throw MalformedRow(path.string() + ": empty file");

    std::vector<CellRecord> records;
    records.reserve(groups.size());
    for (auto& [cell_id, group] : groups)
    {
        CellRecord record;
        record.cell_id = cell_id;
        record.split = group.split;
        record.nominal_capacity_ah = group.nominal;
        for (const auto& [cycle, row] : group.rows)
        {
            record.cycles.push_back(cycle);
            record.capacity_ah.push_back(row.capacity);
        }
        validate(record);
        records.push_back(std::move(record));
    }
    return records;
}

/// Divides capacities by the peak over the first `window` cycles.
inline NormalizedTrace normalize(const CellRecord& cell, std::size_t window = 100)
{
    validate(cell);
    require(window >= 1, "normalize: window must be >= 1");
    const auto span_end = cell.capacity_ah.begin() +
                          static_cast<std::ptrdiff_t>(std::min(window, cell.capacity_ah.size()));
    const double q0 = *std::max_element(cell.capacity_ah.begin(), span_end);

    NormalizedTrace trace;
    trace.cell_id = cell.cell_id;
    trace.split = cell.split;
    trace.cycles = cell.cycles;
    trace.q0_ah = q0;
    trace.extrapolated_from = cell.extrapolated_from;
    trace.q.reserve(cell.capacity_ah.size());
    for (std::size_t i = 0; i < cell.capacity_ah.size(); ++i)
    {
        const double q = cell.capacity_ah[i] / q0;
        if (q > kMaxNormalizedCapacity)
            throw InvalidRecord("cell '" + cell.cell_id + "': normalized capacity " + io::format_double(q) +
                                " at cycle " + std::to_string(cell.cycles[i]) + " exceeds " +
                                io::format_double(kMaxNormalizedCapacity));
        trace.q.push_back(q);
    }
    return trace;
}

/// Re-expresses a normalized trace as a record whose capacities are the normalized values.
inline CellRecord to_record(const NormalizedTrace& trace)
{
    return CellRecord{trace.cell_id, trace.split, trace.cycles, trace.q, trace.q0_ah, trace.extrapolated_from};
}

// Upper bound on synthetic points appended by extend_linear.
inline constexpr long long kMaxExtensionPoints = 1'000'000;

/**
 * Appends one point per cycle on the least-squares line through the last
 * `tail` points, stopping at (and including) the first cycle whose line
 * value is at or below `floor`; that last value is clamped up to `floor`.
 */
inline NormalizedTrace extend_linear(const NormalizedTrace& trace, std::size_t tail = 30, double floor = 0.5)
{
    require(tail >= 2, "extend_linear: tail must be >= 2");
    require(floor > 0.0 && floor < 1.0, "extend_linear: floor must lie in (0, 1)");
    require(trace.size() >= tail, "extend_linear: cell '" + trace.cell_id + "' has " +
                                      std::to_string(trace.size()) + " points, fewer than tail=" +
                                      std::to_string(tail));
    require(!trace.extrapolated_from, "extend_linear: cell '" + trace.cell_id + "' is already extended");

    const std::size_t first = trace.size() - tail;
    double mean_x = 0.0;
    double mean_y = 0.0;
    for (std::size_t i = first; i < trace.size(); ++i)
    {
        mean_x += trace.cycles[i];
        mean_y += trace.q[i];
    }
    mean_x /= static_cast<double>(tail);
    mean_y /= static_cast<double>(tail);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = first; i < trace.size(); ++i)
    {
        const double dx = trace.cycles[i] - mean_x;
        sxx += dx * dx;
        sxy += dx * (trace.q[i] - mean_y);
    }
    const double slope = sxy / sxx;
    if (!(slope < 0.0))
        throw NonDecreasingTail("cell '" + trace.cell_id + "': slope of the last " + std::to_string(tail) +
                                " points is " + io::format_double(slope) + ", cannot extrapolate to a floor");
    if (trace.q.back() <= floor)
        throw AlreadyBelowFloor("cell '" + trace.cell_id + "': last capacity " + io::format_double(trace.q.back()) +
                                " is already at or below the floor " + io::format_double(floor));

    const auto line = [&](double k) { return mean_y + slope * (k - mean_x); };
    const int last = trace.last_cycle();
    const double steps = std::ceil((line(last) - floor) / -slope) + 1.0;
    if (steps > static_cast<double>(kMaxExtensionPoints))
        throw ExtrapolationTooLong("cell '" + trace.cell_id + "': slope " + io::format_double(slope) +
                                   " needs more than " + std::to_string(kMaxExtensionPoints) +
                                   " cycles to reach the floor");

    NormalizedTrace out = trace;
    out.extrapolated_from = last + 1;
    for (int k = last + 1;; ++k)
    {
        const double value = line(k);
        out.cycles.push_back(k);
        out.q.push_back(std::max(value, floor));
        if (value <= floor)
            break;
    }
    return out;
}

/// First cycle starting a run of `persist` consecutive points with q <= threshold.
inline std::optional<int> trigger_cycle(const NormalizedTrace& trace, double threshold = 0.95, std::size_t persist = 1)
{
    require(persist >= 1, "trigger_cycle: persist must be >= 1");
    std::size_t run = 0;
    for (std::size_t i = 0; i < trace.size(); ++i)
    {
        run = trace.q[i] <= threshold ? run + 1 : 0;
        if (run == persist)
            return trace.cycles[i + 1 - persist];
    }
    return std::nullopt;
}

inline nlohmann::json to_json(const NormalizedTrace& trace)
{
    nlohmann::json doc;
    doc["cell_id"] = trace.cell_id;
    doc["split"] = to_string(trace.split);
    doc["q0_ah"] = trace.q0_ah;
    if (trace.extrapolated_from)
        doc["extrapolated_from"] = *trace.extrapolated_from;
    doc["cycles"] = trace.cycles;
    doc["q"] = trace.q;
    return doc;
}

inline NormalizedTrace trace_from_json(const nlohmann::json& doc)
{
    try
    {
        NormalizedTrace trace;
        trace.cell_id = doc.at("cell_id").get<std::string>();
        if (doc.contains("split"))
        {
            const auto split = parse_split(doc.at("split").get<std::string>());
            if (!split)
                throw InvalidRecord("cell '" + trace.cell_id + "': unknown split");
            trace.split = *split;
        }
        trace.q0_ah = doc.at("q0_ah").get<double>();
        if (doc.contains("extrapolated_from") && !doc.at("extrapolated_from").is_null())
            trace.extrapolated_from = doc.at("extrapolated_from").get<int>();
        trace.cycles = doc.at("cycles").get<std::vector<int>>();
        trace.q = doc.at("q").get<std::vector<double>>();
        if (trace.cycles.empty() || trace.cycles.size() != trace.q.size())
            throw InvalidRecord("cell '" + trace.cell_id + "': cycles and q differ in length");
        return trace;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw InvalidRecord(std::string("malformed cell document: ") + e.what());
    }
}

} // namespace celltwin
