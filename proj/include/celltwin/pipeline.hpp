#pragma once

/**
 * Batch commands behind the `cell-twin` executable.
 *
 * Output layout under the run's output directory:
 *   cells/<cell_id>.json            normalized (and extended) trace per cell
 *   ingest_summary.json             cell list with splits
 *   fleet_fit.json                  offline calibration
 *   simulate/<cell_id>/             projection_<k>.csv, eol_<k>.csv, rul.csv,
 *                                   ensemble.json, summary.json
 *   retire/<cell_id>/               utility_curve.csv, decision.json
 *   retire/summary.json
 *   evaluate/                       rul_errors_<cell_id>.csv, calibration.csv, summary.json
 *
 * Per-cell work is independent and may run on a worker pool; every file is
 * a function of the config and seed only.
 */

#include "celltwin/calib.hpp"
#include "celltwin/config.hpp"
#include "celltwin/dataset.hpp"
#include "celltwin/eval.hpp"
#include "celltwin/filter.hpp"
#include "celltwin/io.hpp"
#include "celltwin/prognosis.hpp"
#include "celltwin/retirement.hpp"
#include "celltwin/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace celltwin::pipeline
{

namespace fs = std::filesystem;

struct CommandOptions
{
    std::optional<std::string> cell;
    std::optional<int> at_cycle;  // retire: decision cycle instead of the trigger cycle
};

/// Runs fn(i) for i in [0, count) on up to `workers` threads; rethrows the lowest-index failure.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn)
{
    std::vector<std::exception_ptr> errors(count);
    const auto body = [&](std::size_t i) {
        try
        {
            fn(i);
        }
        catch (...)
        {
            errors[i] = std::current_exception();
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1)
        for (std::size_t i = 0; i < count; ++i)
            body(i);
    else
    {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++)
                    body(i);
            });
    }
    for (const auto& error : errors)
        if (error)
            std::rethrow_exception(error);
}

inline std::string dump(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

inline void check_cell_id(const std::string& id)
{
    const bool ok = !id.empty() && id != "." && id != ".." &&
                    std::all_of(id.begin(), id.end(), [](char c) {
                        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
                    });
    if (!ok)
        throw DataError("InvalidCellId", "cell id '" + id + "' cannot be used as a file name");
}

inline nlohmann::json read_json(const fs::path& path, const std::string& hint)
{
    if (!fs::is_regular_file(path))
        throw DataError("MissingInput", "'" + path.string() + "' not found (" + hint + ")");
    try
    {
        return nlohmann::json::parse(io::read_file(path));
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DataError("MalformedInput", "'" + path.string() + "': " + e.what());
    }
}

/// Cell ids and splits recorded by ingest, sorted by id.
inline std::vector<std::pair<std::string, Split>> ingested_cells(const RunConfig& cfg)
{
    const auto doc = read_json(cfg.output_dir / "ingest_summary.json", "run 'ingest' first");
    std::vector<std::pair<std::string, Split>> cells;
    for (const auto& entry : doc.at("cells"))
    {
        const auto split = parse_split(entry.at("split").get<std::string>());
        if (!split)
            throw DataError("MalformedInput", "ingest summary lists an unknown split");
        cells.emplace_back(entry.at("cell_id").get<std::string>(), *split);
    }
    std::sort(cells.begin(), cells.end());
    return cells;
}

inline NormalizedTrace load_trace(const RunConfig& cfg, const std::string& cell_id)
{
    check_cell_id(cell_id);
    return trace_from_json(read_json(cfg.output_dir / "cells" / (cell_id + ".json"), "run 'ingest' first"));
}

/// Cells a per-cell command operates on: the explicit --cell, else every cell of the simulate splits.
inline std::vector<std::string> select_cells(const RunConfig& cfg, const CommandOptions& options)
{
    const auto cells = ingested_cells(cfg);
    std::vector<std::string> out;
    if (options.cell)
    {
        const bool known = std::any_of(cells.begin(), cells.end(), [&](const auto& c) { return c.first == *options.cell; });
        if (!known)
            throw UnknownCell("cell '" + *options.cell + "' is not in the ingested dataset");
        out.push_back(*options.cell);
        return out;
    }
    for (const auto& [id, split] : cells)
        if (std::find(cfg.simulate_splits.begin(), cfg.simulate_splits.end(), split) != cfg.simulate_splits.end())
            out.push_back(id);
    return out;
}

/// Filter settings for one cell: explicit init overrides, else the fleet medians from calibrate.
inline FilterConfig filter_for_cell(const RunConfig& cfg, const std::string& cell_id)
{
    FilterConfig filter = cfg.filter;
    if (!cfg.init_overridden)
    {
        const auto path = cfg.output_dir / "fleet_fit.json";
        if (!fs::is_regular_file(path))
            throw ConfigError("no initial filter parameters: run 'calibrate' or set filter.init_log10_a and filter.init_b");
        const auto fleet = fleet_fit_from_json(read_json(path, "run 'calibrate' first"));
        filter.init_log10_a = fleet.median_log10_a;
        filter.init_b = fleet.median_b;
    }
    filter.seed = rng::derive_seed(cfg.seed, cell_id);
    return filter;
}

/// Cycles at which a cell's predictions are made (measured cycles only).
inline std::vector<int> prediction_schedule(const RunConfig& cfg, const NormalizedTrace& trace,
                                            std::optional<int> trigger)
{
    // extrapolated points are never assimilated
    const int last_measured = trace.cycles[trace.measured_count() - 1];
    std::vector<int> cycles;
    if (!cfg.schedule.cycles.empty())
    {
        for (const int c : cfg.schedule.cycles)
            if (c >= trace.first_cycle() && c <= last_measured)
                cycles.push_back(c);
        return cycles;
    }
    const std::optional<int> start = cfg.schedule.start ? cfg.schedule.start : trigger;
    if (!start)
        return cycles;
    for (long long c = std::max(*start, trace.first_cycle()); c <= last_measured; c += cfg.schedule.stride)
        cycles.push_back(static_cast<int>(c));
    return cycles;
}

// ---------------------------------------------------------------------------

inline void cmd_ingest(const RunConfig& cfg, std::ostream& log)
{
    std::optional<SplitManifest> manifest;
    if (cfg.split_manifest)
        manifest = load_split_manifest(*cfg.split_manifest);
    const auto records = load_cells(cfg.dataset, manifest ? &*manifest : nullptr);

    std::vector<NormalizedTrace> traces;
    traces.reserve(records.size());
    for (const auto& record : records)
    {
        check_cell_id(record.cell_id);
        auto trace = normalize(record, cfg.normalize_window);
        // cells that already reach the floor need no extension
        if (cfg.extend && trace.q.back() > cfg.extend_floor)
            trace = extend_linear(trace, cfg.extend_tail, cfg.extend_floor);
        traces.push_back(std::move(trace));
    }

    std::map<std::string, int> counts{{"train", 0}, {"test1", 0}, {"test2", 0}};
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& trace : traces)
    {
        io::write_file_atomic(cfg.output_dir / "cells" / (trace.cell_id + ".json"), dump(to_json(trace)));
        ++counts[to_string(trace.split)];
        nlohmann::json entry{{"cell_id", trace.cell_id},
                             {"split", to_string(trace.split)},
                             {"n_measured", trace.measured_count()}};
        if (trace.extrapolated_from)
            entry["extrapolated_from"] = *trace.extrapolated_from;
        cells.push_back(std::move(entry));
    }
    nlohmann::json summary;
    summary["n_cells"] = traces.size();
    summary["splits"] = counts;
    summary["extended"] = cfg.extend;
    summary["cells"] = cells;
    io::write_file_atomic(cfg.output_dir / "ingest_summary.json", dump(summary));

    log << "ingested " << traces.size() << " cells: train=" << counts["train"] << " test1=" << counts["test1"]
        << " test2=" << counts["test2"] << (cfg.extend ? "" : " (no extension)") << "\n";
}

inline FleetFit cmd_calibrate(const RunConfig& cfg, std::ostream& log)
{
    std::vector<NormalizedTrace> train;
    for (const auto& [id, split] : ingested_cells(cfg))
        if (split == Split::Train)
            train.push_back(load_trace(cfg, id));
    const auto fleet = fleet_calibrate(train, cfg.fit);
    io::write_file_atomic(cfg.output_dir / "fleet_fit.json", dump(to_json(fleet)));
    log << "calibrated " << fleet.per_cell.size() << " of " << train.size() << " training cells\n"
        << "median log10(a) = " << io::format_double(fleet.median_log10_a) << " (reference -15.77)\n"
        << "median b        = " << io::format_double(fleet.median_b) << " (reference 5.45)\n";
    for (const auto& [pct, ah] : fleet.ah_percentiles)
        log << "total Ah p" << pct << " = " << io::format_double(ah) << "\n";
    return fleet;
}

inline void simulate_cell(const RunConfig& cfg, const std::string& cell_id)
{
    const auto trace = load_trace(cfg, cell_id);
    const auto filter = filter_for_cell(cfg, cell_id);
    const auto trigger = trigger_cycle(trace, cfg.thresholds.trigger, cfg.trigger_persist);
    const auto schedule = prediction_schedule(cfg, trace, trigger);
    const auto dir = cfg.output_dir / "simulate" / cell_id;

    std::vector<std::string> rul_header{"at_cycle", "rul_median"};
    for (const double level : cfg.quantiles)
        rul_header.push_back(io::quantile_label(level, "rul_q"));
    rul_header.push_back("eol_median");
    io::CsvWriter rul_csv(rul_header);

    auto ens = init(filter);
    for (const int cycle : schedule)
    {
        ens = assimilate(std::move(ens), trace, cycle, filter.noise, cfg.outlier_sigma);
        const auto proj = project(ens, cycle, cfg.thresholds.eol, cfg.quantiles);
        const auto dist = eol_distribution(proj);
        const auto prediction = rul(proj, cycle, cfg.quantiles);
        io::write_file_atomic(dir / ("projection_" + std::to_string(cycle) + ".csv"), projection_csv(proj));
        io::write_file_atomic(dir / ("eol_" + std::to_string(cycle) + ".csv"), eol_csv(dist));
        std::vector<double> row{prediction.rul_median};
        for (const double level : cfg.quantiles)
            row.push_back(prediction.rul_quantiles.at(level));
        row.push_back(dist.median());
        rul_csv.add(cycle, row);
    }
    io::write_file_atomic(dir / "rul.csv", rul_csv.str());
    io::write_file_atomic(dir / "ensemble.json", dump(to_json(ens)));

    nlohmann::json summary;
    summary["cell_id"] = cell_id;
    summary["seed"] = filter.seed;
    summary["generator"] = rng::kGeneratorName;
    summary["init_log10_a"] = filter.init_log10_a;
    summary["init_b"] = filter.init_b;
    summary["eol_threshold"] = cfg.thresholds.eol;
    summary["trigger_cycle"] = trigger ? nlohmann::json(*trigger) : nlohmann::json();
    summary["prediction_cycles"] = schedule;
    io::write_file_atomic(dir / "summary.json", dump(summary));
}

inline void cmd_simulate(const RunConfig& cfg, const CommandOptions& options, std::ostream& log)
{
    const auto cells = select_cells(cfg, options);
    for (const auto& id : cells)
        filter_for_cell(cfg, id);  // fail on missing init parameters before any output
    parallel_for(cells.size(), cfg.workers, [&](std::size_t i) { simulate_cell(cfg, cells[i]); });
    log << "simulated " << cells.size() << " cells\n";
}

inline RetirementDecision retire_cell(const RunConfig& cfg, const std::string& cell_id, std::optional<int> at_cycle)
{
    const auto trace = load_trace(cfg, cell_id);
    const auto filter = filter_for_cell(cfg, cell_id);
    int current = 0;
    if (at_cycle)
        current = *at_cycle;
    else
    {
        // decisions rest on measurements, so the extrapolated tail cannot fire the trigger
        NormalizedTrace measured = trace;
        measured.cycles.resize(trace.measured_count());
        measured.q.resize(trace.measured_count());
        measured.extrapolated_from.reset();
        const auto trigger = trigger_cycle(measured, cfg.thresholds.trigger, cfg.trigger_persist);
        if (!trigger)
            throw NotTriggered("cell '" + cell_id + "' never falls to q <= " +
                               io::format_double(cfg.thresholds.trigger) + " (last measured q = " +
                               io::format_double(measured.q.back()) + ")");
        current = *trigger;
    }
    const auto ens = assimilate(init(filter), trace, current, filter.noise, cfg.outlier_sigma);
    RetirementOptions options;
    options.trigger_threshold = cfg.thresholds.trigger;
    options.eol_threshold = cfg.thresholds.eol;
    options.retire_floor = cfg.thresholds.retire_floor;
    options.discharge_rate_c = cfg.discharge_rate_c;
    return optimize_retirement(trace, ens, cfg.utilities, current, options);
}

inline void cmd_retire(const RunConfig& cfg, const CommandOptions& options, std::ostream& log)
{
    const auto cells = select_cells(cfg, options);
    for (const auto& id : cells)
        filter_for_cell(cfg, id);
    std::vector<std::optional<RetirementDecision>> decisions(cells.size());
    std::vector<std::string> skipped(cells.size());
    parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
        try
        {
            decisions[i] = retire_cell(cfg, cells[i], options.at_cycle);
        }
        catch (const NotTriggered& e)
        {
            if (options.cell)
                throw;
            skipped[i] = e.what();
            return;
        }
        const auto dir = cfg.output_dir / "retire" / cells[i];
        io::write_file_atomic(dir / "utility_curve.csv", utility_curve_csv(*decisions[i]));
        auto doc = to_json(*decisions[i]);
        doc["cell_id"] = cells[i];
        io::write_file_atomic(dir / "decision.json", dump(doc));
    });

    nlohmann::json summary = nlohmann::json::array();
    for (std::size_t i = 0; i < cells.size(); ++i)
    {
        if (decisions[i])
        {
            const auto& d = *decisions[i];
            summary.push_back({{"cell_id", cells[i]},
                               {"current_cycle", d.current_cycle},
                               {"optimal_cycle", d.optimal_cycle},
                               {"optimal_utility", d.optimal_utility}});
            log << cells[i] << ": retire at cycle " << d.optimal_cycle << " (utility "
                << io::format_double(d.optimal_utility) << ", decided at cycle " << d.current_cycle << ")\n";
        }
        else
        {
            summary.push_back({{"cell_id", cells[i]}, {"skipped", skipped[i]}});
            log << cells[i] << ": skipped, " << skipped[i] << "\n";
        }
    }
    if (!options.cell)
        io::write_file_atomic(cfg.output_dir / "retire" / "summary.json", dump(summary));
}

inline std::vector<RulPrediction> parse_rul_csv(const std::string& text, const std::string& source,
                                                double eol_threshold)
{
    std::vector<RulPrediction> predictions;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size())
    {
        const auto end = text.find('\n', start);
        const std::string_view line(text.data() + start, (end == std::string::npos ? text.size() : end) - start);
        start = end == std::string::npos ? text.size() : end + 1;
        ++line_no;
        if (line_no == 1 || io::trim(line).empty())
            continue;
        const auto fields = io::split_fields(line);
        const auto cycle = fields.size() >= 2 ? io::parse_int(fields[0]) : std::nullopt;
        const auto median = fields.size() >= 2 ? io::parse_double(fields[1]) : std::nullopt;
        if (!cycle || !median)
            throw MalformedRow(source + ":" + std::to_string(line_no) + ": expected 'at_cycle,rul_median,...'");
        RulPrediction p;
        p.at_cycle = static_cast<int>(*cycle);
        p.rul_median = *median;
        p.eol_threshold = eol_threshold;
        predictions.push_back(std::move(p));
    }
    return predictions;
}

inline CalibrationCurve cmd_evaluate(const RunConfig& cfg, const CommandOptions& options, std::ostream& log)
{
    const auto sim_root = cfg.output_dir / "simulate";
    std::vector<std::string> cells;
    if (options.cell)
        cells.push_back(*options.cell);
    else if (fs::is_directory(sim_root))
        for (const auto& entry : fs::directory_iterator(sim_root))
            if (entry.is_directory() && fs::is_regular_file(entry.path() / "summary.json"))
                cells.push_back(entry.path().filename().string());
    std::sort(cells.begin(), cells.end());
    if (cells.empty())
        throw DataError("MissingInput", "no simulate outputs under '" + sim_root.string() + "' (run 'simulate' first)");

    std::vector<EolDistribution> distributions;
    std::vector<double> observations;
    nlohmann::json per_cell = nlohmann::json::array();
    std::vector<std::string> warnings;
    for (const auto& id : cells)
    {
        check_cell_id(id);
        const auto dir = sim_root / id;
        const auto summary = read_json(dir / "summary.json", "run 'simulate' first");
        const double eol_threshold = summary.at("eol_threshold").get<double>();
        const auto trace = load_trace(cfg, id);
        const auto rul_path = dir / "rul.csv";
        const auto predictions = parse_rul_csv(io::read_file(rul_path), rul_path.string(), eol_threshold);
        RulErrorSeries series;
        try
        {
            series = rul_errors(trace, predictions, eol_threshold);
        }
        catch (const NoTrueEol& e)
        {
            warnings.push_back(e.what());
            continue;
        }
        io::write_file_atomic(cfg.output_dir / "evaluate" / ("rul_errors_" + id + ".csv"), rul_errors_csv(series));
        for (const auto& point : series.points)
        {
            const auto eol_path = dir / ("eol_" + std::to_string(point.cycle) + ".csv");
            distributions.push_back(parse_eol_csv(io::read_file(eol_path), eol_path.string()));
            observations.push_back(static_cast<double>(series.true_eol));
        }
        double first_error = series.points.empty() ? 0.0 : series.points.front().signed_error;
        per_cell.push_back({{"cell_id", id},
                            {"true_eol", series.true_eol},
                            {"n_predictions", series.points.size()},
                            {"first_signed_error", series.points.empty() ? nlohmann::json() : nlohmann::json(first_error)}});
    }
    if (observations.empty())
        throw DataError("MissingInput", "simulate outputs contain no predictions to evaluate");
    if (observations.size() == 1)
        warnings.push_back("calibration curve computed from a single prediction");

    const auto curve = calibration_curve<EolDistribution>(distributions, observations, cfg.calibration_levels);
    io::write_file_atomic(cfg.output_dir / "evaluate" / "calibration.csv", calibration_csv(curve));
    nlohmann::json summary;
    summary["n_cells"] = per_cell.size();
    summary["n_samples"] = curve.n_samples;
    summary["area_deviation"] = curve.area_deviation;
    summary["levels"] = curve.levels;
    summary["observed"] = curve.observed;
    summary["cells"] = per_cell;
    summary["warnings"] = warnings;
    io::write_file_atomic(cfg.output_dir / "evaluate" / "summary.json", dump(summary));

    for (const auto& w : warnings)
        log << "warning: " << w << "\n";
    log << "evaluated " << per_cell.size() << " cells, " << curve.n_samples
        << " EOL predictions, calibration area deviation " << io::format_double(curve.area_deviation) << "\n";
    return curve;
}

} // namespace celltwin::pipeline
