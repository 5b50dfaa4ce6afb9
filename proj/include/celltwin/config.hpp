#pragma once

/**
 * Run configuration: a single JSON document. Every key is optional except
 * `dataset`; relative paths resolve against the config file's directory.
 *
 * {
 *   "dataset": "cells.csv",            "split_manifest": "splits.csv",
 *   "output_dir": "out",               "seed": 42,  "workers": 1,
 *   "normalize_window": 100,
 *   "extend": {"enabled": true, "tail": 30, "floor": 0.5},
 *   "filter": {"n_particles": 1000, "sigma_meas": 0.01, "sigma_log10_a": 0.05, "sigma_b": 0.05,
 *              "init_log10_a": -15.77, "init_b": 5.45, "init_spread_log10_a": 0.5,
 *              "init_spread_b": 0.5, "resample_threshold": 0.5, "outlier_sigma": 100},
 *   "utilities": [{"name": "ah", "extractor": "total_ah", "l_u": 300, "h_u": 1000, "r": 200, "weight": 0.5},
 *                 {"name": "mtbc", "extractor": "mtbc", "l_u": 0.21, "h_u": 0.25, "r": 0.015, "weight": 0.5}],
 *   "thresholds": {"trigger": 0.95, "eol": 0.5, "retire_floor": 0.5},
 *   "trigger_persist": 1,
 *   "schedule": {"stride": 100} | {"stride": 50, "start": 300} | {"cycles": [300, 600]},
 *   "quantiles": [0.05, 0.95],
 *   "calibration_levels": [0.1, 0.2, ..., 0.9],
 *   "discharge_rate_c": 4,
 *   "simulate_splits": ["test1", "test2"],
 *   "fit": {"epsilon": 1e-4, "refine": true}
 * }
 */

#include "celltwin/calib.hpp"
#include "celltwin/dataset.hpp"
#include "celltwin/error.hpp"
#include "celltwin/filter.hpp"
#include "celltwin/utility.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace celltwin
{

struct Thresholds
{
    double trigger = 0.95;
    double eol = 0.5;
    double retire_floor = 0.5;
};

struct Schedule
{
    std::vector<int> cycles;   // explicit list; empty means stride-based
    int stride = 100;
    std::optional<int> start;  // unset: start at the trigger cycle
};

struct RunConfig
{
    std::filesystem::path config_path;
    std::filesystem::path dataset;
    std::optional<std::filesystem::path> split_manifest;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    std::size_t normalize_window = 100;
    bool extend = true;
    std::size_t extend_tail = 30;
    double extend_floor = 0.5;

    FilterConfig filter;
    bool init_overridden = false;  // init_log10_a / init_b given explicitly
    double outlier_sigma = kDefaultOutlierSigma;

    std::vector<AttributeSpec> utilities = case_study_attributes();
    Thresholds thresholds;
    std::size_t trigger_persist = 1;
    Schedule schedule;
    std::vector<double> quantiles{0.05, 0.95};
    std::vector<double> calibration_levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double discharge_rate_c = 4.0;
    std::vector<Split> simulate_splits{Split::PrimaryTest, Split::SecondaryTest};
    FitOptions fit;
};

/// Command-line values that take precedence over the config document.
struct ConfigOverrides
{
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> output_dir;
    std::optional<std::size_t> workers;
    bool no_extend = false;
    std::optional<std::size_t> trigger_persist;
    std::optional<double> retire_floor;
};

namespace detail
{

template <typename T>
T get_field(const nlohmann::json& obj, const char* key, const std::string& where)
{
    try
    {
        return obj.at(key).get<T>();
    }
    catch (const nlohmann::json::exception&)
    {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

template <typename T>
void read_optional(const nlohmann::json& obj, const char* key, T& out, const std::string& where)
{
    if (obj.contains(key))
        out = get_field<T>(obj, key, where);
}

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    if (!obj.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

inline bool in_unit_interval(double x) { return x > 0.0 && x < 1.0; }

} // namespace detail

inline std::uint64_t parse_seed_text(const std::string& text, const std::string& source)
{
    const auto value = io::parse_int(io::trim(text));
    if (!value || *value < 0)
        throw ConfigError(source + " must be a non-negative integer (got '" + text + "')");
    return static_cast<std::uint64_t>(*value);
}

inline RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& config_path)
{
    using detail::read_optional;
    RunConfig cfg;
    cfg.config_path = config_path;
    const auto base = config_path.has_parent_path() ? config_path.parent_path() : std::filesystem::path(".");
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base / path;
    };

    detail::check_keys(doc,
                       {"dataset", "split_manifest", "output_dir", "seed", "workers", "normalize_window", "extend",
                        "filter", "utilities", "thresholds", "trigger_persist", "schedule", "quantiles",
                        "calibration_levels", "discharge_rate_c", "simulate_splits", "fit"},
                       "config");
    if (!doc.contains("dataset"))
        throw ConfigError("config is missing 'dataset'");
    cfg.dataset = resolve(detail::get_field<std::string>(doc, "dataset", "config"));
    if (doc.contains("split_manifest") && !doc.at("split_manifest").is_null())
        cfg.split_manifest = resolve(detail::get_field<std::string>(doc, "split_manifest", "config"));
    if (doc.contains("output_dir"))
        cfg.output_dir = resolve(detail::get_field<std::string>(doc, "output_dir", "config"));
    else
        cfg.output_dir = base / "out";
    read_optional(doc, "seed", cfg.seed, "config");
    read_optional(doc, "workers", cfg.workers, "config");
    read_optional(doc, "normalize_window", cfg.normalize_window, "config");
    read_optional(doc, "trigger_persist", cfg.trigger_persist, "config");
    read_optional(doc, "quantiles", cfg.quantiles, "config");
    read_optional(doc, "calibration_levels", cfg.calibration_levels, "config");
    read_optional(doc, "discharge_rate_c", cfg.discharge_rate_c, "config");

    if (doc.contains("extend"))
    {
        const auto& e = doc.at("extend");
        detail::check_keys(e, {"enabled", "tail", "floor"}, "config.extend");
        read_optional(e, "enabled", cfg.extend, "config.extend");
        read_optional(e, "tail", cfg.extend_tail, "config.extend");
        read_optional(e, "floor", cfg.extend_floor, "config.extend");
    }
    if (doc.contains("filter"))
    {
        const auto& f = doc.at("filter");
        const std::string where = "config.filter";
        detail::check_keys(f,
                           {"n_particles", "sigma_meas", "sigma_log10_a", "sigma_b", "init_log10_a", "init_b",
                            "init_spread_log10_a", "init_spread_b", "resample_threshold", "outlier_sigma"},
                           where);
        read_optional(f, "n_particles", cfg.filter.n_particles, where);
        read_optional(f, "sigma_meas", cfg.filter.noise.sigma_meas, where);
        read_optional(f, "sigma_log10_a", cfg.filter.noise.sigma_log10_a, where);
        read_optional(f, "sigma_b", cfg.filter.noise.sigma_b, where);
        read_optional(f, "init_spread_log10_a", cfg.filter.init_spread_log10_a, where);
        read_optional(f, "init_spread_b", cfg.filter.init_spread_b, where);
        read_optional(f, "resample_threshold", cfg.filter.resample_threshold, where);
        read_optional(f, "outlier_sigma", cfg.outlier_sigma, where);
        if (f.contains("init_log10_a") != f.contains("init_b"))
            throw ConfigError("config.filter: init_log10_a and init_b must be given together");
        if (f.contains("init_log10_a"))
        {
            cfg.filter.init_log10_a = detail::get_field<double>(f, "init_log10_a", where);
            cfg.filter.init_b = detail::get_field<double>(f, "init_b", where);
            cfg.init_overridden = true;
        }
    }
    if (doc.contains("utilities"))
    {
        cfg.utilities.clear();
        const auto& list = doc.at("utilities");
        if (!list.is_array() || list.empty())
            throw ConfigError("config.utilities must be a non-empty array");
        for (std::size_t i = 0; i < list.size(); ++i)
        {
            const auto& u = list[i];
            const std::string where = "config.utilities[" + std::to_string(i) + "]";
            detail::check_keys(u, {"name", "extractor", "l_u", "h_u", "r", "weight", "clamp"}, where);
            AttributeSpec spec;
            spec.name = detail::get_field<std::string>(u, "name", where);
            const auto extractor = parse_extractor(detail::get_field<std::string>(u, "extractor", where));
            if (!extractor)
                throw ConfigError(where + ".extractor must be 'total_ah' or 'mtbc'");
            spec.extractor = *extractor;
            bool clamp = true;
            read_optional(u, "clamp", clamp, where);
            spec.utility = make_exp_utility(detail::get_field<double>(u, "l_u", where),
                                            detail::get_field<double>(u, "h_u", where),
                                            detail::get_field<double>(u, "r", where), clamp);
            spec.weight = detail::get_field<double>(u, "weight", where);
            cfg.utilities.push_back(std::move(spec));
        }
    }
    if (doc.contains("thresholds"))
    {
        const auto& t = doc.at("thresholds");
        detail::check_keys(t, {"trigger", "eol", "retire_floor"}, "config.thresholds");
        read_optional(t, "trigger", cfg.thresholds.trigger, "config.thresholds");
        read_optional(t, "eol", cfg.thresholds.eol, "config.thresholds");
        read_optional(t, "retire_floor", cfg.thresholds.retire_floor, "config.thresholds");
    }
    if (doc.contains("schedule"))
    {
        const auto& s = doc.at("schedule");
        detail::check_keys(s, {"cycles", "stride", "start"}, "config.schedule");
        read_optional(s, "cycles", cfg.schedule.cycles, "config.schedule");
        read_optional(s, "stride", cfg.schedule.stride, "config.schedule");
        if (s.contains("start") && !s.at("start").is_null())
            cfg.schedule.start = detail::get_field<int>(s, "start", "config.schedule");
    }
    if (doc.contains("simulate_splits"))
    {
        cfg.simulate_splits.clear();
        for (const auto& name : detail::get_field<std::vector<std::string>>(doc, "simulate_splits", "config"))
        {
            const auto split = parse_split(name);
            if (!split)
                throw ConfigError("config.simulate_splits: unknown split '" + name + "'");
            cfg.simulate_splits.push_back(*split);
        }
    }
    if (doc.contains("fit"))
    {
        const auto& f = doc.at("fit");
        detail::check_keys(f, {"epsilon", "refine", "min_points"}, "config.fit");
        read_optional(f, "epsilon", cfg.fit.epsilon, "config.fit");
        read_optional(f, "refine", cfg.fit.refine, "config.fit");
        read_optional(f, "min_points", cfg.fit.min_points, "config.fit");
    }
    return cfg;
}

inline void apply_overrides(RunConfig& cfg, const ConfigOverrides& overrides, const char* env_seed)
{
    if (env_seed != nullptr && *env_seed != '\0')
        cfg.seed = parse_seed_text(env_seed, "CELL_TWIN_SEED");
    if (overrides.seed)
        cfg.seed = *overrides.seed;
    if (overrides.output_dir)
        cfg.output_dir = *overrides.output_dir;
    if (overrides.workers)
        cfg.workers = *overrides.workers;
    if (overrides.no_extend)
        cfg.extend = false;
    if (overrides.trigger_persist)
        cfg.trigger_persist = *overrides.trigger_persist;
    if (overrides.retire_floor)
        cfg.thresholds.retire_floor = *overrides.retire_floor;
}

/// Checks every value and referenced input file; performs no writes.
inline void validate(const RunConfig& cfg)
{
    using detail::in_unit_interval;
    if (!std::filesystem::is_regular_file(cfg.dataset))
        throw ConfigError("dataset file not found: '" + cfg.dataset.string() + "'");
    if (cfg.split_manifest && !std::filesystem::is_regular_file(*cfg.split_manifest))
        throw ConfigError("split manifest not found: '" + cfg.split_manifest->string() + "'");
    if (std::filesystem::exists(cfg.output_dir) && !std::filesystem::is_directory(cfg.output_dir))
        throw ConfigError("output path exists and is not a directory: '" + cfg.output_dir.string() + "'");
    if (cfg.workers < 1)
        throw ConfigError("workers must be >= 1");
    if (cfg.normalize_window < 1)
        throw ConfigError("normalize_window must be >= 1");
    if (cfg.extend_tail < 2)
        throw ConfigError("extend.tail must be >= 2");
    if (!in_unit_interval(cfg.extend_floor))
        throw ConfigError("extend.floor must lie in (0, 1)");
    if (!in_unit_interval(cfg.thresholds.trigger) || !in_unit_interval(cfg.thresholds.eol) ||
        !in_unit_interval(cfg.thresholds.retire_floor))
        throw ConfigError("thresholds must lie in (0, 1)");
    if (cfg.trigger_persist < 1)
        throw ConfigError("trigger_persist must be >= 1");
    if (!(cfg.discharge_rate_c > 0.0))
        throw ConfigError("discharge_rate_c must be positive");
    if (!(cfg.outlier_sigma > 0.0))
        throw ConfigError("filter.outlier_sigma must be positive");
    cfg.filter.validate();
    validate_weights(cfg.utilities);
    if (cfg.schedule.cycles.empty())
    {
        if (cfg.schedule.stride < 1)
            throw ConfigError("schedule.stride must be >= 1");
        if (cfg.schedule.start && *cfg.schedule.start < 1)
            throw ConfigError("schedule.start must be >= 1");
    }
    else
        for (std::size_t i = 0; i < cfg.schedule.cycles.size(); ++i)
            if (cfg.schedule.cycles[i] < 1 || (i > 0 && cfg.schedule.cycles[i] <= cfg.schedule.cycles[i - 1]))
                throw ConfigError("schedule.cycles must be positive and strictly increasing");
    for (const double q : cfg.quantiles)
        if (!(q >= 0.0 && q <= 1.0))
            throw ConfigError("quantiles must lie in [0, 1]");
    for (const double c : cfg.calibration_levels)
        if (!in_unit_interval(c))
            throw ConfigError("calibration_levels must lie in (0, 1)");
    if (cfg.simulate_splits.empty())
        throw ConfigError("simulate_splits must not be empty");
}

inline RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {},
                             const char* env_seed = std::getenv("CELL_TWIN_SEED"))
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path.string() + "'");
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    auto cfg = parse_config(doc, path);
    apply_overrides(cfg, overrides, env_seed);
    validate(cfg);
    return cfg;
}

} // namespace celltwin
