#include "celltwin/celltwin.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace
{

int exit_code(celltwin::ErrorCategory category)
{
    switch (category)
    {
    case celltwin::ErrorCategory::Config: return 2;
    case celltwin::ErrorCategory::Data: return 3;
    case celltwin::ErrorCategory::Runtime: return 4;
    }
    return 4;
}

} // namespace

int main(int argc, char** argv)
{
    using namespace celltwin;

    CLI::App app{"Battery cell digital twin: capacity-fade prognosis and retirement planning", "cell-twin"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::string> cell;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> jobs;
    std::optional<std::size_t> trigger_persist;
    std::optional<double> retire_floor;
    std::optional<int> at_cycle;
    bool no_extend = false;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--seed", seed, "run seed; overrides CELL_TWIN_SEED and the config");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--jobs", jobs, "worker threads for per-cell commands")->check(CLI::PositiveNumber);
    };
    auto* ingest = app.add_subcommand("ingest", "load, normalize and extend the dataset");
    add_common(ingest);
    ingest->add_flag("--no-extend", no_extend, "skip linear extrapolation of short traces");
    auto* calibrate = app.add_subcommand("calibrate", "fit the fleet power-law prior on the training split");
    add_common(calibrate);
    auto* simulate = app.add_subcommand("simulate", "run the particle filter and export projections");
    add_common(simulate);
    simulate->add_option("--cell", cell, "single cell id");
    simulate->add_option("--trigger-persist", trigger_persist, "consecutive cycles at or below the trigger");
    auto* retire = app.add_subcommand("retire", "choose the retirement cycle");
    add_common(retire);
    retire->add_option("--cell", cell, "single cell id");
    retire->add_option("--at-cycle", at_cycle, "decide at this cycle instead of the trigger cycle");
    retire->add_option("--trigger-persist", trigger_persist, "consecutive cycles at or below the trigger");
    retire->add_option("--retire-floor", retire_floor, "lowest acceptable projected capacity");
    auto* evaluate = app.add_subcommand("evaluate", "RUL errors and calibration of stored predictions");
    add_common(evaluate);
    evaluate->add_option("--cell", cell, "single cell id");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return 2;
    }

    try
    {
        ConfigOverrides overrides;
        overrides.seed = seed;
        if (out)
            overrides.output_dir = *out;
        overrides.workers = jobs;
        overrides.no_extend = no_extend;
        overrides.trigger_persist = trigger_persist;
        overrides.retire_floor = retire_floor;
        const auto cfg = load_config(config_path, overrides, std::getenv("CELL_TWIN_SEED"));

        pipeline::CommandOptions options;
        options.cell = cell;
        options.at_cycle = at_cycle;
        if (*ingest)
            pipeline::cmd_ingest(cfg, std::cout);
        else if (*calibrate)
            pipeline::cmd_calibrate(cfg, std::cout);
        else if (*simulate)
            pipeline::cmd_simulate(cfg, options, std::cout);
        else if (*retire)
            pipeline::cmd_retire(cfg, options, std::cout);
        else
            pipeline::cmd_evaluate(cfg, options, std::cout);
    }
    catch (const Error& e)
    {
        std::cerr << "cell-twin: " << e.what() << "\n";
        return exit_code(e.category());
    }
    catch (const std::exception& e)
    {
        std::cerr << "cell-twin: internal error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
