// One line per acceptance criterion. Exit status is nonzero when a gated criterion fails.

#include "celltwin/celltwin.hpp"
#include "celltwin/pipeline.hpp"

#include "support/synthetic_fleet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace celltwin;
namespace fs = std::filesystem;

namespace
{

enum class Verdict
{
    Pass,
    Fail,
    Skip
};

struct Outcome
{
    Verdict verdict;
    std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fmt(double v) { return io::format_double(v); }

// ---- 1 ---------------------------------------------------------------------

Outcome utility_constants()
{
    const auto ah = make_exp_utility(300.0, 1000.0, 200.0);
    const auto mt = make_exp_utility(0.21, 0.25, 0.015);
    const bool ok = std::abs(ah.sigma_coef - 1.0311) <= 5e-4 && std::abs(ah.tau_coef - 4.6212) <= 5e-4 &&
                    std::abs(mt.sigma_coef - 1.0746) <= 5e-4 &&
                    std::abs(mt.tau_coef - 1.2924e6) <= 1e-3 * 1.2924e6;
    return pass_if(ok, "ah sigma=" + fmt(ah.sigma_coef) + " tau=" + fmt(ah.tau_coef) + "; mtbc sigma=" +
                           fmt(mt.sigma_coef) + " tau=" + fmt(mt.tau_coef));
}

// ---- 2 ---------------------------------------------------------------------

Outcome utility_boundaries()
{
    std::vector<ExpUtility> all{make_exp_utility(300.0, 1000.0, 200.0), make_exp_utility(0.21, 0.25, 0.015)};
    rng::CounterRng gen(2024);
    for (int i = 0; i < 100; ++i)
    {
        const double l = gen.uniform(-1000.0, 1000.0);
        const double h = l + gen.uniform(1e-3, 2000.0);
        const double r = std::exp(gen.uniform(std::log(1e-3), std::log(1e4)));
        all.push_back(make_exp_utility(l, h, r));
    }
    double worst = 0.0;
    for (const auto& u : all)
        worst = std::max({worst, std::abs(u(u.l_u)), std::abs(u(u.h_u) - 1.0)});
    return pass_if(worst <= 1e-9, std::to_string(all.size()) + " utilities, worst boundary error " + fmt(worst));
}

// ---- 3 ---------------------------------------------------------------------

Outcome analytic_eol_oracle()
{
    rng::CounterRng gen(3);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i)
    {
        const double b = gen.uniform(0.5, 10.0);
        const double t = gen.uniform(0.05, 0.95);
        const double eol = gen.uniform(10.0, 5000.0);
        const double la = fixtures::log10_a_for_eol(eol, b, t);
        const auto params = PowerLawParams::from_log10(la, b);
        worst = std::max(worst, std::abs(capacity(params, analytic_eol(params, t)) - t));
    }
    const double median_eol = analytic_eol_log10(-15.77, 5.45, 0.5);
    return pass_if(worst <= 1e-9 && std::abs(median_eol - 689.0) <= 1.0,
                   "1000 round trips, worst " + fmt(worst) + "; median-parameter EOL " + fmt(median_eol));
}

// ---- 4 ---------------------------------------------------------------------

Outcome filter_convergence()
{
    const auto started = std::chrono::steady_clock::now();
    rng::CounterRng truth_gen(4);
    int hits = 0;
    const int runs = 50;
    for (int run = 0; run < runs; ++run)
    {
        fixtures::SyntheticCell spec;
        spec.b = truth_gen.uniform(5.0, 6.0);
        const double eol = truth_gen.uniform(600.0, 800.0);
        spec.log10_a = fixtures::log10_a_for_eol(eol, spec.b);
        spec.n_cycles = 500;
        spec.noise_sd = 0.01;
        spec.noise_seed = 1000 + static_cast<std::uint64_t>(run);
        const auto trace = fixtures::synthetic_trace(spec);
        FilterConfig cfg;
        cfg.n_particles = 1000;
        cfg.seed = static_cast<std::uint64_t>(run);
        const auto ens = assimilate(init(cfg), trace, 500, cfg.noise);
        const auto median = eol_distribution(project(ens, 500)).median();
        hits += std::abs(median - eol) <= 0.1 * eol ? 1 : 0;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return pass_if(hits >= 45, std::to_string(hits) + "/" + std::to_string(runs) +
                                   " runs within 10% of the analytic EOL (" + fmt(std::round(seconds * 10) / 10) +
                                   " s)");
}

// ---- 5 ---------------------------------------------------------------------

Outcome offline_fit()
{
    FitOptions ols;
    ols.refine = false;
    rng::CounterRng gen(5);
    double worst_exact = 0.0;
    for (int i = 0; i < 20; ++i)
    {
        fixtures::SyntheticCell spec;
        spec.b = gen.uniform(3.0, 8.0);
        spec.log10_a = fixtures::log10_a_for_eol(gen.uniform(400.0, 1500.0), spec.b);
        spec.n_cycles = 2000;
        const auto fit = fit_power_law(fixtures::synthetic_trace(spec), ols);
        worst_exact = std::max({worst_exact, std::abs(fit.log10_a - spec.log10_a), std::abs(fit.b - spec.b)});
    }
    int ols_hits = 0;
    int default_hits = 0;
    const int seeds = 50;
    for (int seed = 0; seed < seeds; ++seed)
    {
        fixtures::SyntheticCell spec;
        spec.n_cycles = 900;
        spec.noise_sd = 0.01;
        spec.noise_seed = 500 + static_cast<std::uint64_t>(seed);
        const auto trace = fixtures::synthetic_trace(spec);
        try
        {
            ols_hits += std::abs(fit_power_law(trace, ols).b - spec.b) <= 0.2 ? 1 : 0;
        }
        catch (const InsufficientFade&)
        {
        }
        try
        {
            default_hits += std::abs(fit_power_law(trace).b - spec.b) <= 0.2 ? 1 : 0;
        }
        catch (const InsufficientFade&)
        {
        }
    }
    return pass_if(worst_exact <= 1e-9 && ols_hits == seeds,
                   "noise-free OLS worst error " + fmt(worst_exact) + "; 1% noise, b within 0.2: OLS " +
                       std::to_string(ols_hits) + "/" + std::to_string(seeds) + ", default fit (OLS+LM) " +
                       std::to_string(default_hits) + "/" + std::to_string(seeds));
}

// ---- 6 ---------------------------------------------------------------------

ParticleEnsemble point_mass(double log10_a, double b, int last_cycle)
{
    ParticleEnsemble ens;
    ens.log10_a = {log10_a};
    ens.b = {b};
    ens.weight = {1.0};
    ens.last_cycle = last_cycle;
    return ens;
}

double clamped_phi(double l, double h, double r, double v)
{
    const double x = std::clamp(v, l, h);
    const double lo = std::exp(-l / r);
    const double hi = std::exp(-h / r);
    return (lo - std::exp(-x / r)) / (lo - hi);
}

// Exhaustive scan from the definitions; returns the first cycle reaching the maximum.
int brute_force(const NormalizedTrace& trace, double log10_a, double b, int current, double floor,
                const std::vector<AttributeSpec>& specs)
{
    int best = 0;
    double best_utility = -1.0;
    double ah = 0.0;
    for (int x = 1;; ++x)
    {
        const double model = std::max(capacity_log10(log10_a, b, x), 0.5);
        const double q = x <= current ? *trace.at(x) : model;
        ah += q * trace.q0_ah;
        if (x < current)
            continue;
        double total = 0.0;
        for (const auto& s : specs)
        {
            const double v = s.extractor == Extractor::TotalAh ? ah : q / 4.0;
            total += s.weight * clamped_phi(s.utility.l_u, s.utility.h_u, s.utility.r, v);
        }
        if (total > best_utility)
        {
            best = x;
            best_utility = total;
        }
        if (model <= floor)
            break;
    }
    return best;
}

Outcome retirement_brute_force()
{
    rng::CounterRng gen(6);
    int matches = 0;
    int instances = 0;
    std::size_t largest = 0;
    while (instances < 20)
    {
        const double b = gen.uniform(4.0, 8.0);
        const double eol = gen.uniform(300.0, 900.0);
        const double la = fixtures::log10_a_for_eol(eol, b);
        const double floor = gen.uniform(0.5, 0.7);
        // current somewhere within 49 cycles of the floor crossing, past the trigger
        const double crossing = analytic_eol_log10(la, b, floor);
        const int current = static_cast<int>(std::ceil(crossing)) - static_cast<int>(gen.uniform(1.0, 49.0));
        if (capacity_log10(la, b, current) > 0.95)
            continue;
        fixtures::SyntheticCell spec;
        spec.log10_a = la;
        spec.b = b;
        spec.n_cycles = current;
        spec.stop_below = 0.0;
        spec.nominal_ah = gen.uniform(0.5, 3.0);
        const auto trace = fixtures::synthetic_trace(spec);
        const double w = gen.uniform(0.05, 0.95);
        const double ah_l = gen.uniform(100.0, 600.0);
        const double mt_l = gen.uniform(0.1, 0.2);
        const std::vector<AttributeSpec> specs{
            {"ah", make_exp_utility(ah_l, ah_l + gen.uniform(50.0, 1500.0), gen.uniform(20.0, 500.0)),
             Extractor::TotalAh, w},
            {"mtbc", make_exp_utility(mt_l, mt_l + gen.uniform(0.01, 0.1), gen.uniform(0.005, 0.05)),
             Extractor::MeanTimeBetweenCharges, 1.0 - w},
        };
        RetirementOptions options;
        options.retire_floor = floor;
        const auto decision = optimize_retirement(trace, point_mass(la, b, current), specs, current, options);
        largest = std::max(largest, decision.candidates.size());
        matches += decision.optimal_cycle == brute_force(trace, la, b, current, floor, specs) ? 1 : 0;
        ++instances;
    }

    // Every candidate saturates both attributes at 1, so the whole set ties.
    const double la = -15.77;
    const double b = 5.45;
    fixtures::SyntheticCell spec;
    spec.n_cycles = 480;
    spec.stop_below = 0.0;
    spec.nominal_ah = 10.0;
    const auto trace = fixtures::synthetic_trace(spec);
    const std::vector<AttributeSpec> flat{
        {"ah", make_exp_utility(100.0, 200.0, 50.0), Extractor::TotalAh, 0.5},
        {"mtbc", make_exp_utility(0.0, 0.05, 0.01), Extractor::MeanTimeBetweenCharges, 0.5},
    };
    const auto tie = optimize_retirement(trace, point_mass(la, b, 480), flat, 480);
    const bool tie_ok = tie.optimal_cycle == 480 && tie.candidates.size() > 1 &&
                        std::all_of(tie.utility_curve.begin(), tie.utility_curve.end(),
                                    [](const UtilityPoint& p) { return p.utility == 1.0; });
    return pass_if(matches == instances && largest <= 50 && tie_ok,
                   std::to_string(matches) + "/" + std::to_string(instances) + " instances match (largest " +
                       std::to_string(largest) + " candidates); tie over " + std::to_string(tie.candidates.size()) +
                       " candidates picks " + std::to_string(tie.optimal_cycle));
}

// ---- 7 ---------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(io::read_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
    {
        std::vector<std::string> row;
        for (const auto field : io::split_fields(line))
            row.emplace_back(field);
        rows.push_back(std::move(row));
    }
    return rows;
}

void case_study(std::vector<std::pair<std::string, Outcome>>& report)
{
    const char* dataset = std::getenv("CELL_TWIN_DATASET");
    if (dataset == nullptr || *dataset == '\0')
    {
        const Outcome skip{Verdict::Skip, "CELL_TWIN_DATASET not set"};
        report.emplace_back("7a", skip);
        report.emplace_back("7b", skip);
        report.emplace_back("7c", skip);
        return;
    }
    fixtures::ScratchDir dir("acceptance_case");
    nlohmann::json doc = {{"dataset", fs::absolute(dataset).string()}, {"output_dir", (dir / "out").string()}};
    if (const char* manifest = std::getenv("CELL_TWIN_MANIFEST"); manifest != nullptr && *manifest != '\0')
        doc["split_manifest"] = fs::absolute(manifest).string();
    io::write_file_atomic(dir / "config.json", doc.dump());
    try
    {
        const auto cfg = load_config(dir / "config.json", {}, nullptr);
        std::ostringstream log;
        pipeline::cmd_ingest(cfg, log);
        const auto fleet = pipeline::cmd_calibrate(cfg, log);
        report.emplace_back("7a", pass_if(std::abs(fleet.median_log10_a + 15.77) <= 0.5 &&
                                              std::abs(fleet.median_b - 5.45) <= 0.5,
                                          "median log10 a=" + fmt(fleet.median_log10_a) +
                                              " b=" + fmt(fleet.median_b)));
        const double p5 = fleet.ah_percentiles.at(5);
        const double p95 = fleet.ah_percentiles.at(95);
        report.emplace_back("7b", pass_if(std::abs(p5 - 300.0) <= 45.0 && std::abs(p95 - 1000.0) <= 150.0,
                                          "total Ah p5=" + fmt(p5) + " p95=" + fmt(p95)));
        pipeline::cmd_simulate(cfg, {}, log);
        pipeline::cmd_evaluate(cfg, {}, log);
        int long_lived = 0;
        int under = 0;
        for (const auto& entry : fs::directory_iterator(cfg.output_dir / "evaluate"))
        {
            if (entry.path().filename().string().rfind("rul_errors_", 0) != 0)
                continue;
            const auto rows = read_csv_rows(entry.path());
            if (rows.empty())
                continue;
            const double life = std::stod(rows[0][0]) + std::stod(rows[0][1]);
            if (life <= 2000.0)
                continue;
            ++long_lived;
            under += std::stod(rows[0][3]) < 0.0 ? 1 : 0;
        }
        report.emplace_back("7c", long_lived == 0
                                      ? Outcome{Verdict::Skip, "no test cell lives past 2000 cycles"}
                                      : pass_if(2 * under > long_lived,
                                                std::to_string(under) + "/" + std::to_string(long_lived) +
                                                    " long-lived cells underestimated at the first prediction"));
    }
    catch (const Error& e)
    {
        report.emplace_back("7a-c", Outcome{Verdict::Fail, e.what()});
    }
}

Outcome saturated_ah_retires_early()
{
    const double la = -15.77;
    const double b = 5.45;
    fixtures::SyntheticCell spec;
    spec.n_cycles = 470;
    spec.stop_below = 0.0;
    spec.nominal_ah = 10.0;
    const auto trace = fixtures::synthetic_trace(spec);
    const auto decision = optimize_retirement(trace, point_mass(la, b, 470), case_study_attributes(), 470);
    const bool saturated = std::all_of(decision.utility_curve.begin(), decision.utility_curve.end(),
                                       [](const UtilityPoint& p) { return p.phi[0] == 1.0; });
    return pass_if(saturated && decision.optimal_cycle == decision.candidates.front(),
                   "synthetic 10 Ah cell: optimum " + std::to_string(decision.optimal_cycle) + ", first candidate " +
                       std::to_string(decision.candidates.front()));
}

// ---- 8 ---------------------------------------------------------------------

struct Exponential
{
    double scale;
    double quantile(double level) const { return -scale * std::log1p(-level); }
};

Outcome calibration_oracle()
{
    const std::vector<double> levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    rng::CounterRng gen(8);
    std::vector<Exponential> dists;
    std::vector<double> obs;
    for (int i = 0; i < 10000; ++i)
    {
        dists.push_back({gen.uniform(50.0, 2000.0)});
        obs.push_back(dists.back().quantile(gen.uniform()));
    }
    const auto curve = calibration_curve<Exponential>(dists, obs, levels);
    double worst = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i)
        worst = std::max(worst, std::abs(curve.observed[i] - levels[i]));

    std::vector<EolDistribution> particle;
    std::vector<double> medians;
    for (int i = 0; i < 200; ++i)
    {
        std::vector<double> eol(64);
        std::vector<double> w(64);
        for (std::size_t j = 0; j < eol.size(); ++j)
        {
            eol[j] = gen.uniform(300.0, 1200.0);
            w[j] = gen.uniform(0.1, 1.0);
        }
        particle.emplace_back(eol, w);
        medians.push_back(particle.back().median());
    }
    const auto at_median = calibration_curve<EolDistribution>(particle, medians, levels);
    const bool all_ones = std::all_of(at_median.observed.begin(), at_median.observed.end(),
                                      [](double o) { return o == 1.0; });
    return pass_if(worst <= 0.02 && curve.area_deviation < 0.03 && all_ones,
                   "n=10000 worst |observed - c| " + fmt(worst) + ", area " + fmt(curve.area_deviation) +
                       "; all-at-median observed " + (all_ones ? "all 1" : "not all 1"));
}

// ---- 9 ---------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root)
{
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files[fs::relative(entry.path(), root).string()] = io::read_file(entry.path());
    return files;
}

Outcome determinism()
{
    fixtures::ScratchDir dir("acceptance_det");
    const auto config = fixtures::write_fleet_fixture(dir.path(), fixtures::small_fleet());
    std::vector<std::map<std::string, std::string>> runs;
    const std::size_t workers[] = {1, 1, 4};
    for (std::size_t i = 0; i < 3; ++i)
    {
        ConfigOverrides o;
        o.workers = workers[i];
        o.output_dir = dir / ("run_" + std::to_string(i));
        const auto cfg = load_config(config, o, nullptr);
        std::ostringstream log;
        pipeline::cmd_ingest(cfg, log);
        pipeline::cmd_calibrate(cfg, log);
        pipeline::cmd_simulate(cfg, {}, log);
        pipeline::cmd_retire(cfg, {}, log);
        pipeline::cmd_evaluate(cfg, {}, log);
        runs.push_back(snapshot(*o.output_dir));
    }
    const bool repeat = runs[0] == runs[1];
    const bool pool = runs[0] == runs[2];
    return pass_if(repeat && pool && !runs[0].empty(),
                   std::to_string(runs[0].size()) + " files; same seed twice " +
                       (repeat ? "identical" : "DIFFERENT") + "; 1 vs 4 workers " + (pool ? "identical" : "DIFFERENT"));
}

template <typename F>
Outcome guarded(F&& f)
{
    try
    {
        return f();
    }
    catch (const std::exception& e)
    {
        return {Verdict::Fail, std::string("threw ") + e.what()};
    }
}

} // namespace

int main()
{
    std::vector<std::pair<std::string, Outcome>> gated;
    gated.emplace_back("1", guarded(utility_constants));
    gated.emplace_back("2", guarded(utility_boundaries));
    gated.emplace_back("3", guarded(analytic_eol_oracle));
    gated.emplace_back("4", guarded(filter_convergence));
    gated.emplace_back("5", guarded(offline_fit));
    gated.emplace_back("6", guarded(retirement_brute_force));

    std::vector<std::pair<std::string, Outcome>> soft;
    case_study(soft);
    soft.emplace_back("7d", guarded(saturated_ah_retires_early));

    gated.emplace_back("8", guarded(calibration_oracle));
    gated.emplace_back("9", guarded(determinism));

    const auto label = [](Verdict v) {
        switch (v)
        {
        case Verdict::Pass: return "PASS";
        case Verdict::Fail: return "FAIL";
        case Verdict::Skip: return "SKIP";
        }
        return "?";
    };
    bool ok = true;
    for (const auto& [id, outcome] : gated)
    {
        if (id == "8")
            for (const auto& [sid, s] : soft)
                std::cout << "criterion " << sid << ": " << label(s.verdict) << " (reported, not gated) " << s.detail
                          << "\n";
        std::cout << "criterion " << id << ": " << label(outcome.verdict) << " " << outcome.detail << "\n";
        ok = ok && outcome.verdict == Verdict::Pass;
    }
    return ok ? 0 : 1;
}
