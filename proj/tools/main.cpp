// Command line front end: estimation pipeline, Monte Carlo harness,
// cross-validation, bootstrap bands, report emission, identification scan.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ngsvar/io.hpp"
#include "ngsvar/simulation.hpp"

namespace fs = std::filesystem;
using namespace ngsvar;

namespace {

void add_config_flags(CLI::App* cmd, RunConfig& cfg, std::string& config_path,
                      bool& application) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--data", cfg.data_path, "CSV data file");
    cmd->add_option("--dgp", cfg.dgp_preset, "DGP preset: mc|mc-lagged|proxy|a-type");
    cmd->add_option("--T", cfg.T, "sample size for DGP presets");
    cmd->add_option("-p,--lags", cfg.p, "VAR lag order");
    cmd->add_option("--restrictions", cfg.restriction_preset,
                    "restriction preset: r1|r2|proxy|a-r1|a-r2");
    cmd->add_option("--cell", cfg.restriction_cells,
                    "restricted cell i j (1-based, repeatable)");
    cmd->add_option("--target", cfg.restriction_target, "restriction target: B|A");
    cmd->add_option("--grid-lo", cfg.grid_lo, "smallest positive lambda");
    cmd->add_option("--grid-hi", cfg.grid_hi, "largest lambda");
    cmd->add_option("--grid-count", cfg.grid_count, "positive grid points");
    cmd->add_option("--cv-reps", cfg.cv_repetitions, "cross-validation repetitions");
    cmd->add_option("--draws", cfg.bootstrap_draws, "bootstrap draws");
    cmd->add_option("--horizons", cfg.horizons, "IRF horizons");
    cmd->add_option("--threshold", cfg.selection_threshold,
                    "restriction selection threshold (0 = off)");
    cmd->add_option("-M,--replications", cfg.replications, "Monte Carlo replications");
    cmd->add_option("--seed", cfg.seed, "master seed");
    cmd->add_option("--threads", cfg.threads, "worker threads (0 = auto)");
    cmd->add_option("-o,--out", cfg.output_dir, "output directory");
    cmd->add_option("--transform", cfg.transforms,
                    "per-column transform: none|log100 (repeatable)");
    cmd->add_flag("--application", application,
                  "monthly application defaults: p=12, 50 CV reps, threshold 0.5");
}

RunConfig resolve_config(const CLI::App* cmd, RunConfig flags,
                         const std::string& config_path, bool application) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (application) cfg.apply_application_preset();
    // Flags override file values.
    auto used = [&](const char* name) { return cmd->count(name) > 0; };
    if (used("--data")) cfg.data_path = flags.data_path;
    if (used("--dgp")) cfg.dgp_preset = flags.dgp_preset;
    if (used("--T")) cfg.T = flags.T;
    if (used("--lags")) cfg.p = flags.p;
    if (used("--restrictions")) cfg.restriction_preset = flags.restriction_preset;
    if (used("--cell")) cfg.restriction_cells = flags.restriction_cells;
    if (used("--target")) cfg.restriction_target = flags.restriction_target;
    if (used("--grid-lo")) cfg.grid_lo = flags.grid_lo;
    if (used("--grid-hi")) cfg.grid_hi = flags.grid_hi;
    if (used("--grid-count")) cfg.grid_count = flags.grid_count;
    if (used("--cv-reps")) cfg.cv_repetitions = flags.cv_repetitions;
    if (used("--draws")) cfg.bootstrap_draws = flags.bootstrap_draws;
    if (used("--horizons")) cfg.horizons = flags.horizons;
    if (used("--threshold")) cfg.selection_threshold = flags.selection_threshold;
    if (used("--replications")) cfg.replications = flags.replications;
    if (used("--seed")) cfg.seed = flags.seed;
    if (used("--threads")) cfg.threads = flags.threads;
    if (used("--out")) cfg.output_dir = flags.output_dir;
    if (used("--transform")) cfg.transforms = flags.transforms;
    cfg.validate();
    return cfg;
}

struct LoadedData {
    SeriesPanel panel;
    std::vector<std::string> names;
};

LoadedData acquire_panel(const RunConfig& cfg) {
    LoadedData d;
    if (!cfg.data_path.empty()) {
        std::vector<ColumnTransform> tr;
        for (const auto& t : cfg.transforms) tr.push_back(parse_transform(t));
        CsvLoadResult res = load_csv(cfg.data_path, tr);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
        d.panel = std::move(res.panel);
    } else {
        d.panel = simulate_svar(cfg.dgp(), cfg.seed);
    }
    d.names = d.panel.names;
    return d;
}

void write_resolved_config(const RunConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    std::ofstream out(fs::path(cfg.output_dir) / "resolved_config.json");
    out << to_json(cfg).dump(2) << "\n";
}

// Recursive anchor -> CSUE -> (weights -> CV -> ridge [-> selection]) ->
// bootstrap -> analytics. Artifacts land in cfg.output_dir.
int cmd_estimate(const RunConfig& cfg, bool stop_after_cv, bool require_bootstrap) {
    LoadedData data = acquire_panel(cfg);
    const int n = static_cast<int>(data.panel.values.cols());
    const MomentSet ms = enumerate_moments(n);
    write_resolved_config(cfg);
    const fs::path dir(cfg.output_dir);

    ReducedForm rf = fit_var(data.panel, cfg.p);
    EstimationResult recursive = estimate_recursive(rf.residuals);
    EstimationOptions est_opts;
    est_opts.anchor = recursive.B;

    RestrictionSet rs = cfg.restrictions(n);
    EstimationResult final;
    CvReport cv;
    bool have_cv = false;
    double lambda = 0.0;

    if (rs.empty()) {
        final = estimate_csue(rf.residuals, ms, est_opts);
    } else {
        CvOptions cv_opts;
        cv_opts.repetitions = cfg.cv_repetitions;
        cv_opts.seed = subseed(cfg.seed, 0xcf);
        if (cfg.selection_threshold > 0.0) {
            SelectionFit fit = estimate_with_selection(
                rf.residuals, ms, rs, cfg.selection_threshold, cfg.grid(), cv_opts,
                est_opts);
            final = fit.final;
            cv = fit.kept.empty() ? fit.first_pass.cv : fit.second_pass.cv;
            std::ofstream sel(dir / "selection.json");
            nlohmann::json js;
            for (const auto& [i, j] : fit.kept.cells)
                js["kept_cells"].push_back({i + 1, j + 1});
            js["first_pass_lambda"] = fit.first_pass.cv.lambda_selected;
            sel << js.dump(2) << "\n";
        } else {
            RidgeFit fit =
                ridge_pipeline(rf.residuals, ms, rs, cfg.grid(), cv_opts, est_opts);
            final = fit.final;
            cv = fit.cv;
        }
        have_cv = true;
        lambda = final.lambda;
        write_cv_csv(dir / "cv.csv", cv);
    }
    if (stop_after_cv && have_cv) return 0;

    write_matrix_csv(dir / "b_matrix.csv", final.B);
    write_a_type_csv(dir / "a_type_report.csv", to_a_type_report(final.B),
                     data.names);

    ImpulseResponses irf = impulse_responses(rf, final.B, cfg.horizons);
    BootstrapBands bands;
    bool have_bands = false;
    if (cfg.bootstrap_draws > 0) {
        BootstrapOptions bo;
        bo.draws = cfg.bootstrap_draws;
        bo.horizons = cfg.horizons;
        bo.seed = subseed(cfg.seed, 0xb0);
        bo.threads = cfg.threads;
        const Matrix anchor = final.B;
        // Draws reuse the selected lambda; CV is not re-run per draw.
        RefitFn refit = [&, anchor, lambda](const SeriesPanel& bp) {
            BootstrapRefit br;
            br.rf = fit_var(bp, cfg.p);
            EstimationOptions eo;
            eo.anchor = anchor;
            if (rs.empty()) {
                br.B = estimate_csue(br.rf.residuals, ms, eo).B;
            } else {
                EstimationResult first = estimate_csue(br.rf.residuals, ms, eo);
                AdaptiveWeights aw = compute_adaptive_weights(first, rs);
                br.B = estimate_ridge(br.rf.residuals, ms, aw, lambda, first.W,
                                      {first.B}, anchor)
                           .B;
            }
            return br;
        };
        bands = bootstrap_bands(data.panel, rf, irf, refit, bo);
        have_bands = true;
    } else if (require_bootstrap) {
        throw ValidationError("bootstrap requires --draws > 0");
    }
    write_irf_csv(dir / "irf.csv", irf, have_bands ? &bands : nullptr, data.names);
    write_fevd_csv(dir / "fevd.csv", fevd(irf), data.names);
    write_hd_csv(dir / "hd.csv", historical_decomposition(data.panel, rf, final.B));
    ShockDiagnostics diag = shock_diagnostics(final.shocks);
    write_diagnostics_csv(dir / "diagnostics.csv", diag);
    write_comoment_csv(dir / "comoments.csv", diag);

    nlohmann::json summary;
    summary["objective"] = final.objective;
    summary["converged"] = final.converged;
    summary["labeled"] = final.labeled;
    summary["boundary"] = final.boundary;
    summary["lambda"] = lambda;
    summary["lambda_at_grid_min"] = final.lambda_at_grid_min;
    if (have_bands) summary["failed_draws"] = bands.failed_draws;
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    return 0;
}

std::vector<EstimatorRecipe> parse_recipes(const std::vector<std::string>& tokens,
                                           const RunConfig& cfg) {
    std::vector<EstimatorRecipe> out;
    for (const auto& t : tokens) {
        if (t == "csue") {
            out.push_back(EstimatorRecipe::csue());
        } else if (t == "recursive") {
            EstimatorRecipe r;
            r.name = "recursive";
            r.kind = EstimatorRecipe::Kind::Recursive;
            out.push_back(r);
        } else if (t == "r1" || t == "r2" || t == "proxy" || t == "a-r1" ||
                   t == "a-r2") {
            RestrictionSet rs;
            if (t == "r1") rs = presets::restrictions_r1();
            else if (t == "r2") rs = presets::restrictions_r2();
            else if (t == "proxy") rs = presets::proxy_restrictions();
            else if (t == "a-r1") rs = presets::a_type_r1();
            else rs = presets::a_type_r2();
            EstimatorRecipe r = EstimatorRecipe::ridge(rs, "ridge-" + t);
            r.cv.repetitions = cfg.cv_repetitions;
            r.grid = cfg.grid();
            out.push_back(r);
        } else if (t == "sel-r2") {
            EstimatorRecipe r =
                EstimatorRecipe::ridge(presets::restrictions_r2(), "selection-r2");
            r.kind = EstimatorRecipe::Kind::Selection;
            r.selection_threshold =
                cfg.selection_threshold > 0 ? cfg.selection_threshold : 0.5;
            r.cv.repetitions = cfg.cv_repetitions;
            r.grid = cfg.grid();
            out.push_back(r);
        } else {
            throw ValidationError("unknown estimator token: " + t);
        }
    }
    if (out.empty()) throw ValidationError("no estimators requested");
    return out;
}

int cmd_simulate(const RunConfig& cfg, const std::vector<std::string>& estimators,
                 bool with_bootstrap) {
    DgpSpec dgp = cfg.dgp();
    std::vector<EstimatorRecipe> recipes = parse_recipes(estimators, cfg);
    if (with_bootstrap)
        for (auto& r : recipes) r.bootstrap = true;
    BootstrapOptions bo;
    bo.draws = cfg.bootstrap_draws > 0 ? cfg.bootstrap_draws : 200;
    ExperimentReport rep = run_experiment(dgp, recipes, cfg.replications, cfg.seed,
                                          bo, cfg.threads);
    write_resolved_config(cfg);
    const fs::path dir(cfg.output_dir);
    write_experiment_csv(dir / "experiment.csv", rep);
    write_lambda_histogram_csv(dir / "lambda_hist.csv", rep);
    std::ofstream(dir / "experiment.json") << experiment_to_json(rep).dump(2) << "\n";
    if (!rep.valid) {
        std::cerr << "error: more than 5% of replications failed\n";
        return 2;
    }
    return 0;
}

int cmd_report(const std::string& dir_in) {
    const fs::path dir(dir_in);
    const std::vector<std::string> artifacts = {"b_matrix.csv", "irf.csv",
                                                "fevd.csv", "hd.csv",
                                                "diagnostics.csv"};
    std::vector<std::string> missing;
    for (const auto& a : artifacts)
        if (!fs::exists(dir / a)) missing.push_back(a);
    if (!missing.empty()) {
        std::cerr << "missing artifacts in " << dir_in << ":";
        for (const auto& m : missing) std::cerr << ' ' << m;
        std::cerr << "\n";
        return 1;
    }
    // Plot-ready copies under stable names; re-running is idempotent.
    for (const auto& a : artifacts)
        fs::copy_file(dir / a, dir / ("plot_" + a),
                      fs::copy_options::overwrite_existing);
    if (fs::exists(dir / "cv.csv"))
        fs::copy_file(dir / "cv.csv", dir / "plot_cv.csv",
                      fs::copy_options::overwrite_existing);
    return 0;
}

int cmd_check_ident(int n, const std::vector<int>& gaussian, int grid, int t_pop,
                    std::uint64_t seed) {
    ShockSpec spec = ShockSpec::iid_mixture(n);
    for (int i : gaussian) {
        if (i < 1 || i > n) throw ValidationError("gaussian shock index out of range");
        spec.shocks[static_cast<std::size_t>(i - 1)] = ShockSpec::gaussian();
    }
    Matrix b0(n, n);
    if (n == 2) b0 << 10, 0, 5, 10;
    else b0 << 10, 0, 0, 5, 10, 0, 5, 5, 10;
    IdentificationReport rep = check_identification(b0, spec, grid, t_pop, seed);
    const char* verdict = rep.verdict == IdentVerdict::Identified ? "identified"
                          : rep.verdict == IdentVerdict::FlatManifold
                              ? "flat-manifold"
                              : "ambiguous";
    std::cout << "verdict: " << verdict << "\n"
              << "loss range: [" << rep.loss_min << ", " << rep.loss_max << "]\n"
              << "near-zero minima: " << rep.near_zero_minima
              << " (matched: " << rep.matched_minima << ")\n";
    return rep.verdict == IdentVerdict::Ambiguous ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"non-Gaussian SVAR estimation toolkit"};
    app.require_subcommand(1);

    RunConfig flags;
    std::string config_path;
    bool application = false;

    auto* est = app.add_subcommand("estimate", "full estimation pipeline");
    add_config_flags(est, flags, config_path, application);
    auto* sim = app.add_subcommand("simulate", "Monte Carlo experiment");
    std::vector<std::string> estimators = {"csue"};
    bool sim_boot = false;
    add_config_flags(sim, flags, config_path, application);
    sim->add_option("--estimators", estimators,
                    "csue|recursive|r1|r2|proxy|a-r1|a-r2|sel-r2");
    sim->add_flag("--bootstrap", sim_boot, "bootstrap bands per replication");
    auto* cvc = app.add_subcommand("cv", "cross-validation path only");
    add_config_flags(cvc, flags, config_path, application);
    auto* boot = app.add_subcommand("bootstrap", "pipeline with mandatory bands");
    add_config_flags(boot, flags, config_path, application);
    auto* rep = app.add_subcommand("report", "emit plot-ready tables");
    std::string report_dir = "out";
    rep->add_option("-o,--out", report_dir, "result directory");
    auto* ident = app.add_subcommand("check-ident", "identification grid scan");
    int ident_n = 2, ident_grid = 720, ident_tpop = 1000000;
    std::uint64_t ident_seed = 11;
    std::vector<int> ident_gaussian;
    ident->add_option("-n", ident_n, "system size (2 or 3)");
    ident->add_option("--gaussian", ident_gaussian,
                      "1-based indices of Gaussian shocks");
    ident->add_option("--grid", ident_grid, "angles per axis");
    ident->add_option("--tpop", ident_tpop, "population sample size");
    ident->add_option("--seed", ident_seed, "seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (est->parsed() || cvc->parsed() || boot->parsed()) {
            const CLI::App* active = est->parsed() ? est : cvc->parsed()
                                                              ? static_cast<CLI::App*>(cvc)
                                                              : boot;
            RunConfig cfg = resolve_config(active, flags, config_path, application);
            if (boot->parsed() && cfg.bootstrap_draws <= 0)
                throw ValidationError("bootstrap requires --draws > 0");
            return cmd_estimate(cfg, cvc->parsed(), boot->parsed());
        }
        if (sim->parsed()) {
            RunConfig cfg = resolve_config(sim, flags, config_path, application);
            if (cfg.dgp_preset.empty())
                throw ValidationError("simulate requires a DGP preset");
            return cmd_simulate(cfg, estimators, sim_boot);
        }
        if (rep->parsed()) return cmd_report(report_dir);
        if (ident->parsed())
            return cmd_check_ident(ident_n, ident_gaussian, ident_grid, ident_tpop,
                                   ident_seed);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
