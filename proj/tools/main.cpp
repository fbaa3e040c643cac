// wrightiv: command-line front end for the demand/supply IV toolkit.
//
// Subcommands: simulate, estimate, region, montecarlo, counterfactual, dsep.
// Option precedence everywhere: explicit flag > config file > built-in
// default. Outputs are written to --out (or stdout) and are byte-identical
// across reruns and thread counts; wall-clock timing is only emitted when
// --timing is requested, and goes to stderr (or into the montecarlo report).
//
// Exit codes: 0 success; 2 configuration/usage errors (bad flags, malformed
// config or graph text, dimension mismatches); 3 numeric failures
// (degenerate systems, singular kernels, non-convergence); 4 I/O failures.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <wrightiv/wrightiv.hpp>

namespace {

using namespace wrightiv;

json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& err) {
        throw ConfigError(origin + ": " + err.what());
    }
}

json load_json_file(const std::string& path) {
    return parse_json_text(read_text_file(path), path);
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        std::cout << content;
    } else {
        write_text_file(out_path, content);
    }
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

class Stopwatch {
  public:
    explicit Stopwatch(bool enabled)
        : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start_)
            .count();
    }
    ~Stopwatch() {
        if (enabled_) {
            std::cerr << "elapsed_seconds: " << seconds() << "\n";
        }
    }

  private:
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

// Shared estimator/inference flag bundle for `estimate` and `montecarlo`.
struct EstimatorFlags {
    std::string kind;
    int k_steps = 0;
    std::string mode;
    std::string omega_family;
    int omega_lags = 0;
    std::string partial;
    double lasso_lambda = 0.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--kind", kind,
                        "Estimator kind: iterative or cue");
        cmd->add_option("--k-steps", k_steps,
                        "Number of weighting iterations (>= 1)");
        cmd->add_option("--mode", mode,
                        "full_information or limited_information");
        cmd->add_option("--omega", omega_family,
                        "Variance kind: iid_centered, iid_uncentered, "
                        "newey_west");
        cmd->add_option("--lags", omega_lags,
                        "Newey-West lag count (default: rule of thumb)");
        cmd->add_option("--partial", partial,
                        "Partialing method: none, ols, lasso");
        cmd->add_option("--lasso-lambda", lasso_lambda,
                        "Lasso penalty level (default: plug-in rule)");
    }

    // Applies any flags the user actually passed on top of `config`.
    void apply(const CLI::App* cmd, EstimatorConfig* config,
               bool* partial_given) const {
        if (cmd->count("--kind") > 0) {
            config->kind = estimator_kind_from_string(kind);
        }
        if (cmd->count("--k-steps") > 0) config->k_steps = k_steps;
        if (cmd->count("--mode") > 0) {
            if (mode == "full_information") {
                config->mode = GmmMode::full_information;
            } else if (mode == "limited_information") {
                config->mode = GmmMode::limited_information;
            } else {
                throw ConfigError("unknown gmm mode '" + mode + "'");
            }
        }
        if (cmd->count("--omega") > 0) {
            config->omega = omega_kind_from_json(json{{"family", omega_family}});
        }
        if (cmd->count("--lags") > 0) config->omega.lags = omega_lags;
        if (cmd->count("--partial") > 0) {
            config->partial = partial_method_from_string(partial);
            if (partial_given != nullptr) *partial_given = true;
        }
        if (cmd->count("--lasso-lambda") > 0) {
            config->lasso_lambda = lasso_lambda;
        }
    }
};

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config_path;
    long n = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
    bool timing = false;
};

int run_simulate(const CLI::App* cmd, const SimulateArgs& args) {
    Stopwatch watch(args.timing);
    DgpConfig dgp;
    if (!args.config_path.empty()) {
        const json j = load_json_file(args.config_path);
        dgp = dgp_config_from_json(j.contains("dgp") ? j.at("dgp") : j);
    }
    if (cmd->count("--n") > 0) dgp.n = args.n;
    dgp.validate();
    const Dataset data = simulate_dataset(dgp.params, dgp.shifters, dgp.n,
                                          args.seed, args.threads);
    emit(args.out, dataset_to_csv(data));
    return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateArgs {
    std::string data_path;
    std::string config_path;
    double level = 0.95;
    std::string out;
    int threads = 1;
    bool timing = false;
};

int run_estimate(const CLI::App* cmd, const EstimateArgs& args,
                 const EstimatorFlags& flags) {
    Stopwatch watch(args.timing);
    EstimatorConfig config;
    bool partial_given = false;
    if (!args.config_path.empty()) {
        const json j = load_json_file(args.config_path);
        const json& est = j.contains("estimator") ? j.at("estimator") : j;
        config = estimator_config_from_json(est);
        if (est.contains("partial")) partial_given = true;
    }
    flags.apply(cmd, &config, &partial_given);
    if (!partial_given) {
        throw ConfigError(
            "the partialing method must be stated explicitly: pass --partial "
            "none|ols|lasso (or set estimator.partial in the config file)");
    }
    config.validate();

    const Dataset data = read_dataset_csv(args.data_path);
    const ResidualizedDataset resid =
        residualize(data, config.partial, config.lasso_lambda);
    const GmmFit fit = fit_residualized(resid, config);

    json out = gmm_fit_to_json(fit);
    out["n"] = data.n();
    out["partial"] = to_string(config.partial);
    const double z = normal_quantile(1.0 - (1.0 - args.level) / 2.0);
    out["confidence_level"] = args.level;
    out["wald_ci"] = {
        {"alpha1",
         {fit.theta_hat(0) - z * fit.se(0), fit.theta_hat(0) + z * fit.se(0)}},
        {"beta1",
         {fit.theta_hat(1) - z * fit.se(1), fit.theta_hat(1) + z * fit.se(1)}}};
    emit(args.out, json_text(out));
    return 0;
}

// ---------------------------------------------------------------------------
// region
// ---------------------------------------------------------------------------

struct RegionArgs {
    std::string data_path;
    std::string config_path;
    std::string kind = "ar";
    double level = 0.95;
    std::string partial = "ols";
    double lasso_lambda = -1.0;
    double a_min = -10.0, a_max = 10.0;
    double b_min = -10.0, b_max = 10.0;
    int a_count = 41, b_count = 41;
    long draws = 1000;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
    bool timing = false;
};

int run_region(const CLI::App* cmd, const RegionArgs& args_in) {
    Stopwatch watch(args_in.timing);
    RegionArgs args = args_in;
    ThetaBox box;
    if (!args.config_path.empty()) {
        const json j = load_json_file(args.config_path);
        if (j.contains("theta_box")) {
            box = theta_box_from_json(j.at("theta_box"));
        }
        auto pull = [&](const char* key, auto* slot) {
            using T = std::remove_pointer_t<decltype(slot)>;
            *slot = detail::field_or<T>(j, key, *slot);
        };
        if (cmd->count("--kind") == 0) pull("kind", &args.kind);
        if (cmd->count("--level") == 0) pull("level", &args.level);
        if (cmd->count("--partial") == 0) pull("partial", &args.partial);
        if (cmd->count("--a-min") == 0) pull("a_min", &args.a_min);
        if (cmd->count("--a-max") == 0) pull("a_max", &args.a_max);
        if (cmd->count("--b-min") == 0) pull("b_min", &args.b_min);
        if (cmd->count("--b-max") == 0) pull("b_max", &args.b_max);
        if (cmd->count("--a-count") == 0) pull("a_count", &args.a_count);
        if (cmd->count("--b-count") == 0) pull("b_count", &args.b_count);
        if (cmd->count("--draws") == 0) pull("draws", &args.draws);
        if (cmd->count("--seed") == 0) pull("seed", &args.seed);
    }
    if (args.kind != "ar" && args.kind != "clr") {
        throw ConfigError("region kind must be ar or clr, got '" + args.kind +
                          "'");
    }
    if (!(args.level > 0.0 && args.level < 1.0)) {
        throw ConfigError("level must lie in (0, 1)");
    }
    if (args.a_count < 2 || args.b_count < 2) {
        throw ConfigError("grid needs at least 2 points per axis");
    }
    if (!(args.a_min < args.a_max) || !(args.b_min < args.b_max)) {
        throw ConfigError("grid bounds must satisfy min < max");
    }

    const Dataset data = read_dataset_csv(args.data_path);
    const ResidualizedDataset resid = residualize(
        data, partial_method_from_string(args.partial), args.lasso_lambda);
    const MomentSystem ms = build_moment_system(resid);
    const CovarianceKernel kernel(ms);

    ThetaGrid grid;
    grid.a_axis = VectorXd::LinSpaced(args.a_count, args.a_min, args.a_max);
    grid.b_axis = VectorXd::LinSpaced(args.b_count, args.b_min, args.b_max);
    grid.validate();

    const double p = 1.0 - args.level;
    ConfidenceRegion region =
        args.kind == "ar"
            ? ar_region(ms, kernel, grid, p, args.threads)
            : clr_region(ms, kernel, grid, box, p, args.draws, args.seed,
                         WeakIdOptions{}, args.threads);
    emit(args.out, region_to_csv(region));
    return 0;
}

// ---------------------------------------------------------------------------
// montecarlo
// ---------------------------------------------------------------------------

struct MonteCarloArgs {
    std::string config_path;
    long replications = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    bool summary_only = false;
    std::string out;
    bool timing = false;
};

int run_montecarlo_cmd(const CLI::App* cmd, const MonteCarloArgs& args,
                       const EstimatorFlags& flags) {
    Stopwatch watch(args.timing);
    ExperimentConfig config;
    if (!args.config_path.empty()) {
        config = experiment_config_from_json(load_json_file(args.config_path));
    }
    if (cmd->count("--replications") > 0) {
        config.replications = args.replications;
    }
    if (cmd->count("--seed") > 0) config.base_seed = args.seed;
    flags.apply(cmd, &config.estimator, nullptr);
    config.validate();

    MonteCarloReport report = run_montecarlo(config, args.threads);
    report.elapsed_seconds = watch.seconds();
    emit(args.out, json_text(mc_report_to_json(report, !args.summary_only,
                                               args.timing)));
    return 0;
}

// ---------------------------------------------------------------------------
// counterfactual
// ---------------------------------------------------------------------------

struct CounterfactualArgs {
    double alpha1 = -1.0;
    double beta1 = 1.0;
    std::string fit_path;
    double tau = 0.0;
    double tau_max = 0.5;
    double tau_step = 1e-3;
    double baseline_p = 0.0;
    double baseline_y = 0.0;
    bool no_cubic = false;
    bool optimum = false;
    std::string out;
    bool timing = false;
};

int run_counterfactual(const CLI::App* cmd, const CounterfactualArgs& args) {
    Stopwatch watch(args.timing);
    double alpha1 = args.alpha1;
    double beta1 = args.beta1;
    if (!args.fit_path.empty()) {
        const json fit = load_json_file(args.fit_path);
        if (!fit.contains("estimates")) {
            throw ConfigError(args.fit_path +
                              ": fit file lacks an 'estimates' object");
        }
        alpha1 = fit.at("estimates").at("alpha1").get<double>();
        beta1 = fit.at("estimates").at("beta1").get<double>();
        if (cmd->count("--alpha1") > 0) alpha1 = args.alpha1;
        if (cmd->count("--beta1") > 0) beta1 = args.beta1;
    }
    const bool cubic = !args.no_cubic;

    if (cmd->count("--tau") > 0) {
        TariffScenario scenario;
        scenario.tau = args.tau;
        scenario.alpha1 = alpha1;
        scenario.beta1 = beta1;
        scenario.baseline_p = args.baseline_p;
        scenario.baseline_y = args.baseline_y;
        emit(args.out, outcome_to_csv(apply_tariff(scenario, cubic)));
        return 0;
    }

    const VectorXd grid = default_tariff_grid(args.tau_max, args.tau_step);
    const WelfareCurve curve = optimal_tariff(alpha1, beta1, grid, cubic);
    if (args.optimum) {
        json out{{"argmax_tau", curve.argmax_tau},
                 {"argmax_welfare", curve.argmax_welfare},
                 {"argmax_index", curve.argmax_index},
                 {"pass_through", pass_through(alpha1, beta1)}};
        if (curve.quadratic_stationary_tau.has_value()) {
            out["quadratic_stationary_tau"] = *curve.quadratic_stationary_tau;
        }
        emit(args.out, json_text(out));
    } else {
        emit(args.out, welfare_to_csv(curve));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// dsep
// ---------------------------------------------------------------------------

struct DsepArgs {
    bool wright = false;
    bool include_w = false;
    std::string graph_path;
    std::vector<std::string> x, y, z;
    bool exclusions = false;
    std::string out;
    bool timing = false;
};

int run_dsep(const DsepArgs& args) {
    Stopwatch watch(args.timing);
    Dag dag;
    if (!args.graph_path.empty()) {
        dag = Dag::parse(read_text_file(args.graph_path), args.graph_path);
    } else {
        dag = build_wright_dag(args.include_w);
    }

    std::string out;
    if (args.exclusions) {
        const auto checks = implied_exclusions(dag);
        for (const auto& check : checks) {
            out += check.description;
            out += ": separated: ";
            out += check.separated ? "true" : "false";
            out += "\n";
        }
        emit(args.out, out);
        return 0;
    }

    if (args.x.empty() || args.y.empty()) {
        throw ConfigError(
            "dsep needs --x and --y node labels (or --exclusions)");
    }
    SeparationQuery query{args.x, args.y, args.z};
    const bool separated = d_separated(dag, query);
    out += "separated: ";
    out += separated ? "true" : "false";
    out += "\n";
    for (const auto& x_label : args.x) {
        for (const auto& y_label : args.y) {
            const auto paths = enumerate_paths(dag, x_label, y_label);
            out += "paths " + x_label + " -- " + y_label + " (" +
                   std::to_string(paths.size()) + "):\n";
            for (const auto& path : paths) {
                out += "  ";
                out += path.render(dag);
                out += path_blocked(dag, path, args.z) ? "  [blocked]"
                                                       : "  [open]";
                out += "\n";
            }
        }
    }
    emit(args.out, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "wrightiv: simultaneous demand/supply simulation, IV/GMM estimation, "
        "identification-robust inference, tariff counterfactuals, and causal "
        "graph queries"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* sim_cmd =
        app.add_subcommand("simulate", "Draw a synthetic dataset (CSV)");
    sim_cmd->add_option("--config", sim.config_path,
                        "JSON file with dgp parameters/shifters");
    sim_cmd->add_option("--n", sim.n, "Number of markets");
    sim_cmd->add_option("--seed", sim.seed, "RNG seed");
    sim_cmd->add_option("--threads", sim.threads, "Worker threads");
    sim_cmd->add_option("--out", sim.out, "Output path (default stdout)");
    sim_cmd->add_flag("--timing", sim.timing, "Report wall time on stderr");

    EstimateArgs est;
    EstimatorFlags est_flags;
    auto* est_cmd = app.add_subcommand(
        "estimate", "Fit the slope pair by iterated GMM or CUE (JSON)");
    est_cmd->add_option("--data", est.data_path, "Dataset CSV")->required();
    est_cmd->add_option("--config", est.config_path, "Estimator JSON config");
    est_flags.attach(est_cmd);
    est_cmd->add_option("--level", est.level, "Wald confidence level");
    est_cmd->add_option("--threads", est.threads, "Worker threads");
    est_cmd->add_option("--out", est.out, "Output path (default stdout)");
    est_cmd->add_flag("--timing", est.timing, "Report wall time on stderr");

    RegionArgs reg;
    auto* reg_cmd = app.add_subcommand(
        "region", "Grid a weak-identification-robust confidence region (CSV)");
    reg_cmd->add_option("--data", reg.data_path, "Dataset CSV")->required();
    reg_cmd->add_option("--config", reg.config_path, "Region JSON config");
    reg_cmd->add_option("--kind", reg.kind, "Statistic: ar or clr");
    reg_cmd->add_option("--level", reg.level, "Confidence level");
    reg_cmd->add_option("--partial", reg.partial,
                        "Partialing method: none, ols, lasso");
    reg_cmd->add_option("--lasso-lambda", reg.lasso_lambda,
                        "Lasso penalty level");
    reg_cmd->add_option("--a-min", reg.a_min, "Demand-slope grid lower edge");
    reg_cmd->add_option("--a-max", reg.a_max, "Demand-slope grid upper edge");
    reg_cmd->add_option("--b-min", reg.b_min, "Supply-slope grid lower edge");
    reg_cmd->add_option("--b-max", reg.b_max, "Supply-slope grid upper edge");
    reg_cmd->add_option("--a-count", reg.a_count, "Grid points per a axis");
    reg_cmd->add_option("--b-count", reg.b_count, "Grid points per b axis");
    reg_cmd->add_option("--draws", reg.draws, "Simulation draws per point");
    reg_cmd->add_option("--seed", reg.seed, "Base seed for the draws");
    reg_cmd->add_option("--threads", reg.threads, "Worker threads");
    reg_cmd->add_option("--out", reg.out, "Output path (default stdout)");
    reg_cmd->add_flag("--timing", reg.timing, "Report wall time on stderr");

    MonteCarloArgs mc;
    EstimatorFlags mc_flags;
    auto* mc_cmd = app.add_subcommand(
        "montecarlo", "Replicate simulate+estimate and report coverage (JSON)");
    mc_cmd->add_option("--config", mc.config_path, "Experiment JSON config");
    mc_cmd->add_option("--replications", mc.replications,
                       "Number of replications");
    mc_cmd->add_option("--seed", mc.seed, "Base seed");
    mc_flags.attach(mc_cmd);
    mc_cmd->add_option("--threads", mc.threads, "Worker threads");
    mc_cmd->add_flag("--summary-only", mc.summary_only,
                     "Omit per-replication rows from the report");
    mc_cmd->add_option("--out", mc.out, "Output path (default stdout)");
    mc_cmd->add_flag("--timing", mc.timing,
                     "Embed wall time in the report and print it to stderr");

    CounterfactualArgs cf;
    auto* cf_cmd = app.add_subcommand(
        "counterfactual", "Tariff pass-through and welfare accounting (CSV)");
    cf_cmd->add_option("--alpha1", cf.alpha1, "Demand slope (log-log)");
    cf_cmd->add_option("--beta1", cf.beta1, "Supply slope (log-log)");
    cf_cmd->add_option("--fit", cf.fit_path,
                       "JSON fit file from `estimate` to take slopes from");
    cf_cmd->add_option("--tau", cf.tau, "Single tariff rate in [0, 1)");
    cf_cmd->add_option("--tau-max", cf.tau_max, "Grid upper edge");
    cf_cmd->add_option("--tau-step", cf.tau_step, "Grid step");
    cf_cmd->add_option("--baseline-p", cf.baseline_p, "Baseline log price");
    cf_cmd->add_option("--baseline-y", cf.baseline_y, "Baseline log quantity");
    cf_cmd->add_flag("--no-cubic-revenue", cf.no_cubic,
                     "Drop the cubic term from the revenue polynomial");
    cf_cmd->add_flag("--optimum", cf.optimum,
                     "Report the welfare-maximizing tariff as JSON");
    cf_cmd->add_option("--out", cf.out, "Output path (default stdout)");
    cf_cmd->add_flag("--timing", cf.timing, "Report wall time on stderr");

    DsepArgs ds;
    auto* ds_cmd = app.add_subcommand(
        "dsep", "d-separation queries and path listings on a causal graph");
    ds_cmd->add_flag("--wright", ds.wright,
                     "Use the built-in demand/supply graph");
    ds_cmd->add_flag("--include-w", ds.include_w,
                     "Add observed controls W to the built-in graph");
    ds_cmd->add_option("--graph", ds.graph_path, "Graph text file");
    ds_cmd->add_option("--x", ds.x, "Source node label(s)");
    ds_cmd->add_option("--y", ds.y, "Target node label(s)");
    ds_cmd->add_option("--z", ds.z, "Conditioning node label(s)");
    ds_cmd->add_flag("--exclusions", ds.exclusions,
                     "Check the graph's implied exclusion restrictions");
    ds_cmd->add_option("--out", ds.out, "Output path (default stdout)");
    ds_cmd->add_flag("--timing", ds.timing, "Report wall time on stderr");

    try {
        app.parse(argc, argv);
        if (sim_cmd->parsed()) return run_simulate(sim_cmd, sim);
        if (est_cmd->parsed()) return run_estimate(est_cmd, est, est_flags);
        if (reg_cmd->parsed()) return run_region(reg_cmd, reg);
        if (mc_cmd->parsed()) return run_montecarlo_cmd(mc_cmd, mc, mc_flags);
        if (cf_cmd->parsed()) return run_counterfactual(cf_cmd, cf);
        if (ds_cmd->parsed()) return run_dsep(ds);
        std::cerr << app.help() << "\n";
        return 2;
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const NumericError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    } catch (const IoError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 4;
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
}
