// Acceptance suite: ten numbered end-to-end checks of the toolkit, each
// printing a single [PASS]/[FAIL] line with a short diagnostic and elapsed
// time. Pass criterion numbers as arguments to run a subset; with no
// arguments every criterion runs. Exit status is nonzero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>
#include <sys/wait.h>
#include <unistd.h>

#include "support/oracles.hpp"
#include "support/test_util.hpp"
#include "wrightiv/wrightiv.hpp"

using namespace wrightiv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3g", v);
    return buffer;
}

// ---------------------------------------------------------------------------
// 1. Algebraic identities: indirect least squares, the instrument ratio, and
//    exactly identified GMM under three weightings all coincide.
// ---------------------------------------------------------------------------

Outcome criterion1() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        for (const long n : {50L, 500L}) {
            const ResidualizedDataset resid =
                raw_residualized(testutil::strong_dataset(n, 1000 + seed));
            const MomentSystem ms = build_moment_system(resid);

            const Eigen::Vector2d ils = indirect_least_squares(resid);
            const Eigen::Vector2d ratio(
                resid.zs1.col(0).dot(resid.y1) / resid.zs1.col(0).dot(resid.p1),
                resid.zd2.col(0).dot(resid.y2) / resid.zd2.col(0).dot(resid.p2));
            const Eigen::Vector2d gmm_identity =
                solve_gmm(ms, WeightingMatrix::identity(ms.m()));
            const Eigen::Vector2d gmm_block =
                solve_gmm(ms, WeightingMatrix::block_instrument_moments(resid));
            const Eigen::Vector2d gmm_omega = solve_gmm(
                ms, WeightingMatrix::inverse_omega(
                        estimate_omega(ms, ils, OmegaKind::iid_centered())));

            const Eigen::Vector2d estimates[5] = {ils, ratio, gmm_identity,
                                                  gmm_block, gmm_omega};
            for (const auto& lhs : estimates) {
                for (const auto& rhs : estimates) {
                    worst = std::max(worst,
                                     (lhs - rhs).cwiseAbs().maxCoeff());
                }
            }
        }
    }
    return {worst <= 1e-10,
            "max disagreement " + fmt(worst) +
                " among 5 estimators over 200 datasets (tol 1e-10)"};
}

// ---------------------------------------------------------------------------
// 2. Step-1 GMM equals an independently coded 2SLS on overidentified data.
// ---------------------------------------------------------------------------

Outcome criterion2() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ResidualizedDataset resid =
            raw_residualized(testutil::strong_dataset(400, 2000 + seed, 2, 2));
        const GmmFit fit = iterative_gmm(resid, 1);
        const MatrixXd no_exog(400, 0);
        const double a = oracle::two_stage_least_squares(resid.y1, resid.p1,
                                                         no_exog, resid.zs1);
        const double b = oracle::two_stage_least_squares(resid.y2, resid.p2,
                                                         no_exog, resid.zd2);
        worst = std::max({worst, std::abs(fit.theta_hat(0) - a),
                          std::abs(fit.theta_hat(1) - b)});
    }
    return {worst <= 1e-8,
            "max step-1 vs 2SLS gap " + fmt(worst) +
                " over 20 overidentified datasets (tol 1e-8)"};
}

// ---------------------------------------------------------------------------
// 3. Asymptotic normality under strong identification: Wald coverage and a
//    KS test of the standardized estimates against N(0, 1).
// ---------------------------------------------------------------------------

Outcome criterion3() {
    ExperimentConfig config;
    config.dgp.params = testutil::strong_params();
    config.dgp.shifters = ShifterSpec::iid(1, 1);
    config.dgp.n = 2000;
    config.estimator.partial = PartialMethod::none;
    config.replications = 1000;
    config.base_seed = 30000;
    const MonteCarloReport report = run_montecarlo(config);

    std::vector<double> za, zb;
    for (const auto& res : report.results) {
        if (!res.ok) continue;
        za.push_back((res.theta_hat(0) - report.true_theta(0)) / res.se(0));
        zb.push_back((res.theta_hat(1) - report.true_theta(1)) / res.se(1));
    }
    const auto ks_a = oracle::ks_test(za, oracle::normal_cdf);
    const auto ks_b = oracle::ks_test(zb, oracle::normal_cdf);

    const bool coverage_ok =
        report.wald_coverage_a >= 0.92 && report.wald_coverage_a <= 0.97 &&
        report.wald_coverage_b >= 0.92 && report.wald_coverage_b <= 0.97;
    const bool ks_ok = ks_a.p_value >= 0.01 && ks_b.p_value >= 0.01;
    return {report.failures == 0 && coverage_ok && ks_ok,
            "Wald coverage (" + fmt(report.wald_coverage_a) + ", " +
                fmt(report.wald_coverage_b) + ") in [0.92, 0.97], KS p (" +
                fmt(ks_a.p_value) + ", " + fmt(ks_b.p_value) + ") >= 0.01"};
}

// ---------------------------------------------------------------------------
// 4. Continuous updating stays within three standard errors of the two-step
//    estimate in at least 99% of replications.
// ---------------------------------------------------------------------------

Outcome criterion4() {
    const ThetaBox box;
    long close = 0;
    const long reps = 500;
    for (std::uint64_t rep = 0; rep < static_cast<std::uint64_t>(reps); ++rep) {
        const ResidualizedDataset resid = raw_residualized(
            simulate_dataset(testutil::strong_params(), ShifterSpec::iid(1, 1),
                             2000, derive_seed(40000, rep)));
        const GmmFit two_step = iterative_gmm(resid, 2);
        const GmmFit star = cue(resid, box);
        const bool within =
            std::abs(star.theta_hat(0) - two_step.theta_hat(0)) <=
                3.0 * two_step.se(0) &&
            std::abs(star.theta_hat(1) - two_step.theta_hat(1)) <=
                3.0 * two_step.se(1);
        close += within ? 1 : 0;
    }
    const double rate = static_cast<double>(close) / static_cast<double>(reps);
    return {rate >= 0.99, "CUE within 3 SE of the two-step estimate in " +
                              fmt(100.0 * rate) + "% of 500 replications"};
}

// ---------------------------------------------------------------------------
// 5. The AR statistic is chi-square(2) at the truth under strong
//    identification, and its region keeps coverage under weak instruments.
// ---------------------------------------------------------------------------

Outcome criterion5() {
    const Eigen::Vector2d theta0(-0.8, 0.9);
    std::vector<double> stats;
    stats.reserve(1000);
    for (std::uint64_t rep = 0; rep < 1000; ++rep) {
        const ResidualizedDataset resid = raw_residualized(
            simulate_dataset(testutil::strong_params(), ShifterSpec::iid(1, 1),
                             500, derive_seed(50000, rep)));
        const MomentSystem ms = build_moment_system(resid);
        const CovarianceKernel kernel(ms);
        stats.push_back(ar_statistic(ms, kernel, theta0));
    }
    const auto ks = oracle::ks_test(
        stats, [](double x) { return oracle::chi2_cdf(x, 2.0); });

    ExperimentConfig weak;
    weak.dgp.params = testutil::weak_params();
    weak.dgp.shifters = ShifterSpec::iid(1, 1);
    weak.dgp.n = 200;
    weak.estimator.partial = PartialMethod::none;
    weak.inference.ar = true;
    weak.replications = 500;
    weak.base_seed = 51000;
    const MonteCarloReport report = run_montecarlo(weak);

    const bool pass = ks.p_value >= 0.01 && report.ar_coverage >= 0.92;
    return {pass, "strong-ID KS p " + fmt(ks.p_value) +
                      " >= 0.01, weak-ID AR coverage " +
                      fmt(report.ar_coverage) + " >= 0.92 (Wald " +
                      fmt(report.wald_coverage_a) + "/" +
                      fmt(report.wald_coverage_b) + " recorded, " +
                      std::to_string(report.failures) + " failures)"};
}

// ---------------------------------------------------------------------------
// 6. The two conditional likelihood-ratio forms agree draw by draw, and the
//    simulated test has close-to-nominal size at the truth.
// ---------------------------------------------------------------------------

Outcome criterion6() {
    const Eigen::Vector2d theta0(-0.8, 0.9);
    const ThetaBox box;
    const WeakIdOptions options;
    long reject = 0;
    long sim_failures = 0;
    double worst_gap = 0.0;
    const long reps = 300;
    for (std::uint64_t rep = 0; rep < static_cast<std::uint64_t>(reps); ++rep) {
        const ResidualizedDataset resid = raw_residualized(
            simulate_dataset(testutil::strong_params(), ShifterSpec::iid(1, 1),
                             200, derive_seed(64000, rep)));
        const MomentSystem ms = build_moment_system(resid);
        const CovarianceKernel kernel(ms);
        const double lr = lr_statistic(ms, kernel, theta0, box, options);
        ClrSimulation diag;
        const double critical =
            clr_critical_value(ms, kernel, theta0, box, 0.05, 500,
                               derive_seed(65000, rep), options, &diag);
        sim_failures += diag.failures;
        for (std::size_t d = 0; d < diag.lr_primary.size(); ++d) {
            worst_gap = std::max(
                worst_gap, std::abs(diag.lr_primary[d] - diag.lr_identity[d]));
        }
        if (lr > critical) ++reject;
    }
    const double rate = static_cast<double>(reject) / static_cast<double>(reps);
    const bool pass =
        worst_gap <= 1e-8 && rate >= 0.03 && rate <= 0.07 && sim_failures == 0;
    return {pass, "max LR-form gap " + fmt(worst_gap) +
                      " (tol 1e-8), rejection rate " + fmt(rate) +
                      " in [0.03, 0.07] over 300x500 draws"};
}

// ---------------------------------------------------------------------------
// 7. Frisch-Waugh: GMM after partialing out the controls equals a long 2SLS
//    that keeps (W, Z) as included exogenous regressors.
// ---------------------------------------------------------------------------

Outcome criterion7() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Dataset data =
            testutil::strong_dataset(300, 70000 + seed, 1, 1, 2);
        const GmmFit fit = iterative_gmm(partial_out(data));

        const VectorXd y = data.y_col();
        const VectorXd p = data.p_col();
        const MatrixXd zd = data.zd_matrix();
        const MatrixXd zs = data.zs_matrix();
        const MatrixXd w = data.w_matrix();
        MatrixXd exog_demand(data.n(), w.cols() + zd.cols());
        exog_demand << w, zd;
        MatrixXd exog_supply(data.n(), w.cols() + zs.cols());
        exog_supply << w, zs;
        const double a =
            oracle::two_stage_least_squares(y, p, exog_demand, zs);
        const double b =
            oracle::two_stage_least_squares(y, p, exog_supply, zd);
        worst = std::max({worst, std::abs(fit.theta_hat(0) - a),
                          std::abs(fit.theta_hat(1) - b)});
    }
    return {worst <= 1e-6,
            "max partialed-GMM vs long-2SLS gap " + fmt(worst) +
                " over 100 seeds (tol 1e-6)"};
}

// ---------------------------------------------------------------------------
// 8. Counterfactual oracle: hand-substituted polynomials, sign contracts,
//    and the welfare argmax against the quadratic stationary point.
// ---------------------------------------------------------------------------

Outcome criterion8() {
    double worst = 0.0;
    const double alphas[5] = {-0.3, -0.8, -1.0, -2.5, -4.0};
    const double betas[2] = {0.0, 1.7};
    const double taus[2] = {0.1, 0.45};
    for (const double a1 : alphas) {
        for (const double b1 : betas) {
            for (const double tau : taus) {
                TariffScenario scenario;
                scenario.tau = tau;
                scenario.alpha1 = a1;
                scenario.beta1 = b1;
                scenario.baseline_p = 0.7;
                scenario.baseline_y = 1.9;
                const CounterfactualOutcome out = apply_tariff(scenario);

                const double c = b1 / (b1 - a1);
                const double cs =
                    -(c * tau) - 0.5 * a1 * std::pow(c * tau, 2.0);
                const double rev = tau + c * (1.0 + a1) * std::pow(tau, 2.0) +
                                   std::pow(c, 3.0) * a1 * a1 *
                                       std::pow(tau, 3.0);
                worst = std::max(
                    {worst, std::abs(out.pass_through_c - c),
                     std::abs(out.delta_p - c * tau),
                     std::abs(out.delta_y - a1 * (c * tau)),
                     std::abs(out.p_star - (0.7 + c * tau)),
                     std::abs(out.y_star - (1.9 + a1 * (c * tau))),
                     std::abs(out.cs_change_ratio - cs),
                     std::abs(out.revenue_ratio - rev),
                     std::abs(out.welfare_sum - (cs + rev))});
            }
        }
    }
    const bool oracle_ok = worst <= 1e-12;

    bool signs_ok = true;
    const VectorXd grid = default_tariff_grid(0.5, 1e-3);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        TariffScenario scenario;
        scenario.tau = grid(i);
        scenario.alpha1 = -0.8;
        scenario.beta1 = 0.9;
        const CounterfactualOutcome out = apply_tariff(scenario);
        signs_ok = signs_ok && out.delta_p >= 0.0 && out.delta_y <= 0.0;
    }

    const WelfareCurve curve = optimal_tariff(-3.0, 3.0, grid, false);
    const bool stationary_ok =
        curve.quadratic_stationary_tau.has_value() &&
        std::abs(curve.argmax_tau - *curve.quadratic_stationary_tau) <=
            1e-3 + 1e-12;
    return {oracle_ok && signs_ok && stationary_ok,
            "max vs hand substitution " + fmt(worst) +
                " over 20 grid points (tol 1e-12), signs " +
                (signs_ok ? "hold" : "VIOLATED") + ", argmax " +
                fmt(curve.argmax_tau) + " within one step of stationary " +
                (curve.quadratic_stationary_tau
                     ? fmt(*curve.quadratic_stationary_tau)
                     : std::string("none"))};
}

// ---------------------------------------------------------------------------
// 9. The linear-time d-separation sweep agrees with exhaustive path blocking
//    on random DAGs, and the canonical graph reproduces its path table.
// ---------------------------------------------------------------------------

Outcome criterion9() {
    const Dag dag = build_wright_dag();
    const auto paths = enumerate_paths(dag, "Zs", "D");
    bool exact = paths.size() == 4 &&
                 paths[0].render(dag) == "Zs <- K1 -> Zd -> D" &&
                 paths[1].render(dag) == "Zs -> S <- K2 -> D" &&
                 paths[2].render(dag) == "Zs -> S -> P <- D" &&
                 paths[3].render(dag) == "Zs -> S -> Y <- D" &&
                 !path_has_collider(paths[0]) && path_has_collider(paths[1]) &&
                 path_has_collider(paths[2]) && path_has_collider(paths[3]);
    SeparationQuery blocked;
    blocked.x = {"Zs"};
    blocked.y = {"D"};
    blocked.z = {"Zd"};
    SeparationQuery opened = blocked;
    opened.z = {"Zd", "P"};
    exact = exact && d_separated(dag, blocked) && !d_separated(dag, opened);

    long queries = 0;
    long disagreements = 0;
    for (std::uint64_t g = 0; g < 2500; ++g) {
        SubstreamRng rng(90000, g);
        const int n = 3 + static_cast<int>(rng.uniform() * 5.0);  // 3..7

        Dag random_dag;
        std::vector<std::string> labels;
        for (int v = 0; v < n; ++v) {
            labels.push_back("N" + std::to_string(v));
            random_dag.add_node(labels.back());
        }
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (rng.uniform() < 0.45) {
                    random_dag.add_edge(labels[static_cast<std::size_t>(i)],
                                        labels[static_cast<std::size_t>(j)]);
                }
            }
        }
        for (int rep = 0; rep < 4; ++rep) {
            const int xi = static_cast<int>(rng.uniform() * n) % n;
            int yi = static_cast<int>(rng.uniform() * (n - 1)) % (n - 1);
            if (yi >= xi) ++yi;
            SeparationQuery q;
            q.x = {labels[static_cast<std::size_t>(xi)]};
            q.y = {labels[static_cast<std::size_t>(yi)]};
            for (int v = 0; v < n; ++v) {
                if (v != xi && v != yi && rng.uniform() < 0.3) {
                    q.z.push_back(labels[static_cast<std::size_t>(v)]);
                }
            }
            ++queries;
            if (d_separated(random_dag, q) !=
                d_separated_by_paths(random_dag, q)) {
                ++disagreements;
            }
        }
    }
    return {exact && queries >= 10000 && disagreements == 0,
            std::to_string(queries) + " random queries, " +
                std::to_string(disagreements) +
                " sweep/oracle disagreements, canonical paths and verdicts " +
                (exact ? "exact" : "WRONG")};
}

// ---------------------------------------------------------------------------
// 10. Every CLI command is byte-identical across reruns and thread counts.
// ---------------------------------------------------------------------------

struct CliRun {
    int exit_code = -1;
    std::string out;
};

CliRun run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_path =
        fs::temp_directory_path() /
        ("wrightiv_acceptance_" + std::to_string(::getpid()) + "_" +
         std::to_string(++counter) + ".txt");
    const std::string command = std::string("\"") + WRIGHTIV_CLI_PATH + "\" " +
                                args + " >" + out_path.string() +
                                " 2>/dev/null";
    const int status = std::system(command.c_str());
    CliRun run;
    if (WIFEXITED(status)) run.exit_code = WEXITSTATUS(status);
    run.out = read_text_file(out_path.string());
    fs::remove(out_path);
    return run;
}

Outcome criterion10() {
    const fs::path data_path =
        fs::temp_directory_path() /
        ("wrightiv_acceptance_data_" + std::to_string(::getpid()) + ".csv");
    if (run_cli("simulate --n 40 --seed 12 --out " + data_path.string())
            .exit_code != 0) {
        return {false, "could not stage the shared dataset"};
    }
    const std::string data = data_path.string();

    struct Command {
        std::string args;
        bool threaded;  // command accepts --threads
    };
    const std::vector<Command> commands = {
        {"simulate --n 40 --seed 3", true},
        {"estimate --data " + data + " --partial ols", true},
        {"region --data " + data +
             " --partial none --a-min -2 --a-max 0 --a-count 3 --b-min 0 "
             "--b-max 2 --b-count 3",
         true},
        {"region --data " + data +
             " --partial none --kind clr --draws 100 --seed 4 --a-min -1.5 "
             "--a-max -0.5 --a-count 2 --b-min 0.5 --b-max 1.5 --b-count 2",
         true},
        {"montecarlo --replications 2 --seed 5 --partial none", true},
        {"counterfactual --alpha1 -1 --beta1 1 --tau-step 0.01 --tau-max 0.2",
         false},
        {"counterfactual --alpha1 -1 --beta1 1 --tau 0.2", false},
        {"dsep --wright --x Zs --y D --z Zd", false},
        {"dsep --wright --exclusions", false},
    };

    long compared = 0;
    for (const auto& command : commands) {
        const CliRun first = run_cli(command.args);
        const CliRun second = run_cli(command.args);
        if (first.exit_code != 0 || second.exit_code != 0 ||
            first.out != second.out) {
            fs::remove(data_path);
            return {false, "rerun mismatch for: " + command.args};
        }
        ++compared;
        if (command.threaded) {
            const CliRun threaded = run_cli(command.args + " --threads 8");
            if (threaded.exit_code != 0 || threaded.out != first.out) {
                fs::remove(data_path);
                return {false,
                        "--threads 8 mismatch for: " + command.args};
            }
            ++compared;
        }
    }
    fs::remove(data_path);
    return {true, std::to_string(compared) +
                      " byte-identical comparisons across " +
                      std::to_string(commands.size()) + " commands"};
}

using CriterionFn = Outcome (*)();
constexpr CriterionFn kCriteria[10] = {
    criterion1, criterion2, criterion3, criterion4, criterion5,
    criterion6, criterion7, criterion8, criterion9, criterion10};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    if (selected.empty()) {
        for (int c = 1; c <= 10; ++c) selected.push_back(c);
    }

    bool all_pass = true;
    for (const int c : selected) {
        if (c < 1 || c > 10) {
            std::printf("[FAIL] criterion %d: no such criterion\n", c);
            all_pass = false;
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = kCriteria[c - 1]();
        } catch (const std::exception& err) {
            outcome = {false, std::string("unexpected exception: ") +
                                  err.what()};
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
        std::printf("[%s] criterion %d: %s (%.1f s)\n",
                    outcome.pass ? "PASS" : "FAIL", c,
                    outcome.detail.c_str(), seconds);
        std::fflush(stdout);
        all_pass = all_pass && outcome.pass;
    }
    return all_pass ? 0 : 1;
}
