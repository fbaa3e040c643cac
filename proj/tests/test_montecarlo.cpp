// Monte Carlo engine: per-replication seeding and pipeline fidelity,
// aggregation arithmetic, failure capture, thread-count invariance, and the
// JSON conversions for experiment configs and reports.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "support/test_util.hpp"
#include "wrightiv/montecarlo.hpp"

using namespace wrightiv;

namespace {

ExperimentConfig small_config(long reps, long n, std::uint64_t seed) {
    ExperimentConfig config;
    config.replications = reps;
    config.dgp.n = n;
    config.base_seed = seed;
    return config;
}

}  // namespace

TEST_CASE("experiment configuration validation", "[montecarlo]") {
    ExperimentConfig config;
    REQUIRE_NOTHROW(config.validate());

    SECTION("replication count") {
        config.replications = 0;
        REQUIRE_THROWS_AS(config.validate(), ConfigError);
    }
    SECTION("confidence level") {
        config.inference.level = 1.0;
        REQUIRE_THROWS_AS(config.validate(), ConfigError);
    }
    SECTION("conditional draws") {
        config.inference.clr = true;
        config.inference.clr_draws = 50;
        REQUIRE_THROWS_AS(config.validate(), ConfigError);
    }
    SECTION("estimation steps") {
        config.estimator.k_steps = 0;
        REQUIRE_THROWS_AS(config.validate(), ConfigError);
    }
    SECTION("sample size") {
        config.dgp.n = 0;
        REQUIRE_THROWS_AS(config.validate(), ConfigError);
    }
}

TEST_CASE("a replication reproduces the manual pipeline bitwise",
          "[montecarlo]") {
    const ExperimentConfig config = small_config(10, 120, 99);
    const ReplicationResult res = run_replication(config, 3);
    REQUIRE(res.ok);
    REQUIRE(res.seed == derive_seed(99, 3));

    const Dataset data = simulate_dataset(config.dgp.params,
                                          config.dgp.shifters, 120, res.seed);
    const ResidualizedDataset resid =
        residualize(data, config.estimator.partial);
    const GmmFit fit = fit_residualized(resid, config.estimator);
    REQUIRE(res.theta_hat(0) == fit.theta_hat(0));
    REQUIRE(res.theta_hat(1) == fit.theta_hat(1));
    REQUIRE(res.se(0) == fit.se(0));
    REQUIRE(res.se(1) == fit.se(1));

    const double z = normal_quantile(0.975);
    REQUIRE(res.wald_covers_a ==
            (std::abs(res.theta_hat(0) - config.dgp.params.alpha1) <=
             z * res.se(0)));
    REQUIRE(res.wald_covers_b ==
            (std::abs(res.theta_hat(1) - config.dgp.params.beta1) <=
             z * res.se(1)));
}

TEST_CASE("single-replication report echoes the one estimate", "[montecarlo]") {
    const ExperimentConfig config = small_config(1, 80, 11);
    const MonteCarloReport report = run_montecarlo(config);
    REQUIRE(report.replications == 1);
    REQUIRE(report.failures == 0);
    REQUIRE(report.results.size() == 1);
    const auto& res = report.results[0];
    REQUIRE(report.mean_estimate == res.theta_hat);
    REQUIRE(report.bias == Vector2d(res.theta_hat - report.true_theta));
    REQUIRE(report.sd == Vector2d::Zero());
    const Vector2d err = res.theta_hat - report.true_theta;
    REQUIRE(report.rmse(0) == Catch::Approx(std::abs(err(0))).margin(1e-15));
    REQUIRE(report.rmse(1) == Catch::Approx(std::abs(err(1))).margin(1e-15));
}

TEST_CASE("identification-robust statistics per replication", "[montecarlo]") {
    ExperimentConfig config = small_config(2, 60, 314);
    config.estimator.partial = PartialMethod::none;
    config.inference.ar = true;
    config.inference.clr = true;
    config.inference.clr_draws = 100;
    config.inference.options.infimum_grid_resolution = 21;
    config.inference.options.inner_grid_resolution = 11;

    const MonteCarloReport report = run_montecarlo(config);
    REQUIRE(report.failures == 0);
    const double crit = chi2_quantile(0.95, 2.0);
    for (const auto& res : report.results) {
        REQUIRE(std::isfinite(res.ar_stat));
        REQUIRE(res.ar_stat >= 0.0);
        REQUIRE(res.ar_covers == (res.ar_stat <= crit));
        REQUIRE(std::isfinite(res.lr_stat));
        REQUIRE(res.lr_stat >= 0.0);
        REQUIRE(std::isfinite(res.clr_critical));
        REQUIRE(res.clr_critical >= 0.0);
        REQUIRE(res.clr_covers == (res.lr_stat <= res.clr_critical));
    }
    REQUIRE(std::isfinite(report.ar_coverage));
    REQUIRE(std::isfinite(report.clr_coverage));
}

TEST_CASE("aggregation arithmetic", "[montecarlo]") {
    const ExperimentConfig config = small_config(6, 80, 555);
    const MonteCarloReport report = run_montecarlo(config);
    REQUIRE(report.failures == 0);

    Vector2d sum = Vector2d::Zero();
    for (const auto& res : report.results) sum += res.theta_hat;
    const Vector2d mean = sum / 6.0;
    Vector2d ss = Vector2d::Zero();
    Vector2d se2 = Vector2d::Zero();
    long covers_a = 0;
    for (const auto& res : report.results) {
        const Vector2d dev = res.theta_hat - mean;
        ss += dev.cwiseProduct(dev);
        const Vector2d err = res.theta_hat - report.true_theta;
        se2 += err.cwiseProduct(err);
        covers_a += res.wald_covers_a ? 1 : 0;
    }
    for (int k = 0; k < 2; ++k) {
        REQUIRE(report.mean_estimate(k) ==
                Catch::Approx(mean(k)).margin(1e-15));
        REQUIRE(report.bias(k) ==
                Catch::Approx(mean(k) - report.true_theta(k)).margin(1e-15));
        REQUIRE(report.sd(k) ==
                Catch::Approx(std::sqrt(ss(k) / 5.0)).margin(1e-15));
        REQUIRE(report.rmse(k) ==
                Catch::Approx(std::sqrt(se2(k) / 6.0)).margin(1e-15));
    }
    REQUIRE(report.wald_coverage_a ==
            static_cast<double>(covers_a) / 6.0);
}

TEST_CASE("reports are identical for any thread count", "[montecarlo]") {
    ExperimentConfig config = small_config(4, 70, 777);
    config.inference.ar = true;
    const MonteCarloReport serial = run_montecarlo(config, 1);
    const MonteCarloReport pooled = run_montecarlo(config, 3);
    REQUIRE(mc_report_to_json(serial).dump() ==
            mc_report_to_json(pooled).dump());
}

TEST_CASE("numeric failures are recorded rather than fatal", "[montecarlo]") {
    ExperimentConfig config = small_config(3, 40, 17);
    config.estimator.partial = PartialMethod::none;
    // A constant demand shifter makes the supply-block instrument moment
    // matrix singular in every replication.
    config.dgp.shifters.zd_sds = VectorXd::Zero(1);

    const MonteCarloReport report = run_montecarlo(config);
    REQUIRE(report.failures == 3);
    for (const auto& res : report.results) {
        REQUIRE_FALSE(res.ok);
        REQUIRE_FALSE(res.error.empty());
    }
    REQUIRE_FALSE(std::isfinite(report.wald_coverage_a));
    REQUIRE(report.mean_estimate == Vector2d::Zero());

    const json j = mc_report_to_json(report);
    REQUIRE(j.at("failures").get<long>() == 3);
    REQUIRE_FALSE(j.contains("wald_coverage_alpha1"));
    REQUIRE_FALSE(j.contains("ar_coverage"));
    REQUIRE(j.at("results")[0].contains("error"));
    REQUIRE_FALSE(j.at("results")[0].contains("alpha1_hat"));
}

TEST_CASE("experiment config JSON round trip", "[montecarlo]") {
    ExperimentConfig config;
    config.dgp.n = 77;
    config.dgp.shifters = ShifterSpec::iid(2, 1, 0);
    config.dgp.params.alpha1 = -2.0;
    config.dgp.params.beta1 = 3.0;
    config.dgp.params.alpha2 = VectorXd::Constant(2, 0.5);
    config.dgp.params.beta2 = VectorXd::Constant(1, 1.5);
    config.estimator.kind = EstimatorConfig::Kind::cue;
    config.estimator.k_steps = 3;
    config.estimator.mode = GmmMode::limited_information;
    config.estimator.omega = OmegaKind::newey_west(4);
    config.estimator.theta_box.lower = Eigen::Vector2d(-8.0, -7.0);
    config.estimator.theta_box.upper = Eigen::Vector2d(8.0, 9.0);
    config.estimator.partial = PartialMethod::lasso;
    config.estimator.lasso_lambda = 0.3;
    config.inference.level = 0.9;
    config.inference.wald = false;
    config.inference.ar = true;
    config.inference.clr = true;
    config.inference.clr_draws = 250;
    config.replications = 12;
    config.base_seed = 987;

    const json j1 = experiment_config_to_json(config);
    const ExperimentConfig back = experiment_config_from_json(j1);
    REQUIRE(experiment_config_to_json(back).dump() == j1.dump());
    REQUIRE(back.estimator.kind == EstimatorConfig::Kind::cue);
    REQUIRE(back.estimator.mode == GmmMode::limited_information);
    REQUIRE(back.estimator.omega.family == OmegaKind::Family::newey_west);
    REQUIRE(back.estimator.omega.lags == 4);
    REQUIRE(back.estimator.partial == PartialMethod::lasso);
    REQUIRE(back.inference.level == 0.9);
    REQUIRE(back.inference.clr_draws == 250);
    REQUIRE(back.dgp.params.alpha2 == config.dgp.params.alpha2);
    REQUIRE(back.base_seed == 987);

    SECTION("grid resolutions are read but not serialized") {
        REQUIRE_FALSE(j1.at("estimator").contains("cue_grid_resolution"));
        REQUIRE_FALSE(j1.at("inference").contains("infimum_grid_resolution"));
        const EstimatorConfig est =
            estimator_config_from_json(json{{"cue_grid_resolution", 31}});
        REQUIRE(est.cue_options.grid_resolution == 31);
        const InferenceConfig inf =
            inference_config_from_json(json{{"inner_grid_resolution", 13}});
        REQUIRE(inf.options.inner_grid_resolution == 13);
    }
}

TEST_CASE("partial dgp JSON overlays the defaults", "[montecarlo]") {
    const DgpConfig config =
        dgp_config_from_json(json{{"params", json{{"alpha1", -2.0}}}});
    REQUIRE(config.params.alpha1 == -2.0);
    REQUIRE(config.params.alpha2 == VectorXd::Ones(1));
    REQUIRE(config.n == 500);
}

TEST_CASE("bad enum strings are rejected", "[montecarlo]") {
    REQUIRE_THROWS_AS(estimator_kind_from_string("newton"), ConfigError);
    REQUIRE_THROWS_AS(partial_method_from_string("ridge"), ConfigError);
    REQUIRE_THROWS_AS(omega_kind_from_json(json{{"family", "hac"}}),
                      ConfigError);
    REQUIRE_THROWS_AS(estimator_config_from_json(json{{"mode", "partial"}}),
                      ConfigError);
    REQUIRE_THROWS_AS(estimator_config_from_json(json{{"kind", "mle"}}),
                      ConfigError);
}

TEST_CASE("report JSON shape", "[montecarlo]") {
    MonteCarloReport report = run_montecarlo(small_config(2, 60, 21));
    const json j = mc_report_to_json(report);
    for (const char* key : {"replications", "failures", "true_theta",
                            "mean_estimate", "bias", "sd", "rmse",
                            "wald_coverage_alpha1", "wald_coverage_beta1",
                            "results"}) {
        REQUIRE(j.contains(key));
    }
    REQUIRE_FALSE(j.contains("ar_coverage"));
    REQUIRE_FALSE(j.contains("elapsed_seconds"));
    REQUIRE(j.at("results").size() == 2);
    const json& r0 = j.at("results")[0];
    for (const char* key : {"seed", "ok", "alpha1_hat", "beta1_hat",
                            "se_alpha1", "se_beta1", "wald_covers_alpha1",
                            "wald_covers_beta1"}) {
        REQUIRE(r0.contains(key));
    }
    REQUIRE_FALSE(r0.contains("ar_stat"));

    REQUIRE_FALSE(mc_report_to_json(report, false).contains("results"));

    report.elapsed_seconds = 1.5;
    REQUIRE(mc_report_to_json(report, false, true)
                .at("elapsed_seconds")
                .get<double>() == 1.5);
    REQUIRE_FALSE(mc_report_to_json(report, false).contains("elapsed_seconds"));
}

TEST_CASE("residualize dispatches on the method", "[montecarlo]") {
    const Dataset data = testutil::strong_dataset(30, 2, 1, 1, 1);
    REQUIRE(residualize(data, PartialMethod::none).method ==
            ResidualizedDataset::Method::none);
    REQUIRE(residualize(data, PartialMethod::ols).method ==
            ResidualizedDataset::Method::ols);
    REQUIRE(residualize(data, PartialMethod::lasso, 0.1).method ==
            ResidualizedDataset::Method::lasso);
}
