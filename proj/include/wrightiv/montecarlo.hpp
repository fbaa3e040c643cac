#pragma once
// Experiment configuration and the Monte Carlo engine.
//
// A replication draws a synthetic dataset (seed derived from the base seed
// and the replication index), residualizes it, fits the chosen estimator,
// and evaluates coverage of the true slope pair. Replications run under the
// thread pool with index-addressed writes, so reports are identical for any
// thread count. Numeric failures inside a replication are recorded, not
// fatal; configuration errors always propagate.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrightiv/common.hpp"
#include "wrightiv/gmm.hpp"
#include "wrightiv/io.hpp"
#include "wrightiv/parallel.hpp"
#include "wrightiv/partialing.hpp"
#include "wrightiv/rng.hpp"
#include "wrightiv/stats.hpp"
#include "wrightiv/structural.hpp"
#include "wrightiv/weak_id.hpp"

namespace wrightiv {

using Eigen::Vector2d;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Consistent scalar-instrument starting point: one demand shifter, one
// supply shifter, unit coefficients, no covariates.
inline StructuralParams default_dgp_params() {
    StructuralParams p;
    p.alpha2 = VectorXd::Ones(1);
    p.beta2 = VectorXd::Ones(1);
    p.alpha3 = VectorXd(0);
    p.beta3 = VectorXd(0);
    return p;
}

struct DgpConfig {
    StructuralParams params = default_dgp_params();
    ShifterSpec shifters = ShifterSpec::iid(1, 1);
    long n = 500;

    void validate() const {
        if (n < 1) throw ConfigError("dgp.n must be at least 1");
        validate_dims(params, shifters);
    }
};

enum class PartialMethod { none, ols, lasso };

inline std::string to_string(PartialMethod m) {
    switch (m) {
        case PartialMethod::none: return "none";
        case PartialMethod::ols: return "ols";
        case PartialMethod::lasso: return "lasso";
    }
    return "?";
}

inline PartialMethod partial_method_from_string(const std::string& s) {
    if (s == "none") return PartialMethod::none;
    if (s == "ols") return PartialMethod::ols;
    if (s == "lasso") return PartialMethod::lasso;
    throw ConfigError("unknown partialing method '" + s +
                      "' (expected none, ols, or lasso)");
}

struct EstimatorConfig {
    enum class Kind { iterative, cue };

    Kind kind = Kind::iterative;
    int k_steps = 2;
    GmmMode mode = GmmMode::full_information;
    OmegaKind omega;
    ThetaBox theta_box;
    PartialMethod partial = PartialMethod::ols;
    double lasso_lambda = -1.0;  // negative means the default rule
    CueOptions cue_options;

    void validate() const {
        if (k_steps < 1) throw ConfigError("estimator.k_steps must be >= 1");
        theta_box.validate();
    }
};

inline std::string to_string(EstimatorConfig::Kind k) {
    return k == EstimatorConfig::Kind::iterative ? "iterative" : "cue";
}

inline EstimatorConfig::Kind estimator_kind_from_string(const std::string& s) {
    if (s == "iterative") return EstimatorConfig::Kind::iterative;
    if (s == "cue") return EstimatorConfig::Kind::cue;
    throw ConfigError("unknown estimator kind '" + s +
                      "' (expected iterative or cue)");
}

struct InferenceConfig {
    double level = 0.95;
    bool wald = true;
    bool ar = false;
    bool clr = false;
    long clr_draws = 1000;
    WeakIdOptions options;

    void validate() const {
        if (!(level > 0.0 && level < 1.0)) {
            throw ConfigError("inference.level must lie in (0, 1)");
        }
        if (clr && clr_draws < 100) {
            throw ConfigError("inference.clr_draws must be at least 100");
        }
    }
};

struct ExperimentConfig {
    DgpConfig dgp;
    EstimatorConfig estimator;
    InferenceConfig inference;
    long replications = 100;
    std::uint64_t base_seed = 0;

    void validate() const {
        if (replications < 1) {
            throw ConfigError("replications must be at least 1");
        }
        dgp.validate();
        estimator.validate();
        inference.validate();
    }
};

// ---------------------------------------------------------------------------
// Shared estimation pipeline (used by the Monte Carlo loop and the CLI)
// ---------------------------------------------------------------------------

inline ResidualizedDataset residualize(const Dataset& data, PartialMethod method,
                                       double lasso_lambda = -1.0) {
    switch (method) {
        case PartialMethod::none: return raw_residualized(data);
        case PartialMethod::ols: return partial_out(data);
        case PartialMethod::lasso: return lasso_partial_out(data, lasso_lambda);
    }
    throw ConfigError("unknown partialing method");
}

inline GmmFit fit_residualized(const ResidualizedDataset& resid,
                               const EstimatorConfig& config) {
    if (config.kind == EstimatorConfig::Kind::cue) {
        return cue(resid, config.theta_box, config.omega, config.cue_options);
    }
    return iterative_gmm(resid, config.k_steps, config.mode, config.omega);
}

// ---------------------------------------------------------------------------
// Monte Carlo engine
// ---------------------------------------------------------------------------

struct ReplicationResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    Vector2d theta_hat = Vector2d::Zero();
    Vector2d se = Vector2d::Zero();
    bool wald_covers_a = false;
    bool wald_covers_b = false;
    double ar_stat = std::numeric_limits<double>::quiet_NaN();
    bool ar_covers = false;
    double lr_stat = std::numeric_limits<double>::quiet_NaN();
    double clr_critical = std::numeric_limits<double>::quiet_NaN();
    bool clr_covers = false;
};

struct MonteCarloReport {
    long replications = 0;
    long failures = 0;
    Vector2d true_theta = Vector2d::Zero();
    Vector2d mean_estimate = Vector2d::Zero();
    Vector2d bias = Vector2d::Zero();
    Vector2d sd = Vector2d::Zero();
    Vector2d rmse = Vector2d::Zero();
    double wald_coverage_a = std::numeric_limits<double>::quiet_NaN();
    double wald_coverage_b = std::numeric_limits<double>::quiet_NaN();
    double ar_coverage = std::numeric_limits<double>::quiet_NaN();
    double clr_coverage = std::numeric_limits<double>::quiet_NaN();
    std::vector<ReplicationResult> results;
    double elapsed_seconds = std::numeric_limits<double>::quiet_NaN();
};

// Runs one replication; NumericError failures are captured in the result.
inline ReplicationResult run_replication(const ExperimentConfig& config,
                                         long rep_index) {
    ReplicationResult res;
    res.seed = derive_seed(config.base_seed, static_cast<std::uint64_t>(rep_index));
    const Vector2d theta0(config.dgp.params.alpha1, config.dgp.params.beta1);
    try {
        const Dataset data = simulate_dataset(config.dgp.params,
                                              config.dgp.shifters, config.dgp.n,
                                              res.seed, /*threads=*/1);
        const ResidualizedDataset resid = residualize(
            data, config.estimator.partial, config.estimator.lasso_lambda);
        const GmmFit fit = fit_residualized(resid, config.estimator);
        res.theta_hat = fit.theta_hat;
        res.se = Vector2d(fit.se(0), fit.se(1));
        if (config.inference.wald) {
            const double z =
                normal_quantile(1.0 - (1.0 - config.inference.level) / 2.0);
            res.wald_covers_a =
                std::abs(res.theta_hat(0) - theta0(0)) <= z * res.se(0);
            res.wald_covers_b =
                std::abs(res.theta_hat(1) - theta0(1)) <= z * res.se(1);
        }
        if (config.inference.ar || config.inference.clr) {
            const MomentSystem ms = build_moment_system(resid);
            const CovarianceKernel kernel(ms);
            if (config.inference.ar) {
                res.ar_stat = ar_statistic(ms, kernel, theta0);
                const double crit = chi2_quantile(config.inference.level,
                                                  static_cast<double>(ms.m()));
                res.ar_covers = res.ar_stat <= crit;
            }
            if (config.inference.clr) {
                res.lr_stat = lr_statistic(ms, kernel, theta0,
                                           config.estimator.theta_box,
                                           config.inference.options);
                // The simulation seed for the conditional draws is derived
                // from the replication seed so reruns and thread counts
                // cannot change it.
                res.clr_critical = clr_critical_value(
                    ms, kernel, theta0, config.estimator.theta_box,
                    1.0 - config.inference.level, config.inference.clr_draws,
                    derive_seed(res.seed, 1), config.inference.options);
                res.clr_covers = res.lr_stat <= res.clr_critical;
            }
        }
        res.ok = true;
    } catch (const NumericError& err) {
        res.ok = false;
        res.error = err.what();
    }
    return res;
}

inline MonteCarloReport run_montecarlo(const ExperimentConfig& config,
                                       int threads = 1) {
    config.validate();
    MonteCarloReport report;
    report.replications = config.replications;
    report.true_theta =
        Vector2d(config.dgp.params.alpha1, config.dgp.params.beta1);
    report.results.resize(static_cast<std::size_t>(config.replications));
    parallel_for(config.replications, threads, [&](long rep) {
        report.results[static_cast<std::size_t>(rep)] =
            run_replication(config, rep);
    });

    long ok_count = 0;
    Vector2d sum = Vector2d::Zero();
    for (const auto& res : report.results) {
        if (!res.ok) {
            ++report.failures;
            continue;
        }
        ++ok_count;
        sum += res.theta_hat;
    }
    if (ok_count > 0) {
        report.mean_estimate = sum / static_cast<double>(ok_count);
        report.bias = report.mean_estimate - report.true_theta;
        Vector2d ss = Vector2d::Zero();
        Vector2d se2 = Vector2d::Zero();
        long wald_a = 0;
        long wald_b = 0;
        long ar_cover = 0;
        long clr_cover = 0;
        for (const auto& res : report.results) {
            if (!res.ok) continue;
            const Vector2d dev = res.theta_hat - report.mean_estimate;
            ss += dev.cwiseProduct(dev);
            const Vector2d err = res.theta_hat - report.true_theta;
            se2 += err.cwiseProduct(err);
            wald_a += res.wald_covers_a ? 1 : 0;
            wald_b += res.wald_covers_b ? 1 : 0;
            ar_cover += res.ar_covers ? 1 : 0;
            clr_cover += res.clr_covers ? 1 : 0;
        }
        const double denom_sd =
            ok_count > 1 ? static_cast<double>(ok_count - 1) : 1.0;
        report.sd = (ss / denom_sd).cwiseSqrt();
        report.rmse = (se2 / static_cast<double>(ok_count)).cwiseSqrt();
        if (config.inference.wald) {
            report.wald_coverage_a =
                static_cast<double>(wald_a) / static_cast<double>(ok_count);
            report.wald_coverage_b =
                static_cast<double>(wald_b) / static_cast<double>(ok_count);
        }
        if (config.inference.ar) {
            report.ar_coverage =
                static_cast<double>(ar_cover) / static_cast<double>(ok_count);
        }
        if (config.inference.clr) {
            report.clr_coverage =
                static_cast<double>(clr_cover) / static_cast<double>(ok_count);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON conversions for configs and reports
// ---------------------------------------------------------------------------

inline OmegaKind omega_kind_from_json(const json& j) {
    OmegaKind kind;
    if (j.contains("family")) {
        const std::string fam = j.at("family").get<std::string>();
        if (fam == "iid_centered") {
            kind.family = OmegaKind::Family::iid_centered;
        } else if (fam == "iid_uncentered") {
            kind.family = OmegaKind::Family::iid_uncentered;
        } else if (fam == "newey_west") {
            kind.family = OmegaKind::Family::newey_west;
        } else {
            throw ConfigError("unknown omega family '" + fam +
                              "' (expected iid_centered, iid_uncentered, or "
                              "newey_west)");
        }
    }
    kind.lags = detail::field_or(j, "lags", kind.lags);
    return kind;
}

inline json omega_kind_to_json(const OmegaKind& kind) {
    return json{{"family", to_string(kind.family)}, {"lags", kind.lags}};
}

inline DgpConfig dgp_config_from_json(const json& j) {
    DgpConfig config;
    const json params_j =
        j.contains("params") ? j.at("params") : json::object();
    if (j.contains("params")) {
        config.params = params_from_json(params_j, config.params);
    }
    if (j.contains("shifters")) {
        config.shifters = shifters_from_json(j.at("shifters"));
    }
    // Loadings the config leaves implicit track the declared shifter
    // dimensions (unit coefficients), so enlarging a dimension alone keeps
    // the system well-formed; explicitly given vectors are never resized.
    const auto fit_dim = [&params_j](VectorXd& v, const char* key, int dim) {
        if (!params_j.contains(key) && v.size() != dim) {
            v = VectorXd::Ones(dim);
        }
    };
    fit_dim(config.params.alpha2, "alpha2", config.shifters.dim_zd);
    fit_dim(config.params.beta2, "beta2", config.shifters.dim_zs);
    fit_dim(config.params.alpha3, "alpha3", config.shifters.dim_w);
    fit_dim(config.params.beta3, "beta3", config.shifters.dim_w);
    config.n = detail::field_or<long>(j, "n", config.n);
    return config;
}

inline json dgp_config_to_json(const DgpConfig& config) {
    return json{{"params", params_to_json(config.params)},
                {"shifters", shifters_to_json(config.shifters)},
                {"n", config.n}};
}

inline EstimatorConfig estimator_config_from_json(const json& j) {
    EstimatorConfig config;
    if (j.contains("kind")) {
        config.kind =
            estimator_kind_from_string(j.at("kind").get<std::string>());
    }
    config.k_steps = detail::field_or(j, "k_steps", config.k_steps);
    if (j.contains("mode")) {
        const std::string mode = j.at("mode").get<std::string>();
        if (mode == "full_information") {
            config.mode = GmmMode::full_information;
        } else if (mode == "limited_information") {
            config.mode = GmmMode::limited_information;
        } else {
            throw ConfigError("unknown gmm mode '" + mode +
                              "' (expected full_information or "
                              "limited_information)");
        }
    }
    if (j.contains("omega")) config.omega = omega_kind_from_json(j.at("omega"));
    if (j.contains("theta_box")) {
        config.theta_box = theta_box_from_json(j.at("theta_box"));
    }
    if (j.contains("partial")) {
        config.partial =
            partial_method_from_string(j.at("partial").get<std::string>());
    }
    config.lasso_lambda =
        detail::field_or(j, "lasso_lambda", config.lasso_lambda);
    config.cue_options.grid_resolution = detail::field_or(
        j, "cue_grid_resolution", config.cue_options.grid_resolution);
    return config;
}

inline json estimator_config_to_json(const EstimatorConfig& config) {
    return json{{"kind", to_string(config.kind)},
                {"k_steps", config.k_steps},
                {"mode", to_string(config.mode)},
                {"omega", omega_kind_to_json(config.omega)},
                {"theta_box", theta_box_to_json(config.theta_box)},
                {"partial", to_string(config.partial)},
                {"lasso_lambda", config.lasso_lambda}};
}

inline InferenceConfig inference_config_from_json(const json& j) {
    InferenceConfig config;
    config.level = detail::field_or(j, "level", config.level);
    config.wald = detail::field_or(j, "wald", config.wald);
    config.ar = detail::field_or(j, "ar", config.ar);
    config.clr = detail::field_or(j, "clr", config.clr);
    config.clr_draws = detail::field_or<long>(j, "clr_draws", config.clr_draws);
    config.options.infimum_grid_resolution =
        detail::field_or(j, "infimum_grid_resolution",
                         config.options.infimum_grid_resolution);
    config.options.inner_grid_resolution = detail::field_or(
        j, "inner_grid_resolution", config.options.inner_grid_resolution);
    return config;
}

inline json inference_config_to_json(const InferenceConfig& config) {
    return json{{"level", config.level},
                {"wald", config.wald},
                {"ar", config.ar},
                {"clr", config.clr},
                {"clr_draws", config.clr_draws}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig config;
    if (j.contains("dgp")) config.dgp = dgp_config_from_json(j.at("dgp"));
    if (j.contains("estimator")) {
        config.estimator = estimator_config_from_json(j.at("estimator"));
    }
    if (j.contains("inference")) {
        config.inference = inference_config_from_json(j.at("inference"));
    }
    config.replications =
        detail::field_or<long>(j, "replications", config.replications);
    config.base_seed =
        detail::field_or<std::uint64_t>(j, "base_seed", config.base_seed);
    return config;
}

inline json experiment_config_to_json(const ExperimentConfig& config) {
    return json{{"dgp", dgp_config_to_json(config.dgp)},
                {"estimator", estimator_config_to_json(config.estimator)},
                {"inference", inference_config_to_json(config.inference)},
                {"replications", config.replications},
                {"base_seed", config.base_seed}};
}

inline json mc_report_to_json(const MonteCarloReport& report,
                              bool include_replications = true,
                              bool include_timing = false) {
    json out{{"replications", report.replications},
             {"failures", report.failures},
             {"true_theta", {report.true_theta(0), report.true_theta(1)}},
             {"mean_estimate",
              {report.mean_estimate(0), report.mean_estimate(1)}},
             {"bias", {report.bias(0), report.bias(1)}},
             {"sd", {report.sd(0), report.sd(1)}},
             {"rmse", {report.rmse(0), report.rmse(1)}}};
    auto put_rate = [&out](const char* key, double value) {
        if (std::isfinite(value)) out[key] = value;
    };
    put_rate("wald_coverage_alpha1", report.wald_coverage_a);
    put_rate("wald_coverage_beta1", report.wald_coverage_b);
    put_rate("ar_coverage", report.ar_coverage);
    put_rate("clr_coverage", report.clr_coverage);
    if (include_timing && std::isfinite(report.elapsed_seconds)) {
        out["elapsed_seconds"] = report.elapsed_seconds;
    }
    if (include_replications) {
        json reps = json::array();
        for (const auto& res : report.results) {
            json r{{"seed", res.seed}, {"ok", res.ok}};
            if (res.ok) {
                r["alpha1_hat"] = res.theta_hat(0);
                r["beta1_hat"] = res.theta_hat(1);
                r["se_alpha1"] = res.se(0);
                r["se_beta1"] = res.se(1);
                r["wald_covers_alpha1"] = res.wald_covers_a;
                r["wald_covers_beta1"] = res.wald_covers_b;
                if (std::isfinite(res.ar_stat)) {
                    r["ar_stat"] = res.ar_stat;
                    r["ar_covers"] = res.ar_covers;
                }
                if (std::isfinite(res.lr_stat)) {
                    r["lr_stat"] = res.lr_stat;
                    r["clr_critical"] = res.clr_critical;
                    r["clr_covers"] = res.clr_covers;
                }
            } else {
                r["error"] = res.error;
            }
            reps.push_back(std::move(r));
        }
        out["results"] = std::move(reps);
    }
    return out;
}

}  // namespace wrightiv
