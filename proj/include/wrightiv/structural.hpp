#pragma once
// Log-linear demand-supply system with latent factor structure.
//
//   demand:  D(p) = alpha1 * p + U_d,  U_d = alpha2'Z_d + alpha3'W + e_d
//   supply:  S(p) = beta1  * p + U_s,  U_s = beta2'Z_s + beta3'W + e_s
//
// Market clearing D(P) = S(P) = Y gives
//   P = (U_d - U_s) / (beta1 - alpha1),   Y = alpha1 * P + U_d.
//
// The simulator adds two scalar latent factors: K1 loads on both shifter
// vectors (making Z_d and Z_s correlated without breaking exogeneity) and K2
// enters both structural shocks (correlating demand and supply shocks).

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wrightiv/common.hpp"
#include "wrightiv/parallel.hpp"
#include "wrightiv/rng.hpp"

namespace wrightiv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Structural coefficients. alpha1 <= 0 (demand slope) and beta1 >= 0 (supply
// slope) in the intended economics, but only beta1 - alpha1 > cutoff is
// enforced here so oracle fixtures can use any non-degenerate pair.
struct StructuralParams {
    double alpha1 = -1.0;      // demand price elasticity
    double beta1 = 1.0;        // supply price elasticity
    VectorXd alpha2;           // demand shifter coefficients (on Z_d)
    VectorXd beta2;            // supply shifter coefficients (on Z_s)
    VectorXd alpha3;           // covariate coefficients in demand (on W)
    VectorXd beta3;            // covariate coefficients in supply (on W)
    double sigma_d = 1.0;      // sd of the idiosyncratic demand shock
    double sigma_s = 1.0;      // sd of the idiosyncratic supply shock

    double slope_gap() const { return beta1 - alpha1; }

    void validate() const {
        if (!(std::abs(slope_gap()) >= kDegeneracyCutoff)) {
            throw DegenerateSystemError(
                "StructuralParams: |beta1 - alpha1| < 1e-10, equilibrium "
                "degenerate");
        }
        if (sigma_d < 0.0 || sigma_s < 0.0) {
            throw ConfigError("StructuralParams: sigma_d, sigma_s must be >= 0");
        }
    }
};

// Shape and factor loadings of the exogenous side of the system.
struct ShifterSpec {
    int dim_zd = 1;
    int dim_zs = 1;
    int dim_w = 0;
    bool w_has_constant = false;  // if true, W's first column is constant 1
    VectorXd k1_loadings_zd;      // loading of K1 on each Z_d component
    VectorXd k1_loadings_zs;      // loading of K1 on each Z_s component
    double k2_loading_d = 0.0;    // loading of K2 on the demand shock
    double k2_loading_s = 0.0;    // loading of K2 on the supply shock
    VectorXd zd_sds;              // idiosyncratic sd per Z_d component
    VectorXd zs_sds;              // idiosyncratic sd per Z_s component
    VectorXd w_sds;               // idiosyncratic sd per W component

    void validate() const {
        if (dim_zd < 0 || dim_zs < 0 || dim_w < 0) {
            throw ConfigError("ShifterSpec: dimensions must be >= 0");
        }
        if (w_has_constant && dim_w < 1) {
            throw ConfigError(
                "ShifterSpec: w_has_constant requires dim_w >= 1");
        }
        auto check_len = [](const VectorXd& v, int len, const char* name) {
            if (v.size() != len) {
                throw DimensionError(std::string("ShifterSpec: ") + name +
                                     " has wrong length");
            }
        };
        check_len(k1_loadings_zd, dim_zd, "k1_loadings_zd");
        check_len(k1_loadings_zs, dim_zs, "k1_loadings_zs");
        check_len(zd_sds, dim_zd, "zd_sds");
        check_len(zs_sds, dim_zs, "zs_sds");
        check_len(w_sds, dim_w, "w_sds");
        if ((zd_sds.size() && zd_sds.minCoeff() < 0.0) ||
            (zs_sds.size() && zs_sds.minCoeff() < 0.0) ||
            (w_sds.size() && w_sds.minCoeff() < 0.0)) {
            throw ConfigError("ShifterSpec: component sds must be >= 0");
        }
    }

    // Convenience constructor: iid standard-normal shifters of the given
    // dimensions, K1/K2 switched off.
    static ShifterSpec iid(int dzd, int dzs, int dw = 0,
                           bool w_constant = false) {
        ShifterSpec s;
        s.dim_zd = dzd;
        s.dim_zs = dzs;
        s.dim_w = dw;
        s.w_has_constant = w_constant;
        s.k1_loadings_zd = VectorXd::Zero(dzd);
        s.k1_loadings_zs = VectorXd::Zero(dzs);
        s.zd_sds = VectorXd::Ones(dzd);
        s.zs_sds = VectorXd::Ones(dzs);
        s.w_sds = VectorXd::Ones(dw);
        return s;
    }
};

inline void validate_dims(const StructuralParams& p, const ShifterSpec& s) {
    p.validate();
    s.validate();
    if (p.alpha2.size() != s.dim_zd || p.beta2.size() != s.dim_zs ||
        p.alpha3.size() != s.dim_w || p.beta3.size() != s.dim_w) {
        throw DimensionError(
            "StructuralParams/ShifterSpec: coefficient lengths do not match "
            "shifter dimensions");
    }
}

struct MarketObservation {
    double p = 0.0;  // log equilibrium price
    double y = 0.0;  // log equilibrium quantity
    VectorXd zd;
    VectorXd zs;
    VectorXd w;
};

struct Dataset {
    enum class Provenance { synthetic, ingested };

    std::vector<MarketObservation> observations;
    int dim_zd = 0;
    int dim_zs = 0;
    int dim_w = 0;
    std::uint64_t seed = 0;
    Provenance provenance = Provenance::synthetic;

    long n() const { return static_cast<long>(observations.size()); }

    VectorXd p_col() const {
        VectorXd v(n());
        for (long i = 0; i < n(); ++i) v(i) = observations[i].p;
        return v;
    }
    VectorXd y_col() const {
        VectorXd v(n());
        for (long i = 0; i < n(); ++i) v(i) = observations[i].y;
        return v;
    }
    MatrixXd zd_matrix() const {
        MatrixXd m(n(), dim_zd);
        for (long i = 0; i < n(); ++i) m.row(i) = observations[i].zd;
        return m;
    }
    MatrixXd zs_matrix() const {
        MatrixXd m(n(), dim_zs);
        for (long i = 0; i < n(); ++i) m.row(i) = observations[i].zs;
        return m;
    }
    MatrixXd w_matrix() const {
        MatrixXd m(n(), dim_w);
        for (long i = 0; i < n(); ++i) m.row(i) = observations[i].w;
        return m;
    }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline double evaluate_demand(const StructuralParams& params, double p,
                              double u_d) {
    return params.alpha1 * p + u_d;
}

inline double evaluate_supply(const StructuralParams& params, double p,
                              double u_s) {
    return params.beta1 * p + u_s;
}

struct Equilibrium {
    double p = 0.0;
    double y = 0.0;
};

// Unique market-clearing point of the linear system.
inline Equilibrium solve_equilibrium(const StructuralParams& params,
                                     double u_d, double u_s) {
    const double gap = params.slope_gap();
    if (!(std::abs(gap) >= kDegeneracyCutoff)) {
        throw DegenerateSystemError(
            "solve_equilibrium: |beta1 - alpha1| < 1e-10");
    }
    Equilibrium eq;
    eq.p = (u_d - u_s) / gap;
    eq.y = params.alpha1 * eq.p + u_d;
    return eq;
}

// Draws n markets. Every observation i consumes its own RNG substream
// (seed, stream = i) with a fixed in-stream draw order:
//   K1, K2, Z_d idiosyncratics, Z_s idiosyncratics, W idiosyncratics
//   (skipping the constant column), e_d, e_s.
// Hence parallel and serial simulation produce identical datasets.
inline Dataset simulate_dataset(const StructuralParams& params,
                                const ShifterSpec& spec, long n,
                                std::uint64_t seed, int threads = 1) {
    validate_dims(params, spec);
    if (n < 1) throw ConfigError("simulate_dataset: n must be >= 1");

    Dataset data;
    data.observations.resize(static_cast<std::size_t>(n));
    data.dim_zd = spec.dim_zd;
    data.dim_zs = spec.dim_zs;
    data.dim_w = spec.dim_w;
    data.seed = seed;
    data.provenance = Dataset::Provenance::synthetic;

    parallel_for(n, threads, [&](std::int64_t i) {
        SubstreamRng rng(seed, static_cast<std::uint64_t>(i));
        const double k1 = rng.normal();
        const double k2 = rng.normal();

        MarketObservation obs;
        obs.zd = VectorXd(spec.dim_zd);
        for (int j = 0; j < spec.dim_zd; ++j) {
            obs.zd(j) = spec.k1_loadings_zd(j) * k1 +
                        spec.zd_sds(j) * rng.normal();
        }
        obs.zs = VectorXd(spec.dim_zs);
        for (int j = 0; j < spec.dim_zs; ++j) {
            obs.zs(j) = spec.k1_loadings_zs(j) * k1 +
                        spec.zs_sds(j) * rng.normal();
        }
        obs.w = VectorXd(spec.dim_w);
        for (int j = 0; j < spec.dim_w; ++j) {
            if (j == 0 && spec.w_has_constant) {
                obs.w(j) = 1.0;
            } else {
                obs.w(j) = spec.w_sds(j) * rng.normal();
            }
        }

        const double u_d = params.alpha2.dot(obs.zd) +
                           params.alpha3.dot(obs.w) +
                           spec.k2_loading_d * k2 + params.sigma_d * rng.normal();
        const double u_s = params.beta2.dot(obs.zs) +
                           params.beta3.dot(obs.w) +
                           spec.k2_loading_s * k2 + params.sigma_s * rng.normal();

        const Equilibrium eq = solve_equilibrium(params, u_d, u_s);
        obs.p = eq.p;
        obs.y = eq.y;
        data.observations[static_cast<std::size_t>(i)] = std::move(obs);
    });
    return data;
}

}  // namespace wrightiv
