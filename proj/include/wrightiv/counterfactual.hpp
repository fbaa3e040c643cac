#pragma once
// Tariff counterfactual on the log-linear system. A tariff tau shifts supply
// to S*(p) = beta1 (p - tau) + U_s, so the new equilibrium moves by
//   dP = c * tau,  dY = alpha1 * c * tau,  c = beta1 / (beta1 - alpha1).
//
// Welfare accounting relative to base revenue Rev = exp(P) * exp(Y):
//   consumer surplus change  cs  = -c tau - (alpha1 c^2 / 2) tau^2
//   tariff revenue           rev =  tau + c (1 + alpha1) tau^2
//                                   + c^3 alpha1^2 tau^3
//   welfare_sum = cs + rev, rising at tau = 0+ iff c < 1.

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "wrightiv/common.hpp"
#include "wrightiv/structural.hpp"

namespace wrightiv {

// Pass-through of the tariff into the equilibrium price.
inline double pass_through(double alpha1, double beta1) {
    const double gap = beta1 - alpha1;
    if (!(gap >= kDegeneracyCutoff)) {
        throw DegenerateSystemError(
            "pass_through: beta1 - alpha1 must exceed 1e-10");
    }
    return beta1 / gap;
}

struct TariffScenario {
    double tau = 0.0;
    double alpha1 = -1.0;      // demand elasticity, <= 0
    double beta1 = 1.0;        // supply elasticity, >= 0
    double baseline_p = 0.0;   // log price at tau = 0
    double baseline_y = 0.0;   // log quantity at tau = 0

    void validate() const {
        if (!(tau >= 0.0 && tau < 1.0)) {
            throw ConfigError("TariffScenario: tau must lie in [0, 1)");
        }
        if (!(alpha1 <= 0.0)) {
            throw ConfigError("TariffScenario: alpha1 must be <= 0");
        }
        if (!(beta1 >= 0.0)) {
            throw ConfigError("TariffScenario: beta1 must be >= 0");
        }
        if (!(beta1 - alpha1 >= kDegeneracyCutoff)) {
            throw DegenerateSystemError(
                "TariffScenario: beta1 - alpha1 must exceed 1e-10");
        }
    }
};

struct CounterfactualOutcome {
    double tau = 0.0;
    double pass_through_c = 0.0;
    double delta_p = 0.0;          // log price change
    double delta_y = 0.0;          // log quantity change
    double p_star = 0.0;           // counterfactual log price
    double y_star = 0.0;           // counterfactual log quantity
    double cs_change_ratio = 0.0;  // consumer surplus change / base revenue
    double revenue_ratio = 0.0;    // tariff revenue / base revenue
    double welfare_sum = 0.0;      // cs_change_ratio + revenue_ratio
};

// Evaluates the counterfactual equilibrium and the welfare polynomials.
inline CounterfactualOutcome apply_tariff(const TariffScenario& scenario,
                                          bool include_cubic_revenue = true) {
    scenario.validate();
    const double tau = scenario.tau;
    const double a1 = scenario.alpha1;
    const double c = pass_through(a1, scenario.beta1);

    CounterfactualOutcome out;
    out.tau = tau;
    out.pass_through_c = c;
    out.delta_p = c * tau;
    out.delta_y = a1 * out.delta_p;
    out.p_star = scenario.baseline_p + out.delta_p;
    out.y_star = scenario.baseline_y + out.delta_y;
    out.cs_change_ratio = -c * tau - 0.5 * a1 * c * c * tau * tau;
    out.revenue_ratio = tau + c * (1.0 + a1) * tau * tau;
    if (include_cubic_revenue) {
        out.revenue_ratio += c * c * c * a1 * a1 * tau * tau * tau;
    }
    out.welfare_sum = out.cs_change_ratio + out.revenue_ratio;
    return out;
}

// Trapezoid consumer-surplus change in level quantities Q = exp(Y),
// Pr = exp(P), with the log changes applied multiplicatively:
//   dCS = (Q + Q*) / 2 * (Pr - Pr*),  Q* = Q (1 + dY),  Pr* = Pr (1 + dP),
// reported as a ratio to base revenue Pr * Q. Algebraically equal to
// -(1 + dY/2) dP and hence to the quadratic polynomial above.
inline double consumer_surplus_change_exact(const TariffScenario& scenario) {
    scenario.validate();
    const double c = pass_through(scenario.alpha1, scenario.beta1);
    const double dp = c * scenario.tau;
    const double dy = scenario.alpha1 * dp;
    const double q = std::exp(scenario.baseline_y);
    const double pr = std::exp(scenario.baseline_p);
    const double q_star = q * (1.0 + dy);
    const double pr_star = pr * (1.0 + dp);
    const double dcs = 0.5 * (q + q_star) * (pr - pr_star);
    return dcs / (pr * q);
}

struct WelfareCurve {
    VectorXd tau_grid;
    VectorXd cs_ratio;
    VectorXd revenue_ratio;
    VectorXd welfare_sum;
    long argmax_index = 0;
    double argmax_tau = 0.0;
    double argmax_welfare = 0.0;
    // Stationary point of the quadratic truncation of welfare_sum, reported
    // when it falls inside the grid range (cross-check for the argmax).
    std::optional<double> quadratic_stationary_tau;
};

// Stationary point of (1-c) tau + (c(1+alpha1) - alpha1 c^2/2) tau^2.
inline std::optional<double> quadratic_welfare_stationary_point(
    double alpha1, double beta1) {
    const double c = pass_through(alpha1, beta1);
    const double denom = alpha1 * c * c - 2.0 * c * (1.0 + alpha1);
    if (denom == 0.0) return std::nullopt;
    return (1.0 - c) / denom;
}

// Scans welfare_sum over the tariff grid (default 0..0.5 in steps of 1e-3);
// ties at the maximum resolve to the smallest tau. alpha1 = 0 is rejected as
// pathological: the welfare trade-off degenerates when demand has no price
// response.
inline WelfareCurve optimal_tariff(double alpha1, double beta1,
                                   const VectorXd& tau_grid,
                                   bool include_cubic_revenue = true) {
    if (!(alpha1 < 0.0)) {
        throw ConfigError("optimal_tariff: alpha1 must be strictly negative");
    }
    if (tau_grid.size() < 1) {
        throw ConfigError("optimal_tariff: empty tariff grid");
    }
    for (Eigen::Index i = 0; i < tau_grid.size(); ++i) {
        if (!(tau_grid(i) >= 0.0 && tau_grid(i) < 1.0)) {
            throw ConfigError("optimal_tariff: grid values must lie in [0, 1)");
        }
        if (i > 0 && !(tau_grid(i) > tau_grid(i - 1))) {
            throw ConfigError("optimal_tariff: grid must be strictly increasing");
        }
    }

    WelfareCurve curve;
    curve.tau_grid = tau_grid;
    curve.cs_ratio = VectorXd(tau_grid.size());
    curve.revenue_ratio = VectorXd(tau_grid.size());
    curve.welfare_sum = VectorXd(tau_grid.size());
    for (Eigen::Index i = 0; i < tau_grid.size(); ++i) {
        TariffScenario s;
        s.tau = tau_grid(i);
        s.alpha1 = alpha1;
        s.beta1 = beta1;
        const CounterfactualOutcome out =
            apply_tariff(s, include_cubic_revenue);
        curve.cs_ratio(i) = out.cs_change_ratio;
        curve.revenue_ratio(i) = out.revenue_ratio;
        curve.welfare_sum(i) = out.welfare_sum;
        if (curve.welfare_sum(i) > curve.welfare_sum(curve.argmax_index)) {
            curve.argmax_index = i;
        }
    }
    curve.argmax_tau = tau_grid(curve.argmax_index);
    curve.argmax_welfare = curve.welfare_sum(curve.argmax_index);

    const auto stationary = quadratic_welfare_stationary_point(alpha1, beta1);
    if (stationary && *stationary >= tau_grid(0) &&
        *stationary <= tau_grid(tau_grid.size() - 1)) {
        curve.quadratic_stationary_tau = stationary;
    }
    return curve;
}

inline VectorXd default_tariff_grid(double tau_max = 0.5, double step = 1e-3) {
    if (!(step > 0.0) || !(tau_max >= 0.0 && tau_max < 1.0)) {
        throw ConfigError("default_tariff_grid: invalid grid parameters");
    }
    const long count = static_cast<long>(std::floor(tau_max / step + 0.5)) + 1;
    VectorXd grid(count);
    for (long i = 0; i < count; ++i) grid(i) = step * static_cast<double>(i);
    return grid;
}

}  // namespace wrightiv
