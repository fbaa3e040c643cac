#pragma once
// Scalar distribution functions implemented in-repo: regularized incomplete
// gamma (series + continued fraction), chi-square CDF/quantile via Newton
// inversion, and the standard normal CDF/quantile.

#include <cmath>
#include <limits>
#include <stdexcept>

#include "wrightiv/common.hpp"

namespace wrightiv {

namespace detail {

// Regularized lower incomplete gamma P(a, x).
// Series expansion for x < a + 1, Lentz continued fraction otherwise.
inline double regularized_gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0 || !std::isfinite(a) || !std::isfinite(x)) {
        throw NumericError("regularized_gamma_p: invalid arguments");
    }
    if (x == 0.0) return 0.0;
    const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) = x^a e^-x / Gamma(a) * sum_k x^k / (a(a+1)...(a+k)).
        double term = 1.0 / a;
        double sum = term;
        for (int k = 1; k < 10000; ++k) {
            term *= x / (a + k);
            sum += term;
            if (term < sum * 1e-17) break;
        }
        return std::exp(log_prefactor) * sum;
    }
    // Q(a,x) via modified Lentz continued fraction, then P = 1 - Q.
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-17) break;
    }
    return 1.0 - std::exp(log_prefactor) * h;
}

}  // namespace detail

inline double chi2_cdf(double x, int df) {
    if (df < 1) throw NumericError("chi2_cdf: df must be >= 1");
    if (x <= 0.0) return 0.0;
    return detail::regularized_gamma_p(0.5 * df, 0.5 * x);
}

inline double chi2_pdf(double x, int df) {
    if (df < 1) throw NumericError("chi2_pdf: df must be >= 1");
    if (x <= 0.0) return 0.0;
    const double half = 0.5 * df;
    return std::exp((half - 1.0) * std::log(x) - 0.5 * x -
                    half * std::log(2.0) - std::lgamma(half));
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / 1.4142135623730950488016887242097);
}

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / 2.5066282746310005024157652848110;
}

// Phi^{-1}(p) by safeguarded Newton on the CDF.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw NumericError("normal_quantile: p must lie in (0, 1)");
    }
    double lo = -40.0, hi = 40.0;
    double x = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double f = normal_cdf(x) - p;
        if (f > 0.0) {
            hi = x;
        } else {
            lo = x;
        }
        const double deriv = normal_pdf(x);
        double next = (deriv > 0.0) ? x - f / deriv
                                    : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - x) < 1e-15 * (1.0 + std::fabs(x))) {
            return next;
        }
        x = next;
    }
    return x;
}

// Chi-square quantile: Newton inversion of the regularized incomplete gamma
// CDF with a bisection safeguard, started from the Wilson-Hilferty
// approximation.
inline double chi2_quantile(double p, int df) {
    if (df < 1) throw NumericError("chi2_quantile: df must be >= 1");
    if (!(p > 0.0 && p < 1.0)) {
        throw NumericError("chi2_quantile: p must lie in (0, 1)");
    }
    const double z = normal_quantile(p);
    const double k = static_cast<double>(df);
    const double wh = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
    double x = k * wh * wh * wh;
    if (!(x > 0.0)) x = 0.5;

    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
        const double f = chi2_cdf(x, df) - p;
        if (f > 0.0) {
            hi = x;
        } else {
            lo = x;
        }
        const double deriv = chi2_pdf(x, df);
        double next;
        if (deriv > 0.0) {
            next = x - f / deriv;
        } else {
            next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * (lo + 1.0);
        }
        if (!(next > lo && (!std::isfinite(hi) || next < hi))) {
            next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * (lo + 1.0);
        }
        if (std::fabs(next - x) < 1e-14 * (1.0 + std::fabs(x))) {
            return next;
        }
        x = next;
    }
    return x;
}

}  // namespace wrightiv
