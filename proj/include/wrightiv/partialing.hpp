#pragma once
// Partialing-out of exogenous columns before moment construction.
//
// Two residualized blocks are produced:
//   block 1 (demand):  Y, P, Z_s residualized on (W, Z_d)
//   block 2 (supply):  Y, P, Z_d residualized on (W, Z_s)
//
// The linear projections use a minimum-norm pseudoinverse solve so collinear
// control sets degrade gracefully. A LASSO variant replaces the projections
// with coordinate-descent fits for high-dimensional controls.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "wrightiv/common.hpp"
#include "wrightiv/linalg.hpp"
#include "wrightiv/structural.hpp"

namespace wrightiv {

struct LinearProjection {
    VectorXd coefficients;                     // one per regressor column
    std::vector<std::string> regressor_labels; // parallel to coefficients
    bool rank_deficient = false;

    VectorXd fitted(const MatrixXd& m) const {
        if (m.cols() != coefficients.size()) {
            throw DimensionError("LinearProjection: column count mismatch");
        }
        if (m.cols() == 0) return VectorXd::Zero(m.rows());
        return m * coefficients;
    }
    VectorXd residual(const VectorXd& v, const MatrixXd& m) const {
        return v - fitted(m);
    }
};

// Best linear predictor of v given columns of m: solves the normal equations
// through the SVD pseudoinverse (singular values below 1e-12 * sigma_max
// dropped; minimum-norm coefficients under rank deficiency).
inline LinearProjection best_linear_predictor(
    const VectorXd& v, const MatrixXd& m,
    std::vector<std::string> labels = {}) {
    if (v.size() == 0) {
        throw DimensionError("best_linear_predictor: empty input");
    }
    if (m.rows() != v.size()) {
        throw DimensionError("best_linear_predictor: row count mismatch");
    }
    if (!labels.empty() &&
        static_cast<Eigen::Index>(labels.size()) != m.cols()) {
        throw DimensionError("best_linear_predictor: label count mismatch");
    }
    LinearProjection proj;
    auto sol = min_norm_least_squares(m, v);
    proj.coefficients = std::move(sol.coefficients);
    proj.rank_deficient = sol.rank_deficient;
    proj.regressor_labels = std::move(labels);
    return proj;
}

// ---------------------------------------------------------------------------
// LASSO coordinate descent
// ---------------------------------------------------------------------------

struct LassoOptions {
    long max_sweeps = 10000;
    double tol = 1e-8;       // max absolute coefficient change per sweep
    // When non-null, receives the penalized objective after every sweep
    // (must be non-increasing).
    std::vector<double>* objective_trace = nullptr;
};

// Non-convergence error carrying the last iterate.
struct LassoConvergenceError : ConvergenceError {
    LassoConvergenceError(const std::string& what, LinearProjection iterate)
        : ConvergenceError(what), last_iterate(std::move(iterate)) {}
    LinearProjection last_iterate;
};

// Default penalty: lambda = 1.1 * sigma_hat * sqrt(2 log(max(p, n)) / n),
// with the pilot sigma_hat taken as the sample sd of the response.
inline double default_lasso_lambda(const VectorXd& v, Eigen::Index p) {
    const auto n = v.size();
    if (n < 2) throw DimensionError("default_lasso_lambda: need n >= 2");
    const double mean = v.mean();
    const double sigma_hat =
        std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n));
    const double pn = static_cast<double>(std::max<Eigen::Index>(p, n));
    return 1.1 * sigma_hat *
           std::sqrt(2.0 * std::log(pn) / static_cast<double>(n));
}

// Minimizes (1/2n)||v - m b||^2 + lambda * sum_j penalty_j |b_j| by cyclic
// coordinate descent with soft-thresholding. Non-constant columns are
// standardized internally to unit sample sd; constant columns act as an
// unpenalized intercept. Coefficients are reported on the original scale.
inline LinearProjection lasso_fit(const VectorXd& v, const MatrixXd& m,
                                  double lambda,
                                  std::vector<std::string> labels = {},
                                  const LassoOptions& options = {}) {
    const auto n = v.size();
    const auto p = m.cols();
    if (n == 0) throw DimensionError("lasso_fit: empty input");
    if (m.rows() != n) throw DimensionError("lasso_fit: row count mismatch");
    if (lambda < 0.0) throw ConfigError("lasso_fit: lambda must be >= 0");
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != p) {
        throw DimensionError("lasso_fit: label count mismatch");
    }

    LinearProjection proj;
    proj.regressor_labels = std::move(labels);
    if (p == 0) {
        proj.coefficients = VectorXd(0);
        return proj;
    }

    // Internal standardization: scale each non-constant column to unit
    // sample sd (1/n convention); constant columns keep scale 1 and carry no
    // penalty, realizing the unpenalized intercept.
    const double dn = static_cast<double>(n);
    MatrixXd x = m;
    VectorXd scale = VectorXd::Ones(p);
    VectorXd penalized = VectorXd::Ones(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double mu = x.col(j).mean();
        const double sd =
            std::sqrt((x.col(j).array() - mu).square().sum() / dn);
        if (sd < 1e-12) {
            penalized(j) = 0.0;  // intercept-like column
        } else {
            scale(j) = sd;
            x.col(j) /= sd;
        }
    }
    VectorXd col_sq = x.colwise().squaredNorm() / dn;  // x_j'x_j / n

    VectorXd b = VectorXd::Zero(p);
    VectorXd resid = v;  // v - x b
    auto objective = [&]() {
        double pen = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            pen += penalized(j) * std::fabs(b(j));
        }
        return resid.squaredNorm() / (2.0 * dn) + lambda * pen;
    };

    bool converged = false;
    for (long sweep = 0; sweep < options.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (col_sq(j) <= 0.0) continue;  // all-zero column stays at 0
            const double rho = x.col(j).dot(resid) / dn + col_sq(j) * b(j);
            const double threshold = lambda * penalized(j);
            double bj_new = 0.0;
            if (rho > threshold) {
                bj_new = (rho - threshold) / col_sq(j);
            } else if (rho < -threshold) {
                bj_new = (rho + threshold) / col_sq(j);
            }
            const double delta = bj_new - b(j);
            if (delta != 0.0) {
                resid -= delta * x.col(j);
                b(j) = bj_new;
                max_change = std::max(max_change, std::fabs(delta));
            }
        }
        if (options.objective_trace) {
            options.objective_trace->push_back(objective());
        }
        if (max_change < options.tol) {
            converged = true;
            break;
        }
    }

    proj.coefficients = b.cwiseQuotient(scale);
    proj.rank_deficient = false;
    if (!converged) {
        throw LassoConvergenceError(
            "lasso_fit: coordinate descent did not converge within " +
                std::to_string(options.max_sweeps) + " sweeps",
            std::move(proj));
    }
    return proj;
}

// ---------------------------------------------------------------------------
// Residualized dataset
// ---------------------------------------------------------------------------

struct ResidualizedDataset {
    enum class Method { none, ols, lasso };

    VectorXd y1, p1;  // demand block: residualized on (W, Z_d)
    MatrixXd zs1;
    VectorXd y2, p2;  // supply block: residualized on (W, Z_s)
    MatrixXd zd2;
    Method method = Method::ols;

    long n() const { return static_cast<long>(y1.size()); }

    void validate() const {
        const auto nn = y1.size();
        if (p1.size() != nn || y2.size() != nn || p2.size() != nn ||
            zs1.rows() != nn || zd2.rows() != nn) {
            throw DimensionError("ResidualizedDataset: ragged block sizes");
        }
    }
};

namespace detail {

inline std::vector<std::string> control_labels(int dim_w, int dim_z,
                                               const char* z_prefix) {
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(dim_w + dim_z));
    for (int j = 0; j < dim_w; ++j) labels.push_back("W" + std::to_string(j + 1));
    for (int j = 0; j < dim_z; ++j) {
        labels.push_back(z_prefix + std::to_string(j + 1));
    }
    return labels;
}

inline MatrixXd hstack(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd m(a.rows(), a.cols() + b.cols());
    m << a, b;
    return m;
}

}  // namespace detail

// Passes the raw columns through untouched (no controls removed). Used by
// the plain-IV path where (Z_d, Z_s, W) are already orthogonal to the shocks.
inline ResidualizedDataset raw_residualized(const Dataset& data) {
    if (data.n() < 1) throw DimensionError("raw_residualized: empty dataset");
    ResidualizedDataset out;
    out.y1 = out.y2 = data.y_col();
    out.p1 = out.p2 = data.p_col();
    out.zs1 = data.zs_matrix();
    out.zd2 = data.zd_matrix();
    out.method = ResidualizedDataset::Method::none;
    return out;
}

// OLS partialing-out. With an empty control set a block's residuals equal
// the raw columns.
inline ResidualizedDataset partial_out(const Dataset& data) {
    if (data.n() < 2) throw DimensionError("partial_out: need n >= 2");
    const VectorXd y = data.y_col();
    const VectorXd p = data.p_col();
    const MatrixXd zd = data.zd_matrix();
    const MatrixXd zs = data.zs_matrix();
    const MatrixXd w = data.w_matrix();

    const MatrixXd m1 = detail::hstack(w, zd);  // controls for the demand block
    const MatrixXd m2 = detail::hstack(w, zs);  // controls for the supply block
    const auto labels1 = detail::control_labels(data.dim_w, data.dim_zd, "ZD");
    const auto labels2 = detail::control_labels(data.dim_w, data.dim_zs, "ZS");

    auto resid = [](const VectorXd& v, const MatrixXd& m,
                    const std::vector<std::string>& labels) {
        return best_linear_predictor(v, m, labels).residual(v, m);
    };

    ResidualizedDataset out;
    out.y1 = resid(y, m1, labels1);
    out.p1 = resid(p, m1, labels1);
    out.zs1 = MatrixXd(data.n(), data.dim_zs);
    for (int j = 0; j < data.dim_zs; ++j) {
        out.zs1.col(j) = resid(zs.col(j), m1, labels1);
    }
    out.y2 = resid(y, m2, labels2);
    out.p2 = resid(p, m2, labels2);
    out.zd2 = MatrixXd(data.n(), data.dim_zd);
    for (int j = 0; j < data.dim_zd; ++j) {
        out.zd2.col(j) = resid(zd.col(j), m2, labels2);
    }
    out.method = ResidualizedDataset::Method::ols;
    return out;
}

// LASSO partialing-out: identical block structure, with each projection
// replaced by a coordinate-descent fit and residuals taken at the fitted
// coefficients. lambda < 0 selects the default penalty rule per response.
inline ResidualizedDataset lasso_partial_out(const Dataset& data,
                                             double lambda = -1.0,
                                             const LassoOptions& options = {}) {
    if (data.n() < 2) throw DimensionError("lasso_partial_out: need n >= 2");
    const VectorXd y = data.y_col();
    const VectorXd p = data.p_col();
    const MatrixXd zd = data.zd_matrix();
    const MatrixXd zs = data.zs_matrix();
    const MatrixXd w = data.w_matrix();

    const MatrixXd m1 = detail::hstack(w, zd);
    const MatrixXd m2 = detail::hstack(w, zs);
    const auto labels1 = detail::control_labels(data.dim_w, data.dim_zd, "ZD");
    const auto labels2 = detail::control_labels(data.dim_w, data.dim_zs, "ZS");

    auto resid = [&](const VectorXd& v, const MatrixXd& m,
                     const std::vector<std::string>& labels) {
        const double lam =
            lambda >= 0.0 ? lambda : default_lasso_lambda(v, m.cols());
        return lasso_fit(v, m, lam, labels, options).residual(v, m);
    };

    ResidualizedDataset out;
    out.y1 = resid(y, m1, labels1);
    out.p1 = resid(p, m1, labels1);
    out.zs1 = MatrixXd(data.n(), data.dim_zs);
    for (int j = 0; j < data.dim_zs; ++j) {
        out.zs1.col(j) = resid(zs.col(j), m1, labels1);
    }
    out.y2 = resid(y, m2, labels2);
    out.p2 = resid(p, m2, labels2);
    out.zd2 = MatrixXd(data.n(), data.dim_zd);
    for (int j = 0; j < data.dim_zd; ++j) {
        out.zd2.col(j) = resid(zd.col(j), m2, labels2);
    }
    out.method = ResidualizedDataset::Method::lasso;
    return out;
}

}  // namespace wrightiv
