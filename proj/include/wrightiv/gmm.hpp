#pragma once
// GMM estimation of theta = (alpha1, beta1) from the residualized blocks.
//
// Per-observation score, stacking demand instruments over supply instruments:
//   g(X, theta) = [ (y1 - a*p1) * zs1 ;  (y2 - b*p2) * zd2 ]
//
// The score is affine in theta:
//   g(X, theta) = g(X, 0) + G(X) * theta,
//   G(X) = blockdiag(-zs1 * p1, -zd2 * p2)   (m x 2)
//
// so any fixed-weighting GMM step has the closed form
//   theta_hat = M_hat * gbar(0),  M_hat = -(G'AG)^{-1} G'A.
//
// Algorithm (iterative GMM): step 1 weights by the inverse block instrument
// second-moment matrix (equivalent to per-equation 2SLS); steps 2..K weight
// by the inverse of the score covariance at the previous step. CUE minimizes
// gbar(theta)' Omega(theta)^{-1} gbar(theta) over a box by lattice + compass
// search.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wrightiv/common.hpp"
#include "wrightiv/linalg.hpp"
#include "wrightiv/optimize.hpp"
#include "wrightiv/partialing.hpp"

namespace wrightiv {

// ---------------------------------------------------------------------------
// Moment system
// ---------------------------------------------------------------------------

class MomentSystem {
  public:
    // build_moment_system
    static MomentSystem build(const ResidualizedDataset& data) {
        data.validate();
        MomentSystem ms;
        ms.n_ = data.n();
        if (ms.n_ < 2) {
            throw DimensionError("build_moment_system: need n >= 2");
        }
        ms.m1_ = static_cast<int>(data.zs1.cols());
        ms.m2_ = static_cast<int>(data.zd2.cols());
        if (ms.m1_ < 1 || ms.m2_ < 1) {
            throw DimensionError(
                "build_moment_system: each block needs >= 1 instrument");
        }
        const int m = ms.m1_ + ms.m2_;

        // Per-observation scores at theta = 0 and the two derivative columns.
        ms.u_ = MatrixXd::Zero(ms.n_, m);
        ms.v1_ = MatrixXd::Zero(ms.n_, m);
        ms.v2_ = MatrixXd::Zero(ms.n_, m);
        ms.u_.leftCols(ms.m1_) = data.zs1.array().colwise() * data.y1.array();
        ms.u_.rightCols(ms.m2_) = data.zd2.array().colwise() * data.y2.array();
        ms.v1_.leftCols(ms.m1_) =
            -(data.zs1.array().colwise() * data.p1.array());
        ms.v2_.rightCols(ms.m2_) =
            -(data.zd2.array().colwise() * data.p2.array());

        ms.g0_ = ms.u_.colwise().mean().transpose();
        ms.jacobian_ = MatrixXd::Zero(m, 2);
        ms.jacobian_.col(0) = ms.v1_.colwise().mean().transpose();
        ms.jacobian_.col(1) = ms.v2_.colwise().mean().transpose();
        return ms;
    }

    long n() const { return n_; }
    int m() const { return m1_ + m2_; }
    int m_demand() const { return m1_; }
    int m_supply() const { return m2_; }

    const VectorXd& g0_bar() const { return g0_; }
    const MatrixXd& jacobian() const { return jacobian_; }

    // gbar(theta) through the affine identity.
    VectorXd gbar(const Eigen::Vector2d& theta) const {
        return g0_ + jacobian_ * theta;
    }

    // Per-observation score g(X_i, theta), one row per observation.
    MatrixXd score_matrix(const Eigen::Vector2d& theta) const {
        return u_ + theta(0) * v1_ + theta(1) * v2_;
    }
    VectorXd score_row(long i, const Eigen::Vector2d& theta) const {
        return (u_.row(i) + theta(0) * v1_.row(i) + theta(1) * v2_.row(i))
            .transpose();
    }

    // Score components for kernel precomputation: g_i(theta) =
    // score_at_zero + a * dscore_da + b * dscore_db, row-wise.
    const MatrixXd& score_at_zero() const { return u_; }
    const MatrixXd& dscore_da() const { return v1_; }
    const MatrixXd& dscore_db() const { return v2_; }

  private:
    long n_ = 0;
    int m1_ = 0, m2_ = 0;
    VectorXd g0_;
    MatrixXd jacobian_;
    MatrixXd u_, v1_, v2_;
};

inline MomentSystem build_moment_system(const ResidualizedDataset& data) {
    return MomentSystem::build(data);
}

// ---------------------------------------------------------------------------
// Weighting matrices
// ---------------------------------------------------------------------------

struct WeightingMatrix {
    enum class Kind { identity, block_instrument_moments, inverse_omega };

    MatrixXd matrix;
    Kind kind = Kind::identity;

    void validate() const {
        if (!is_symmetric(matrix)) {
            throw NumericError("WeightingMatrix: matrix must be symmetric");
        }
        const auto [ev_min, ev_max] = min_max_eigenvalues(matrix);
        if (!(ev_min > 0.0)) {
            throw RankError("WeightingMatrix: matrix must be positive definite",
                            ev_min);
        }
        (void)ev_max;
    }

    static WeightingMatrix identity(int m) {
        WeightingMatrix w;
        w.matrix = MatrixXd::Identity(m, m);
        w.kind = Kind::identity;
        return w;
    }

    // Step-1 weighting: inverse of blockdiag(E_n zs1 zs1', E_n zd2 zd2').
    // Weighted GMM with this matrix reproduces per-equation 2SLS.
    static WeightingMatrix block_instrument_moments(
        const ResidualizedDataset& data) {
        const double dn = static_cast<double>(data.n());
        const MatrixXd b1 = data.zs1.transpose() * data.zs1 / dn;
        const MatrixXd b2 = data.zd2.transpose() * data.zd2 / dn;
        const int m1 = static_cast<int>(b1.rows());
        const int m2 = static_cast<int>(b2.rows());
        WeightingMatrix w;
        w.matrix = MatrixXd::Zero(m1 + m2, m1 + m2);
        w.matrix.topLeftCorner(m1, m1) =
            invert_spd(b1, "block_instrument_moments: demand instruments");
        w.matrix.bottomRightCorner(m2, m2) =
            invert_spd(b2, "block_instrument_moments: supply instruments");
        w.matrix = symmetrize(w.matrix);
        w.kind = Kind::block_instrument_moments;
        return w;
    }

    static WeightingMatrix inverse_omega(const MatrixXd& omega) {
        WeightingMatrix w;
        w.matrix = symmetrize(invert_spd(omega, "inverse_omega"));
        w.kind = Kind::inverse_omega;
        return w;
    }
};

inline const char* to_string(WeightingMatrix::Kind kind) {
    switch (kind) {
        case WeightingMatrix::Kind::identity: return "identity";
        case WeightingMatrix::Kind::block_instrument_moments:
            return "block_instrument_moments";
        case WeightingMatrix::Kind::inverse_omega: return "inverse_omega";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Score covariance estimators
// ---------------------------------------------------------------------------

struct OmegaKind {
    enum class Family { iid_centered, iid_uncentered, newey_west };

    Family family = Family::iid_centered;
    // Newey-West lag order; negative selects floor(4 * (n/100)^(2/9)).
    int lags = -1;

    static OmegaKind iid_centered() { return {Family::iid_centered, -1}; }
    static OmegaKind iid_uncentered() { return {Family::iid_uncentered, -1}; }
    static OmegaKind newey_west(int lags = -1) {
        return {Family::newey_west, lags};
    }

    int effective_lags(long n) const {
        if (family != Family::newey_west) return 0;
        if (lags >= 0) return lags;
        return static_cast<int>(std::floor(
            4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
    }
};

inline const char* to_string(OmegaKind::Family family) {
    switch (family) {
        case OmegaKind::Family::iid_centered: return "iid_centered";
        case OmegaKind::Family::iid_uncentered: return "iid_uncentered";
        case OmegaKind::Family::newey_west: return "newey_west";
    }
    return "unknown";
}

// Sample covariance of the scores at theta.
//   iid_centered:   E_n g g' - (E_n g)(E_n g)'        (default)
//   iid_uncentered: E_n g g'
//   newey_west:     Gamma_0 + sum_l w_l (Gamma_l + Gamma_l'),
//                   w_l = 1 - l/(L+1), on centered scores.
// Always symmetrized before return. newey_west with L = 0 equals
// iid_centered exactly (same code path).
inline MatrixXd estimate_omega(const MomentSystem& ms,
                               const Eigen::Vector2d& theta,
                               const OmegaKind& kind = OmegaKind::iid_centered()) {
    const MatrixXd scores = ms.score_matrix(theta);
    const auto n = scores.rows();
    const double dn = static_cast<double>(n);

    if (kind.family == OmegaKind::Family::iid_uncentered) {
        return symmetrize(scores.transpose() * scores / dn);
    }

    const VectorXd mean = scores.colwise().mean().transpose();
    const MatrixXd centered = scores.rowwise() - mean.transpose();
    const MatrixXd gamma0 = centered.transpose() * centered / dn;
    if (kind.family == OmegaKind::Family::iid_centered) {
        return symmetrize(gamma0);
    }

    const int lags = kind.effective_lags(n);
    if (lags >= n) {
        throw DimensionError("estimate_omega: newey_west needs n > lags");
    }
    MatrixXd omega = gamma0;
    for (int l = 1; l <= lags; ++l) {
        const double weight = 1.0 - static_cast<double>(l) /
                                        static_cast<double>(lags + 1);
        const MatrixXd gamma_l = centered.bottomRows(n - l).transpose() *
                                 centered.topRows(n - l) / dn;
        omega += weight * (gamma_l + gamma_l.transpose());
    }
    return symmetrize(omega);
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

enum class GmmMode { full_information, limited_information };

inline const char* to_string(GmmMode mode) {
    return mode == GmmMode::full_information ? "full_information"
                                             : "limited_information";
}

struct GmmFit {
    Eigen::Vector2d theta_hat{0.0, 0.0};
    Eigen::Matrix2d vcov = Eigen::Matrix2d::Zero();  // asymptotic variance / n
    MatrixXd omega_hat;                              // score covariance at theta_hat
    WeightingMatrix weighting;                       // final weighting used
    std::vector<Eigen::Vector2d> steps;              // estimate after each step
    GmmMode mode = GmmMode::full_information;
    // CUE extras (NaN / false for closed-form fits).
    double objective = std::numeric_limits<double>::quiet_NaN();
    bool on_boundary = false;

    double se(int k) const { return std::sqrt(vcov(k, k)); }
};

// Closed-form fixed-weighting GMM solve. Throws RankError when G'AG is
// numerically singular (minimum eigenvalue <= 1e-12 * maximum eigenvalue).
inline Eigen::Vector2d solve_gmm(const MomentSystem& ms,
                                 const WeightingMatrix& weighting) {
    if (weighting.matrix.rows() != ms.m()) {
        throw DimensionError("solve_gmm: weighting dimension mismatch");
    }
    const MatrixXd& g = ms.jacobian();
    const MatrixXd ga = g.transpose() * weighting.matrix;  // 2 x m
    const Eigen::Matrix2d h = symmetrize(ga * g);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);
    const double ev_min = es.eigenvalues().minCoeff();
    const double ev_max = es.eigenvalues().maxCoeff();
    if (!(ev_min > kSvdCutoff * std::max(ev_max, 0.0))) {
        throw RankError("solve_gmm: G'AG numerically singular", ev_min);
    }
    return -h.ldlt().solve(ga * ms.g0_bar());
}

// Sandwich variance M Omega M' / n with M = -(G'AG)^{-1} G'A; reduces to
// (G' Omega^{-1} G)^{-1} / n when A = Omega^{-1}.
inline Eigen::Matrix2d gmm_vcov(const MomentSystem& ms,
                                const WeightingMatrix& weighting,
                                const MatrixXd& omega) {
    const MatrixXd& g = ms.jacobian();
    const MatrixXd ga = g.transpose() * weighting.matrix;
    const Eigen::Matrix2d h = symmetrize(ga * g);
    const MatrixXd m_hat = -h.ldlt().solve(ga);  // 2 x m
    const Eigen::Matrix2d v = m_hat * omega * m_hat.transpose();
    return symmetrize(v) / static_cast<double>(ms.n());
}

namespace detail {

inline MatrixXd zero_cross_blocks(MatrixXd omega, int m1) {
    const auto m = omega.rows();
    omega.topRightCorner(m1, m - m1).setZero();
    omega.bottomLeftCorner(m - m1, m1).setZero();
    return omega;
}

}  // namespace detail

// Iterative GMM (K-step). Step 1 uses the block instrument-moment weighting;
// steps 2..K re-weight by the inverse score covariance at the previous
// estimate (cross-equation blocks zeroed first in limited-information mode).
// K = 2 is the default; omega_hat reports the full covariance at the final
// estimate regardless of mode.
inline GmmFit iterative_gmm(const ResidualizedDataset& data, int k_steps = 2,
                            GmmMode mode = GmmMode::full_information,
                            const OmegaKind& omega_kind = OmegaKind::iid_centered()) {
    if (k_steps < 1) throw ConfigError("iterative_gmm: k_steps must be >= 1");
    const MomentSystem ms = build_moment_system(data);

    GmmFit fit;
    fit.mode = mode;
    fit.weighting = WeightingMatrix::block_instrument_moments(data);
    fit.theta_hat = solve_gmm(ms, fit.weighting);
    fit.steps.push_back(fit.theta_hat);

    for (int k = 2; k <= k_steps; ++k) {
        MatrixXd omega = estimate_omega(ms, fit.theta_hat, omega_kind);
        if (mode == GmmMode::limited_information) {
            omega = detail::zero_cross_blocks(std::move(omega), ms.m_demand());
        }
        fit.weighting = WeightingMatrix::inverse_omega(omega);
        fit.theta_hat = solve_gmm(ms, fit.weighting);
        fit.steps.push_back(fit.theta_hat);
    }

    fit.omega_hat = estimate_omega(ms, fit.theta_hat, omega_kind);
    if (k_steps >= 2 && mode == GmmMode::full_information) {
        // Efficient case: plug-in variance at the final estimate.
        fit.vcov = gmm_vcov(
            ms, WeightingMatrix::inverse_omega(fit.omega_hat), fit.omega_hat);
    } else if (k_steps >= 2) {
        // Limited information: sandwich with the block-diagonal weighting
        // rebuilt at the final estimate.
        const MatrixXd limited =
            detail::zero_cross_blocks(fit.omega_hat, ms.m_demand());
        fit.vcov = gmm_vcov(ms, WeightingMatrix::inverse_omega(limited),
                            fit.omega_hat);
    } else {
        fit.vcov = gmm_vcov(ms, fit.weighting, fit.omega_hat);
    }
    return fit;
}

struct CueOptions {
    int grid_resolution = 61;
    double step_tol = 1e-8;
};

// Continuously-updated estimator: minimizes the objective
// Q(theta) = gbar(theta)' Omega(theta)^{-1} gbar(theta) over the box
// (lattice + compass search). The reported objective is the AR statistic
// divided by n at the optimum; a boundary optimum is flagged, signalling a
// likely unbounded confidence region under weak identification.
inline GmmFit cue(const ResidualizedDataset& data, const ThetaBox& box = {},
                  const OmegaKind& omega_kind = OmegaKind::iid_centered(),
                  const CueOptions& options = {}) {
    const MomentSystem ms = build_moment_system(data);
    const WeightingMatrix step1 = WeightingMatrix::block_instrument_moments(data);
    const Eigen::Vector2d theta1 = solve_gmm(ms, step1);
    if (!box.contains(theta1)) {
        throw ConfigError(
            "cue: theta box must contain the step-1 estimate (" +
            std::to_string(theta1(0)) + ", " + std::to_string(theta1(1)) + ")");
    }

    auto objective = [&](const Eigen::Vector2d& theta) {
        const MatrixXd omega = estimate_omega(ms, theta, omega_kind);
        PsdSolver solver(omega, "cue");
        return solver.quadratic_form(ms.gbar(theta));
    };
    const BoxMinimum minimum = minimize_on_box(
        objective, box, options.grid_resolution, options.step_tol, {theta1});

    GmmFit fit;
    fit.mode = GmmMode::full_information;
    fit.theta_hat = minimum.argmin;
    fit.objective = minimum.value;
    fit.on_boundary = minimum.on_boundary;
    fit.steps = {theta1, minimum.argmin};
    fit.omega_hat = estimate_omega(ms, fit.theta_hat, omega_kind);
    fit.weighting = WeightingMatrix::inverse_omega(fit.omega_hat);
    fit.vcov = gmm_vcov(ms, fit.weighting, fit.omega_hat);
    return fit;
}

// Indirect least squares for scalar instruments: the ratio of the reduced
// form projections, which collapses to a1 = E_n[y1 zs1] / E_n[p1 zs1] and
// b1 = E_n[y2 zd2] / E_n[p2 zd2].
inline Eigen::Vector2d indirect_least_squares(const ResidualizedDataset& data) {
    data.validate();
    if (data.zs1.cols() != 1 || data.zd2.cols() != 1) {
        throw DimensionError(
            "indirect_least_squares: requires exactly one instrument per "
            "block");
    }
    const double dn = static_cast<double>(data.n());
    const double num_a = data.zs1.col(0).dot(data.y1) / dn;
    const double den_a = data.zs1.col(0).dot(data.p1) / dn;
    const double num_b = data.zd2.col(0).dot(data.y2) / dn;
    const double den_b = data.zd2.col(0).dot(data.p2) / dn;
    const double scale_a =
        data.zs1.col(0).norm() * data.p1.norm() / std::max(dn, 1.0);
    const double scale_b =
        data.zd2.col(0).norm() * data.p2.norm() / std::max(dn, 1.0);
    if (std::fabs(den_a) <= 1e-14 * scale_a || den_a == 0.0) {
        throw NumericError(
            "indirect_least_squares: zero denominator projection (demand)");
    }
    if (std::fabs(den_b) <= 1e-14 * scale_b || den_b == 0.0) {
        throw NumericError(
            "indirect_least_squares: zero denominator projection (supply)");
    }
    return {num_a / den_a, num_b / den_b};
}

}  // namespace wrightiv
