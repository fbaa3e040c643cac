#pragma once
// Weak-identification-robust inference: Anderson-Rubin statistic/regions and
// the simulation-based conditional likelihood-ratio (CLR) construction.
//
// All objects are built from the empirical covariance kernel of the affine
// per-observation scores,
//   Omega(theta, theta_bar) = E_n g(theta) g(theta_bar)'
//                             - E_n g(theta) * E_n g(theta_bar)',
// which is a bilinear polynomial in (theta, theta_bar) and is therefore
// precomputed as a 3x3 array of component cross-covariances with coefficient
// vector c(theta) = (1, a, b).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "wrightiv/common.hpp"
#include "wrightiv/gmm.hpp"
#include "wrightiv/linalg.hpp"
#include "wrightiv/optimize.hpp"
#include "wrightiv/parallel.hpp"
#include "wrightiv/rng.hpp"
#include "wrightiv/stats.hpp"

namespace wrightiv {

// ---------------------------------------------------------------------------
// Covariance kernel
// ---------------------------------------------------------------------------

class CovarianceKernel {
  public:
    explicit CovarianceKernel(const MomentSystem& ms) : m_(ms.m()) {
        const MatrixXd* comp[3] = {&ms.score_at_zero(), &ms.dscore_da(),
                                   &ms.dscore_db()};
        const double dn = static_cast<double>(ms.n());
        MatrixXd centered[3];
        for (int j = 0; j < 3; ++j) {
            const VectorXd mean = comp[j]->colwise().mean().transpose();
            centered[j] = comp[j]->rowwise() - mean.transpose();
        }
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                cross_[j][k] =
                    centered[j].transpose() * centered[k] / dn;
            }
        }
    }

    int m() const { return m_; }

    // Omega(theta, theta_bar); transposing swaps the arguments.
    MatrixXd operator()(const Eigen::Vector2d& theta,
                        const Eigen::Vector2d& theta_bar) const {
        const double c[3] = {1.0, theta(0), theta(1)};
        const double cb[3] = {1.0, theta_bar(0), theta_bar(1)};
        MatrixXd result = MatrixXd::Zero(m_, m_);
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                result.noalias() += (c[j] * cb[k]) * cross_[j][k];
            }
        }
        return result;
    }

    // Omega(theta, theta) -- symmetric PSD by construction.
    MatrixXd omega(const Eigen::Vector2d& theta) const {
        return symmetrize((*this)(theta, theta));
    }

  private:
    int m_;
    MatrixXd cross_[3][3];
};

// ---------------------------------------------------------------------------
// Grids and regions
// ---------------------------------------------------------------------------

struct ThetaGrid {
    VectorXd a_axis;
    VectorXd b_axis;

    static ThetaGrid from_box(const ThetaBox& box, int a_resolution,
                              int b_resolution) {
        box.validate();
        if (a_resolution < 2 || b_resolution < 2) {
            throw ConfigError("ThetaGrid: resolutions must be >= 2");
        }
        ThetaGrid grid;
        grid.a_axis = VectorXd::LinSpaced(a_resolution, box.lower(0),
                                          box.upper(0));
        grid.b_axis = VectorXd::LinSpaced(b_resolution, box.lower(1),
                                          box.upper(1));
        return grid;
    }

    void validate() const {
        if (a_axis.size() < 2 || b_axis.size() < 2) {
            throw ConfigError("ThetaGrid: axes need at least two points");
        }
        for (Eigen::Index i = 1; i < a_axis.size(); ++i) {
            if (!(a_axis(i) > a_axis(i - 1))) {
                throw ConfigError("ThetaGrid: a_axis must be strictly increasing");
            }
        }
        for (Eigen::Index i = 1; i < b_axis.size(); ++i) {
            if (!(b_axis(i) > b_axis(i - 1))) {
                throw ConfigError("ThetaGrid: b_axis must be strictly increasing");
            }
        }
    }

    long total() const {
        return static_cast<long>(a_axis.size()) *
               static_cast<long>(b_axis.size());
    }
    // Row-major point order: a sweeps slowest.
    Eigen::Vector2d point(long index) const {
        const long nb = b_axis.size();
        return {a_axis(index / nb), b_axis(index % nb)};
    }
};

struct ConfidenceRegion {
    enum class Kind { ar, clr };

    Kind kind = Kind::ar;
    double level = 0.95;  // confidence level 1 - p
    ThetaGrid grid;
    VectorXd statistics;       // one per grid point, row-major
    VectorXd critical_values;  // scalar (AR) replicated, or per-point (CLR)
    std::vector<bool> members;
    long ridge_fallback_count = 0;

    long covered_points() const {
        return static_cast<long>(
            std::count(members.begin(), members.end(), true));
    }
};

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

// Anderson-Rubin statistic S(theta) = n gbar(theta)' Omega(theta)^{-1}
// gbar(theta); asymptotically chi-square(m) at the true theta.
inline double ar_statistic(const MomentSystem& ms,
                           const CovarianceKernel& kernel,
                           const Eigen::Vector2d& theta,
                           bool* ridged = nullptr) {
    PsdSolver solver(kernel.omega(theta), "ar_statistic");
    if (ridged) *ridged = solver.ridged();
    return static_cast<double>(ms.n()) *
           solver.quadratic_form(ms.gbar(theta));
}

struct WeakIdOptions {
    int infimum_grid_resolution = 61;   // data-statistic infimum search
    int inner_grid_resolution = 31;     // per-draw CLR inner minimization
    double step_tol = 1e-8;
};

// inf over the box of the AR statistic (the CUE objective times n).
inline BoxMinimum ar_infimum(const MomentSystem& ms,
                             const CovarianceKernel& kernel,
                             const ThetaBox& box,
                             const WeakIdOptions& options = {},
                             const std::vector<Eigen::Vector2d>& extra_starts = {}) {
    auto objective = [&](const Eigen::Vector2d& theta) {
        return ar_statistic(ms, kernel, theta);
    };
    return minimize_on_box(objective, box, options.infimum_grid_resolution,
                           options.step_tol, extra_starts);
}

// Quasi likelihood ratio LR(theta) = S(theta) - inf_box S.
inline double lr_statistic(const MomentSystem& ms,
                           const CovarianceKernel& kernel,
                           const Eigen::Vector2d& theta, const ThetaBox& box,
                           const WeakIdOptions& options = {}) {
    const double s_theta = ar_statistic(ms, kernel, theta);
    const BoxMinimum inf = ar_infimum(ms, kernel, box, options, {theta});
    return s_theta - inf.value;
}

// Conditioning statistic h(theta, theta0) = gbar(theta) -
// Omega(theta, theta0) Omega(theta0, theta0)^{-1} gbar(theta0):
// asymptotically independent of gbar(theta0).
inline VectorXd conditioning_statistic(const MomentSystem& ms,
                                       const CovarianceKernel& kernel,
                                       const Eigen::Vector2d& theta,
                                       const Eigen::Vector2d& theta0) {
    PsdSolver solver0(kernel.omega(theta0), "conditioning_statistic");
    return ms.gbar(theta) -
           kernel(theta, theta0) * solver0.solve(ms.gbar(theta0));
}

// Conservative empirical quantile: the ceil(q * M)-th order statistic,
// never interpolating downward.
inline double empirical_quantile_upper(std::vector<double> values, double q) {
    if (values.empty()) {
        throw NumericError("empirical_quantile_upper: no values");
    }
    std::sort(values.begin(), values.end());
    const auto m = static_cast<long>(values.size());
    long k = static_cast<long>(
        std::ceil(q * static_cast<double>(m) - 1e-12));
    k = std::max<long>(1, std::min<long>(k, m));
    return values[static_cast<std::size_t>(k - 1)];
}

// Per-draw diagnostics of a CLR simulation (used by the critical value and
// exposed for testing the algebraic identity between the two LR* forms).
struct ClrSimulation {
    std::vector<double> lr_primary;   // n g*(t0)'O^-1 g*(t0) - n inf ...
    std::vector<double> lr_identity;  // xi'O^-1 xi - n inf ...
    long failures = 0;
    long ridged_draws = 0;
    double critical_value = 0.0;
};

// Simulation-based conditional critical value at hypothesized theta0.
//
// Per draw d (seed hash(base_seed, d), scheduling-independent):
//   xi ~ N(0, Omega(theta0, theta0))
//   g*(theta) = h(theta, theta0) + Omega(theta, theta0)
//               Omega(theta0,theta0)^{-1} xi / sqrt(n)
//   LR*_d = n g*(theta0)' Omega(theta0)^{-1} g*(theta0)
//           - n inf_theta g*(theta)' Omega(theta,theta)^{-1} g*(theta)
// (the first term equals xi' Omega(theta0)^{-1} xi algebraically; both forms
// are computed). The returned critical value is the conservative empirical
// (1-p) quantile. Draws whose linear algebra fails are skipped; more than 1%
// failures aborts.
inline double clr_critical_value(const MomentSystem& ms,
                                 const CovarianceKernel& kernel,
                                 const Eigen::Vector2d& theta0,
                                 const ThetaBox& box, double p,
                                 long draws = 1000, std::uint64_t seed = 0,
                                 const WeakIdOptions& options = {},
                                 ClrSimulation* diagnostics = nullptr,
                                 int threads = 1) {
    if (draws < 100) {
        throw ConfigError("clr_critical_value: draws must be >= 100");
    }
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("clr_critical_value: p must lie in (0, 1)");
    }
    box.validate();

    const double dn = static_cast<double>(ms.n());
    const double sqrt_n = std::sqrt(dn);
    const MatrixXd omega0 = kernel.omega(theta0);
    const PsdSolver solver0(omega0, "clr_critical_value");
    const MatrixXd sampler = psd_sqrt_factor(omega0);
    const VectorXd q0 = solver0.solve(ms.gbar(theta0));
    const int m = kernel.m();

    struct DrawResult {
        double lr_primary = 0.0;
        double lr_identity = 0.0;
        bool ok = false;
        bool ridged = false;
    };
    std::vector<DrawResult> results(static_cast<std::size_t>(draws));

    parallel_for(draws, threads, [&](std::int64_t d) {
        DrawResult& out = results[static_cast<std::size_t>(d)];
        try {
            SubstreamRng rng(derive_seed(seed, static_cast<std::uint64_t>(d)),
                             0);
            VectorXd z(m);
            for (int j = 0; j < m; ++j) z(j) = rng.normal();
            const VectorXd xi = sampler * z;
            const double xi_quad = solver0.quadratic_form(xi);
            // g*(theta) = gbar(theta) + Omega(theta, theta0) * shift.
            const VectorXd shift = solver0.solve(xi) / sqrt_n - q0;

            bool any_ridged = false;
            auto objective = [&](const Eigen::Vector2d& theta) {
                const VectorXd g_star =
                    ms.gbar(theta) + kernel(theta, theta0) * shift;
                PsdSolver solver(kernel.omega(theta), "clr inner");
                if (solver.ridged()) any_ridged = true;
                return solver.quadratic_form(g_star);
            };
            const BoxMinimum inner =
                minimize_on_box(objective, box, options.inner_grid_resolution,
                                options.step_tol, {theta0});

            const VectorXd g_star0 = ms.gbar(theta0) + omega0 * shift;
            out.lr_primary =
                dn * solver0.quadratic_form(g_star0) - dn * inner.value;
            out.lr_identity = xi_quad - dn * inner.value;
            out.ridged = any_ridged;
            out.ok = true;
        } catch (const NumericError&) {
            out.ok = false;
        }
    });

    std::vector<double> lr_primary, lr_identity;
    lr_primary.reserve(results.size());
    long failures = 0, ridged_draws = 0;
    for (const auto& r : results) {
        if (!r.ok) {
            ++failures;
            continue;
        }
        lr_primary.push_back(r.lr_primary);
        lr_identity.push_back(r.lr_identity);
        if (r.ridged) ++ridged_draws;
    }
    if (failures * 100 > draws) {
        throw NumericError(
            "clr_critical_value: more than 1% of simulation draws failed (" +
            std::to_string(failures) + " of " + std::to_string(draws) + ")");
    }

    const double critical = empirical_quantile_upper(lr_primary, 1.0 - p);
    if (diagnostics) {
        diagnostics->lr_primary = std::move(lr_primary);
        diagnostics->lr_identity = std::move(lr_identity);
        diagnostics->failures = failures;
        diagnostics->ridged_draws = ridged_draws;
        diagnostics->critical_value = critical;
    }
    return critical;
}

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

// AR confidence region: membership S(theta) <= chi2_{1-p}(m) over the grid.
inline ConfidenceRegion ar_region(const MomentSystem& ms,
                                  const CovarianceKernel& kernel,
                                  const ThetaGrid& grid, double p,
                                  int threads = 1) {
    grid.validate();
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("ar_region: p must lie in (0, 1)");
    }
    const double critical = chi2_quantile(1.0 - p, kernel.m());
    const long total = grid.total();

    ConfidenceRegion region;
    region.kind = ConfidenceRegion::Kind::ar;
    region.level = 1.0 - p;
    region.grid = grid;
    region.statistics = VectorXd(total);
    region.critical_values = VectorXd::Constant(total, critical);
    region.members.assign(static_cast<std::size_t>(total), false);

    std::vector<char> ridged(static_cast<std::size_t>(total), 0);
    parallel_for(total, threads, [&](std::int64_t idx) {
        bool r = false;
        region.statistics(idx) =
            ar_statistic(ms, kernel, grid.point(idx), &r);
        ridged[static_cast<std::size_t>(idx)] = r ? 1 : 0;
    });
    for (long idx = 0; idx < total; ++idx) {
        region.members[static_cast<std::size_t>(idx)] =
            region.statistics(idx) <= critical;
        region.ridge_fallback_count += ridged[static_cast<std::size_t>(idx)];
    }
    return region;
}

// CLR confidence region: membership LR(theta) <= c_{1-p}(theta), with the
// critical value re-simulated at every grid point (the point plays the role
// of theta0) under seed hash(base_seed, point_index).
inline ConfidenceRegion clr_region(const MomentSystem& ms,
                                   const CovarianceKernel& kernel,
                                   const ThetaGrid& grid, const ThetaBox& box,
                                   double p, long draws = 1000,
                                   std::uint64_t seed = 0,
                                   const WeakIdOptions& options = {},
                                   int threads = 1) {
    grid.validate();
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("clr_region: p must lie in (0, 1)");
    }
    const long total = grid.total();

    ConfidenceRegion region;
    region.kind = ConfidenceRegion::Kind::clr;
    region.level = 1.0 - p;
    region.grid = grid;
    region.statistics = VectorXd(total);
    region.critical_values = VectorXd(total);
    region.members.assign(static_cast<std::size_t>(total), false);

    // Shared infimum for the data statistic; guarded by the grid minimum so
    // LR >= 0 at every grid point.
    const BoxMinimum inf = ar_infimum(ms, kernel, box, options);
    VectorXd s_values(total);
    for (long idx = 0; idx < total; ++idx) {
        s_values(idx) = ar_statistic(ms, kernel, grid.point(idx));
    }
    const double s_inf = std::min(inf.value, s_values.minCoeff());

    parallel_for(total, threads, [&](std::int64_t idx) {
        const Eigen::Vector2d theta = grid.point(idx);
        region.statistics(idx) = s_values(idx) - s_inf;
        region.critical_values(idx) = clr_critical_value(
            ms, kernel, theta, box, p, draws,
            derive_seed(seed, static_cast<std::uint64_t>(idx)), options,
            nullptr, 1);
    });
    for (long idx = 0; idx < total; ++idx) {
        region.members[static_cast<std::size_t>(idx)] =
            region.statistics(idx) <= region.critical_values(idx);
    }
    return region;
}

}  // namespace wrightiv
