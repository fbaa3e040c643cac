#pragma once
// 2-D box-constrained minimization used by CUE and the weak-identification
// machinery: coarse lattice scan, then compass (coordinate) search with step
// halving. Fully deterministic.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "wrightiv/common.hpp"

namespace wrightiv {

// Rectangular parameter search box for theta = (a, b) = (alpha1, beta1).
struct ThetaBox {
    Eigen::Vector2d lower{-10.0, -10.0};
    Eigen::Vector2d upper{10.0, 10.0};

    void validate() const {
        if (!(lower(0) < upper(0) && lower(1) < upper(1))) {
            throw ConfigError("ThetaBox: lower must be strictly below upper");
        }
    }
    bool contains(const Eigen::Vector2d& theta) const {
        return theta(0) >= lower(0) && theta(0) <= upper(0) &&
               theta(1) >= lower(1) && theta(1) <= upper(1);
    }
    Eigen::Vector2d clamp(Eigen::Vector2d theta) const {
        for (int k = 0; k < 2; ++k) {
            theta(k) = std::min(std::max(theta(k), lower(k)), upper(k));
        }
        return theta;
    }
};

struct BoxMinimum {
    Eigen::Vector2d argmin{0.0, 0.0};
    double value = 0.0;
    bool on_boundary = false;
    long evaluations = 0;
};

// Minimizes f over the box: grid_res x grid_res inclusive lattice scan
// (plus optional extra starting candidates), followed by compass search from
// the incumbent with per-axis steps halved down to step_tol. Ties on the
// lattice resolve to the first point in row-major (a-major) order.
template <class F>
BoxMinimum minimize_on_box(F&& f, const ThetaBox& box, int grid_res = 61,
                           double step_tol = 1e-8,
                           const std::vector<Eigen::Vector2d>& extra_starts = {}) {
    box.validate();
    if (grid_res < 2) throw ConfigError("minimize_on_box: grid_res must be >= 2");

    BoxMinimum best;
    best.value = std::numeric_limits<double>::infinity();
    auto consider = [&](const Eigen::Vector2d& theta) {
        const double val = f(theta);
        ++best.evaluations;
        if (val < best.value) {
            best.value = val;
            best.argmin = theta;
        }
    };

    const double span_a = box.upper(0) - box.lower(0);
    const double span_b = box.upper(1) - box.lower(1);
    for (int ia = 0; ia < grid_res; ++ia) {
        const double a =
            box.lower(0) + span_a * static_cast<double>(ia) / (grid_res - 1);
        for (int ib = 0; ib < grid_res; ++ib) {
            const double b =
                box.lower(1) + span_b * static_cast<double>(ib) / (grid_res - 1);
            consider({a, b});
        }
    }
    for (const auto& s : extra_starts) {
        if (box.contains(s)) consider(s);
    }

    // Compass search with step halving.
    Eigen::Vector2d step{span_a / (grid_res - 1), span_b / (grid_res - 1)};
    while (step(0) > step_tol || step(1) > step_tol) {
        bool improved = false;
        for (int axis = 0; axis < 2; ++axis) {
            for (double sign : {1.0, -1.0}) {
                Eigen::Vector2d cand = best.argmin;
                cand(axis) += sign * step(axis);
                cand = box.clamp(cand);
                if ((cand - best.argmin).cwiseAbs().maxCoeff() == 0.0) continue;
                const double val = f(cand);
                ++best.evaluations;
                if (val < best.value) {
                    best.value = val;
                    best.argmin = cand;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }

    const double edge_tol_a = 1e-9 * std::max(1.0, span_a);
    const double edge_tol_b = 1e-9 * std::max(1.0, span_b);
    best.on_boundary = best.argmin(0) <= box.lower(0) + edge_tol_a ||
                       best.argmin(0) >= box.upper(0) - edge_tol_a ||
                       best.argmin(1) <= box.lower(1) + edge_tol_b ||
                       best.argmin(1) >= box.upper(1) - edge_tol_b;
    return best;
}

}  // namespace wrightiv
