#pragma once
// Dense linear-algebra helpers shared across the estimation modules:
// minimum-norm least squares through a rank-revealing SVD, symmetry /
// positive-definiteness checks, and a PSD solver with a trace-scaled ridge
// fallback for nearly singular covariance matrices.

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "wrightiv/common.hpp"

namespace wrightiv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Relative singular-value cutoff for pseudoinverse-based solves.
inline constexpr double kSvdCutoff = 1e-12;

// Relative ridge added to a covariance that fails Cholesky: eps * tr(O)/m.
inline constexpr double kRidgeScale = 1e-10;

// Symmetry tolerance for weighting / covariance matrices.
inline constexpr double kSymmetryTol = 1e-12;

struct LeastSquaresSolution {
    VectorXd coefficients;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

// Minimum-norm solution of min_b ||v - M b||_2 via SVD with singular values
// below kSvdCutoff * sigma_max treated as zero. A zero-column M yields an
// empty coefficient vector.
inline LeastSquaresSolution min_norm_least_squares(const MatrixXd& m,
                                                   const VectorXd& v) {
    if (m.rows() != v.size()) {
        throw DimensionError("min_norm_least_squares: row count mismatch");
    }
    LeastSquaresSolution out;
    if (m.cols() == 0) {
        out.coefficients = VectorXd(0);
        return out;
    }
    Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kSvdCutoff);
    out.coefficients = svd.solve(v);
    out.rank = svd.rank();
    out.rank_deficient = out.rank < m.cols();
    return out;
}

inline bool is_symmetric(const MatrixXd& a, double tol = kSymmetryTol) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline MatrixXd symmetrize(const MatrixXd& a) {
    return 0.5 * (a + a.transpose());
}

inline std::pair<double, double> min_max_eigenvalues(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

// Inverse of a symmetric positive definite matrix; throws RankError with the
// offending eigenvalue when the matrix is not PD.
inline MatrixXd invert_spd(const MatrixXd& a, const std::string& what) {
    if (!is_symmetric(a)) {
        throw NumericError(what + ": matrix is not symmetric");
    }
    Eigen::LLT<MatrixXd> llt(symmetrize(a));
    if (llt.info() != Eigen::Success) {
        throw RankError(what + ": matrix is not positive definite",
                        min_max_eigenvalues(a).first);
    }
    return llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
}

// Cholesky solver for a symmetric PSD matrix with a single ridge retry
// (O + eps*I, eps = kRidgeScale * trace / m). `ridged` records whether the
// fallback fired.
class PsdSolver {
  public:
    explicit PsdSolver(const MatrixXd& a,
                       const std::string& what = "PsdSolver") {
        const MatrixXd sym = symmetrize(a);
        llt_.compute(sym);
        if (llt_.info() != Eigen::Success) {
            const double eps =
                kRidgeScale * sym.trace() / static_cast<double>(sym.rows());
            llt_.compute(sym + eps * MatrixXd::Identity(sym.rows(), sym.cols()));
            ridged_ = true;
            if (llt_.info() != Eigen::Success) {
                throw SingularKernelError(
                    what + ": covariance singular even after ridge fallback");
            }
        }
    }

    VectorXd solve(const VectorXd& b) const { return llt_.solve(b); }
    MatrixXd solve(const MatrixXd& b) const { return llt_.solve(b); }
    double quadratic_form(const VectorXd& b) const {
        return b.dot(llt_.solve(b));
    }
    MatrixXd inverse() const {
        const auto n = llt_.matrixL().rows();
        return llt_.solve(MatrixXd::Identity(n, n));
    }
    bool ridged() const { return ridged_; }

  private:
    Eigen::LLT<MatrixXd> llt_;
    bool ridged_ = false;
};

// Factor L with L L' = A for a symmetric PSD matrix, by eigendecomposition
// with negative eigenvalues clipped to zero. Used to sample N(0, A).
inline MatrixXd psd_sqrt_factor(const MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
    if (es.info() != Eigen::Success) {
        throw NumericError("psd_sqrt_factor: eigendecomposition failed");
    }
    VectorXd lambda = es.eigenvalues();
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        lambda(i) = lambda(i) > 0.0 ? std::sqrt(lambda(i)) : 0.0;
    }
    return es.eigenvectors() * lambda.asDiagonal();
}

}  // namespace wrightiv
