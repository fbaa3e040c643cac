// Partialing-out: best linear predictor, the two residualized blocks, and
// the LASSO variant. Projections are checked against an independent
// normal-equations oracle.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support/oracles.hpp"
#include "support/test_util.hpp"
#include "wrightiv/partialing.hpp"
#include "wrightiv/rng.hpp"

using namespace wrightiv;
using Catch::Approx;

namespace {

MatrixXd random_matrix(std::uint64_t seed, Eigen::Index rows,
                       Eigen::Index cols, std::uint64_t stream = 0) {
    SubstreamRng rng(seed, stream);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

VectorXd oracle_residual(const VectorXd& v, const MatrixXd& m) {
    if (m.cols() == 0) return v;
    return v - m * oracle::normal_equations(m, v);
}

}  // namespace

TEST_CASE("best_linear_predictor matches the normal-equations oracle",
          "[partialing]") {
    const MatrixXd m = random_matrix(21, 50, 3);
    const VectorXd v = random_matrix(22, 50, 1, 1).col(0);

    const auto proj = best_linear_predictor(v, m, {"a", "b", "c"});
    REQUIRE_FALSE(proj.rank_deficient);
    REQUIRE(proj.regressor_labels ==
            std::vector<std::string>{"a", "b", "c"});

    const VectorXd expected = oracle::normal_equations(m, v);
    for (Eigen::Index j = 0; j < 3; ++j) {
        REQUIRE(proj.coefficients(j) == Approx(expected(j)).margin(1e-10));
    }

    const VectorXd fit = proj.fitted(m);
    const VectorXd res = proj.residual(v, m);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        REQUIRE(fit(i) + res(i) == Approx(v(i)).margin(1e-12));
    }
    // Residuals are orthogonal to every regressor.
    REQUIRE((m.transpose() * res).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("best_linear_predictor edge cases", "[partialing]") {
    SECTION("zero regressors: residual is the response itself") {
        const VectorXd v = VectorXd::LinSpaced(5, 1.0, 5.0);
        const MatrixXd m(5, 0);
        const auto proj = best_linear_predictor(v, m);
        REQUIRE(proj.coefficients.size() == 0);
        REQUIRE(proj.fitted(m) == VectorXd::Zero(5));
        REQUIRE(proj.residual(v, m) == v);
    }
    SECTION("rank-deficient design sets the flag") {
        MatrixXd m(6, 2);
        m.col(0) = VectorXd::LinSpaced(6, 0.0, 5.0);
        m.col(1) = 2.0 * m.col(0);
        const VectorXd v = VectorXd::Ones(6);
        const auto proj = best_linear_predictor(v, m);
        REQUIRE(proj.rank_deficient);
    }
    SECTION("empty response throws") {
        REQUIRE_THROWS_AS(best_linear_predictor(VectorXd(), MatrixXd(0, 1)),
                          DimensionError);
    }
    SECTION("row mismatch throws") {
        REQUIRE_THROWS_AS(
            best_linear_predictor(VectorXd::Ones(4), MatrixXd::Ones(5, 1)),
            DimensionError);
    }
    SECTION("label count mismatch throws") {
        REQUIRE_THROWS_AS(best_linear_predictor(VectorXd::Ones(4),
                                                MatrixXd::Ones(4, 2), {"a"}),
                          DimensionError);
    }
}

TEST_CASE("partial_out residualizes each block on its own controls",
          "[partialing]") {
    const Dataset data = testutil::strong_dataset(40, 77, 2, 1, 2);
    const auto resid = partial_out(data);
    resid.validate();
    REQUIRE(resid.method == ResidualizedDataset::Method::ols);
    REQUIRE(resid.n() == 40);
    REQUIRE(resid.zs1.cols() == 1);
    REQUIRE(resid.zd2.cols() == 2);

    MatrixXd m1(40, 4);  // (W, Z_d) controls for the demand block
    m1 << data.w_matrix(), data.zd_matrix();
    MatrixXd m2(40, 3);  // (W, Z_s) controls for the supply block
    m2 << data.w_matrix(), data.zs_matrix();

    const VectorXd y = data.y_col();
    const VectorXd p = data.p_col();

    auto check = [](const VectorXd& got, const VectorXd& want) {
        REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-10);
    };
    check(resid.y1, oracle_residual(y, m1));
    check(resid.p1, oracle_residual(p, m1));
    check(resid.zs1.col(0), oracle_residual(data.zs_matrix().col(0), m1));
    check(resid.y2, oracle_residual(y, m2));
    check(resid.p2, oracle_residual(p, m2));
    check(resid.zd2.col(0), oracle_residual(data.zd_matrix().col(0), m2));
    check(resid.zd2.col(1), oracle_residual(data.zd_matrix().col(1), m2));
}

TEST_CASE("partial_out without covariates controls on the other shifter",
          "[partialing]") {
    const Dataset data = testutil::strong_dataset(30, 5, 1, 1, 0);
    const auto resid = partial_out(data);
    const VectorXd y = data.y_col();
    const MatrixXd zd = data.zd_matrix();
    REQUIRE((resid.y1 - oracle_residual(y, zd)).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(resid.n() == 30);
    REQUIRE_THROWS_AS(
        partial_out(testutil::make_dataset(VectorXd::Ones(1), VectorXd::Ones(1),
                                           MatrixXd::Ones(1, 1),
                                           MatrixXd::Ones(1, 1))),
        DimensionError);
}

TEST_CASE("raw_residualized passes the columns through untouched",
          "[partialing]") {
    const Dataset data = testutil::strong_dataset(12, 9, 1, 2, 1);
    const auto resid = raw_residualized(data);
    REQUIRE(resid.method == ResidualizedDataset::Method::none);
    REQUIRE(resid.y1 == data.y_col());
    REQUIRE(resid.y2 == data.y_col());
    REQUIRE(resid.p1 == data.p_col());
    REQUIRE(resid.p2 == data.p_col());
    REQUIRE(resid.zs1 == data.zs_matrix());
    REQUIRE(resid.zd2 == data.zd_matrix());

    // Works even on a single observation.
    VectorXd one(1);
    one << 2.5;
    const auto tiny = testutil::make_dataset(one, one, MatrixXd::Ones(1, 1),
                                             MatrixXd::Ones(1, 1));
    REQUIRE_NOTHROW(raw_residualized(tiny));

    Dataset empty;
    REQUIRE_THROWS_AS(raw_residualized(empty), DimensionError);
}

TEST_CASE("ResidualizedDataset validation rejects ragged blocks",
          "[partialing]") {
    auto resid = raw_residualized(testutil::strong_dataset(8, 3));
    resid.p2 = VectorXd::Ones(5);
    REQUIRE_THROWS_AS(resid.validate(), DimensionError);
}

TEST_CASE("lasso_fit with zero penalty recovers least squares",
          "[partialing]") {
    const MatrixXd m = random_matrix(31, 60, 3);
    VectorXd v = m * VectorXd::LinSpaced(3, 1.0, 3.0);
    v += 0.1 * random_matrix(32, 60, 1, 1).col(0);

    const auto ols = oracle::normal_equations(m, v);
    LassoOptions options;
    options.tol = 1e-10;
    const auto proj = lasso_fit(v, m, 0.0, {}, options);
    for (Eigen::Index j = 0; j < 3; ++j) {
        REQUIRE(proj.coefficients(j) == Approx(ols(j)).margin(1e-6));
    }
}

TEST_CASE("lasso_fit with a huge penalty zeroes everything but the intercept",
          "[partialing]") {
    MatrixXd m(40, 3);
    m.col(0) = VectorXd::Ones(40);  // unpenalized intercept column
    m.rightCols(2) = random_matrix(33, 40, 2);
    const VectorXd v = 3.0 * VectorXd::Ones(40) +
                       0.5 * random_matrix(34, 40, 1, 1).col(0);

    const auto proj = lasso_fit(v, m, 1e6);
    REQUIRE(proj.coefficients(1) == 0.0);
    REQUIRE(proj.coefficients(2) == 0.0);
    REQUIRE(proj.coefficients(0) == Approx(v.mean()).margin(1e-7));
}

TEST_CASE("lasso_fit objective trace is non-increasing", "[partialing]") {
    const MatrixXd m = random_matrix(35, 50, 4);
    const VectorXd v = m.col(0) - m.col(1) +
                       0.2 * random_matrix(36, 50, 1, 1).col(0);
    std::vector<double> trace;
    LassoOptions options;
    options.objective_trace = &trace;
    lasso_fit(v, m, 0.05, {}, options);
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) {
        REQUIRE(trace[i] <= trace[i - 1] + 1e-12);
    }
}

TEST_CASE("lasso_fit reports non-convergence with the last iterate",
          "[partialing]") {
    // Strongly correlated columns need several sweeps; one is not enough.
    MatrixXd m = random_matrix(50, 50, 2);
    m.col(1) = m.col(0) + 0.05 * m.col(1);
    const VectorXd v = m.col(0) - m.col(1) +
                       0.1 * random_matrix(37, 50, 1, 1).col(0);
    LassoOptions options;
    options.max_sweeps = 1;
    try {
        lasso_fit(v, m, 0.0, {}, options);
        FAIL("expected LassoConvergenceError");
    } catch (const LassoConvergenceError& err) {
        REQUIRE(err.last_iterate.coefficients.size() == 2);
        REQUIRE(std::string(err.what()).find("did not converge") !=
                std::string::npos);
    }
}

TEST_CASE("lasso_fit input validation", "[partialing]") {
    REQUIRE_THROWS_AS(lasso_fit(VectorXd(), MatrixXd(0, 1), 0.1),
                      DimensionError);
    REQUIRE_THROWS_AS(lasso_fit(VectorXd::Ones(3), MatrixXd::Ones(4, 1), 0.1),
                      DimensionError);
    REQUIRE_THROWS_AS(lasso_fit(VectorXd::Ones(3), MatrixXd::Ones(3, 1), -0.5),
                      ConfigError);
    REQUIRE_THROWS_AS(
        lasso_fit(VectorXd::Ones(3), MatrixXd::Ones(3, 2), 0.1, {"a"}),
        DimensionError);
}

TEST_CASE("default_lasso_lambda follows the plug-in rule", "[partialing]") {
    const VectorXd v = random_matrix(38, 30, 1).col(0);
    const double mean = v.mean();
    const double sigma_hat =
        std::sqrt((v.array() - mean).square().sum() / 30.0);
    const double expected = 1.1 * sigma_hat * std::sqrt(2.0 * std::log(30.0) / 30.0);
    REQUIRE(default_lasso_lambda(v, 4) == Approx(expected).margin(1e-15));

    // p > n switches the log argument to p.
    const double expected_p =
        1.1 * sigma_hat * std::sqrt(2.0 * std::log(50.0) / 30.0);
    REQUIRE(default_lasso_lambda(v, 50) == Approx(expected_p).margin(1e-15));

    REQUIRE_THROWS_AS(default_lasso_lambda(VectorXd::Ones(1), 2),
                      DimensionError);
}

TEST_CASE("lasso_partial_out mirrors the OLS block structure", "[partialing]") {
    const Dataset data = testutil::strong_dataset(45, 11, 1, 1, 2);
    const auto resid = lasso_partial_out(data, 0.0);
    resid.validate();
    REQUIRE(resid.method == ResidualizedDataset::Method::lasso);

    // With zero penalty the fits agree with OLS partialing to solver
    // tolerance.
    const auto ols = partial_out(data);
    REQUIRE((resid.y1 - ols.y1).cwiseAbs().maxCoeff() < 1e-5);
    REQUIRE((resid.p2 - ols.p2).cwiseAbs().maxCoeff() < 1e-5);

    // The default penalty (lambda < 0) also produces a valid block set.
    const auto shrunk = lasso_partial_out(data);
    shrunk.validate();
    REQUIRE(shrunk.method == ResidualizedDataset::Method::lasso);
}
