#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ngsvar/var.hpp"

using namespace ngsvar;

TEST_CASE("AR(1) coefficient is recovered") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> norm(0.0, 1.0);
    const int T = 10000;
    SeriesPanel panel;
    panel.values.resize(T, 1);
    double y = 0.0;
    for (int t = 0; t < T; ++t) {
        y = 0.5 * y + norm(rng);
        panel.values(t, 0) = y;
    }
    ReducedForm rf = fit_var(panel, 1);
    REQUIRE(rf.lag_coeffs.size() == 1);
    CHECK_THAT(rf.lag_coeffs[0](0, 0), Catch::Matchers::WithinAbs(0.5, 0.05));
    CHECK(rf.residuals.rows() == T - 1);
}

TEST_CASE("lag-zero fit returns demeaned data") {
    SeriesPanel panel;
    panel.values.resize(4, 2);
    panel.values << 1, 2, 3, 4, 5, 6, 7, 8;
    ReducedForm rf = fit_var(panel, 0);
    CHECK(rf.residuals.rows() == 4);
    CHECK_THAT(rf.residuals.col(0).mean(), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(rf.intercept(0), Catch::Matchers::WithinAbs(4.0, 1e-12));
}

TEST_CASE("companion matrix and stability") {
    ReducedForm rf;
    rf.p = 2;
    rf.intercept = Vector::Zero(2);
    Matrix a1(2, 2), a2(2, 2);
    a1 << 0.5, 0.1, 0.0, 0.3;
    a2 << 0.1, 0.0, 0.0, 0.1;
    rf.lag_coeffs = {a1, a2};
    Matrix c = companion_matrix(rf);
    REQUIRE(c.rows() == 4);
    CHECK(c.block(0, 0, 2, 2) == a1);
    CHECK(c.block(0, 2, 2, 2) == a2);
    CHECK(c.block(2, 0, 2, 2) == Matrix::Identity(2, 2));
    CHECK(is_stable(rf));

    rf.lag_coeffs[0](0, 0) = 1.2;
    rf.lag_coeffs[1](0, 0) = 0.3;
    CHECK_FALSE(is_stable(rf));
}

TEST_CASE("residual covariance uses 1/T scaling") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> norm(0.0, 2.0);
    Matrix u(5000, 1);
    for (int t = 0; t < u.rows(); ++t) u(t, 0) = norm(rng);
    Matrix s = residual_covariance(u);
    CHECK_THAT(s(0, 0), Catch::Matchers::WithinAbs(4.0, 0.3));
}

TEST_CASE("collinear regressors are rejected") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> norm(0.0, 1.0);
    SeriesPanel panel;
    panel.values.resize(50, 2);
    for (int t = 0; t < 50; ++t) {
        panel.values(t, 0) = norm(rng);
        panel.values(t, 1) = 2.0 * panel.values(t, 0);  // duplicated series
    }
    CHECK_THROWS_AS(fit_var(panel, 3), NumericalError);
}

TEST_CASE("too-short samples are rejected") {
    SeriesPanel panel;
    panel.values = Matrix::Random(4, 3);
    CHECK_THROWS_AS(fit_var(panel, 2), ValidationError);
}
