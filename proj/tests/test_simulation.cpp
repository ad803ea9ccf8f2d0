#include <catch2/catch_amalgamated.hpp>

#include "ngsvar/simulation.hpp"
#include "ngsvar/var.hpp"

using namespace ngsvar;

TEST_CASE("mixture shocks have the documented shape") {
    ShockSpec spec = ShockSpec::iid_mixture(1);
    Matrix eps = draw_shocks(spec, 1000000, 1, 5);
    const auto col = eps.col(0).array();
    const double mean = col.mean();
    const double var = (col - mean).square().mean();
    const double skew = ((col - mean) / std::sqrt(var)).cube().mean();
    const double kurt = ((col - mean) / std::sqrt(var)).pow(4).mean() - 3.0;
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 0.01));
    CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 0.02));
    CHECK_THAT(skew, Catch::Matchers::WithinAbs(0.9, 0.03));
    CHECK_THAT(kurt, Catch::Matchers::WithinAbs(2.4, 0.15));
}

TEST_CASE("common-volatility shocks stay unit variance but comove in squares") {
    ShockSpec spec = presets::common_volatility_shocks(3);
    const int T = 200000;
    Matrix eps = draw_shocks(spec, T, 3, 9);
    for (int j = 0; j < 3; ++j) {
        const double var = eps.col(j).array().square().mean();
        // variance estimate SE is roughly sqrt(kurtosis-ish / T); 3 SE margin
        CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 0.05));
    }
    const auto sq = eps.array().square();
    const double c01 = (sq.col(0) * sq.col(1)).mean();
    const double c12 = (sq.col(1) * sq.col(2)).mean();
    CHECK(c01 > 1.05);
    CHECK(c12 > c01);  // larger sigmas comove more
}

TEST_CASE("simulated shocks hit the structural covariance") {
    DgpSpec dgp = presets::mc_dgp(400000);
    SeriesPanel panel = simulate_svar(dgp, 13);
    const Matrix u = panel.values;
    const Matrix cov = (u.transpose() * u) / static_cast<double>(u.rows());
    const Matrix target = presets::mc_b0() * presets::mc_b0().transpose();
    CHECK((cov - target).cwiseAbs().maxCoeff() / target.cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("proxy design: the fourth variable loads on shocks 1 and 4 only") {
    DgpSpec dgp = presets::proxy_dgp(200000);
    SeriesPanel panel = simulate_svar(dgp, 17);
    const Matrix b0 = presets::proxy_b0();
    CHECK(b0(3, 0) == 5.0);
    CHECK(b0(3, 1) == 0.0);
    CHECK(b0(3, 2) == 0.0);
    CHECK(b0(3, 3) == 10.0);
    // Recover row four by regressing u_4 on the true shocks.
    Matrix eps = innovations(b0, panel.values);
    Vector coef = (eps.transpose() * eps)
                      .ldlt()
                      .solve(eps.transpose() * panel.values.col(3));
    CHECK_THAT(coef(0), Catch::Matchers::WithinAbs(5.0, 0.1));
    CHECK_THAT(coef(1), Catch::Matchers::WithinAbs(0.0, 0.1));
    CHECK_THAT(coef(3), Catch::Matchers::WithinAbs(10.0, 0.1));
}

TEST_CASE("lagged simulation recovers the autoregressive matrix") {
    DgpSpec dgp = presets::lagged_common_volatility_dgp(8000);
    SeriesPanel panel = simulate_svar(dgp, 21);
    ReducedForm rf = fit_var(panel, 1);
    CHECK((rf.lag_coeffs[0] - presets::lagged_a1()).cwiseAbs().maxCoeff() < 0.05);
    CHECK(is_stable(rf));
}

TEST_CASE("explosive dynamics are rejected") {
    DgpSpec dgp = presets::mc_dgp(500);
    dgp.lags = {Matrix::Identity(4, 4) * 1.01};
    CHECK_THROWS_AS(simulate_svar(dgp, 1), ValidationError);
}

TEST_CASE("simulation is deterministic in the seed") {
    DgpSpec dgp = presets::mc_dgp(300);
    SeriesPanel a = simulate_svar(dgp, 42);
    SeriesPanel b = simulate_svar(dgp, 42);
    SeriesPanel c = simulate_svar(dgp, 43);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("shock spec validation") {
    ShockSpec spec = ShockSpec::iid_mixture(3);
    CHECK_THROWS_AS(spec.validate(4), ValidationError);
    ShockSpec bad = ShockSpec::iid_mixture(2);
    bad.shocks[0].p1 = 1.5;
    CHECK_THROWS_AS(bad.validate(2), ValidationError);
    ShockSpec cv = presets::common_volatility_shocks(2);
    cv.common_volatility->sigma = Vector::Ones(3);
    CHECK_THROWS_AS(cv.validate(2), ValidationError);
}

TEST_CASE("experiment runner aggregates and reproduces") {
    DgpSpec dgp = presets::mc_dgp(400);
    std::vector<EstimatorRecipe> recipes = {EstimatorRecipe::csue()};
    recipes[0].name = "csue";
    ExperimentReport rep = run_experiment(dgp, recipes, 4, 99);
    REQUIRE(rep.recipes.size() == 1);
    const auto& r = rep.recipes[0];
    CHECK(r.successes == 4);
    CHECK(r.failures == 0);
    CHECK(r.average.rows() == 4);
    CHECK(std::abs(r.average(0, 0)) > 1.0);  // not degenerate
    CHECK(r.mse.minCoeff() >= 0.0);

    ExperimentReport again = run_experiment(dgp, recipes, 4, 99);
    CHECK((again.recipes[0].average - r.average).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("recursive recipe in the runner tracks a triangular truth") {
    DgpSpec dgp;
    dgp.B0 = presets::mc_b0();
    dgp.B0(2, 3) = 0.0;  // make the truth lower triangular
    dgp.shocks = ShockSpec::iid_mixture(4);
    dgp.T = 4000;
    EstimatorRecipe rec;
    rec.kind = EstimatorRecipe::Kind::Recursive;
    rec.name = "recursive";
    ExperimentReport rep = run_experiment(dgp, {rec}, 3, 7);
    CHECK((rep.recipes[0].average - dgp.B0).cwiseAbs().maxCoeff() < 1.0);
}
