#include <catch2/catch_amalgamated.hpp>

#include "ngsvar/estimator.hpp"
#include "ngsvar/simulation.hpp"

using namespace ngsvar;

TEST_CASE("recursive estimator is the lower Cholesky factor") {
    // Residuals engineered so the sample covariance is exactly [[4,2],[2,5]].
    Matrix target(2, 2);
    target << 4, 2, 2, 5;
    Eigen::LLT<Matrix> llt(target);
    Matrix L = llt.matrixL();
    // Orthonormal rows scaled by sqrt(T) have identity sample covariance.
    const int T = 4;
    Matrix q(T, 2);
    q << 1, 0, -1, 0, 0, 1, 0, -1;
    Matrix innov = q * std::sqrt(T / 2.0);
    Matrix u = innov * L.transpose();
    EstimationResult r = estimate_recursive(u);
    Matrix expect(2, 2);
    expect << 2, 0, 1, 2;
    CHECK((r.B - expect).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((r.B - L).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("csue recovers the design matrix at large T") {
    auto dgp = presets::mc_dgp(8000);
    Matrix u = simulate_svar(dgp, 17).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions opts;
    opts.anchor = presets::mc_b0();
    EstimationResult r = estimate_csue(u, ms, opts);
    CHECK(r.converged);
    CHECK(r.labeled);
    CHECK((r.B - presets::mc_b0()).cwiseAbs().maxCoeff() < 0.6);
    CHECK_THAT(r.B(0, 0), Catch::Matchers::WithinAbs(10.0, 0.35));
    // Shocks come back with roughly unit variance.
    Vector v = (r.shocks.array().square().colwise().sum() / r.shocks.rows()).matrix();
    for (int i = 0; i < 4; ++i) CHECK_THAT(v(i), Catch::Matchers::WithinAbs(1.0, 0.1));
}

TEST_CASE("two-step weighting reuses the step-one scale structure") {
    auto dgp = presets::mc_dgp(600);
    Matrix u = simulate_svar(dgp, 19).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions opts;
    opts.anchor = presets::mc_b0();
    EstimationResult r = estimate_csue(u, ms, opts);
    REQUIRE(r.W.rows() == ms.size());
    Eigen::SelfAdjointEigenSolver<Matrix> es(r.W);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("adaptive weights: B-type formula and Gaussian correction") {
    auto dgp = presets::mc_dgp(1500);
    Matrix u = simulate_svar(dgp, 23).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions opts;
    opts.anchor = presets::mc_b0();
    EstimationResult first = estimate_csue(u, ms, opts);
    RestrictionSet rs = presets::restrictions_r1();
    AdaptiveWeights aw = compute_adaptive_weights(first, rs);
    CHECK(aw.v.rows() == 4);
    for (const auto& [i, j] : rs.cells) {
        if (std::isinf(aw.v(i, j))) continue;  // clamped sentinel
        CHECK(aw.v(i, j) > 0.0);
        // Weight exceeds the plain reciprocal square: the non-Gaussianity
        // correction factor is >= 1.
        CHECK(aw.v(i, j) >= 1.0 / (first.B(i, j) * first.B(i, j)) - 1e-9);
    }
    // Free cells carry no weight.
    CHECK(aw.v(0, 0) == 0.0);
    CHECK(aw.v(2, 0) == 0.0);
}

TEST_CASE("short samples are rejected by the weight builder") {
    Matrix b = Matrix::Identity(2, 2);
    EstimationResult fake;
    fake.B = b;
    fake.shocks = Matrix::Random(5, 2);
    RestrictionSet rs;
    rs.cells = {{0, 1}};
    CHECK_THROWS_AS(compute_adaptive_weights(fake, rs), ValidationError);
}

TEST_CASE("restriction validation") {
    RestrictionSet rs;
    rs.cells = {{0, 0}};
    CHECK_THROWS_AS(rs.validate(3), ValidationError);
    rs.cells = {{0, 5}};
    CHECK_THROWS_AS(rs.validate(3), ValidationError);
    rs.cells = {{0, 1}, {0, 1}};
    CHECK_THROWS_AS(rs.validate(3), ValidationError);
    rs.cells = {{0, 1}, {1, 0}};
    CHECK_NOTHROW(rs.validate(3));
}

TEST_CASE("large penalty drives restricted cells toward zero") {
    auto dgp = presets::mc_dgp(1000);
    Matrix u = simulate_svar(dgp, 29).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions opts;
    opts.anchor = presets::mc_b0();
    EstimationResult first = estimate_csue(u, ms, opts);
    RestrictionSet rs = presets::restrictions_r1();
    AdaptiveWeights aw = compute_adaptive_weights(first, rs);
    EstimationResult penalized = estimate_ridge(u, ms, aw, 1e3, first.W, {first.B},
                                                presets::mc_b0());
    for (const auto& [i, j] : rs.cells)
        CHECK(std::abs(penalized.B(i, j)) < 0.05);
    // Unrestricted elements stay near the design values.
    CHECK_THAT(penalized.B(0, 0), Catch::Matchers::WithinAbs(10.0, 1.0));
    CHECK_THAT(penalized.B(2, 1), Catch::Matchers::WithinAbs(5.0, 1.0));
    CHECK(penalized.lambda == 0.0);  // set by the pipeline, not the fitter
}

TEST_CASE("zero penalty reproduces the unpenalized objective") {
    auto dgp = presets::mc_dgp(400);
    Matrix u = simulate_svar(dgp, 31).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions opts;
    opts.anchor = presets::mc_b0();
    EstimationResult first = estimate_csue(u, ms, opts);
    RestrictionSet rs = presets::restrictions_r1();
    AdaptiveWeights aw = compute_adaptive_weights(first, rs);
    EstimationResult zero = estimate_ridge(u, ms, aw, 0.0, first.W, {first.B},
                                           presets::mc_b0());
    CHECK_THAT(zero.objective, Catch::Matchers::WithinAbs(first.objective, 1e-6));
}

TEST_CASE("A-type restrictions shrink inverse elements") {
    auto dgp = presets::a_type_dgp(2000);
    Matrix u = simulate_svar(dgp, 37).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions opts;
    opts.anchor = dgp.B0;
    EstimationResult first = estimate_csue(u, ms, opts);
    RestrictionSet rs = presets::a_type_r1();
    AdaptiveWeights aw = compute_adaptive_weights(first, rs);
    EstimationResult penalized = estimate_ridge(u, ms, aw, 100.0, first.W,
                                                {first.B}, dgp.B0);
    Matrix A = penalized.B.inverse();
    for (const auto& [i, j] : rs.cells)
        CHECK(std::abs(A(i, j)) < 0.01);
}

TEST_CASE("A-type report divides by the diagonal") {
    Matrix b(2, 2);
    b << 2, 0, 1, 2;
    ATypeReport rep = to_a_type_report(b);
    // A = inverse(B) = [[0.5, 0], [-0.25, 0.5]]
    CHECK_THAT(rep.A(1, 0), Catch::Matchers::WithinAbs(-0.25, 1e-12));
    CHECK(rep.coefficients(0, 0) == 0.0);
    CHECK_THAT(rep.coefficients(1, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("estimation result is labeled against the anchor") {
    auto dgp = presets::mc_dgp(500);
    Matrix u = simulate_svar(dgp, 43).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions opts;
    opts.anchor = presets::mc_b0();
    EstimationResult r = estimate_csue(u, ms, opts);
    CHECK(in_representative_set(r.B, presets::mc_b0()));
}
