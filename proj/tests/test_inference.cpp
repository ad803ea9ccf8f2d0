#include <catch2/catch_amalgamated.hpp>

#include "ngsvar/inference.hpp"
#include "ngsvar/simulation.hpp"

using namespace ngsvar;

namespace {

ReducedForm small_var() {
    ReducedForm rf;
    rf.p = 1;
    rf.intercept = Vector::Zero(2);
    Matrix a1(2, 2);
    a1 << 0.5, 0.1, -0.2, 0.3;
    rf.lag_coeffs = {a1};
    return rf;
}

}  // namespace

TEST_CASE("impulse responses match brute-force propagation") {
    ReducedForm rf = small_var();
    Matrix b(2, 2);
    b << 1.0, 0.0, 0.4, 1.2;
    ImpulseResponses irf = impulse_responses(rf, b, 6);
    REQUIRE(irf.psi.size() == 7);
    CHECK(irf.psi[0] == b);

    // Propagate a unit shock through the recursion by hand.
    for (int j = 0; j < 2; ++j) {
        Vector y = b.col(j);
        for (int h = 1; h <= 6; ++h) {
            y = rf.lag_coeffs[0] * y;
            for (int i = 0; i < 2; ++i)
                CHECK_THAT(irf.psi[static_cast<std::size_t>(h)](i, j),
                           Catch::Matchers::WithinAbs(y(i), 1e-12));
        }
    }
}

TEST_CASE("impulse responses match simulated trajectories with two lags") {
    ReducedForm rf;
    rf.p = 2;
    rf.intercept = Vector::Zero(2);
    Matrix a1(2, 2), a2(2, 2);
    a1 << 0.4, 0.1, 0.0, 0.2;
    a2 << 0.1, 0.0, 0.05, 0.1;
    rf.lag_coeffs = {a1, a2};
    Matrix b(2, 2);
    b << 2.0, 0.0, 1.0, 1.5;
    ImpulseResponses irf = impulse_responses(rf, b, 8);
    // Simulate the difference between a shocked and an unshocked path.
    for (int j = 0; j < 2; ++j) {
        std::vector<Vector> path = {Vector::Zero(2), Vector::Zero(2)};
        Vector e = Vector::Zero(2);
        e(j) = 1.0;
        for (int h = 0; h <= 8; ++h) {
            Vector y = Vector::Zero(2);
            if (h == 0) y += b * e;
            const std::size_t s = path.size();
            y += a1 * path[s - 1] + a2 * path[s - 2];
            path.push_back(y);
            for (int i = 0; i < 2; ++i)
                CHECK_THAT(irf.psi[static_cast<std::size_t>(h)](i, j),
                           Catch::Matchers::WithinAbs(y(i), 1e-12));
        }
    }
}

TEST_CASE("FEVD rows sum to one at every horizon") {
    ReducedForm rf = small_var();
    Matrix b(2, 2);
    b << 1.0, 0.3, 0.4, 1.2;
    auto shares = fevd(impulse_responses(rf, b, 10));
    REQUIRE(shares.size() == 11);
    for (const auto& m : shares)
        for (int i = 0; i < 2; ++i)
            CHECK_THAT(m.row(i).sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("historical decomposition reconstructs the series") {
    auto dgp = presets::lagged_common_volatility_dgp(300);
    SeriesPanel panel = simulate_svar(dgp, 77);
    ReducedForm rf = fit_var(panel, 1);
    EstimationResult rec = estimate_recursive(rf.residuals);
    HistoricalDecomposition hd = historical_decomposition(panel, rf, rec.B);
    const int T = static_cast<int>(hd.baseline.rows());
    Matrix recon = hd.baseline;
    for (const auto& c : hd.contributions) recon += c;
    const Matrix actual = panel.values.bottomRows(T);
    const double scale = actual.cwiseAbs().maxCoeff();
    CHECK((recon - actual).cwiseAbs().maxCoeff() / scale < 1e-8);
}

TEST_CASE("bootstrap bands collapse for a deterministic refitter") {
    auto dgp = presets::mc_dgp(200);
    SeriesPanel panel = simulate_svar(dgp, 81);
    ReducedForm rf = fit_var(panel, 0);
    Matrix b = presets::mc_b0();
    ImpulseResponses point = impulse_responses(rf, b, 2);
    RefitFn refit = [&](const SeriesPanel& bp) {
        BootstrapRefit br;
        br.rf = fit_var(bp, 0);
        br.B = b;  // ignores the draw entirely
        return br;
    };
    BootstrapOptions opts;
    opts.draws = 20;
    opts.horizons = 2;
    BootstrapBands bands = bootstrap_bands(panel, rf, point, refit, opts);
    for (std::size_t l = 0; l < bands.levels.size(); ++l)
        for (int h = 0; h <= 2; ++h) {
            CHECK((bands.upper[l][static_cast<std::size_t>(h)] -
                   bands.lower[l][static_cast<std::size_t>(h)])
                      .cwiseAbs()
                      .maxCoeff() < 1e-12);
        }
}

TEST_CASE("bootstrap bands are centered on the point estimate") {
    auto dgp = presets::mc_dgp(300);
    SeriesPanel panel = simulate_svar(dgp, 83);
    ReducedForm rf = fit_var(panel, 0);
    MomentSet ms = enumerate_moments(4);
    EstimationOptions eo;
    eo.anchor = presets::mc_b0();
    EstimationResult est = estimate_csue(rf.residuals, ms, eo);
    ImpulseResponses point = impulse_responses(rf, est.B, 0);
    RefitFn refit = [&](const SeriesPanel& bp) {
        BootstrapRefit br;
        br.rf = fit_var(bp, 0);
        EstimationOptions o;
        o.anchor = est.B;
        o.rotation_starts = 4;
        br.B = estimate_csue(br.rf.residuals, ms, o).B;
        return br;
    };
    BootstrapOptions opts;
    opts.draws = 30;
    opts.horizons = 0;
    opts.seed = 3;
    BootstrapBands bands = bootstrap_bands(panel, rf, point, refit, opts);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            CHECK(bands.lower[0][0](i, j) <= est.B(i, j) + 1e-12);
            CHECK(bands.upper[0][0](i, j) >= est.B(i, j) - 1e-12);
        }
    // Same seed reproduces the bands exactly.
    BootstrapBands again = bootstrap_bands(panel, rf, point, refit, opts);
    CHECK((again.lower[0][0] - bands.lower[0][0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shock diagnostics: gaussian vs mixture") {
    ShockSpec spec;
    spec.shocks = {ShockSpec::skewed_mixture(), ShockSpec::gaussian()};
    Matrix eps = draw_shocks(spec, 200000, 2, 19);
    ShockDiagnostics d = shock_diagnostics(eps);
    CHECK_THAT(d.skewness(0), Catch::Matchers::WithinAbs(0.9, 0.05));
    CHECK_THAT(d.excess_kurtosis(0), Catch::Matchers::WithinAbs(2.4, 0.25));
    CHECK_THAT(d.skewness(1), Catch::Matchers::WithinAbs(0.0, 0.05));
    CHECK(d.jb_pvalue(0) < 1e-6);
    CHECK(d.jb_pvalue(1) > 1e-4);
    // Independent unit-variance shocks: E[e_i^2 e_j^2] near 1.
    CHECK_THAT(d.squared_comoment(0, 1), Catch::Matchers::WithinAbs(1.0, 0.05));
}

TEST_CASE("common volatility shows up in the squared comoments") {
    ShockSpec spec = presets::common_volatility_shocks(4);
    Matrix eps = draw_shocks(spec, 200000, 4, 23);
    ShockDiagnostics d = shock_diagnostics(eps);
    CHECK(d.squared_comoment(2, 3) > 1.15);
    CHECK(d.squared_comoment(0, 3) > 1.02);
}
