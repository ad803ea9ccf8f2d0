#include <catch2/catch_amalgamated.hpp>

#include "ngsvar/simulation.hpp"
#include "ngsvar/tuning.hpp"

using namespace ngsvar;

TEST_CASE("lambda grid: leading zero plus geometric points") {
    auto grid = make_lambda_grid();
    REQUIRE(grid.size() == 41);
    CHECK(grid[0] == 0.0);
    CHECK_THAT(grid[1], Catch::Matchers::WithinRel(1e-4, 1e-12));
    CHECK_THAT(grid.back(), Catch::Matchers::WithinRel(1e3, 1e-12));
    for (std::size_t i = 2; i < grid.size(); ++i) {
        const double ratio = grid[i] / grid[i - 1];
        CHECK_THAT(ratio, Catch::Matchers::WithinRel(grid[2] / grid[1], 1e-9));
    }
}

TEST_CASE("fold plans are deterministic and cover both directions") {
    FoldPlan plan = make_folds(100, 10, 42);
    FoldPlan again = make_folds(100, 10, 42);
    REQUIRE(plan.first.size() == 10);
    for (std::size_t r = 0; r < plan.first.size(); ++r) {
        CHECK(plan.first[r] == again.first[r]);
        // Each repetition splits the index range into two disjoint halves.
        std::vector<char> seen(100, 0);
        for (int i : plan.first[r]) seen[static_cast<std::size_t>(i)] += 1;
        for (int i : plan.second[r]) seen[static_cast<std::size_t>(i)] += 1;
        for (char c : seen) CHECK(c == 1);
    }
    FoldPlan other = make_folds(100, 10, 43);
    CHECK(plan.first[0] != other.first[0]);
}

namespace {

CvReport synthetic_report(const std::vector<double>& med,
                          const std::vector<double>& q40,
                          const std::vector<double>& q60) {
    CvReport r;
    r.grid = make_lambda_grid(1e-2, 1e2, static_cast<int>(med.size()) - 1);
    r.median_curve = med;
    r.q40_curve = q40;
    r.q60_curve = q60;
    r.disqualified.assign(med.size(), 0);
    return r;
}

}  // namespace

TEST_CASE("selection climbs while the loss keeps improving") {
    // Decreasing curves all the way: the largest grid value wins.
    std::vector<double> med = {9, 8, 7, 6, 5};
    std::vector<double> q40 = {8, 7, 6, 5, 4};
    std::vector<double> q60 = {10, 9, 8, 7, 6};
    CvReport r = synthetic_report(med, q40, q60);
    select_lambda(r);
    CHECK(r.selected_index == 4);
    CHECK(r.lambda_selected == r.grid.back());
    CHECK_FALSE(r.at_grid_min);
}

TEST_CASE("selection stops where the curve turns") {
    // Median rises above the preceding q60 floor after index 2.
    std::vector<double> med = {9, 6, 5, 12, 14};
    std::vector<double> q40 = {8, 5, 4, 11, 13};
    std::vector<double> q60 = {10, 7, 6, 13, 15};
    CvReport r = synthetic_report(med, q40, q60);
    select_lambda(r);
    CHECK(r.selected_index == 2);
}

TEST_CASE("flat curves climb to the top of the grid") {
    // Statistically indistinguishable losses never breach the quantile
    // floor, so a free penalty is taken at full strength.
    std::vector<double> med(6, 1.0), q40(6, 0.9), q60(6, 1.1);
    CvReport r = synthetic_report(med, q40, q60);
    select_lambda(r);
    CHECK(r.selected_index == 5);
    CHECK_FALSE(r.at_grid_min);
}

TEST_CASE("immediately rising curves stay at the grid minimum") {
    std::vector<double> med = {9, 5, 6, 7, 8};
    std::vector<double> q40 = {8, 4, 5, 6, 7};
    std::vector<double> q60 = {10, 6, 7, 8, 9};
    CvReport r = synthetic_report(med, q40, q60);
    select_lambda(r);
    CHECK(r.selected_index == 1);
    CHECK(r.at_grid_min);
}

TEST_CASE("selected lambda is min of the two rule variants") {
    std::vector<double> med = {9, 6, 5, 4.5, 12};
    std::vector<double> q40 = {8, 5, 4, 6.5, 11};
    std::vector<double> q60 = {10, 7, 6, 5.5, 13};
    CvReport r = synthetic_report(med, q40, q60);
    select_lambda(r);
    CHECK(r.lambda_selected == std::min(r.lambda_a, r.lambda_b));
}

TEST_CASE("literal rule variant is exposed") {
    std::vector<double> med = {9, 8, 7, 6, 5};
    std::vector<double> q40 = {8, 7, 6, 5, 4};
    std::vector<double> q60 = {10, 9, 8, 7, 6};
    CvReport r = synthetic_report(med, q40, q60);
    select_lambda(r, /*literal_rule=*/true);
    // The literal reading compares each lambda against smaller grid values
    // only, which is vacuous at the first positive point.
    CHECK(r.selected_index == 1);
    CHECK(r.at_grid_min);
}

TEST_CASE("disqualified smallest grid value is an error") {
    std::vector<double> med = {9, 8, 7};
    CvReport r = synthetic_report(med, med, med);
    r.disqualified[1] = 1;
    r.median_curve[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(select_lambda(r), NumericalError);
}

TEST_CASE("cv path: determinism and the diagnostic zero column") {
    auto dgp = presets::mc_dgp(300);
    Matrix u = simulate_svar(dgp, 57).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions eopts;
    eopts.anchor = presets::mc_b0();
    EstimationResult first = estimate_csue(u, ms, eopts);
    AdaptiveWeights aw = compute_adaptive_weights(first, presets::restrictions_r1());
    auto grid = make_lambda_grid(1e-3, 10.0, 6);
    CvOptions opts;
    opts.repetitions = 4;
    opts.seed = 99;
    CvReport a = cv_path(u, ms, aw, first.W, first.B, grid, opts);
    CvReport b = cv_path(u, ms, aw, first.W, first.B, grid, opts);
    REQUIRE(a.losses.rows() == 4);
    REQUIRE(a.grid.front() == 0.0);
    CHECK((a.losses - b.losses).cwiseAbs().maxCoeff() == 0.0);
    // Loss curves are finite for every grid value here.
    for (double v : a.median_curve) CHECK(std::isfinite(v));
    select_lambda(a);
    CHECK(a.selected_index >= 1);  // the zero column is diagnostic only
}

TEST_CASE("ridge pipeline selects a large lambda under correct restrictions") {
    auto dgp = presets::mc_dgp(500);
    Matrix u = simulate_svar(dgp, 63).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions eopts;
    eopts.anchor = presets::mc_b0();
    CvOptions cv_opts;
    cv_opts.seed = 5;
    RidgeFit fit = ridge_pipeline(u, ms, presets::restrictions_r1(),
                                  make_lambda_grid(), cv_opts, eopts);
    CHECK(fit.final.lambda == fit.cv.lambda_selected);
    // Penalized cells end close to zero.
    for (const auto& [i, j] : presets::restrictions_r1().cells)
        CHECK(std::abs(fit.final.B(i, j)) < 0.5);
    CHECK_THAT(fit.final.B(0, 0), Catch::Matchers::WithinAbs(10.0, 1.2));
}

TEST_CASE("selection drops a blatantly false restriction") {
    auto dgp = presets::mc_dgp(1000);
    Matrix u = simulate_svar(dgp, 69).values;
    MomentSet ms = enumerate_moments(4);
    EstimationOptions eopts;
    eopts.anchor = presets::mc_b0();
    CvOptions cv_opts;
    cv_opts.seed = 7;
    SelectionFit fit = estimate_with_selection(u, ms, presets::restrictions_r2(),
                                               0.5, make_lambda_grid(), cv_opts,
                                               eopts);
    // b34 = 5 in truth: the (2,3) cell must not survive screening.
    bool kept_false = false;
    for (const auto& c : fit.kept.cells)
        if (c == std::make_pair(2, 3)) kept_false = true;
    CHECK_FALSE(kept_false);
    CHECK_THAT(fit.final.B(2, 3), Catch::Matchers::WithinAbs(5.0, 1.5));
}

TEST_CASE("selection threshold must be positive") {
    Matrix u = Matrix::Random(100, 2);
    MomentSet ms = enumerate_moments(2);
    RestrictionSet rs;
    rs.cells = {{0, 1}};
    CHECK_THROWS_AS(
        estimate_with_selection(u, ms, rs, 0.0, make_lambda_grid(), {}, {}),
        ValidationError);
}
