#pragma once

#include <numeric>
#include <vector>

#include "ngsvar/estimator.hpp"

namespace ngsvar {

// Penalty grid: a zero entry first (diagnostic only, never selectable),
// then `count` geometrically spaced values. Stored ascending; the search
// itself walks it from the largest value down.
inline std::vector<double> make_lambda_grid(double lo = 1e-4, double hi = 1e3,
                                            int count = 40) {
    if (!(lo > 0.0) || !(hi > lo) || count < 2)
        throw ValidationError("bad lambda grid parameters");
    std::vector<double> grid;
    grid.push_back(0.0);
    const double step = std::log(hi / lo) / (count - 1);
    for (int i = 0; i < count; ++i) grid.push_back(lo * std::exp(step * i));
    return grid;
}

// One repetition: a random split of the rows into two folds. Both
// directions (estimate on A / score on B and the reverse) are used.
struct FoldPlan {
    std::vector<std::vector<int>> first;   // rows of fold A per repetition
    std::vector<std::vector<int>> second;  // rows of fold B per repetition
};

// Random partitions by default; contiguous halves behind the flag (the
// residual rows are treated as exchangeable after the VAR fit).
inline FoldPlan make_folds(int T, int repetitions, std::uint64_t seed,
                           bool contiguous = false) {
    if (T < 4) throw ValidationError("sample too short to split into folds");
    FoldPlan plan;
    for (int r = 0; r < repetitions; ++r) {
        std::vector<int> idx(static_cast<std::size_t>(T));
        std::iota(idx.begin(), idx.end(), 0);
        if (!contiguous) {
            std::mt19937_64 rng(subseed(seed, static_cast<std::uint64_t>(r)));
            std::shuffle(idx.begin(), idx.end(), rng);
        }
        const int half = T / 2;
        plan.first.emplace_back(idx.begin(), idx.begin() + half);
        plan.second.emplace_back(idx.begin() + half, idx.end());
    }
    return plan;
}

struct CvOptions {
    int repetitions = 10;
    std::uint64_t seed = 1;
    double variance_penalty = 1.0;  // fold fits keep innovation variances near 1
    OptimOptions optim;
    bool literal_rule = false;      // see select_lambda
    bool contiguous_folds = false;
};

struct CvReport {
    std::vector<double> grid;            // including the leading zero
    Matrix losses;                       // repetitions x grid
    std::vector<double> median_curve;    // per grid value
    std::vector<double> q40_curve;
    std::vector<double> q60_curve;
    double lambda_a = 0.0;
    double lambda_b = 0.0;
    double lambda_selected = 0.0;
    int selected_index = 0;
    bool at_grid_min = false;
    std::vector<char> disqualified;  // per grid value: too many failed fold fits
    std::uint64_t seed = 0;
};

namespace detail {

inline Matrix take_rows(const Matrix& m, const std::vector<int>& rows) {
    Matrix out(static_cast<int>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<int>(r)) = m.row(rows[r]);
    return out;
}

// Weighted let-out loss: plain sample moments on the held-out rows, squared
// and weighted so conditions of different orders contribute comparably.
inline double letout_loss(const MomentKernel& kernel, const Matrix& B, const Vector& w) {
    Vector g = kernel.moments(B);
    return (w.array() * g.array().square()).sum();
}

}  // namespace detail

// Loss curves over the penalty grid. For each repetition and each fold
// direction: fit on the estimation fold at every grid value (walking from
// the largest lambda down) and score on the let-out fold. Each grid cell is
// minimized from two starts, the full-sample unpenalized estimate and a
// warm start (at the largest lambda: the estimation-fold fit with the
// restricted cells held at zero; afterwards: the previous grid cell's
// winner), keeping the better estimation-fold objective.
inline CvReport cv_path(const Matrix& residuals, const MomentSet& ms,
                        const AdaptiveWeights& aw, const Matrix& W,
                        const Matrix& full_estimate, const std::vector<double>& grid,
                        const CvOptions& opts = {}) {
    const int T = static_cast<int>(residuals.rows());
    const int G = static_cast<int>(grid.size());
    const Vector wts = normal_variance_weights(ms);
    const FoldPlan folds =
        make_folds(T, opts.repetitions, opts.seed, opts.contiguous_folds);

    CvReport report;
    report.grid = grid;
    report.seed = opts.seed;
    report.losses = Matrix::Zero(opts.repetitions, G);

    // all restricted cells, used for the binding-constraint warm start
    std::vector<std::pair<int, int>> binding = aw.clamped;
    for (int i = 0; i < aw.v.rows(); ++i)
        for (int j = 0; j < aw.v.cols(); ++j)
            if (aw.v(i, j) > 0.0) binding.emplace_back(i, j);

    // grid order: largest lambda first, zero (diagnostic) last
    std::vector<int> order(static_cast<std::size_t>(G));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return grid[static_cast<std::size_t>(a)] > grid[static_cast<std::size_t>(b)]; });

    parallel_for(opts.repetitions, [&](std::int64_t rep) {
        Vector loss_sum = Vector::Zero(G);
        for (int dir = 0; dir < 2; ++dir) {
            const auto& est_rows = dir == 0 ? folds.first[static_cast<std::size_t>(rep)]
                                            : folds.second[static_cast<std::size_t>(rep)];
            const auto& out_rows = dir == 0 ? folds.second[static_cast<std::size_t>(rep)]
                                            : folds.first[static_cast<std::size_t>(rep)];
            const Matrix est_res = detail::take_rows(residuals, est_rows);
            const Matrix out_res = detail::take_rows(residuals, out_rows);
            MomentKernel est_kernel(est_res, ms);
            MomentKernel out_kernel(out_res, ms);
            const auto pm = detail::ParamMap::with_clamps(ms.n, aw.clamped);

            // warm start for the largest grid value: estimation-fold fit with
            // the restrictions imposed exactly
            Matrix warm;
            {
                const auto pmb = detail::ParamMap::with_clamps(ms.n, binding);
                ObjectiveSpec spec;
                spec.W = &W;
                spec.variance_penalty = opts.variance_penalty;
                OptimResult r = minimize(detail::make_objective(est_kernel, spec, pmb),
                                         pmb.pack(full_estimate), opts.optim);
                warm = pmb.unpack(r.x);
            }

            for (int gi : order) {
                const double lambda = grid[static_cast<std::size_t>(gi)];
                ObjectiveSpec spec = ridge_spec(W, aw, lambda, opts.variance_penalty);
                const auto obj = detail::make_objective(est_kernel, spec, pm);
                try {
                    OptimResult a = minimize(obj, pm.pack(full_estimate), opts.optim);
                    OptimResult b = minimize(obj, pm.pack(warm), opts.optim);
                    const OptimResult& win = a.value <= b.value ? a : b;
                    const Matrix B = pm.unpack(win.x);
                    warm = B;
                    loss_sum(gi) += detail::letout_loss(out_kernel, B, wts);
                } catch (const Error&) {
                    loss_sum(gi) = std::numeric_limits<double>::infinity();
                }
            }
        }
        report.losses.row(static_cast<int>(rep)) = loss_sum / 2.0;
    });

    report.median_curve.resize(static_cast<std::size_t>(G));
    report.q40_curve.resize(static_cast<std::size_t>(G));
    report.q60_curve.resize(static_cast<std::size_t>(G));
    report.disqualified.assign(static_cast<std::size_t>(G), 0);
    for (int gi = 0; gi < G; ++gi) {
        // failed fold fits show up as +inf; drop them from the quantiles
        // unless they dominate, in which case the grid value is unusable
        std::vector<double> col;
        int failed = 0;
        for (int r = 0; r < opts.repetitions; ++r) {
            const double v = report.losses(r, gi);
            if (std::isfinite(v))
                col.push_back(v);
            else
                ++failed;
        }
        if (failed * 5 >= opts.repetitions || col.empty()) {
            report.disqualified[static_cast<std::size_t>(gi)] = 1;
            report.median_curve[static_cast<std::size_t>(gi)] =
                std::numeric_limits<double>::infinity();
            report.q40_curve[static_cast<std::size_t>(gi)] =
                std::numeric_limits<double>::infinity();
            report.q60_curve[static_cast<std::size_t>(gi)] =
                std::numeric_limits<double>::infinity();
            continue;
        }
        report.median_curve[static_cast<std::size_t>(gi)] = quantile_type7(col, 0.5);
        report.q40_curve[static_cast<std::size_t>(gi)] = quantile_type7(col, 0.4);
        report.q60_curve[static_cast<std::size_t>(gi)] = quantile_type7(col, 0.6);
    }
    return report;
}

// Picks the penalty level from the loss curves. Indices below run over the
// selectable part of the grid (the leading lambda = 0 entry is diagnostic
// only), in ascending lambda order.
//
// Default rule: climb the grid as long as each new median loss stays
// strictly below every 60% quantile seen at smaller lambdas; lambda_A is the
// last grid value reached. lambda_B climbs with the 40% quantile against
// the running minimum of the medians. The selected value is min(lambda_A,
// lambda_B): absent a loss surge the climb reaches the top of the grid,
// while a surge caused by an invalid restriction stops it early.
//
// The literal rule instead takes the smallest index whose tail of medians
// lies below all preceding 60% quantiles (vacuously true at the first
// index, so it degenerates to the grid minimum whenever curves are flat).
inline void select_lambda(CvReport& report, bool literal_rule = false) {
    const int G = static_cast<int>(report.grid.size());
    int first = report.grid[0] == 0.0 ? 1 : 0;
    const int m = G - first;
    if (m < 2) throw ValidationError("lambda grid too small for selection");
    auto med = [&](int i) { return report.median_curve[static_cast<std::size_t>(first + i)]; };
    auto q40 = [&](int i) { return report.q40_curve[static_cast<std::size_t>(first + i)]; };
    auto q60 = [&](int i) { return report.q60_curve[static_cast<std::size_t>(first + i)]; };

    if (!std::isfinite(med(0)))
        throw NumericalError("cross-validation failed at the smallest grid value");
    int ia = 0, ib = 0;
    if (literal_rule) {
        auto tail_ok = [&](int i, auto value, auto bound) {
            double minb = std::numeric_limits<double>::infinity();
            for (int h = 0; h < i; ++h) minb = std::min(minb, bound(h));
            for (int j = i; j < m; ++j)
                if (!(value(j) < minb)) return false;
            return true;
        };
        ia = ib = m - 1;
        for (int i = 0; i < m; ++i)
            if (tail_ok(i, med, q60)) { ia = i; break; }
        for (int i = 0; i < m; ++i)
            if (tail_ok(i, q40, med)) { ib = i; break; }
    } else {
        double run60 = q60(0), runmed = med(0);
        while (ia + 1 < m && med(ia + 1) < run60) {
            ++ia;
            run60 = std::min(run60, q60(ia));
        }
        while (ib + 1 < m && q40(ib + 1) < runmed) {
            ++ib;
            runmed = std::min(runmed, med(ib));
        }
    }
    report.lambda_a = report.grid[static_cast<std::size_t>(first + ia)];
    report.lambda_b = report.grid[static_cast<std::size_t>(first + ib)];
    const int sel = std::min(ia, ib);
    report.selected_index = first + sel;
    report.lambda_selected = report.grid[static_cast<std::size_t>(first + sel)];
    report.at_grid_min = sel == 0;
}

// Full ridge recipe: unpenalized two-step fit, adaptive weights, loss
// curves, penalty selection, final fit at the selected value.
struct RidgeFit {
    EstimationResult unpenalized;
    AdaptiveWeights weights;
    CvReport cv;
    EstimationResult final;
};

inline RidgeFit ridge_pipeline(const Matrix& residuals, const MomentSet& ms,
                               const RestrictionSet& rs,
                               const std::vector<double>& grid,
                               const CvOptions& cv_opts = {},
                               const EstimationOptions& est_opts = {}) {
    RidgeFit fit;
    fit.unpenalized = estimate_csue(residuals, ms, est_opts);
    fit.weights = compute_adaptive_weights(fit.unpenalized, rs);
    fit.cv = cv_path(residuals, ms, fit.weights, fit.unpenalized.W,
                     fit.unpenalized.B, grid, cv_opts);
    select_lambda(fit.cv, cv_opts.literal_rule);

    std::vector<std::pair<int, int>> binding = fit.weights.clamped;
    for (const auto& [i, j] : rs.cells) {
        bool already = false;
        for (const auto& c : binding)
            if (c.first == i && c.second == j) already = true;
        if (!already) binding.emplace_back(i, j);
    }
    EstimationResult bound = estimate_csue_clamped(residuals, ms, binding,
                                                   fit.unpenalized.W,
                                                   fit.unpenalized.B, cv_opts.optim);
    fit.final = estimate_ridge(residuals, ms, fit.weights,
                                     fit.cv.lambda_selected, fit.unpenalized.W,
                                     {fit.unpenalized.B, bound.B}, est_opts.anchor,
                                     cv_opts.optim);
    fit.final.lambda = fit.cv.lambda_selected;
    fit.final.lambda_at_grid_min = fit.cv.at_grid_min;
    return fit;
}

// Restriction screening: run the ridge recipe, keep only the restrictions
// whose estimated element is small, and rerun on the surviving subset. With
// nothing surviving the unpenalized fit is returned.
struct SelectionFit {
    RidgeFit first_pass;
    RestrictionSet kept;
    RidgeFit second_pass;   // valid when kept is non-empty
    EstimationResult final;
};

inline SelectionFit estimate_with_selection(const Matrix& residuals, const MomentSet& ms,
                                            const RestrictionSet& rs, double threshold,
                                            const std::vector<double>& grid,
                                            const CvOptions& cv_opts = {},
                                            const EstimationOptions& est_opts = {}) {
    if (!(threshold > 0.0)) throw ValidationError("selection threshold must be positive");
    SelectionFit out;
    out.first_pass = ridge_pipeline(residuals, ms, rs, grid, cv_opts, est_opts);
    Matrix base = out.first_pass.final.B;
    if (rs.type == PenaltyType::AMatrix) base = base.inverse();
    out.kept.type = rs.type;
    for (const auto& [i, j] : rs.cells)
        if (std::abs(base(i, j)) < threshold) out.kept.cells.emplace_back(i, j);
    if (out.kept.empty()) {
        out.final = out.first_pass.unpenalized;
        return out;
    }
    out.second_pass = ridge_pipeline(residuals, ms, out.kept, grid, cv_opts, est_opts);
    out.final = out.second_pass.final;
    return out;
}

}  // namespace ngsvar
