#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ngsvar/labeling.hpp"
#include "ngsvar/moments.hpp"
#include "ngsvar/optim.hpp"
#include "ngsvar/var.hpp"

namespace ngsvar {

// Cells of B (or of A = B^{-1}) that are believed to be zero and are shrunk
// toward zero by the ridge penalty.
struct RestrictionSet {
    PenaltyType type = PenaltyType::BMatrix;
    std::vector<std::pair<int, int>> cells;
    std::string description;

    bool empty() const { return cells.empty(); }

    void validate(int n) const {
        for (std::size_t a = 0; a < cells.size(); ++a) {
            const auto& [i, j] = cells[a];
            if (i < 0 || j < 0 || i >= n || j >= n)
                throw ValidationError("restriction cell out of range");
            if (i == j) throw ValidationError("diagonal cells cannot be restricted");
            for (std::size_t b = a + 1; b < cells.size(); ++b)
                if (cells[b] == cells[a])
                    throw ValidationError("duplicate restriction cell");
        }
    }
};

// Data-driven penalty weights. An infinite weight is a sentinel: the element
// is held at zero exactly during optimization rather than being penalized.
struct AdaptiveWeights {
    PenaltyType type = PenaltyType::BMatrix;
    Matrix v;            // n x n, weights on restricted cells, 0 elsewhere
    Vector non_gauss;    // per-shock non-Gaussianity score
    std::vector<std::pair<int, int>> clamped;  // cells with infinite weight
};

struct EstimationOptions {
    OptimOptions optim;
    Matrix anchor;  // labeling anchor; identity when empty
    int rotation_starts = 12;  // step-one multi-start breadth
    Matrix start;   // optional explicit start; Cholesky factor when empty
};

struct EstimationResult {
    Matrix B;
    Matrix shocks;       // innovations at B, rows aligned with residuals
    double objective = 0.0;
    bool converged = false;
    bool labeled = false;
    bool boundary = false;
    SignPermutation permutation_applied;
    int iterations = 0;
    Matrix W;            // step-2 weight matrix used by the objective
    WeightMatrixInfo w_info;
    double lambda = 0.0;         // ridge recipes only
    bool lambda_at_grid_min = false;
};

namespace detail {

// Free-parameter view of B with some cells pinned to zero.
struct ParamMap {
    int n = 0;
    std::vector<std::pair<int, int>> free_cells;

    static ParamMap all_free(int n) {
        ParamMap pm;
        pm.n = n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) pm.free_cells.emplace_back(i, j);
        return pm;
    }

    static ParamMap with_clamps(int n, const std::vector<std::pair<int, int>>& clamped) {
        ParamMap pm;
        pm.n = n;
        auto is_clamped = [&](int i, int j) {
            for (const auto& c : clamped)
                if (c.first == i && c.second == j) return true;
            return false;
        };
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (!is_clamped(i, j)) pm.free_cells.emplace_back(i, j);
        return pm;
    }

    Vector pack(const Matrix& B) const {
        Vector x(static_cast<int>(free_cells.size()));
        for (std::size_t k = 0; k < free_cells.size(); ++k)
            x(static_cast<int>(k)) = B(free_cells[k].first, free_cells[k].second);
        return x;
    }

    Matrix unpack(const Vector& x) const {
        Matrix B = Matrix::Zero(n, n);
        for (std::size_t k = 0; k < free_cells.size(); ++k)
            B(free_cells[k].first, free_cells[k].second) = x(static_cast<int>(k));
        return B;
    }

    Vector pack_gradient(const Matrix& G) const {
        Vector g(static_cast<int>(free_cells.size()));
        for (std::size_t k = 0; k < free_cells.size(); ++k)
            g(static_cast<int>(k)) = G(free_cells[k].first, free_cells[k].second);
        return g;
    }
};

inline ObjectiveFn make_objective(const MomentKernel& kernel, const ObjectiveSpec& spec,
                                  const ParamMap& pm) {
    return [&kernel, spec, pm](const Vector& x, Vector* grad) {
        const Matrix B = pm.unpack(x);
        ObjectiveValue v = kernel.eval(B, spec, grad != nullptr);
        if (grad) *grad = pm.pack_gradient(v.gradient);
        return v.value;
    };
}

inline Matrix default_start(const Matrix& residuals) {
    Matrix cov = residual_covariance(residuals);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success)
        throw NumericalError("residual covariance is not positive definite");
    return Matrix(llt.matrixL());
}

// The step-one landscape is multimodal: every orthogonal rotation of the
// Cholesky factor matches the second-order conditions, and the higher-order
// blocks separate the basins. Starting from several deterministic random
// rotations of the factor and keeping the best final value is what makes
// the two-step fit reliable in practice.
inline std::vector<Matrix> rotation_starts(const Matrix& residuals, int count,
                                           std::uint64_t seed = 0x5ca1ab1e) {
    const Matrix L = default_start(residuals);
    const int n = static_cast<int>(L.rows());
    std::vector<Matrix> starts = {L};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> norm(0.0, 1.0);
    for (int k = 1; k < count; ++k) {
        Matrix g(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g(i, j) = norm(rng);
        Eigen::HouseholderQR<Matrix> qr(g);
        Matrix q = qr.householderQ();
        starts.push_back(L * q);
    }
    return starts;
}

inline Matrix anchor_or_identity(const Matrix& anchor, int n) {
    if (anchor.size() == 0) return Matrix::Identity(n, n);
    if (anchor.rows() != n || anchor.cols() != n)
        throw ValidationError("anchor dimensions do not match");
    return anchor;
}

// Weights on restricted cells from a first-step estimate. B-type weights
// carry a correction that explodes when the corresponding shock looks
// Gaussian, so that nearly unidentified coordinates are pinned rather than
// merely shrunk.
inline AdaptiveWeights adaptive_weights_impl(const Matrix& B_hat, const Matrix& shocks,
                                             const RestrictionSet& rs) {
    const int n = static_cast<int>(B_hat.rows());
    const double T = static_cast<double>(shocks.rows());
    if (T < 8) throw ValidationError("adaptive weights need at least 8 observations");
    rs.validate(n);
    AdaptiveWeights aw;
    aw.type = rs.type;
    aw.v = Matrix::Zero(n, n);
    aw.non_gauss = Vector::Zero(n);
    for (int j = 0; j < n; ++j) {
        Vector e = shocks.col(j);
        const double mean = e.mean();
        const double sd = std::sqrt((e.array() - mean).square().sum() / T);
        Eigen::ArrayXd z = (e.array() - mean) / sd;
        const double skew = z.cube().mean();
        const double kurt = z.square().square().mean();
        aw.non_gauss(j) = skew * skew / 6.0 + (kurt - 3.0) * (kurt - 3.0) / 24.0;
    }
    // second smallest score, squared
    Vector sorted = aw.non_gauss;
    std::sort(sorted.data(), sorted.data() + n);
    const double min2sq = sorted(1) * sorted(1);

    Matrix base = B_hat;
    if (rs.type == PenaltyType::AMatrix) base = B_hat.inverse();
    for (const auto& [i, j] : rs.cells) {
        if (i < 0 || j < 0 || i >= n || j >= n)
            throw ValidationError("restriction cell out of range");
        const double b2 = base(i, j) * base(i, j);
        double w;
        if (rs.type == PenaltyType::AMatrix) {
            w = b2 > 0.0 ? 1.0 / b2 : std::numeric_limits<double>::infinity();
        } else {
            const double denom = aw.non_gauss(j) * aw.non_gauss(j) + min2sq;
            if (b2 == 0.0 || denom < 1e-8) {
                w = std::numeric_limits<double>::infinity();
            } else {
                w = (1.0 + 1.0 / denom) / b2;
            }
        }
        if (std::isinf(w))
            aw.clamped.emplace_back(i, j);
        else
            aw.v(i, j) = w;
    }
    return aw;
}

}  // namespace detail

inline AdaptiveWeights compute_adaptive_weights(const EstimationResult& first_step,
                                                const RestrictionSet& rs) {
    return detail::adaptive_weights_impl(first_step.B, first_step.shocks, rs);
}

// Penalized objective, direct route: csue_objective plus the weighted
// squared restricted cells of B (or of B^{-1} for A-type restrictions).
inline double ridge_objective(const Matrix& B, const Matrix& residuals,
                              const MomentSet& ms, const Matrix* W,
                              const RestrictionSet& rs, const AdaptiveWeights& aw,
                              double lambda) {
    if (lambda < 0.0) throw ValidationError("negative penalty level");
    double val = csue_objective(B, residuals, ms, W);
    if (val >= kSingularObjective) return val;
    Matrix t = B;
    if (rs.type == PenaltyType::AMatrix) t = B.inverse();
    // clamped cells carry weight 0 in aw.v and are held at zero instead
    for (const auto& [i, j] : rs.cells)
        val += lambda * aw.v(i, j) * t(i, j) * t(i, j);
    return val;
}

// Two-step GMM on the product-moment conditions with the unit-variance
// scale correction. Step 1 uses the identity weight; step 2 re-weights by
// the inverse long-run variance of the moment contributions evaluated at
// the step-1 solution. The result is projected into the labeled set.
inline EstimationResult estimate_csue(const Matrix& residuals, const MomentSet& ms,
                                      const EstimationOptions& opts = {}) {
    const int n = ms.n;
    MomentKernel kernel(residuals, ms);
    const Matrix anchor = detail::anchor_or_identity(opts.anchor, n);
    std::vector<Matrix> starts;
    if (opts.start.size()) starts.push_back(opts.start);
    for (const Matrix& s :
         detail::rotation_starts(residuals, opts.rotation_starts))
        starts.push_back(s);
    const auto pm = detail::ParamMap::all_free(n);

    ObjectiveSpec step1;
    step1.W = nullptr;
    const auto obj1 = detail::make_objective(kernel, step1, pm);
    OptimResult r1;
    for (const Matrix& s : starts) {
        OptimResult cand = minimize(obj1, pm.pack(s), opts.optim);
        if (cand.value < r1.value) r1 = cand;
    }

    const Matrix B1 = pm.unpack(r1.x);
    const Matrix innov1 = innovations(B1, residuals);
    WeightMatrixInfo winfo;
    const Matrix W = efficient_weight_matrix(innov1, ms, &winfo);

    ObjectiveSpec step2;
    step2.W = &W;
    OptimResult r2 = minimize(detail::make_objective(kernel, step2, pm), r1.x,
                              opts.optim);

    EstimationResult res;
    LabelingResult lab = project_to_representative(pm.unpack(r2.x), anchor);
    res.B = lab.B;
    res.labeled = lab.in_set;
    res.boundary = lab.boundary;
    res.permutation_applied = lab.applied;
    res.shocks = innovations(res.B, residuals);
    res.objective = r2.value;
    res.converged = r1.converged && r2.converged;
    res.iterations = r1.iterations + r2.iterations;
    res.W = W;
    res.w_info = winfo;
    return res;
}

// Same objective restricted to B with the given cells held at zero exactly.
// Used for warm starts and for clamped (infinite-weight) coordinates.
inline EstimationResult estimate_csue_clamped(
    const Matrix& residuals, const MomentSet& ms,
    const std::vector<std::pair<int, int>>& clamped, const Matrix& W,
    const Matrix& start, const OptimOptions& optim = {}) {
    MomentKernel kernel(residuals, ms);
    const auto pm = detail::ParamMap::with_clamps(ms.n, clamped);
    ObjectiveSpec spec;
    spec.W = W.size() ? &W : nullptr;
    OptimResult r = minimize(detail::make_objective(kernel, spec, pm),
                             pm.pack(start), optim);
    EstimationResult res;
    res.B = pm.unpack(r.x);
    res.shocks = innovations(res.B, residuals);
    res.objective = r.value;
    res.converged = r.converged;
    res.iterations = r.iterations;
    res.W = W;
    return res;
}

// Penalized objective value on a given kernel; shared by the full-sample
// ridge fit and the cross-validation fold fits.
inline ObjectiveSpec ridge_spec(const Matrix& W, const AdaptiveWeights& aw,
                                double lambda, double variance_penalty = 0.0) {
    ObjectiveSpec spec;
    spec.W = W.size() ? &W : nullptr;
    spec.penalty = aw.type;
    spec.penalty_weights = lambda * aw.v;
    spec.variance_penalty = variance_penalty;
    return spec;
}

// Ridge fit at a fixed penalty level. Tries every provided start and keeps
// the best penalized objective; clamped cells stay at zero throughout.
inline EstimationResult estimate_ridge(const Matrix& residuals, const MomentSet& ms,
                                             const AdaptiveWeights& aw, double lambda,
                                             const Matrix& W,
                                             const std::vector<Matrix>& starts,
                                             const Matrix& anchor_in = {},
                                             const OptimOptions& optim = {}) {
    if (starts.empty()) throw ValidationError("ridge fit needs at least one start");
    MomentKernel kernel(residuals, ms);
    const Matrix anchor = detail::anchor_or_identity(anchor_in, ms.n);
    const auto pm = detail::ParamMap::with_clamps(ms.n, aw.clamped);
    ObjectiveSpec spec = ridge_spec(W, aw, lambda);
    const auto obj = detail::make_objective(kernel, spec, pm);

    OptimResult best;
    for (const auto& s : starts) {
        OptimResult r = minimize(obj, pm.pack(s), optim);
        if (r.value < best.value) best = r;
    }
    EstimationResult res;
    LabelingResult lab = project_to_representative(pm.unpack(best.x), anchor);
    // Projection permutes columns, which can move a clamped cell; keep the
    // unprojected solution in that case and flag it.
    bool clamps_ok = true;
    for (const auto& [i, j] : aw.clamped)
        if (std::abs(lab.B(i, j)) > 1e-12) clamps_ok = false;
    if (clamps_ok) {
        res.B = lab.B;
        res.labeled = lab.in_set;
        res.boundary = lab.boundary;
        res.permutation_applied = lab.applied;
    } else {
        res.B = pm.unpack(best.x);
        res.labeled = in_representative_set(res.B, anchor);
    }
    res.shocks = innovations(res.B, residuals);
    res.objective = best.value;
    res.converged = best.converged;
    res.iterations = best.iterations;
    res.W = W;
    res.lambda = lambda;
    return res;
}

// Recursive (Cholesky) estimate: lower-triangular B with positive diagonal
// such that B B' equals the residual second-moment matrix.
inline EstimationResult estimate_recursive(const Matrix& residuals) {
    Matrix cov = residual_covariance(residuals);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success)
        throw NumericalError("residual covariance is not positive definite");
    EstimationResult res;
    res.B = Matrix(llt.matrixL());
    res.shocks = innovations(res.B, residuals);
    res.converged = true;
    res.labeled = true;
    return res;
}

// Normalized structural-form coefficients. With A = B^{-1}, equation w of
// A y_t = A nu + ... + e_t is rescaled by its own diagonal element; the
// reported coefficient on variable v is then -A_wv / A_ww.
struct ATypeReport {
    Matrix A;             // raw inverse
    Matrix coefficients;  // n x n, entry (w, v) = -A_wv / A_ww, diagonal 0
};

inline ATypeReport to_a_type_report(const Matrix& B) {
    ATypeReport rep;
    rep.A = B.inverse();
    const int n = static_cast<int>(B.rows());
    rep.coefficients = Matrix::Zero(n, n);
    for (int w = 0; w < n; ++w) {
        if (rep.A(w, w) == 0.0)
            throw NumericalError("zero diagonal in structural form, cannot normalize");
        for (int v = 0; v < n; ++v)
            if (v != w) rep.coefficients(w, v) = -rep.A(w, v) / rep.A(w, w);
    }
    return rep;
}

}  // namespace ngsvar
