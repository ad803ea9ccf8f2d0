#pragma once

#include <functional>
#include <vector>

#include "ngsvar/estimator.hpp"
#include "ngsvar/labeling.hpp"
#include "ngsvar/var.hpp"

namespace ngsvar {

// Structural impulse responses: psi[h](i, j) is the response of variable i
// to a unit shock j after h periods. psi[0] = B.
struct ImpulseResponses {
    std::vector<Matrix> psi;

    int horizons() const { return static_cast<int>(psi.size()) - 1; }
    int n() const { return psi.empty() ? 0 : static_cast<int>(psi[0].rows()); }
};

inline ImpulseResponses impulse_responses(const ReducedForm& rf, const Matrix& B,
                                          int horizons) {
    if (horizons < 0) throw ValidationError("negative horizon");
    const int n = static_cast<int>(B.rows());
    if (rf.n() != n) throw ValidationError("B does not match the VAR dimension");
    ImpulseResponses out;
    out.psi.reserve(static_cast<std::size_t>(horizons) + 1);
    out.psi.push_back(B);
    for (int h = 1; h <= horizons; ++h) {
        Matrix m = Matrix::Zero(n, n);
        for (int l = 1; l <= std::min(h, rf.p); ++l)
            m += rf.lag_coeffs[static_cast<std::size_t>(l - 1)] *
                 out.psi[static_cast<std::size_t>(h - l)];
        out.psi.push_back(std::move(m));
    }
    return out;
}

// Forecast-error variance shares: out[h](i, j) is the fraction of the
// h-step-ahead forecast-error variance of variable i due to shock j.
// Rows sum to one.
inline std::vector<Matrix> fevd(const ImpulseResponses& irf) {
    const int n = irf.n();
    std::vector<Matrix> out;
    Matrix cum = Matrix::Zero(n, n);
    for (const auto& psi : irf.psi) {
        cum += psi.cwiseProduct(psi);
        Matrix share(n, n);
        for (int i = 0; i < n; ++i) {
            const double total = cum.row(i).sum();
            if (total > 0.0)
                share.row(i) = cum.row(i) / total;
            else
                share.row(i).setZero();
        }
        out.push_back(std::move(share));
    }
    return out;
}

// Historical decomposition over the residual sample. For each shock j,
// contribution[j](t, i) accumulates psi_s(i, j) * shock_j(t - s); the
// baseline carries the deterministic part and initial conditions, so that
// baseline + sum of contributions reproduces the observed series exactly.
struct HistoricalDecomposition {
    std::vector<Matrix> contributions;  // one (T - p) x n matrix per shock
    Matrix baseline;                    // (T - p) x n
};

inline HistoricalDecomposition historical_decomposition(const SeriesPanel& panel,
                                                        const ReducedForm& rf,
                                                        const Matrix& B) {
    const int n = rf.n();
    const int p = rf.p;
    const int Tr = static_cast<int>(rf.residuals.rows());
    const Matrix shocks = innovations(B, rf.residuals);
    ImpulseResponses irf = impulse_responses(rf, B, Tr - 1);

    HistoricalDecomposition hd;
    hd.contributions.assign(static_cast<std::size_t>(n), Matrix::Zero(Tr, n));
    for (int j = 0; j < n; ++j) {
        auto& c = hd.contributions[static_cast<std::size_t>(j)];
        for (int t = 0; t < Tr; ++t)
            for (int s = 0; s <= t; ++s)
                c.row(t) += irf.psi[static_cast<std::size_t>(s)].col(j).transpose() *
                            shocks(t - s, j);
    }

    // deterministic path: the VAR iterated from the actual initial values
    // with all shocks removed
    hd.baseline = Matrix::Zero(Tr, n);
    std::vector<Vector> hist;
    for (int l = 0; l < p; ++l) hist.push_back(panel.values.row(p - 1 - l).transpose());
    for (int t = 0; t < Tr; ++t) {
        Vector y = rf.intercept;
        for (int l = 1; l <= p; ++l) y += rf.lag_coeffs[static_cast<std::size_t>(l - 1)] *
                                          hist[static_cast<std::size_t>(l - 1)];
        hd.baseline.row(t) = y.transpose();
        if (p > 0) {
            for (int l = p - 1; l > 0; --l) hist[static_cast<std::size_t>(l)] = hist[static_cast<std::size_t>(l - 1)];
            hist[0] = y;
        }
    }
    return hd;
}

// --- residual bootstrap ------------------------------------------------

// Re-estimation callback: given a simulated panel, produce B and the
// reduced form used for its impulse responses.
struct BootstrapRefit {
    Matrix B;
    ReducedForm rf;
};
using RefitFn = std::function<BootstrapRefit(const SeriesPanel&)>;

struct BootstrapOptions {
    int draws = 500;
    int horizons = 12;
    std::vector<double> levels = {0.68, 0.90};  // band coverage levels
    std::uint64_t seed = 7;
    int threads = 0;
};

struct BootstrapBands {
    // bands[level][h] are n x n matrices of lower/upper band edges
    std::vector<std::vector<Matrix>> lower;
    std::vector<std::vector<Matrix>> upper;
    std::vector<double> levels;
    int failed_draws = 0;
};

// Iid resampling of residual rows; each draw re-simulates the fitted VAR
// from the observed initial values, refits, re-estimates, and is labeled
// against the original point estimate. Bands are centered on the point
// estimate with half-widths taken from the bootstrap quantile spread around
// the bootstrap median.
inline BootstrapBands bootstrap_bands(const SeriesPanel& panel, const ReducedForm& rf,
                                      const ImpulseResponses& point, const RefitFn& refit,
                                      const BootstrapOptions& opts = {}) {
    const int n = rf.n();
    const int p = rf.p;
    const int Tr = static_cast<int>(rf.residuals.rows());
    const int H = opts.horizons;
    const Matrix& anchor = point.psi[0];

    std::vector<std::vector<Matrix>> draws(static_cast<std::size_t>(opts.draws));
    std::vector<int> retries(static_cast<std::size_t>(opts.draws), 0);
    std::vector<char> ok(static_cast<std::size_t>(opts.draws), 0);

    parallel_for(opts.draws, [&](std::int64_t m) {
        // failed draws are redrawn from a fresh derived seed
        for (int attempt = 0; attempt < 4 && !ok[static_cast<std::size_t>(m)]; ++attempt) {
            std::mt19937_64 rng(subseed(
                opts.seed, static_cast<std::uint64_t>(m) +
                               static_cast<std::uint64_t>(attempt) *
                                   static_cast<std::uint64_t>(opts.draws)));
            std::uniform_int_distribution<int> pick(0, Tr - 1);
            SeriesPanel sim;
            sim.values = Matrix::Zero(p + Tr, n);
            for (int l = 0; l < p; ++l) sim.values.row(l) = panel.values.row(l);
            std::vector<Vector> hist;
            for (int l = 0; l < p; ++l)
                hist.push_back(panel.values.row(p - 1 - l).transpose());
            for (int t = 0; t < Tr; ++t) {
                Vector y = rf.intercept;
                for (int l = 1; l <= p; ++l)
                    y += rf.lag_coeffs[static_cast<std::size_t>(l - 1)] * hist[static_cast<std::size_t>(l - 1)];
                y += rf.residuals.row(pick(rng)).transpose();
                sim.values.row(p + t) = y.transpose();
                if (p > 0) {
                    for (int l = p - 1; l > 0; --l) hist[static_cast<std::size_t>(l)] = hist[static_cast<std::size_t>(l - 1)];
                    hist[0] = y;
                }
            }
            try {
                BootstrapRefit fit = refit(sim);
                LabelingResult lab = project_to_representative(fit.B, anchor);
                ImpulseResponses irf = impulse_responses(fit.rf, lab.B, H);
                draws[static_cast<std::size_t>(m)] = std::move(irf.psi);
                ok[static_cast<std::size_t>(m)] = 1;
            } catch (const Error&) {
                ++retries[static_cast<std::size_t>(m)];
            }
        }
    }, opts.threads);

    int total_retries = 0;
    for (int m = 0; m < opts.draws; ++m) {
        total_retries += retries[static_cast<std::size_t>(m)];
        if (!ok[static_cast<std::size_t>(m)])
            throw NumericalError("bootstrap draw failed repeatedly");
    }
    if (total_retries * 10 > opts.draws)
        throw NumericalError("more than 10% of bootstrap draws failed");

    BootstrapBands bands;
    bands.levels = opts.levels;
    for (std::size_t lv = 0; lv < opts.levels.size(); ++lv) {
        bands.lower.emplace_back(static_cast<std::size_t>(H) + 1, Matrix::Zero(n, n));
        bands.upper.emplace_back(static_cast<std::size_t>(H) + 1, Matrix::Zero(n, n));
    }
    std::vector<double> sample;
    for (int h = 0; h <= H; ++h)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                sample.clear();
                for (int m = 0; m < opts.draws; ++m)
                    sample.push_back(draws[static_cast<std::size_t>(m)][static_cast<std::size_t>(h)](i, j));
                const double mid = quantile_type7(sample, 0.5);
                const double est = point.psi[static_cast<std::size_t>(h)](i, j);
                for (std::size_t lv = 0; lv < opts.levels.size(); ++lv) {
                    const double alpha = 1.0 - opts.levels[lv];
                    const double qlo = quantile_type7(sample, alpha / 2.0);
                    const double qhi = quantile_type7(sample, 1.0 - alpha / 2.0);
                    bands.lower[lv][static_cast<std::size_t>(h)](i, j) = est - std::abs(qlo - mid);
                    bands.upper[lv][static_cast<std::size_t>(h)](i, j) = est + std::abs(qhi - mid);
                }
            }
    bands.failed_draws = total_retries;
    return bands;
}

// --- shock diagnostics -------------------------------------------------

struct ShockDiagnostics {
    Vector skewness;
    Vector excess_kurtosis;
    Vector jb_statistic;     // Jarque-Bera, T * (S^2/6 + (K-3)^2/24)
    Vector jb_pvalue;        // chi-squared(2) upper tail
    Matrix squared_comoment; // E[e_i^2 e_j^2], ones on the diagonal target
};

inline ShockDiagnostics shock_diagnostics(const Matrix& shocks) {
    const int T = static_cast<int>(shocks.rows());
    const int n = static_cast<int>(shocks.cols());
    ShockDiagnostics d;
    d.skewness = Vector(n);
    d.excess_kurtosis = Vector(n);
    d.jb_statistic = Vector(n);
    d.jb_pvalue = Vector(n);
    Matrix z(T, n);
    for (int j = 0; j < n; ++j) {
        const double mean = shocks.col(j).mean();
        const double sd = std::sqrt((shocks.col(j).array() - mean).square().sum() / T);
        z.col(j) = (shocks.col(j).array() - mean) / sd;
        const double s = z.col(j).array().cube().mean();
        const double k = z.col(j).array().square().square().mean();
        d.skewness(j) = s;
        d.excess_kurtosis(j) = k - 3.0;
        d.jb_statistic(j) = T * (s * s / 6.0 + (k - 3.0) * (k - 3.0) / 24.0);
        d.jb_pvalue(j) = std::exp(-d.jb_statistic(j) / 2.0);
    }
    d.squared_comoment = Matrix(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            d.squared_comoment(i, j) =
                (z.col(i).array().square() * z.col(j).array().square()).mean();
    return d;
}

}  // namespace ngsvar
