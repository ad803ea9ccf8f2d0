#pragma once

#include <string>
#include <vector>

#include "ngsvar/common.hpp"

namespace ngsvar {

// Multivariate time series, observations in rows.
struct SeriesPanel {
    Matrix values;                     // T x n
    std::vector<std::string> names;    // size n, may be empty

    int T() const { return static_cast<int>(values.rows()); }
    int n() const { return static_cast<int>(values.cols()); }
};

// Reduced-form VAR(p) with intercept:
//   y_t = nu + A_1 y_{t-1} + ... + A_p y_{t-p} + u_t
struct ReducedForm {
    Vector intercept;             // n
    std::vector<Matrix> lag_coeffs;  // p matrices, each n x n
    Matrix residuals;             // (T - p) x n, rows aligned with t = p+1..T
    int p = 0;

    int n() const { return static_cast<int>(intercept.size()); }
};

// Stacked companion matrix (np x np); empty when p = 0.
inline Matrix companion_matrix(const ReducedForm& rf) {
    const int n = rf.n();
    const int p = rf.p;
    Matrix comp = Matrix::Zero(n * p, n * p);
    for (int l = 0; l < p; ++l)
        comp.block(0, l * n, n, n) = rf.lag_coeffs[static_cast<std::size_t>(l)];
    if (p > 1)
        comp.block(n, 0, n * (p - 1), n * (p - 1)) =
            Matrix::Identity(n * (p - 1), n * (p - 1));
    return comp;
}

inline double spectral_radius(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_stable(const ReducedForm& rf) {
    if (rf.p == 0) return true;
    return spectral_radius(companion_matrix(rf)) < 1.0;
}

// Equation-by-equation OLS, solved via a single QR factorization of the
// shared regressor matrix. With p = 0 and no intercept the residuals are
// the observations verbatim.
inline ReducedForm fit_var(const SeriesPanel& panel, int p, bool intercept = true) {
    const int T = panel.T();
    const int n = panel.n();
    if (p < 0) throw ValidationError("lag order must be non-negative");
    if (n < 1) throw ValidationError("panel has no series");
    const int rows = T - p;
    const int k = (intercept ? 1 : 0) + n * p;
    if (k == 0) {
        ReducedForm rf;
        rf.p = 0;
        rf.intercept = Vector::Zero(n);
        rf.residuals = panel.values;
        return rf;
    }
    if (rows <= k)
        throw ValidationError("sample too short for VAR(" + std::to_string(p) +
                              "): " + std::to_string(T) + " observations, " +
                              std::to_string(n) + " variables");

    Matrix X(rows, k);
    const int off = intercept ? 1 : 0;
    if (intercept) X.col(0).setOnes();
    for (int l = 1; l <= p; ++l)
        X.block(0, off + (l - 1) * n, rows, n) = panel.values.block(p - l, 0, rows, n);
    Matrix Y = panel.values.block(p, 0, rows, n);

    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    if (qr.rank() < k)
        throw NumericalError("collinear regressor matrix in VAR fit (rank " +
                             std::to_string(qr.rank()) + " of " + std::to_string(k) + ")");
    Matrix coef = qr.solve(Y);  // k x n

    ReducedForm rf;
    rf.p = p;
    rf.intercept = intercept ? Vector(coef.row(0).transpose()) : Vector(Vector::Zero(n));
    rf.lag_coeffs.reserve(static_cast<std::size_t>(p));
    for (int l = 0; l < p; ++l)
        rf.lag_coeffs.push_back(coef.block(off + l * n, 0, n, n).transpose());
    rf.residuals = Y - X * coef;
    return rf;
}

// Uncentered second-moment matrix of the residual rows, (1/T) U'U. OLS
// residuals with an intercept already have exactly zero column means.
inline Matrix residual_covariance(const Matrix& residuals) {
    const double T = static_cast<double>(residuals.rows());
    if (T < 1) throw ValidationError("no residual rows");
    return residuals.transpose() * residuals / T;
}

}  // namespace ngsvar
