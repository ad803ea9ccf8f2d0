#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "ngsvar/common.hpp"

namespace ngsvar {

// One product-moment condition on the structural innovations e = B^{-1} u:
//   E[ prod_i e_i^{powers[i]} ] - target = 0
// target is 0 whenever some power equals 1 (mean independence), 1 otherwise
// (unit variances).
struct MomentCondition {
    std::vector<int> powers;  // size n, entries in {0,..,3}
    double target = 0.0;
    int order = 0;            // sum of powers
    std::vector<int> index;   // powers expanded to a tuple of length `order`
};

struct MomentSet {
    int n = 0;
    std::vector<MomentCondition> conditions;

    int size() const { return static_cast<int>(conditions.size()); }
};

namespace detail {

inline void expand_index(MomentCondition& c) {
    c.index.clear();
    for (int i = 0; i < static_cast<int>(c.powers.size()); ++i)
        for (int k = 0; k < c.powers[static_cast<std::size_t>(i)]; ++k)
            c.index.push_back(i);
}

// All power vectors in {0..maxpow}^n with the given total, lexicographic.
inline void enumerate_powers(int n, int total, int maxpow,
                             std::vector<std::vector<int>>& out) {
    std::vector<int> cur(static_cast<std::size_t>(n), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == n) {
            if (left == 0) out.push_back(cur);
            return;
        }
        // descending at each slot would break lexicographic order; ascend
        for (int v = 0; v <= std::min(maxpow, left); ++v) {
            cur[static_cast<std::size_t>(pos)] = v;
            rec(pos + 1, left - v);
        }
        cur[static_cast<std::size_t>(pos)] = 0;
    };
    rec(0, total);
}

}  // namespace detail

// The co-moment conditions used throughout: order-2 block (powers <= 2,
// total 2), order-3 block (powers <= 2, total 3) and order-4 block (powers
// <= 3, total 4, at least one power equal to 1). Symmetric fourth-order
// conditions e_i^2 e_j^2 are deliberately absent: their sample counterparts
// are noisy under heavy tails and they add nothing for identification.
// Counts: n(n+1)/2, n(n-1) + C(n,3), n(n-1) + n C(n-1,2) + C(n,4).
inline MomentSet enumerate_moments(int n) {
    if (n < 2) throw ValidationError("moment conditions need at least 2 variables");
    MomentSet ms;
    ms.n = n;
    std::vector<std::vector<int>> pows;
    detail::enumerate_powers(n, 2, 2, pows);
    auto block3 = pows.size();
    detail::enumerate_powers(n, 3, 2, pows);
    auto block4 = pows.size();
    {
        std::vector<std::vector<int>> p4;
        detail::enumerate_powers(n, 4, 3, p4);
        for (auto& p : p4)
            if (std::find(p.begin(), p.end(), 1) != p.end()) pows.push_back(p);
    }
    (void)block3;
    (void)block4;
    for (auto& p : pows) {
        MomentCondition c;
        c.powers = p;
        c.order = 0;
        for (int v : p) c.order += v;
        const bool has_one = std::find(p.begin(), p.end(), 1) != p.end();
        c.target = has_one ? 0.0 : 1.0;
        detail::expand_index(c);
        ms.conditions.push_back(std::move(c));
    }
    return ms;
}

// Scale floor below which B is treated as numerically singular. Relative to
// the residual scale so that measurement units do not matter.
inline double det_floor(const Matrix& residuals) {
    const int n = static_cast<int>(residuals.cols());
    const double T = static_cast<double>(residuals.rows());
    double log_geo = 0.0;
    for (int j = 0; j < n; ++j) {
        const double sd = std::sqrt(residuals.col(j).squaredNorm() / T);
        log_geo += std::log(std::max(sd, 1e-300));
    }
    log_geo /= n;
    return 1e-12 * std::exp(log_geo * n);
}

// Innovations e_t = B^{-1} u_t, rows aligned with the residual rows.
inline Matrix innovations(const Matrix& B, const Matrix& residuals) {
    const int n = static_cast<int>(residuals.cols());
    if (B.rows() != n || B.cols() != n)
        throw ValidationError("B must be square and match the residual width");
    Eigen::PartialPivLU<Matrix> lu(B);
    const double det = lu.determinant();
    if (std::abs(det) <= det_floor(residuals))
        throw NumericalError("B is numerically singular (|det| = " +
                             std::to_string(std::abs(det)) + ")");
    return lu.solve(residuals.transpose()).transpose();
}

// Sample moment vector g_T(B): per-condition averages of the innovation
// products minus their targets. Direct O(K T) route, kept as the readable
// reference; MomentKernel below computes the same values from precomputed
// residual moment tensors.
inline Vector sample_moments_of(const Matrix& innov, const MomentSet& ms) {
    const int T = static_cast<int>(innov.rows());
    const int K = ms.size();
    Vector g(K);
    for (int k = 0; k < K; ++k) {
        const auto& c = ms.conditions[static_cast<std::size_t>(k)];
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
            double prod = 1.0;
            for (int i : c.index) prod *= innov(t, i);
            acc += prod;
        }
        g(k) = acc / T - c.target;
    }
    return g;
}

inline Vector sample_moments(const Matrix& B, const Matrix& residuals,
                             const MomentSet& ms) {
    return sample_moments_of(innovations(B, residuals), ms);
}

// Per-condition matrix of f values, rows t, columns k (f stacked over time).
inline Matrix moment_contributions(const Matrix& innov, const MomentSet& ms) {
    const int T = static_cast<int>(innov.rows());
    const int K = ms.size();
    Matrix F(T, K);
    for (int k = 0; k < K; ++k) {
        const auto& c = ms.conditions[static_cast<std::size_t>(k)];
        for (int t = 0; t < T; ++t) {
            double prod = 1.0;
            for (int i : c.index) prod *= innov(t, i);
            F(t, k) = prod - c.target;
        }
    }
    return F;
}

// Diagonal scaling d_k = prod_i (1/sd(e_i))^{m_{k,i}} that makes the GMM
// objective invariant to rescaling the columns of B.
inline Vector scaling_term(const Matrix& innov, const MomentSet& ms) {
    const int T = static_cast<int>(innov.rows());
    const int n = ms.n;
    Vector d(n);
    for (int i = 0; i < n; ++i)
        d(i) = 1.0 / std::sqrt(innov.col(i).squaredNorm() / T);
    Vector D(ms.size());
    for (int k = 0; k < ms.size(); ++k) {
        double v = 1.0;
        for (int i : ms.conditions[static_cast<std::size_t>(k)].index) v *= d(i);
        D(k) = v;
    }
    return D;
}

// Reciprocal variances of the moment conditions under iid standard normal
// innovations; used to weight the cross-validation loss so conditions of
// different orders are comparable.
inline Vector normal_variance_weights(const MomentSet& ms) {
    auto even_moment = [](int m) -> double {
        // (m-1)!! for even m, 0 for odd m
        if (m % 2 != 0) return 0.0;
        double v = 1.0;
        for (int k = m - 1; k > 1; k -= 2) v *= k;
        return v;
    };
    Vector w(ms.size());
    for (int k = 0; k < ms.size(); ++k) {
        const auto& c = ms.conditions[static_cast<std::size_t>(k)];
        double second = 1.0, first = 1.0;
        for (int p : c.powers) {
            if (p == 0) continue;
            second *= even_moment(2 * p);
            first *= even_moment(p);
        }
        const double var = second - first * first;
        w(k) = 1.0 / var;
    }
    return w;
}

// Long-run variance estimate S = (1/T) sum_t f_t f_t' of the moment
// contributions, inverted with a ridge on the eigenvalues when the condition
// number exceeds `max_cond`.
struct WeightMatrixInfo {
    double epsilon = 0.0;
    bool regularized = false;
    double cond_before = 0.0;
};

inline Matrix efficient_weight_matrix(const Matrix& innov, const MomentSet& ms,
                                      WeightMatrixInfo* info = nullptr,
                                      double max_cond = 1e10) {
    const Matrix F = moment_contributions(innov, ms);
    const double T = static_cast<double>(F.rows());
    Matrix S = F.transpose() * F / T;
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    const Vector ev = es.eigenvalues();
    const double lmax = ev.maxCoeff();
    const double lmin = ev.minCoeff();
    double eps = 0.0;
    if (lmin <= 0.0 || lmax / lmin > max_cond)
        eps = std::max(0.0, (lmax - max_cond * lmin) / (max_cond - 1.0));
    if (info) {
        info->epsilon = eps;
        info->regularized = eps > 0.0;
        info->cond_before = lmin > 0.0 ? lmax / lmin
                                       : std::numeric_limits<double>::infinity();
    }
    Vector inv = (ev.array() + eps).inverse();
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------
// Fast evaluation kernel.
//
// Every sample moment of e = A u (A = B^{-1}) is an exact multilinear
// function of the sample moment tensors of u up to order 4. Building those
// tensors once per data set makes each objective evaluation O(n^5) instead
// of O(K T), and yields analytic gradients from the same tensors.
// ---------------------------------------------------------------------

enum class PenaltyType { None, BMatrix, AMatrix };

struct ObjectiveSpec {
    const Matrix* W = nullptr;       // K x K weight; identity when null
    bool use_scaling = true;         // apply the D(B) scale correction
    PenaltyType penalty = PenaltyType::None;
    Matrix penalty_weights;          // n x n, lambda * v_ij on penalized cells, 0 elsewhere
    double variance_penalty = 0.0;   // coefficient on (1/n) sum (var(e_i)-1)^2
};

struct ObjectiveValue {
    double value = 0.0;
    bool singular = false;
    Matrix gradient;  // n x n over all entries of B; empty if not requested
};

constexpr double kSingularObjective = 1e12;

class MomentKernel {
  public:
    MomentKernel(const Matrix& residuals, const MomentSet& ms)
        : ms_(&ms), n_(ms.n), T_(static_cast<int>(residuals.rows())) {
        if (static_cast<int>(residuals.cols()) != n_)
            throw ValidationError("residual width does not match moment set");
        floor_ = det_floor(residuals);
        const int n = n_;
        m2_ = Matrix::Zero(n, n);
        m3_.assign(static_cast<std::size_t>(n * n * n), 0.0);
        m4_.assign(static_cast<std::size_t>(n * n * n * n), 0.0);
        for (int t = 0; t < T_; ++t) {
            for (int a = 0; a < n; ++a) {
                const double ua = residuals(t, a);
                for (int b = 0; b < n; ++b) {
                    const double uab = ua * residuals(t, b);
                    m2_(a, b) += uab;
                    for (int c = 0; c < n; ++c) {
                        const double uabc = uab * residuals(t, c);
                        m3_[idx3(a, b, c)] += uabc;
                        for (int d = 0; d < n; ++d)
                            m4_[idx4(a, b, c, d)] += uabc * residuals(t, d);
                    }
                }
            }
        }
        const double invT = 1.0 / T_;
        m2_ *= invT;
        for (double& v : m3_) v *= invT;
        for (double& v : m4_) v *= invT;
    }

    int n() const { return n_; }
    int T() const { return T_; }
    const MomentSet& moment_set() const { return *ms_; }
    double floor() const { return floor_; }

    // Objective value and (optionally) its gradient in the entries of B.
    ObjectiveValue eval(const Matrix& B, const ObjectiveSpec& spec,
                        bool want_gradient) const {
        const int n = n_;
        const int K = ms_->size();
        ObjectiveValue out;
        Eigen::PartialPivLU<Matrix> lu(B);
        const double det = lu.determinant();
        if (std::abs(det) <= floor_) {
            out.value = kSingularObjective;
            out.singular = true;
            if (want_gradient) out.gradient = Matrix::Zero(n, n);
            return out;
        }
        const Matrix A = lu.inverse();
        Matrix e2;
        std::vector<double> e3, e4;
        transform(A, e2, e3, e4);

        Vector g(K), D = Vector::Ones(K);
        Vector vvar(n);
        for (int i = 0; i < n; ++i) vvar(i) = e2(i, i);
        Vector dvec = vvar.array().sqrt().inverse();
        for (int k = 0; k < K; ++k) {
            const auto& c = ms_->conditions[static_cast<std::size_t>(k)];
            g(k) = lookup(c.index, e2, e3, e4) - c.target;
            if (spec.use_scaling)
                for (int i : c.index) D(k) *= dvec(i);
        }
        Vector h = D.cwiseProduct(g);
        Vector Wh = spec.W ? Vector((*spec.W) * h) : h;
        double val = h.dot(Wh);

        if (spec.variance_penalty > 0.0)
            val += spec.variance_penalty / n * (vvar.array() - 1.0).square().sum();

        if (spec.penalty == PenaltyType::BMatrix) {
            val += (spec.penalty_weights.array() * B.array().square()).sum();
        } else if (spec.penalty == PenaltyType::AMatrix) {
            val += (spec.penalty_weights.array() * A.array().square()).sum();
        }

        out.value = val;
        if (!want_gradient) return out;

        // dQ/dB via c(i,q) = sum_k 2 (W h)_k D_k m_{k,i} (-r_{k,i,q}
        //                    + g_k e2(i,q)/var_i), grad = A' c.
        Matrix cmat = Matrix::Zero(n, n);
        std::vector<int> tup;
        for (int k = 0; k < K; ++k) {
            const auto& c = ms_->conditions[static_cast<std::size_t>(k)];
            const double wk = 2.0 * Wh(k) * D(k);
            if (wk == 0.0) continue;
            for (int i = 0; i < n; ++i) {
                const int mi = c.powers[static_cast<std::size_t>(i)];
                if (mi == 0) continue;
                tup = c.index;
                // replace one occurrence of i by q
                auto pos = std::find(tup.begin(), tup.end(), i) - tup.begin();
                for (int q = 0; q < n; ++q) {
                    tup[static_cast<std::size_t>(pos)] = q;
                    const double r = lookup(tup, e2, e3, e4);
                    double term = -r;
                    if (spec.use_scaling) term += g(k) * e2(i, q) / vvar(i);
                    cmat(i, q) += wk * mi * term;
                }
            }
        }
        Matrix grad = A.transpose() * cmat;

        if (spec.variance_penalty > 0.0) {
            // d var_i / dB_pq = -2 A_ip e2(i,q)
            Matrix vg = Matrix::Zero(n, n);
            for (int i = 0; i < n; ++i)
                vg += (vvar(i) - 1.0) * A.row(i).transpose() * e2.row(i);
            grad += -4.0 * spec.variance_penalty / n * vg;
        }

        if (spec.penalty == PenaltyType::BMatrix) {
            grad += 2.0 * spec.penalty_weights.cwiseProduct(B);
        } else if (spec.penalty == PenaltyType::AMatrix) {
            // dA_ij/dB_pq = -A_ip A_qj
            Matrix VA = spec.penalty_weights.cwiseProduct(A);
            grad += -2.0 * A.transpose() * (VA * A.transpose());
        }

        out.gradient = std::move(grad);
        return out;
    }

    // Sample variances of the innovations for a given B (no gradient).
    Vector innovation_variances(const Matrix& B) const {
        Eigen::PartialPivLU<Matrix> lu(B);
        if (std::abs(lu.determinant()) <= floor_)
            throw NumericalError("B is numerically singular");
        const Matrix A = lu.inverse();
        return (A * m2_ * A.transpose()).diagonal();
    }

    // Plain moment vector for a given B (matches sample_moments).
    Vector moments(const Matrix& B) const {
        Eigen::PartialPivLU<Matrix> lu(B);
        if (std::abs(lu.determinant()) <= floor_)
            throw NumericalError("B is numerically singular");
        const Matrix A = lu.inverse();
        Matrix e2;
        std::vector<double> e3, e4;
        transform(A, e2, e3, e4);
        const int K = ms_->size();
        Vector g(K);
        for (int k = 0; k < K; ++k) {
            const auto& c = ms_->conditions[static_cast<std::size_t>(k)];
            g(k) = lookup(c.index, e2, e3, e4) - c.target;
        }
        return g;
    }

  private:
    std::size_t idx3(int a, int b, int c) const {
        return static_cast<std::size_t>((a * n_ + b) * n_ + c);
    }
    std::size_t idx4(int a, int b, int c, int d) const {
        return static_cast<std::size_t>(((a * n_ + b) * n_ + c) * n_ + d);
    }

    // Mode-wise contraction of the stored tensors by A.
    void transform(const Matrix& A, Matrix& e2, std::vector<double>& e3,
                   std::vector<double>& e4) const {
        const int n = n_;
        e2 = A * m2_ * A.transpose();

        e3.assign(static_cast<std::size_t>(n * n * n), 0.0);
        std::vector<double> t3(e3.size(), 0.0);
        // mode 1
        for (int i = 0; i < n; ++i)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c) {
                    double s = 0.0;
                    for (int a = 0; a < n; ++a) s += A(i, a) * m3_[idx3(a, b, c)];
                    t3[idx3(i, b, c)] = s;
                }
        // mode 2
        std::vector<double> t3b(e3.size(), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int c = 0; c < n; ++c) {
                    double s = 0.0;
                    for (int b = 0; b < n; ++b) s += A(j, b) * t3[idx3(i, b, c)];
                    t3b[idx3(i, j, c)] = s;
                }
        // mode 3
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double s = 0.0;
                    for (int c = 0; c < n; ++c) s += A(k, c) * t3b[idx3(i, j, c)];
                    e3[idx3(i, j, k)] = s;
                }

        e4.assign(static_cast<std::size_t>(n * n * n * n), 0.0);
        std::vector<double> t4(e4.size(), 0.0), t4b(e4.size(), 0.0);
        for (int i = 0; i < n; ++i)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) {
                        double s = 0.0;
                        for (int a = 0; a < n; ++a) s += A(i, a) * m4_[idx4(a, b, c, d)];
                        t4[idx4(i, b, c, d)] = s;
                    }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) {
                        double s = 0.0;
                        for (int b = 0; b < n; ++b) s += A(j, b) * t4[idx4(i, b, c, d)];
                        t4b[idx4(i, j, c, d)] = s;
                    }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int d = 0; d < n; ++d) {
                        double s = 0.0;
                        for (int c = 0; c < n; ++c) s += A(k, c) * t4b[idx4(i, j, c, d)];
                        t4[idx4(i, j, k, d)] = s;
                    }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        double s = 0.0;
                        for (int d = 0; d < n; ++d) s += A(l, d) * t4[idx4(i, j, k, d)];
                        e4[idx4(i, j, k, l)] = s;
                    }
    }

    double lookup(const std::vector<int>& tup, const Matrix& e2,
                  const std::vector<double>& e3, const std::vector<double>& e4) const {
        switch (tup.size()) {
            case 2:
                return e2(tup[0], tup[1]);
            case 3:
                return e3[idx3(tup[0], tup[1], tup[2])];
            case 4:
                return e4[idx4(tup[0], tup[1], tup[2], tup[3])];
            default:
                throw ValidationError("unsupported moment order");
        }
    }

    const MomentSet* ms_;
    int n_;
    int T_;
    double floor_ = 0.0;
    Matrix m2_;
    std::vector<double> m3_, m4_;
};

// Direct-route objectives over residuals; definitional reference used by the
// tests and by callers that evaluate once rather than optimize.

inline double gmm_objective(const Matrix& B, const Matrix& residuals,
                            const MomentSet& ms, const Matrix* W = nullptr) {
    Eigen::PartialPivLU<Matrix> lu(B);
    if (std::abs(lu.determinant()) <= det_floor(residuals)) return kSingularObjective;
    Vector g = sample_moments(B, residuals, ms);
    return W ? g.dot((*W) * g) : g.squaredNorm();
}

inline double csue_objective(const Matrix& B, const Matrix& residuals,
                             const MomentSet& ms, const Matrix* W = nullptr) {
    Eigen::PartialPivLU<Matrix> lu(B);
    if (std::abs(lu.determinant()) <= det_floor(residuals)) return kSingularObjective;
    const Matrix innov = innovations(B, residuals);
    Vector g = sample_moments_of(innov, ms);
    Vector h = scaling_term(innov, ms).cwiseProduct(g);
    return W ? h.dot((*W) * h) : h.squaredNorm();
}

}  // namespace ngsvar
