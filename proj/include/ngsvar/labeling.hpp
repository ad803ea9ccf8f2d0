#pragma once

#include <numeric>
#include <vector>

#include "ngsvar/common.hpp"

namespace ngsvar {

// Column order and signs of B are not identified by the moment conditions:
// B P produces the same objective for any sign-permutation matrix P. A
// representative per equivalence class is pinned down relative to an anchor
// matrix: with C = anchor^{-1} B, require every diagonal entry of C to be
// positive and to dominate the entries to its right in absolute value.

struct SignPermutation {
    std::vector<int> permutation;  // new column k takes old column permutation[k]
    std::vector<double> signs;     // +1 / -1 applied after permuting

    bool is_identity() const {
        for (std::size_t k = 0; k < permutation.size(); ++k)
            if (permutation[k] != static_cast<int>(k) || signs[k] != 1.0) return false;
        return true;
    }
};

inline bool in_representative_set(const Matrix& B, const Matrix& anchor) {
    const int n = static_cast<int>(B.rows());
    Matrix C = anchor.partialPivLu().solve(B);
    for (int k = 0; k < n; ++k) {
        if (!(C(k, k) > 0.0)) return false;
        for (int l = k + 1; l < n; ++l)
            if (!(std::abs(C(k, k)) > std::abs(C(k, l)))) return false;
    }
    return true;
}

struct LabelingResult {
    Matrix B;             // column-permuted, sign-flipped input
    SignPermutation applied;
    bool in_set = false;  // false only on boundary ties
    bool boundary = false;
    double margin = 0.0;  // sum over rows of (|C_kk| - max_{l>k} |C_kl|)
};

// Exhaustive search over column permutations; the sign of each column is
// forced by the positivity requirement, so the effective search space is n!
// rather than 2^n n!. On boundary ties (no strict member) the candidate
// with the largest margin is returned and flagged.
inline LabelingResult project_to_representative(const Matrix& B, const Matrix& anchor) {
    const int n = static_cast<int>(B.rows());
    if (n > 6)
        throw ValidationError("labeling projection supports at most 6 variables");
    Matrix C0 = anchor.partialPivLu().solve(B);

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);

    bool have = false;
    bool best_member = false;
    double best_margin = 0.0;
    std::vector<int> best_perm;
    std::vector<double> best_sign;

    do {
        bool member = true;
        double margin = 0.0;
        std::vector<double> sign(static_cast<std::size_t>(n), 1.0);
        for (int k = 0; k < n; ++k) {
            const double diag = C0(k, perm[static_cast<std::size_t>(k)]);
            if (diag == 0.0) member = false;
            sign[static_cast<std::size_t>(k)] = diag < 0.0 ? -1.0 : 1.0;
            double max_off = 0.0;
            for (int l = k + 1; l < n; ++l)
                max_off = std::max(max_off,
                                   std::abs(C0(k, perm[static_cast<std::size_t>(l)])));
            if (!(std::abs(diag) > max_off)) member = false;
            margin += std::abs(diag) - max_off;
        }
        const bool better = !have || (member && !best_member) ||
                            (member == best_member && margin > best_margin);
        if (better) {
            have = true;
            best_member = member;
            best_margin = margin;
            best_perm = perm;
            best_sign = sign;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    LabelingResult out;
    out.B = Matrix(n, n);
    for (int k = 0; k < n; ++k)
        out.B.col(k) = B.col(best_perm[static_cast<std::size_t>(k)]) *
                       best_sign[static_cast<std::size_t>(k)];
    out.applied.permutation = best_perm;
    out.applied.signs = best_sign;
    out.in_set = best_member;
    out.boundary = !best_member;
    out.margin = best_margin;
    return out;
}

}  // namespace ngsvar
