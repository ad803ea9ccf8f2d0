#pragma once

#include <functional>
#include <random>

#include "ngsvar/common.hpp"

namespace ngsvar {

// Objective callback: returns the value at x and, when grad is non-null,
// writes the gradient into it.
using ObjectiveFn = std::function<double(const Vector&, Vector*)>;

struct OptimOptions {
    int max_iterations = 600;
    double tol_objective = 1e-10;  // absolute improvement per step
    double tol_step = 1e-8;        // step norm
    int restart_budget = 3;        // perturbed restarts on non-convergence
    double perturb_scale = 0.05;   // relative size of restart perturbations
};

struct OptimResult {
    Vector x;
    double value = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    int restarts_used = 0;
};

namespace detail {

struct BfgsRun {
    Vector x;
    double value;
    bool converged;
    int iterations;
};

inline BfgsRun bfgs_once(const ObjectiveFn& f, Vector x, const OptimOptions& opts) {
    const int dim = static_cast<int>(x.size());
    Vector grad(dim), grad_new(dim);
    double fx = f(x, &grad);
    Matrix H = Matrix::Identity(dim, dim);
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        if (grad.norm() < 1e-12) {
            converged = true;
            break;
        }
        Vector d = -(H * grad);
        double slope = d.dot(grad);
        if (!(slope < 0.0)) {
            H.setIdentity();
            d = -grad;
            slope = d.dot(grad);
        }
        // backtracking Armijo line search
        double step = 1.0;
        double f_new = fx;
        Vector x_new = x;
        bool found = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * d;
            f_new = f(x_new, nullptr);
            if (f_new <= fx + 1e-4 * step * slope) {
                found = true;
                break;
            }
            step *= 0.5;
        }
        if (!found) {
            converged = grad.norm() < 1e-6 * (1.0 + std::abs(fx));
            break;
        }
        f_new = f(x_new, &grad_new);
        const Vector s = x_new - x;
        const Vector y = grad_new - grad;
        const double improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        grad = grad_new;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Matrix I = Matrix::Identity(dim, dim);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
                rho * s * s.transpose();
        } else {
            H.setIdentity();
        }
        if (improvement < opts.tol_objective && s.norm() < opts.tol_step) {
            converged = true;
            break;
        }
    }
    return {std::move(x), fx, converged, it};
}

}  // namespace detail

// BFGS with backtracking line search. On non-convergence, retries from
// deterministically perturbed copies of the best point so far, up to the
// restart budget. The reported flag belongs to the best run.
inline OptimResult minimize(const ObjectiveFn& f, const Vector& x0,
                            const OptimOptions& opts = {}) {
    OptimResult best;
    Vector start = x0;
    std::mt19937_64 rng(0x5eedf00dULL);  // fixed: restarts are deterministic
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int attempt = 0; attempt <= opts.restart_budget; ++attempt) {
        detail::BfgsRun run = detail::bfgs_once(f, start, opts);
        const bool better =
            run.value < best.value ||
            (run.converged && !best.converged && run.value <= best.value + 1e-12);
        if (better) {
            best.x = run.x;
            best.value = run.value;
            best.converged = run.converged;
        }
        best.iterations += run.iterations;
        best.restarts_used = attempt;
        if (best.converged) break;
        const double scale =
            opts.perturb_scale * (best.x.norm() / std::sqrt(static_cast<double>(x0.size())) + 1e-3);
        start = best.x;
        for (int i = 0; i < start.size(); ++i) start(i) += scale * gauss(rng);
    }
    return best;
}

}  // namespace ngsvar
