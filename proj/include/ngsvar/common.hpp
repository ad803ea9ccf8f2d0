#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ngsvar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: shapes, option values, malformed files.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Numerical failure: singular matrices, explosive dynamics, non-convergence
// treated as fatal by the caller.
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// --- seeding -----------------------------------------------------------

// splitmix64 step, used to derive independent per-task seeds from one
// master seed without correlated streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for subtask `index` under `master`. Stable across platforms and
// thread counts.
inline std::uint64_t subseed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

// --- threading ---------------------------------------------------------

inline int thread_count() {
    if (const char* env = std::getenv("NGSVAR_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs body(i) for i in [0, n). Work is chunked by index; results must be
// written to pre-sized slots so the aggregate is independent of the thread
// count. Exceptions are captured and rethrown on the calling thread.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body,
                         int threads = 0) {
    if (threads <= 0) threads = thread_count();
    if (threads <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    threads = static_cast<int>(std::min<std::int64_t>(threads, n));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(threads);
    std::atomic<std::int64_t> next{0};
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (;;) {
                    std::int64_t i = next.fetch_add(1);
                    if (i >= n) break;
                    body(i);
                }
            } catch (...) {
                errs[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

// --- small numerics ----------------------------------------------------

// Linear-interpolation sample quantile (R type 7).
inline double quantile_type7(std::vector<double> x, double q) {
    if (x.empty()) throw ValidationError("quantile of empty sample");
    if (q < 0.0 || q > 1.0) throw ValidationError("quantile level outside [0,1]");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double median_of(const std::vector<double>& x) { return quantile_type7(x, 0.5); }

}  // namespace ngsvar
