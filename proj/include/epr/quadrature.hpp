#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <vector>

// Quadrature and small numeric utilities shared by the integral drivers.

namespace epr {

struct QuadratureSpec {
    int nodes_1d = 64;             // requested 1D node count (raised to the oscillation bound)
    double truncation_tail = 1e-10; // profile mass allowed outside the truncated support
    int max_refinements = 3;       // extra node doublings beyond the mandatory error-estimate step
    double target_rel_error = 1e-8;
    long long eval_cap = 1'000'000; // pairwise integrand evaluations before falling back to Monte Carlo
    std::uint64_t mc_seed = 1;
    int jobs = 0; // worker threads for the node loops; 0 = hardware concurrency

    void validate() const
    {
        if (nodes_1d < 2) throw std::domain_error("QuadratureSpec: nodes_1d must be >= 2");
        if (!(truncation_tail > 0.0 && truncation_tail < 1.0))
            throw std::domain_error("QuadratureSpec: truncation_tail must lie in (0,1)");
        if (max_refinements < 0)
            throw std::domain_error("QuadratureSpec: max_refinements must be >= 0");
        if (!(target_rel_error > 0.0))
            throw std::domain_error("QuadratureSpec: target_rel_error must be positive");
        if (eval_cap < 16) throw std::domain_error("QuadratureSpec: eval_cap must be >= 16");
        if (jobs < 0) throw std::domain_error("QuadratureSpec: jobs must be >= 0");
    }
};

// Raised when an integral cannot meet its sampling requirements at all
// (as opposed to merely missing the accuracy target, which only warns).
struct AccuracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadratureRule {
    std::vector<double> x, w;
};

// Gauss-Legendre rule on [-1,1]; Newton iteration on the three-term recurrence.
inline QuadratureRule gauss_legendre(int n)
{
    if (n < 1) throw std::domain_error("gauss_legendre: n must be >= 1");
    QuadratureRule r;
    r.x.resize(n);
    r.w.resize(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Tricomi initial guess, then Newton.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 64; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        r.x[i] = -x;
        r.x[n - 1 - i] = x;
        r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
    return r;
}

inline QuadratureRule gauss_legendre_on(double lo, double hi, int n)
{
    QuadratureRule r = gauss_legendre(n);
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int i = 0; i < n; ++i) {
        r.x[i] = mid + half * r.x[i];
        r.w[i] *= half;
    }
    return r;
}

// Inverse of erfc on (0, 2); bisection against std::erfc, ~1 ulp of the root in x.
inline double erfc_inv(double y)
{
    if (!(y > 0.0 && y < 2.0)) throw std::domain_error("erfc_inv: argument must lie in (0,2)");
    if (y == 1.0) return 0.0;
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (std::erfc(mid) > y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// SplitMix64: decorrelates per-item seeds derived from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace detail {

inline int resolve_jobs(int jobs)
{
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs eval_block(block_index, begin, end) over fixed-size blocks of [0, count)
// and combines per-block partials in index order. Block boundaries are
// independent of the worker count, so sums are bitwise reproducible for any
// `jobs` setting. Accum needs operator+= and a default state of zero.
template <typename Accum, typename F>
Accum block_mapreduce(std::size_t count, int jobs, std::size_t block_size, F&& eval_block)
{
    if (count == 0) return Accum{};
    block_size = std::max<std::size_t>(1, block_size);
    const std::size_t nblocks = (count + block_size - 1) / block_size;
    std::vector<Accum> partial(nblocks);
    const int workers = std::min<std::size_t>(resolve_jobs(jobs), nblocks);

    auto run_range = [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            const std::size_t lo = b * block_size;
            const std::size_t hi = std::min(count, lo + block_size);
            partial[b] = eval_block(b, lo, hi);
        }
    };

    if (workers <= 1) {
        run_range(0, nblocks);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        const std::size_t per = (nblocks + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
            const std::size_t b0 = std::min(nblocks, t * per);
            const std::size_t b1 = std::min(nblocks, b0 + per);
            if (b0 < b1) pool.emplace_back(run_range, b0, b1);
        }
        for (auto& th : pool) th.join();
    }

    Accum total{};
    for (const auto& a : partial) total += a;
    return total;
}

} // namespace detail

} // namespace epr
