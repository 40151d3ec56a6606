// Shared basics: error types, deterministic sampling helpers, thread pool-free
// parallel loop.
#ifndef STABFOL_COMMON_HPP
#define STABFOL_COMMON_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace stabfol {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Admissibility gate failure: carries the measured margin (bound - measured),
// negative when violated.
class GateViolation : public std::runtime_error {
public:
    GateViolation(const std::string& what, double margin_)
        : std::runtime_error(what), margin(margin_) {}
    double margin;
};

class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline VectorXd random_unit_vector(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    VectorXd v(dim);
    double nrm = 0.0;
    do {
        for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
        nrm = v.norm();
    } while (nrm < 1e-12);
    return v / nrm;
}

// Halton sequence mapped into the closed ball of the given radius. Index-based,
// so a fixed (seed, index) pair always yields the same point.
namespace detail {

inline double halton(std::uint64_t index, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

inline std::uint64_t nth_prime(int k) {
    static const std::uint64_t primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                           31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
                                           73, 79, 83, 89, 97, 101};
    return primes[k % 26];
}

} // namespace detail

// Deterministic low-discrepancy point in the ball B(0, radius) of R^dim. The
// seed offsets the sequence so distinct tables do not share points.
inline VectorXd ball_point(int dim, double radius, std::uint64_t index, std::uint64_t seed) {
    VectorXd u(dim);
    const std::uint64_t shifted = index + 1 + (seed % 9973) * 131;
    for (int i = 0; i < dim; ++i) u[i] = detail::halton(shifted, detail::nth_prime(i));
    // Box-Muller-style radial map: components -> gaussian -> scale to ball.
    VectorXd g(dim);
    for (int i = 0; i < dim; ++i) {
        double a = std::min(std::max(u[i], 1e-12), 1.0 - 1e-12);
        double b = detail::halton(shifted, detail::nth_prime((i + dim) % 26 == i % 26 ? i + 1 : i + dim));
        g[i] = std::sqrt(-2.0 * std::log(a)) * std::cos(2.0 * M_PI * b);
    }
    double nrm = g.norm();
    if (nrm < 1e-14) return VectorXd::Zero(dim);
    double rho = radius * std::pow(detail::halton(shifted, 101), 1.0 / dim);
    return g * (rho / nrm);
}

inline int thread_count() {
    if (const char* env = std::getenv("STABFOL_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

// Deterministic parallel loop: each index writes its own slot, so results do
// not depend on the number of workers.
template <typename F>
void parallel_for(std::size_t count, F&& body) {
    const int workers = thread_count();
    if (workers <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace stabfol

#endif

